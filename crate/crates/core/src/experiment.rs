//! Experiment orchestration: a JSON-configured bundle of federated runs
//! repeated over seeds, with per-run metrics CSVs, final parameter
//! checkpoints and an aggregate summary.
//!
//! Output files, all under `output_dir`:
//!   manifest.json                              resolved config and options
//!   metrics_{strategy}_rep{r}.csv              per-round metrics
//!   params_{strategy}_rep{r}_client{c}.bin     final parameters (+ .json sidecar)
//!   summary.json                               per-client mean/std of final
//!                                              test accuracy, cross-client
//!                                              average, gain versus local

use crate::encode::StructEncodingConfig;
use crate::error::{Error, Result};
use crate::fed::{
    derive_seed, Federation, FederationConfig, MetricsRow, MetricsWriter, Strategy, TAG_SPLIT,
};
use crate::graph::{load_tu_dataset, split_dataset, GraphDataset, Split, SyntheticRecipe};
use crate::model::save_checkpoint;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Where one client's graphs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// A dataset directory in the TU text layout. `name` defaults to the
    /// directory's basename and selects the `{name}_*.txt` file family.
    Tu {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Graphs generated on the fly from a recipe.
    Synthetic { recipe: SyntheticRecipe },
}

impl DatasetSpec {
    pub fn resolve(&self) -> Result<GraphDataset> {
        match self {
            DatasetSpec::Tu { path, name } => {
                let name = match name {
                    Some(n) => n.clone(),
                    None => path
                        .file_name()
                        .and_then(|s| s.to_str())
                        .map(str::to_string)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "cannot infer a dataset name from path '{}'",
                                path.display()
                            ))
                        })?,
                };
                load_tu_dataset(path, &name)
            }
            DatasetSpec::Synthetic { recipe } => recipe.build(),
        }
    }
}

/// Train/val/test proportions applied independently per client and
/// repetition. Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub federation: FederationConfig,
    /// One dataset spec per client, in client-id order.
    pub clients: Vec<DatasetSpec>,
    #[serde(default)]
    pub encoding: StructEncodingConfig,
    pub output_dir: PathBuf,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub split_fractions: SplitFractions,
}

fn default_repetitions() -> usize {
    5
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        self.encoding.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.clients.len() != self.federation.num_clients {
            return Err(Error::Config(format!(
                "{} dataset specs for {} clients",
                self.clients.len(),
                self.federation.num_clients
            )));
        }
        Ok(())
    }
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Also run a Local arm on identical seeds and report the gain.
    pub with_local_baseline: bool,
    /// Train clients within a round on a thread pool. Results are
    /// identical either way; only wall time changes.
    pub parallel_clients: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub client_id: usize,
    pub dataset: String,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

/// Aggregate of one strategy across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub strategy: Strategy,
    pub clients: Vec<ClientSummary>,
    /// Cross-client mean of the per-client mean final test accuracies.
    pub avg_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub rounds: usize,
    pub repetitions: usize,
    pub arm: ArmSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<ArmSummary>,
    /// `arm.avg_acc - local.avg_acc`, present with the local baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_gain: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    with_local_baseline: bool,
    parallel_clients: bool,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text)?;
    Ok(())
}

/// Sample standard deviation; zero for a single observation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn final_test_accuracy(rows: &[MetricsRow], rounds: usize, client_id: usize) -> Result<f64> {
    rows.iter()
        .rev()
        .find(|r| r.round == rounds && r.client_id == client_id && r.split == Split::Test)
        .map(|r| r.accuracy)
        .ok_or_else(|| {
            Error::Config(format!(
                "client {client_id} produced no final test row; is its test split empty?"
            ))
        })
}

/// Runs one strategy for all repetitions, writing CSVs and checkpoints,
/// and returns its summary.
fn run_arm(
    cfg: &ExperimentConfig,
    datasets: &[GraphDataset],
    strategy: Strategy,
    opts: RunOptions,
) -> Result<ArmSummary> {
    let num_clients = cfg.federation.num_clients;
    let rounds = cfg.federation.rounds;
    let fractions = (
        cfg.split_fractions.train,
        cfg.split_fractions.val,
        cfg.split_fractions.test,
    );

    let mut acc = vec![Vec::with_capacity(cfg.repetitions); num_clients];
    for rep in 0..cfg.repetitions {
        let rep_seed = cfg.federation.seed.wrapping_add(rep as u64);
        let mut client_data = Vec::with_capacity(num_clients);
        for (id, ds) in datasets.iter().enumerate() {
            let split =
                split_dataset(ds, fractions, derive_seed(rep_seed, &[TAG_SPLIT, id as u64]))?;
            client_data.push((ds.clone(), split));
        }
        let fed_cfg = FederationConfig {
            strategy,
            seed: rep_seed,
            ..cfg.federation.clone()
        };
        let mut fed = Federation::new(fed_cfg, client_data, &cfg.encoding)?;

        let csv_path = cfg
            .output_dir
            .join(format!("metrics_{}_rep{rep}.csv", strategy.name()));
        let mut writer = MetricsWriter::create(&csv_path)?;
        let rows = fed.run(opts.parallel_clients, |round_rows| {
            writer.write_rows(round_rows)
        })?;
        writer.finish()?;

        for (id, accs) in acc.iter_mut().enumerate() {
            accs.push(final_test_accuracy(&rows, rounds, id)?);
        }
        for client in &fed.clients {
            let ckpt = cfg.output_dir.join(format!(
                "params_{}_rep{rep}_client{}.bin",
                strategy.name(),
                client.id
            ));
            save_checkpoint(&client.params, &client.cfg, &ckpt)?;
        }
    }

    let clients: Vec<ClientSummary> = acc
        .iter()
        .enumerate()
        .map(|(id, xs)| {
            let (mean, std) = mean_std(xs);
            ClientSummary {
                client_id: id,
                dataset: datasets[id].name.clone(),
                mean_test_accuracy: mean,
                std_test_accuracy: std,
            }
        })
        .collect();
    let avg_acc = clients.iter().map(|c| c.mean_test_accuracy).sum::<f64>() / num_clients as f64;
    Ok(ArmSummary {
        strategy,
        clients,
        avg_acc,
    })
}

/// Resolves all datasets, runs every repetition (plus the optional Local
/// baseline arm on identical seeds), writes `summary.json` and returns
/// the summary.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let datasets: Vec<GraphDataset> = cfg
        .clients
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            spec.resolve()
                .map_err(|e| Error::Config(format!("client {i} dataset: {e}")))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(&cfg.output_dir)?;
    write_json(
        &cfg.output_dir.join("manifest.json"),
        &Manifest {
            config: cfg,
            with_local_baseline: opts.with_local_baseline,
            parallel_clients: opts.parallel_clients,
        },
    )?;

    let arm = run_arm(cfg, &datasets, cfg.federation.strategy, opts)?;

    let mut local = None;
    let mut avg_gain = None;
    if opts.with_local_baseline && cfg.federation.strategy != Strategy::Local {
        let baseline = run_arm(cfg, &datasets, Strategy::Local, opts)?;
        avg_gain = Some(arm.avg_acc - baseline.avg_acc);
        local = Some(baseline);
    }

    let summary = ExperimentSummary {
        rounds: cfg.federation.rounds,
        repetitions: cfg.repetitions,
        arm,
        local,
        avg_gain,
    };
    write_json(&cfg.output_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
