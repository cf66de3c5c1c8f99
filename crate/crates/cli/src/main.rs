//! Command-line entry points: experiment runs, synthetic data
//! generation, heterogeneity analysis and resource accounting.
//!
//! Every failure exits nonzero with a single `error: ...` line on
//! stderr; success output goes to stdout or to files under `--out`.

use clap::{Parser, Subcommand};
use feddense_core::error::{Error, Result};
use feddense_core::experiment::{load_experiment_config, run_experiment, RunOptions};
use feddense_core::fed::Strategy;
use feddense_core::graph::{load_tu_dataset, write_tu_dataset, GraphDataset, SyntheticRecipe};
use feddense_core::hetero::{
    feature_similarity_distribution, heatmap, heatmap_csv, structure_distribution, HeteroConfig,
    HeteroMode,
};
use feddense_core::resource::model_report;
use feddense_core::ModelConfig;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "feddense",
    version,
    about = "Federated graph learning simulator with selective structural parameter sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Override the federation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the strategy (local|fedavg|fedprox|feddense).
        #[arg(long)]
        strategy: Option<String>,
        /// Also run a Local arm on the same seeds and report avg_gain.
        #[arg(long)]
        with_local_baseline: bool,
        /// Train the clients of a round on a thread pool (same results).
        #[arg(long)]
        parallel_clients: bool,
    },
    /// Materialize a synthetic recipe (JSON) into a TU-format dataset.
    GenData {
        recipe: PathBuf,
        out_dir: PathBuf,
    },
    /// Pairwise distribution divergence between datasets: writes
    /// feature_jsd.csv, structure_jsd.csv and binning.json.
    AnalyzeHetero {
        /// TU-format dataset directories (at least two).
        #[arg(required = true, num_args = 2..)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Bins for the cosine-similarity histogram over [-1, 1].
        #[arg(long, default_value_t = HeteroConfig::default().similarity_bins)]
        similarity_bins: usize,
        /// Buckets for the node-degree histogram (last bucket clips).
        #[arg(long, default_value_t = HeteroConfig::default().degree_bins)]
        degree_bins: usize,
        /// Bins for the clustering-coefficient histogram over [0, 1].
        #[arg(long, default_value_t = HeteroConfig::default().cc_bins)]
        cc_bins: usize,
    },
    /// Print the parameter/FLOP/payload report for a config as JSON.
    CountResources {
        config: PathBuf,
        /// Override the strategy the payload figures assume.
        #[arg(long)]
        strategy: Option<String>,
        /// Sample graph size for per-graph FLOP figures; defaults to the
        /// datasets' mean node count.
        #[arg(long)]
        nodes: Option<usize>,
        /// Sample graph edge count; defaults to the datasets' mean.
        #[arg(long)]
        edges: Option<usize>,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            strategy,
            with_local_baseline,
            parallel_clients,
        } => {
            let mut cfg = load_experiment_config(&config)?;
            if let Some(seed) = seed {
                cfg.federation.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(s) = strategy {
                cfg.federation.strategy = Strategy::from_str(&s)?;
            }
            let summary = run_experiment(
                &cfg,
                RunOptions {
                    with_local_baseline,
                    parallel_clients,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::GenData { recipe, out_dir } => {
            let text = read_file(&recipe)?;
            let recipe: SyntheticRecipe = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("recipe: {e}")))?;
            let ds = recipe.build()?;
            write_tu_dataset(&ds, &out_dir)?;
            println!(
                "wrote {} graphs ({} classes) to {}",
                ds.len(),
                ds.num_classes,
                out_dir.display()
            );
            Ok(())
        }
        Command::AnalyzeHetero {
            paths,
            out,
            similarity_bins,
            degree_bins,
            cc_bins,
        } => {
            let cfg = HeteroConfig {
                similarity_bins,
                degree_bins,
                cc_bins,
            };
            analyze_hetero(&paths, &out, &cfg)
        }
        Command::CountResources {
            config,
            strategy,
            nodes,
            edges,
        } => count_resources(&config, strategy.as_deref(), nodes, edges),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}

/// Loads a TU dataset directory, taking the dataset name from the
/// directory basename.
fn load_dataset_dir(path: &Path) -> Result<GraphDataset> {
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| {
            Error::Config(format!(
                "cannot infer a dataset name from path '{}'",
                path.display()
            ))
        })?;
    load_tu_dataset(path, name)
}

fn analyze_hetero(paths: &[PathBuf], out: &Path, cfg: &HeteroConfig) -> Result<()> {
    cfg.validate()?;
    let datasets: Vec<GraphDataset> = paths
        .iter()
        .map(|p| load_dataset_dir(p))
        .collect::<Result<_>>()?;
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();

    let feature = heatmap(&datasets, HeteroMode::Feature, cfg)?;
    let structure = heatmap(&datasets, HeteroMode::Structure, cfg)?;

    fs::create_dir_all(out)?;
    fs::write(out.join("feature_jsd.csv"), heatmap_csv(&feature, &names))?;
    fs::write(out.join("structure_jsd.csv"), heatmap_csv(&structure, &names))?;

    // Bin edges are config-determined and dataset-independent; compute
    // them once off the first dataset for the metadata record.
    let binning = serde_json::json!({
        "similarity_bins": cfg.similarity_bins,
        "degree_bins": cfg.degree_bins,
        "cc_bins": cfg.cc_bins,
        "feature_bin_edges":
            feature_similarity_distribution(&datasets[0], cfg.similarity_bins)?.bin_edges,
        "structure_bin_edges":
            structure_distribution(&datasets[0], cfg.degree_bins, cfg.cc_bins)?.bin_edges,
    });
    fs::write(
        out.join("binning.json"),
        serde_json::to_string_pretty(&binning)?,
    )?;
    println!(
        "wrote feature_jsd.csv, structure_jsd.csv, binning.json to {}",
        out.display()
    );
    Ok(())
}

fn count_resources(
    config: &Path,
    strategy: Option<&str>,
    nodes: Option<usize>,
    edges: Option<usize>,
) -> Result<()> {
    let cfg = load_experiment_config(config)?;
    cfg.validate()?;
    let strategy = match strategy {
        Some(s) => Strategy::from_str(s)?,
        None => cfg.federation.strategy,
    };
    let datasets: Vec<GraphDataset> = cfg
        .clients
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            spec.resolve()
                .map_err(|e| Error::Config(format!("client {i} dataset: {e}")))
        })
        .collect::<Result<_>>()?;

    // Resolve the model dims the same way the federation does, against
    // client 0's data.
    let model = &cfg.federation.model;
    let num_classes = if model.num_classes != 0 {
        model.num_classes
    } else {
        datasets.iter().map(|d| d.num_classes).max().unwrap_or(1)
    };
    let feature_dim = if model.feature_dim != 0 {
        model.feature_dim
    } else {
        datasets[0].feature_dim
    };
    let struct_dim = if !model.variant.has_struct() {
        model.struct_dim
    } else if model.struct_dim != 0 {
        model.struct_dim
    } else {
        cfg.encoding.total_dim()
    };
    let model = ModelConfig {
        feature_dim,
        struct_dim,
        num_classes,
        ..*model
    };

    let (v, e) = match (nodes, edges) {
        (Some(v), Some(e)) => (v, e),
        _ => {
            let graphs: usize = datasets.iter().map(|d| d.len()).sum();
            let sum_v: usize = datasets.iter().flat_map(|d| &d.graphs).map(|g| g.num_nodes()).sum();
            let sum_e: usize = datasets.iter().flat_map(|d| &d.graphs).map(|g| g.num_edges()).sum();
            let mean_v = nodes.unwrap_or(((sum_v as f64 / graphs as f64).round() as usize).max(1));
            let mean_e = edges.unwrap_or((sum_e as f64 / graphs as f64).round() as usize);
            (mean_v, mean_e.min(mean_v * (mean_v - 1) / 2))
        }
    };

    let report = model_report(&model, strategy, (v, e))?;
    let out = serde_json::json!({
        "strategy": strategy.name(),
        "sample_graph": {"nodes": v, "edges": e},
        "report": report,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
