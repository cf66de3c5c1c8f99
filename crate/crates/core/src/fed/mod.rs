//! Simulated synchronous federation: a parameter server, N clients,
//! and the broadcast / train / upload / aggregate loop.
//!
//! Strategies: `local` (no communication), `fedavg` / `fedprox` (full
//! parameter sharing), and `feddense` (only the structural-channel
//! parameters are shared; feature parameters never leave their client).
//! Aggregation accumulates at f64 in fixed client order, so sequential
//! and parallel execution produce identical bytes.

mod metrics;

pub use metrics::{rows_to_csv, MetricsWriter, METRICS_HEADER};

use crate::encode::{build_structural_vectors, StructEncodingConfig};
use crate::error::{Error, Result};
use crate::graph::{GraphDataset, Split, SplitDataset};
use crate::model::{self, DdcParameters, ModelConfig};
use crate::nn::{AdamState, OptimizerConfig, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

// Domain tags for derived RNG streams.
const TAG_CLIENT_INIT: u64 = 1;
const TAG_SERVER_INIT: u64 = 2;
const TAG_ROUND: u64 = 3;
/// Domain tag clients of this module's callers may use for data splits.
pub const TAG_SPLIT: u64 = 4;

/// Mixes a base seed with context words into an independent stream seed
/// (splitmix64 finalizer per word). Identical inputs give identical
/// outputs on every platform.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut state = splitmix(seed);
    for &p in parts {
        state = splitmix(state.wrapping_add(splitmix(p)));
    }
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Local,
    FedAvg,
    FedProx,
    FedDense,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Local => "local",
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx => "fedprox",
            Strategy::FedDense => "feddense",
        }
    }

    pub const ALL: [Strategy; 4] = [
        Strategy::Local,
        Strategy::FedAvg,
        Strategy::FedProx,
        Strategy::FedDense,
    ];
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Strategy::Local),
            "fedavg" => Ok(Strategy::FedAvg),
            "fedprox" => Ok(Strategy::FedProx),
            "feddense" => Ok(Strategy::FedDense),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy '{other}' (expected local, fedavg, fedprox or feddense)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub num_clients: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub strategy: Strategy,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_rounds() -> usize {
    200
}
fn default_local_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    128
}
fn default_mu() -> f64 {
    0.01
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::Config("federation needs at least one client".into()));
        }
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "rounds, local_epochs and batch_size must all be >= 1".into(),
            ));
        }
        if self.mu < 0.0 {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Accumulated statistics of the local training passes of one round.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpochStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub graphs: usize,
    pub forward_flops: u64,
}

impl EpochStats {
    fn add(&mut self, other: EpochStats) {
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
        self.graphs += other.graphs;
        self.forward_flops += other.forward_flops;
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.graphs as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.graphs as f64
    }
}

/// Loss/accuracy of one evaluation pass plus its forward FLOPs.
#[derive(Debug, Clone, Copy)]
pub struct SplitEval {
    pub loss: f64,
    pub accuracy: f64,
    pub flops: u64,
}

/// One metrics-CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub client_id: usize,
    pub strategy: Strategy,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub payload_bytes: u64,
    pub flops: u64,
}

fn argmax(data: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in data.iter().enumerate().skip(1) {
        if v > data[best] {
            best = i;
        }
    }
    best
}

/// One simulated participant: its private dataset, cached model inputs,
/// parameters and optimizer state.
pub struct ClientState {
    pub id: usize,
    pub cfg: ModelConfig,
    pub data: GraphDataset,
    pub split: SplitDataset,
    pub params: DdcParameters<f32>,
    pub opt: AdamState,
    features: Vec<Tensor<f32>>,
    structs: Option<Vec<Tensor<f32>>>,
}

impl ClientState {
    /// `cfg` must already be resolved against the dataset (nonzero dims).
    pub fn new(
        id: usize,
        data: GraphDataset,
        split: SplitDataset,
        cfg: ModelConfig,
        enc: &StructEncodingConfig,
        opt: &OptimizerConfig,
        init_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.feature_dim != data.feature_dim {
            return Err(Error::Config(format!(
                "client {id}: model expects feature dim {} but dataset provides {}",
                cfg.feature_dim, data.feature_dim
            )));
        }
        if cfg.num_classes < data.num_classes {
            return Err(Error::Config(format!(
                "client {id}: model has {} classes but dataset needs {}",
                cfg.num_classes, data.num_classes
            )));
        }
        if cfg.variant.has_struct() && cfg.struct_dim != enc.total_dim() {
            return Err(Error::Config(format!(
                "client {id}: model struct dim {} but encoding produces {}",
                cfg.struct_dim,
                enc.total_dim()
            )));
        }
        for &gi in split
            .train
            .iter()
            .chain(split.val.iter())
            .chain(split.test.iter())
        {
            if gi >= data.len() {
                return Err(Error::IndexOutOfRange(format!(
                    "client {id}: split references graph {gi} but dataset has {}",
                    data.len()
                )));
            }
        }
        if split.train.is_empty() {
            return Err(Error::Config(format!(
                "client {id}: empty train split"
            )));
        }

        let params: DdcParameters<f32> = model::init_params(&cfg, init_seed)?;
        let sizes: Vec<usize> = params.entries().iter().map(|e| e.tensor.len()).collect();
        let opt = AdamState::new(*opt, &sizes);

        let mut features = Vec::with_capacity(data.len());
        for g in &data.graphs {
            features.push(Tensor::from_f32_slice(
                &[g.num_nodes(), cfg.feature_dim],
                g.node_features(),
            )?);
        }
        let structs = if cfg.variant.has_struct() {
            let mut rows = Vec::with_capacity(data.len());
            for g in &data.graphs {
                let flat = build_structural_vectors(g, enc)?;
                rows.push(Tensor::from_f32_slice(&[g.num_nodes(), cfg.struct_dim], &flat)?);
            }
            Some(rows)
        } else {
            None
        };

        Ok(Self {
            id,
            cfg,
            data,
            split,
            params,
            opt,
            features,
            structs,
        })
    }

    /// One pass over the (shuffled) train split: per-batch mean graph
    /// cross-entropy, backward, Adam step. `prox` carries the proximal
    /// reference, its weight mu, and the entry positions it covers.
    /// Statistics come from the training-mode forward passes.
    pub fn train_epoch(
        &mut self,
        batch_size: usize,
        prox: Option<(&DdcParameters<f32>, f64, &[usize])>,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochStats> {
        if self.split.train.is_empty() {
            return Err(Error::Config(format!(
                "client {}: empty train split",
                self.id
            )));
        }
        let mut order = self.split.train.clone();
        order.shuffle(rng);

        let mut stats = EpochStats::default();
        for batch in order.chunks(batch_size.max(1)) {
            let mut tape = Tape::<f32>::instrumented();
            let leaves = self.params.push_leaves(&mut tape, true);
            let mut losses = Vec::with_capacity(batch.len());
            for &gi in batch {
                let g = &self.data.graphs[gi];
                let fv = model::forward(
                    &mut tape,
                    g,
                    &self.features[gi],
                    self.structs.as_ref().map(|s| &s[gi]),
                    &leaves,
                    &self.cfg,
                    true,
                    rng,
                )?;
                if argmax(tape.value(fv.logits).data()) == g.label() {
                    stats.correct += 1;
                }
                losses.push(tape.softmax_cross_entropy(fv.logits, g.label())?);
            }
            let batch_loss = tape.mean_scalars(&losses)?;
            tape.backward(batch_loss)?;
            stats.loss_sum += tape.value(batch_loss).item() as f64 * batch.len() as f64;
            stats.graphs += batch.len();
            stats.forward_flops += tape.flops().unwrap_or(0);

            let mut grads: Vec<Option<Tensor<f32>>> =
                leaves.iter().map(|&v| tape.grad(v).cloned()).collect();
            if let Some((reference, mu, positions)) = prox {
                for &p in positions {
                    let w = self.params.entries()[p].tensor.data();
                    let wr = reference.entries()[p].tensor.data();
                    if w.len() != wr.len() {
                        return Err(Error::ShapeMismatch(format!(
                            "client {}: proximal reference entry {p} has {} elements, local has {}",
                            self.id,
                            wr.len(),
                            w.len()
                        )));
                    }
                    let shape = self.params.entries()[p].tensor.shape().to_vec();
                    let g = grads[p].get_or_insert_with(|| Tensor::zeros(&shape));
                    for (gk, (&wk, &wrk)) in g.data_mut().iter_mut().zip(w.iter().zip(wr)) {
                        *gk = (*gk as f64 + mu * (wk as f64 - wrk as f64)) as f32;
                    }
                }
            }
            let mut groups: Vec<(&mut Tensor<f32>, Option<&Tensor<f32>>, bool)> = self
                .params
                .entries_mut()
                .iter_mut()
                .zip(&grads)
                .map(|(e, g)| (&mut e.tensor, g.as_ref(), e.is_bias))
                .collect();
            self.opt.step(&mut groups)?;
        }
        Ok(stats)
    }

    /// Eval-mode forward over one split (no dropout, deterministic);
    /// ties in the argmax go to the lowest class index.
    pub fn evaluate(&self, split: Split) -> Result<SplitEval> {
        let idx = self.split.indices(split);
        if idx.is_empty() {
            return Err(Error::Config(format!(
                "client {}: split '{}' is empty",
                self.id,
                split.name()
            )));
        }
        // Eval mode draws nothing from the RNG.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut flops = 0u64;
        for &gi in idx {
            let g = &self.data.graphs[gi];
            let mut tape = Tape::<f32>::instrumented();
            let leaves = self.params.push_leaves(&mut tape, false);
            let fv = model::forward(
                &mut tape,
                g,
                &self.features[gi],
                self.structs.as_ref().map(|s| &s[gi]),
                &leaves,
                &self.cfg,
                false,
                &mut rng,
            )?;
            if argmax(tape.value(fv.logits).data()) == g.label() {
                correct += 1;
            }
            let loss = tape.softmax_cross_entropy(fv.logits, g.label())?;
            loss_sum += tape.value(loss).item() as f64;
            flops += tape.flops().unwrap_or(0);
        }
        Ok(SplitEval {
            loss: loss_sum / idx.len() as f64,
            accuracy: correct as f64 / idx.len() as f64,
            flops,
        })
    }
}

/// Sample-count weighted element-wise average over full parameter sets,
/// accumulated at f64. All sets must be congruent.
pub fn weighted_average(updates: &[(&DdcParameters<f32>, usize)]) -> Result<DdcParameters<f32>> {
    if updates.is_empty() {
        return Err(Error::InvalidArgument("weighted_average of zero clients".into()));
    }
    for (i, (_, count)) in updates.iter().enumerate() {
        if *count == 0 {
            return Err(Error::Aggregation {
                client_id: i,
                message: "sample count must be positive".into(),
            });
        }
    }
    let total: f64 = updates.iter().map(|(_, c)| *c as f64).sum();
    let first = updates[0].0;
    let mut out = first.clone();
    for (ei, entry) in first.entries().iter().enumerate() {
        let mut acc = vec![0.0f64; entry.tensor.len()];
        for (ci, (params, count)) in updates.iter().enumerate() {
            let e = params.entries().get(ei).ok_or_else(|| Error::Aggregation {
                client_id: ci,
                message: format!("missing parameter entry '{}'", entry.name),
            })?;
            if e.tensor.shape() != entry.tensor.shape() || e.name != entry.name {
                return Err(Error::Aggregation {
                    client_id: ci,
                    message: format!(
                        "entry '{}' has shape {:?}, expected '{}' {:?}",
                        e.name,
                        e.tensor.shape(),
                        entry.name,
                        entry.tensor.shape()
                    ),
                });
            }
            let w = *count as f64 / total;
            for (a, &v) in acc.iter_mut().zip(e.tensor.data()) {
                *a += w * v as f64;
            }
        }
        let data: Vec<f32> = acc.iter().map(|&v| v as f32).collect();
        out.entries_mut()[ei].tensor =
            Tensor::new(entry.tensor.shape().to_vec(), data)?;
    }
    Ok(out)
}

/// Server plus clients; owns the round loop.
pub struct Federation {
    pub cfg: FederationConfig,
    pub clients: Vec<ClientState>,
    pub server_params: DdcParameters<f32>,
    shared: Vec<usize>,
    shared_scalars: usize,
}

impl Federation {
    /// Builds clients from per-client datasets and splits, resolves the
    /// model config against the data, and broadcasts the initial shared
    /// parameters so every client starts from the same shared state.
    pub fn new(
        cfg: FederationConfig,
        client_data: Vec<(GraphDataset, SplitDataset)>,
        enc: &StructEncodingConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        enc.validate()?;
        if client_data.len() != cfg.num_clients {
            return Err(Error::Config(format!(
                "config declares {} clients but {} datasets were supplied",
                cfg.num_clients,
                client_data.len()
            )));
        }

        let num_classes = if cfg.model.num_classes != 0 {
            cfg.model.num_classes
        } else {
            client_data
                .iter()
                .map(|(d, _)| d.num_classes)
                .max()
                .expect("num_clients >= 1")
        };

        let resolve = |data: &GraphDataset| -> Result<ModelConfig> {
            let feature_dim = if cfg.model.feature_dim != 0 {
                cfg.model.feature_dim
            } else {
                data.feature_dim
            };
            let struct_dim = if !cfg.model.variant.has_struct() {
                cfg.model.struct_dim
            } else if cfg.model.struct_dim != 0 {
                cfg.model.struct_dim
            } else {
                enc.total_dim()
            };
            Ok(ModelConfig {
                feature_dim,
                struct_dim,
                num_classes,
                ..cfg.model
            })
        };

        let mut clients = Vec::with_capacity(client_data.len());
        for (id, (data, split)) in client_data.into_iter().enumerate() {
            let resolved = resolve(&data)?;
            clients.push(ClientState::new(
                id,
                data,
                split,
                resolved,
                enc,
                &cfg.optimizer,
                derive_seed(cfg.seed, &[TAG_CLIENT_INIT, id as u64]),
            )?);
        }

        let server_params: DdcParameters<f32> =
            model::init_params(&clients[0].cfg, derive_seed(cfg.seed, &[TAG_SERVER_INIT]))?;

        let shared = shared_positions(&clients, cfg.strategy)?;
        let shared_scalars = shared
            .iter()
            .map(|&p| clients[0].params.entries()[p].tensor.len())
            .sum();

        let mut fed = Self {
            cfg,
            clients,
            server_params,
            shared,
            shared_scalars,
        };
        fed.broadcast_shared();
        Ok(fed)
    }

    /// Entry positions of the shared parameter subset.
    pub fn shared_positions(&self) -> &[usize] {
        &self.shared
    }

    /// Scalar parameters in the shared subset.
    pub fn shared_scalar_count(&self) -> usize {
        self.shared_scalars
    }

    /// Upload bytes per client per round (f32 payload, one direction).
    pub fn payload_bytes_per_client(&self) -> u64 {
        4 * self.shared_scalars as u64
    }

    fn broadcast_shared(&mut self) {
        for &p in &self.shared {
            let value = self.server_params.entries()[p].tensor.clone();
            for c in &mut self.clients {
                c.params.entries_mut()[p].tensor = value.clone();
            }
        }
    }

    /// One synchronous round: local training on every client, shared-
    /// subset aggregation, then evaluation. Returns the round's metrics
    /// rows in client order (train, then val/test where non-empty).
    pub fn run_round(&mut self, round: usize, parallel: bool) -> Result<Vec<MetricsRow>> {
        let seed = self.cfg.seed;
        let strategy = self.cfg.strategy;
        let epochs = self.cfg.local_epochs;
        let batch_size = self.cfg.batch_size;
        let mu = self.cfg.mu;
        let shared = std::mem::take(&mut self.shared);

        let train_one = |client: &mut ClientState| -> Result<EpochStats> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                &[TAG_ROUND, client.id as u64, round as u64],
            ));
            let reference = (strategy == Strategy::FedProx).then(|| client.params.clone());
            let mut acc = EpochStats::default();
            for _ in 0..epochs {
                let prox = reference.as_ref().map(|r| (r, mu, shared.as_slice()));
                acc.add(client.train_epoch(batch_size, prox, &mut rng)?);
            }
            Ok(acc)
        };
        let train_stats: Vec<EpochStats> = if parallel {
            self.clients
                .par_iter_mut()
                .map(train_one)
                .collect::<Result<_>>()?
        } else {
            self.clients
                .iter_mut()
                .map(train_one)
                .collect::<Result<_>>()?
        };
        self.shared = shared;

        self.aggregate()?;

        let eval_one = |client: &ClientState| -> Result<(Option<SplitEval>, Option<SplitEval>)> {
            let val = if client.split.val.is_empty() {
                None
            } else {
                Some(client.evaluate(Split::Val)?)
            };
            let test = if client.split.test.is_empty() {
                None
            } else {
                Some(client.evaluate(Split::Test)?)
            };
            Ok((val, test))
        };
        let evals: Vec<(Option<SplitEval>, Option<SplitEval>)> = if parallel {
            self.clients
                .par_iter()
                .map(eval_one)
                .collect::<Result<_>>()?
        } else {
            self.clients.iter().map(eval_one).collect::<Result<_>>()?
        };

        let payload = self.payload_bytes_per_client();
        let mut rows = Vec::new();
        for (i, (stats, (val, test))) in train_stats.iter().zip(&evals).enumerate() {
            rows.push(MetricsRow {
                round,
                client_id: i,
                strategy,
                split: Split::Train,
                loss: stats.mean_loss(),
                accuracy: stats.accuracy(),
                payload_bytes: payload,
                flops: 3 * stats.forward_flops,
            });
            for (split, eval) in [(Split::Val, val), (Split::Test, test)] {
                if let Some(e) = eval {
                    rows.push(MetricsRow {
                        round,
                        client_id: i,
                        strategy,
                        split,
                        loss: e.loss,
                        accuracy: e.accuracy,
                        payload_bytes: 0,
                        flops: e.flops,
                    });
                }
            }
        }
        Ok(rows)
    }

    /// Shared-subset weighted average (weights |d_i| / |D|), written
    /// back to the server and every client. No-op for `local`.
    fn aggregate(&mut self) -> Result<()> {
        if self.shared.is_empty() {
            return Ok(());
        }
        let total: f64 = self.clients.iter().map(|c| c.data.len() as f64).sum();
        for &p in &self.shared {
            let len = self.server_params.entries()[p].tensor.len();
            let shape = self.server_params.entries()[p].tensor.shape().to_vec();
            let mut acc = vec![0.0f64; len];
            for (ci, c) in self.clients.iter().enumerate() {
                let t = &c.params.entries()[p].tensor;
                if t.len() != len {
                    return Err(Error::Aggregation {
                        client_id: ci,
                        message: format!(
                            "entry '{}' has {} elements, server expects {}",
                            c.params.entries()[p].name,
                            t.len(),
                            len
                        ),
                    });
                }
                let w = c.data.len() as f64 / total;
                for (a, &v) in acc.iter_mut().zip(t.data()) {
                    *a += w * v as f64;
                }
            }
            let data: Vec<f32> = acc.iter().map(|&v| v as f32).collect();
            let avg = Tensor::new(shape, data)?;
            for c in &mut self.clients {
                c.params.entries_mut()[p].tensor = avg.clone();
            }
            self.server_params.entries_mut()[p].tensor = avg;
        }
        Ok(())
    }

    /// Runs all configured rounds, handing each round's rows to `sink`.
    pub fn run(
        &mut self,
        parallel: bool,
        mut sink: impl FnMut(&[MetricsRow]) -> Result<()>,
    ) -> Result<Vec<MetricsRow>> {
        let mut all = Vec::new();
        for round in 1..=self.cfg.rounds {
            let rows = self.run_round(round, parallel)?;
            sink(&rows)?;
            all.extend(rows);
        }
        Ok(all)
    }
}

/// Entry positions aggregated under `strategy`: none for local, the
/// structural subset for feddense, every congruent entry for fedavg and
/// fedprox (private feature_init layers with heterogeneous dims stay
/// local).
fn shared_positions(clients: &[ClientState], strategy: Strategy) -> Result<Vec<usize>> {
    if strategy == Strategy::Local {
        return Ok(Vec::new());
    }
    let first = clients[0].params.entries();
    for (ci, c) in clients.iter().enumerate() {
        if c.params.entries().len() != first.len() {
            return Err(Error::Aggregation {
                client_id: ci,
                message: format!(
                    "client has {} parameter entries, client 0 has {}",
                    c.params.entries().len(),
                    first.len()
                ),
            });
        }
    }
    let mut congruent = vec![true; first.len()];
    for (p, entry) in first.iter().enumerate() {
        for (ci, c) in clients.iter().enumerate() {
            let e = &c.params.entries()[p];
            if e.name != entry.name || e.structural != entry.structural {
                return Err(Error::Aggregation {
                    client_id: ci,
                    message: format!(
                        "entry {p} is '{}' here but '{}' on client 0",
                        e.name, entry.name
                    ),
                });
            }
            if e.tensor.shape() != entry.tensor.shape() {
                if strategy == Strategy::FedDense && entry.structural {
                    // Structural shapes are globally fixed; a mismatch is
                    // a bug, not heterogeneity.
                    return Err(Error::Aggregation {
                        client_id: ci,
                        message: format!(
                            "structural entry '{}' has shape {:?}, client 0 has {:?}",
                            entry.name,
                            e.tensor.shape(),
                            entry.tensor.shape()
                        ),
                    });
                }
                congruent[p] = false;
            }
        }
    }

    // A layer goes private as a unit: a congruent bias must not stay
    // shared when its weight's shape is client-specific.
    let layer_of = |name: &str| name.rsplit_once('.').map_or(name, |(head, _)| head).to_string();
    let private_layers: Vec<String> = first
        .iter()
        .zip(&congruent)
        .filter(|(_, &ok)| !ok)
        .map(|(e, _)| layer_of(&e.name))
        .collect();

    let mut shared = Vec::new();
    for (p, entry) in first.iter().enumerate() {
        let wanted = match strategy {
            Strategy::FedDense => entry.structural,
            Strategy::FedAvg | Strategy::FedProx => true,
            Strategy::Local => unreachable!(),
        };
        if wanted && !private_layers.contains(&layer_of(&entry.name)) {
            shared.push(p);
        }
    }
    Ok(shared)
}
