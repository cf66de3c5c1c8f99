//! Analytic accounting of FLOPs, parameter counts, model size and
//! per-round communication payload, cross-checked against the
//! instrumented tape.
//!
//! Conventions (documented once, used everywhere): multiply-accumulate
//! counts as 2 FLOPs; a convolution charges 2|E|a for aggregation (self
//! terms free) plus 2|V|ab for its linear transform (bias free);
//! elementwise ops charge one FLOP per element; concatenation is free;
//! backward is estimated as 2x forward; sizes assume 4-byte parameters.

use crate::error::{Error, Result};
use crate::fed::Strategy;
use crate::graph::Graph;
use crate::model::{self, entry_specs, ModelConfig, ModelVariant, ParamEntry};
use crate::nn::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    /// Forward FLOPs for one graph of the sampled size.
    pub analytic_flops_per_graph: u64,
    /// Instrumented forward on a canonical graph of the same size, times
    /// 3 for the backward estimate: the training cost of a nominal
    /// one-graph round.
    pub measured_flops_per_round: u64,
    pub param_count_total: u64,
    pub param_count_structural: u64,
    /// 4 bytes per parameter.
    pub model_size_bytes: u64,
    /// Upload bytes per client per round under the given strategy.
    pub payload_bytes_per_round: u64,
}

/// Cost of one convolution layer on a graph with `v` nodes and `e`
/// undirected edges, mapping width `a` to width `b`:
/// flops = 2ea + 2vab, params = ab + b.
pub fn analytic_layer_cost(v: u64, e: u64, a: u64, b: u64) -> (u64, u64) {
    (2 * e * a + 2 * v * a * b, a * b + b)
}

/// Forward FLOPs of one graph through the model, mirroring the tape's
/// charges operation for operation.
pub fn analytic_forward_flops(cfg: &ModelConfig, num_nodes: usize, num_edges: usize) -> u64 {
    let n = num_nodes as u64;
    let m = num_edges as u64;
    let r = cfg.hidden as u64;
    let f = cfg.feature_dim as u64;
    let s = cfg.struct_dim as u64;
    let c = cfg.num_classes as u64;
    let l_total = cfg.num_layers as u64;

    // Init layers: plain linear transforms (no aggregation).
    let mut flops = analytic_layer_cost(n, 0, f, r).0;
    if cfg.variant.has_struct() {
        flops += analytic_layer_cost(n, 0, s, r).0;
    }

    for l in 1..=l_total {
        if cfg.variant.has_struct() {
            // Structural channel: relu_dropout on [n x r], then GCN.
            flops += n * r;
            flops += analytic_layer_cost(n, m, r, r).0;
        }
        let a = cfg.feature_in_width(l as usize) as u64;
        match cfg.variant {
            ModelVariant::Ddc => {
                // Two relu_dropout blocks of [n x lr] each (concats are
                // free), then GIN on the combined width a = 2lr.
                flops += 2 * (n * l * r);
                flops += analytic_layer_cost(n, m, a, r).0;
            }
            ModelVariant::Decoupled | ModelVariant::Single => {
                flops += n * a;
                flops += analytic_layer_cost(n, m, a, r).0;
            }
        }
    }

    // Readout: concat free, mean_pool one FLOP per element, classifier
    // is a linear on a single row.
    let width = cfg.readout_width() as u64;
    flops += n * width;
    flops += analytic_layer_cost(1, 0, width, c).0;
    flops
}

/// Scalar parameters in the subset `strategy` shares each round.
pub fn shared_param_count(cfg: &ModelConfig, strategy: Strategy) -> u64 {
    let specs = entry_specs(cfg);
    match strategy {
        Strategy::Local => 0,
        Strategy::FedDense => specs
            .iter()
            .filter(|e| e.structural)
            .map(|e| e.shape.iter().product::<usize>() as u64)
            .sum(),
        Strategy::FedAvg | Strategy::FedProx => specs
            .iter()
            .map(|e| e.shape.iter().product::<usize>() as u64)
            .sum(),
    }
}

/// A deterministic graph with exactly the requested node and edge
/// counts: the first `num_edges` node pairs in lexicographic order.
fn canonical_graph(num_nodes: usize, num_edges: usize, feature_dim: usize) -> Result<Graph> {
    let max = num_nodes.saturating_mul(num_nodes.saturating_sub(1)) / 2;
    if num_edges > max {
        return Err(Error::InvalidArgument(format!(
            "{num_edges} edges do not fit in a simple graph on {num_nodes} nodes"
        )));
    }
    let mut edges = Vec::with_capacity(num_edges);
    'outer: for u in 0..num_nodes as u32 {
        for v in (u + 1)..num_nodes as u32 {
            if edges.len() == num_edges {
                break 'outer;
            }
            edges.push((u, v));
        }
    }
    Graph::new(num_nodes, edges, vec![1.0; num_nodes * feature_dim], feature_dim, 0)
}

fn zero_params(cfg: &ModelConfig) -> model::DdcParameters<f32> {
    let entries = entry_specs(cfg)
        .into_iter()
        .map(|spec| ParamEntry {
            tensor: Tensor::zeros(&spec.shape),
            name: spec.name,
            structural: spec.structural,
            is_bias: spec.is_bias,
        })
        .collect();
    model::DdcParameters::from_entries(cfg.variant, entries)
}

/// Instrumented forward FLOPs of one graph (loss excluded). Exposed so
/// analytic and measured paths can be cross-checked on arbitrary graphs.
pub fn measured_forward_flops(cfg: &ModelConfig, g: &Graph) -> Result<u64> {
    let params = zero_params(cfg);
    let mut tape = Tape::<f32>::instrumented();
    let leaves = params.push_leaves(&mut tape, false);
    let x = Tensor::from_f32_slice(
        &[g.num_nodes(), cfg.feature_dim],
        &vec![1.0; g.num_nodes() * cfg.feature_dim],
    )?;
    let s = if cfg.variant.has_struct() {
        Some(Tensor::from_f32_slice(
            &[g.num_nodes(), cfg.struct_dim],
            &vec![1.0; g.num_nodes() * cfg.struct_dim],
        )?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model::forward(&mut tape, g, &x, s.as_ref(), &leaves, cfg, false, &mut rng)?;
    Ok(tape.flops().expect("tape is instrumented"))
}

/// Full resource accounting for a model under a sharing strategy, sized
/// for a sample graph with `sample_graph_stats` = (nodes, edges).
pub fn model_report(
    cfg: &ModelConfig,
    strategy: Strategy,
    sample_graph_stats: (usize, usize),
) -> Result<ResourceReport> {
    cfg.validate()?;
    let (v, e) = sample_graph_stats;
    let analytic = analytic_forward_flops(cfg, v, e);
    let graph = canonical_graph(v, e, cfg.feature_dim)?;
    let measured_forward = measured_forward_flops(cfg, &graph)?;

    let specs = entry_specs(cfg);
    let total: u64 = specs
        .iter()
        .map(|s| s.shape.iter().product::<usize>() as u64)
        .sum();
    let structural: u64 = specs
        .iter()
        .filter(|s| s.structural)
        .map(|s| s.shape.iter().product::<usize>() as u64)
        .sum();

    Ok(ResourceReport {
        analytic_flops_per_graph: analytic,
        measured_flops_per_round: 3 * measured_forward,
        param_count_total: total,
        param_count_structural: structural,
        model_size_bytes: 4 * total,
        payload_bytes_per_round: 4 * shared_param_count(cfg, strategy),
    })
}
