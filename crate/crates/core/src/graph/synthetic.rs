//! Synthetic graph generators for desk-scale federations.

use super::{Graph, GraphDataset};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Topology family of a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticKind {
    Cycle,
    Path,
    Star,
    ErdosRenyi { edge_prob: f64 },
}

/// How node features are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// All-ones 1-dimensional features.
    Constant,
    /// I.i.d. uniform `[0, 1)` 1-dimensional features.
    Random,
    /// The node degree as a 1-dimensional feature.
    Degree,
}

/// Generates one graph, deterministic for a given seed.
///
/// A cycle of `n >= 3` nodes has exactly `n` edges (`n = 2` degenerates to
/// a single edge, `n = 1` to an isolated node); paths and stars have
/// `n - 1` edges. The Erdos-Renyi family samples each node pair
/// independently with the given probability.
pub fn generate_synthetic(
    kind: SyntheticKind,
    n_nodes: usize,
    feature_mode: FeatureMode,
    rng_seed: u64,
) -> Result<Graph> {
    if n_nodes == 0 {
        return Err(Error::InvalidArgument("n_nodes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let edges: Vec<(u32, u32)> = match kind {
        SyntheticKind::Cycle => {
            let mut e: Vec<(u32, u32)> = (0..n_nodes.saturating_sub(1))
                .map(|i| (i as u32, (i + 1) as u32))
                .collect();
            if n_nodes >= 3 {
                e.push((n_nodes as u32 - 1, 0));
            }
            e
        }
        SyntheticKind::Path => (0..n_nodes.saturating_sub(1))
            .map(|i| (i as u32, (i + 1) as u32))
            .collect(),
        SyntheticKind::Star => (1..n_nodes).map(|i| (0u32, i as u32)).collect(),
        SyntheticKind::ErdosRenyi { edge_prob } => {
            if !(0.0..=1.0).contains(&edge_prob) {
                return Err(Error::InvalidArgument(format!(
                    "edge probability {edge_prob} not in [0, 1]"
                )));
            }
            let mut e = Vec::new();
            for u in 0..n_nodes {
                for v in (u + 1)..n_nodes {
                    if rng.random::<f64>() < edge_prob {
                        e.push((u as u32, v as u32));
                    }
                }
            }
            e
        }
    };

    // Degree features need the edge list before feature synthesis.
    let mut degree = vec![0usize; n_nodes];
    for &(u, v) in &edges {
        degree[u as usize] += 1;
        degree[v as usize] += 1;
    }
    let features: Vec<f32> = match feature_mode {
        FeatureMode::Constant => vec![1.0; n_nodes],
        FeatureMode::Random => (0..n_nodes).map(|_| rng.random::<f64>() as f32).collect(),
        FeatureMode::Degree => degree.iter().map(|&d| d as f32).collect(),
    };

    Graph::new(n_nodes, edges, features, 1, 0)
}

/// A reproducible multi-group dataset recipe for `gen-data` and
/// per-client synthetic specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRecipe {
    pub name: String,
    pub seed: u64,
    pub groups: Vec<SyntheticGroup>,
}

/// One homogeneous block of graphs inside a [`SyntheticRecipe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGroup {
    pub kind: SyntheticKind,
    pub count: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub feature_mode: FeatureMode,
    pub label: usize,
}

impl SyntheticRecipe {
    /// Materializes the recipe into a dataset.
    ///
    /// Node counts are sampled uniformly in `[min_nodes, max_nodes]` per
    /// graph; every graph gets its own seed derived from the recipe seed,
    /// its group index and its position, so regenerating is bit-stable.
    pub fn build(&self) -> Result<GraphDataset> {
        if self.groups.is_empty() {
            return Err(Error::InvalidArgument("recipe has no groups".into()));
        }
        let num_classes = self
            .groups
            .iter()
            .map(|g| g.label + 1)
            .max()
            .expect("non-empty groups");

        let mut graphs = Vec::new();
        for (gi, group) in self.groups.iter().enumerate() {
            if group.count == 0 {
                return Err(Error::InvalidArgument(format!("group {gi} has count 0")));
            }
            if group.min_nodes == 0 || group.min_nodes > group.max_nodes {
                return Err(Error::InvalidArgument(format!(
                    "group {gi} has bad node range [{}, {}]",
                    group.min_nodes, group.max_nodes
                )));
            }
            for idx in 0..group.count {
                let seed = crate::fed::derive_seed(self.seed, &[gi as u64, idx as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = rng.random_range(group.min_nodes..=group.max_nodes);
                let g = generate_synthetic(group.kind, n, group.feature_mode, seed.wrapping_add(1))?
                    .with_label(group.label);
                graphs.push(g);
            }
        }
        GraphDataset::new(self.name.clone(), graphs, num_classes)
    }
}
