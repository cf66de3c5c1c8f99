//! Graph data model, dataset ingestion and splitting.
//!
//! All types here are immutable after construction and safe to share
//! across threads without synchronization.

mod synthetic;
mod tu;

pub use synthetic::{generate_synthetic, FeatureMode, SyntheticGroup, SyntheticKind, SyntheticRecipe};
pub use tu::{load_tu_dataset, write_tu_dataset};

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An undirected simple graph with per-node feature vectors and a class label.
///
/// Edges are stored deduplicated with endpoints ordered `(min, max)`;
/// self-loops are rejected at construction. A compact adjacency structure
/// is built once so neighbor queries are cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    node_features: Vec<f32>,
    feature_dim: usize,
    label: usize,
    adj_offsets: Vec<usize>,
    adj_targets: Vec<u32>,
}

impl Graph {
    /// Builds a graph, normalizing the edge list.
    ///
    /// Edge pairs may come in either orientation and may repeat; they are
    /// canonicalized to `(min, max)` and deduplicated. Self-loops and
    /// out-of-range endpoints are errors, as is a feature matrix whose
    /// length is not `num_nodes * feature_dim`.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(u32, u32)>,
        node_features: Vec<f32>,
        feature_dim: usize,
        label: usize,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidArgument("graph must have at least one node".into()));
        }
        if node_features.len() != num_nodes * feature_dim {
            return Err(Error::InvalidArgument(format!(
                "feature matrix has {} entries, expected {} ({} nodes x dim {})",
                node_features.len(),
                num_nodes * feature_dim,
                num_nodes,
                feature_dim
            )));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({u}, {v}) exceeds node count {num_nodes}"
                )));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop on node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &canon {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut adj_offsets = Vec::with_capacity(num_nodes + 1);
        adj_offsets.push(0);
        for d in &degree {
            adj_offsets.push(adj_offsets.last().unwrap() + d);
        }
        let mut cursor = adj_offsets.clone();
        let mut adj_targets = vec![0u32; 2 * canon.len()];
        for &(u, v) in &canon {
            adj_targets[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            adj_targets[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        for v in 0..num_nodes {
            adj_targets[adj_offsets[v]..adj_offsets[v + 1]].sort_unstable();
        }

        Ok(Self {
            num_nodes,
            edges: canon,
            node_features,
            feature_dim,
            label,
            adj_offsets,
            adj_targets,
        })
    }

    /// Returns a copy of this graph with a different class label.
    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Deduplicated undirected edges, endpoints ordered `(min, max)`.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Row-major `num_nodes x feature_dim` feature matrix.
    pub fn node_features(&self) -> &[f32] {
        &self.node_features
    }

    /// Feature row of node `v`.
    pub fn feature_row(&self, v: usize) -> &[f32] {
        &self.node_features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    /// One-hop neighbors of `v`, sorted ascending.
    pub fn neighbors(&self, v: usize) -> Result<&[u32]> {
        if v >= self.num_nodes {
            return Err(Error::IndexOutOfRange(format!(
                "node {v} out of range for graph with {} nodes",
                self.num_nodes
            )));
        }
        Ok(&self.adj_targets[self.adj_offsets[v]..self.adj_offsets[v + 1]])
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_offsets[v + 1] - self.adj_offsets[v]
    }

    /// Whether `u` and `v` are adjacent. Used by clustering-coefficient
    /// style statistics; logarithmic in the degree of `u`.
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj_targets[self.adj_offsets[u]..self.adj_offsets[u + 1]]
            .binary_search(&(v as u32))
            .is_ok()
    }
}

/// A collection of graphs sharing one feature dimensionality and label space.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub name: String,
    pub feature_dim: usize,
}

impl GraphDataset {
    /// Validates labels against `num_classes` and feature dimensions
    /// against `feature_dim`.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("dataset has no graphs".into()));
        }
        let feature_dim = graphs[0].feature_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.label() >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "graph {i} has label {} but dataset has {num_classes} classes",
                    g.label()
                )));
            }
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidArgument(format!(
                    "graph {i} has feature dim {} but dataset uses {feature_dim}",
                    g.feature_dim()
                )));
            }
        }
        Ok(Self {
            graphs,
            num_classes,
            name: name.into(),
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Train/validation/test index lists over one [`GraphDataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitDataset {
    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Which partition of a [`SplitDataset`] to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Randomly partitions `ds` into train/val/test index lists.
///
/// Sizes are `floor(ratio * n)` per split with the remainder handed to
/// train first, then val. The permutation is deterministic for a given
/// seed.
pub fn split_dataset(
    ds: &GraphDataset,
    ratios: (f64, f64, f64),
    rng_seed: u64,
) -> Result<SplitDataset> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv < 0.0 || rs < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got ({rt}, {rv}, {rs})"
        )));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {}",
            rt + rv + rs
        )));
    }

    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    order.shuffle(&mut rng);

    let mut sizes = [
        (rt * n as f64).floor() as usize,
        (rv * n as f64).floor() as usize,
        (rs * n as f64).floor() as usize,
    ];
    let mut remainder = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut() {
        if remainder == 0 {
            break;
        }
        *s += 1;
        remainder -= 1;
    }

    let val_start = sizes[0];
    let test_start = sizes[0] + sizes[1];
    Ok(SplitDataset {
        train: order[..val_start].to_vec(),
        val: order[val_start..test_start].to_vec(),
        test: order[test_start..].to_vec(),
    })
}
