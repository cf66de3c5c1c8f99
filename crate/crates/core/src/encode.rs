//! Per-node structural encodings: degree one-hot plus random-walk return
//! probabilities, fused by concatenation, and the clustering coefficient
//! used by the heterogeneity analysis.

use crate::error::{Error, Result};
use crate::graph::Graph;
use serde::{Deserialize, Serialize};

/// How the two encoding blocks are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Concat,
}

/// Structural-vector layout: `degree_dim` one-hot buckets followed by
/// `rwpe_dim` random-walk return probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructEncodingConfig {
    pub degree_dim: usize,
    pub rwpe_dim: usize,
    pub fusion: Fusion,
}

impl Default for StructEncodingConfig {
    fn default() -> Self {
        Self {
            degree_dim: 16,
            rwpe_dim: 16,
            fusion: Fusion::Concat,
        }
    }
}

impl StructEncodingConfig {
    pub fn total_dim(&self) -> usize {
        self.degree_dim + self.rwpe_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree_dim == 0 {
            return Err(Error::InvalidArgument(
                "degree_dim must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One-hot degree bucket of node `v`; degrees at or above `dim - 1`
/// clip into the last bucket.
pub fn degree_onehot(g: &Graph, v: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("one-hot dim must be at least 1".into()));
    }
    if v >= g.num_nodes() {
        return Err(Error::IndexOutOfRange(format!(
            "node {v} out of range for graph with {} nodes",
            g.num_nodes()
        )));
    }
    let mut row = vec![0.0; dim];
    row[g.degree(v).min(dim - 1)] = 1.0;
    Ok(row)
}

/// Return probabilities of a uniform random walk from `v`: entry `j`
/// (0-based) is the chance the walk is back at `v` after `j + 1` steps.
///
/// Computed by pushing the probability mass along edges, k sparse
/// matrix-vector products; a zero-degree start node yields all zeros.
pub fn rwpe(g: &Graph, v: usize, k: usize) -> Result<Vec<f64>> {
    if v >= g.num_nodes() {
        return Err(Error::IndexOutOfRange(format!(
            "node {v} out of range for graph with {} nodes",
            g.num_nodes()
        )));
    }
    if g.degree(v) == 0 {
        return Ok(vec![0.0; k]);
    }
    let n = g.num_nodes();
    let mut mass = vec![0.0f64; n];
    mass[v] = 1.0;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut next = vec![0.0f64; n];
        for u in 0..n {
            if mass[u] == 0.0 {
                continue;
            }
            let d = g.degree(u);
            if d == 0 {
                continue; // unreachable: only edges carry mass here
            }
            let share = mass[u] / d as f64;
            for &w in g.neighbors(u)? {
                next[w as usize] += share;
            }
        }
        mass = next;
        out.push(mass[v]);
    }
    Ok(out)
}

/// Flat row-major `num_nodes x total_dim` matrix of structural vectors,
/// row `v` = `[degree one-hot || rwpe]`.
pub fn build_structural_vectors(g: &Graph, cfg: &StructEncodingConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let dim = cfg.total_dim();
    let mut out = Vec::with_capacity(g.num_nodes() * dim);
    for v in 0..g.num_nodes() {
        for d in degree_onehot(g, v, cfg.degree_dim)? {
            out.push(d as f32);
        }
        if cfg.rwpe_dim > 0 {
            for p in rwpe(g, v, cfg.rwpe_dim)? {
                out.push(p as f32);
            }
        }
    }
    Ok(out)
}

/// 2 T(v) / (d (d - 1)) with T(v) the number of edges among the
/// neighbors of `v`; zero for degrees below 2.
pub fn clustering_coefficient(g: &Graph, v: usize) -> Result<f64> {
    if v >= g.num_nodes() {
        return Err(Error::IndexOutOfRange(format!(
            "node {v} out of range for graph with {} nodes",
            g.num_nodes()
        )));
    }
    let nbrs = g.neighbors(v)?;
    let d = nbrs.len();
    if d < 2 {
        return Ok(0.0);
    }
    let mut closed = 0usize;
    for i in 0..d {
        for j in (i + 1)..d {
            if g.has_edge(nbrs[i] as usize, nbrs[j] as usize) {
                closed += 1;
            }
        }
    }
    Ok(2.0 * closed as f64 / (d * (d - 1)) as f64)
}

/// Dense random-walk transition matrix D^{-1} A (row-stochastic where
/// defined); the reference oracle for [`rwpe`] on small graphs.
pub fn dense_walk_matrix(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut rw = vec![vec![0.0; n]; n];
    for v in 0..n {
        let d = g.degree(v);
        if d == 0 {
            continue;
        }
        for &u in g.neighbors(v).expect("in range") {
            rw[v][u as usize] = 1.0 / d as f64;
        }
    }
    rw
}

/// Naive dense matrix product, oracle-side helper.
pub fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}
