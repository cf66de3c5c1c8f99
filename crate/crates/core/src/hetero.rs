//! Cross-dataset heterogeneity analysis: per-dataset feature and
//! structure distributions and their pairwise Jensen-Shannon divergence
//! heatmaps.
//!
//! Feature side: cosine similarity of the feature vectors of every
//! linked node pair, histogrammed over [-1, 1]. Structure side: a node
//! degree histogram (clipped at the last bucket) concatenated with a
//! clustering-coefficient histogram over [0, 1]; each half is
//! normalized, then the concatenation is renormalized so the halves
//! weigh equally.

use crate::encode::clustering_coefficient;
use crate::error::{Error, Result};
use crate::graph::GraphDataset;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeteroConfig {
    pub similarity_bins: usize,
    pub degree_bins: usize,
    pub cc_bins: usize,
}

impl Default for HeteroConfig {
    fn default() -> Self {
        Self {
            similarity_bins: 20,
            degree_bins: 16,
            cc_bins: 10,
        }
    }
}

impl HeteroConfig {
    pub fn validate(&self) -> Result<()> {
        if self.similarity_bins < 2 || self.degree_bins < 2 || self.cc_bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "histogram bins must be >= 2, got {}/{}/{}",
                self.similarity_bins, self.degree_bins, self.cc_bins
            )));
        }
        Ok(())
    }
}

/// Which distribution a heatmap compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeteroMode {
    Feature,
    Structure,
}

impl HeteroMode {
    pub fn name(self) -> &'static str {
        match self {
            HeteroMode::Feature => "feature",
            HeteroMode::Structure => "structure",
        }
    }
}

impl FromStr for HeteroMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(HeteroMode::Feature),
            "structure" => Ok(HeteroMode::Structure),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode '{other}' (expected feature or structure)"
            ))),
        }
    }
}

/// A normalized histogram: `probabilities[i]` covers
/// `[bin_edges[i], bin_edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(bin_edges: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if bin_edges.len() != probabilities.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} bin edges cannot delimit {} bins",
                bin_edges.len(),
                probabilities.len()
            )));
        }
        if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("bin edges must be strictly ascending".into()));
        }
        if probabilities.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument("negative probability mass".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            bin_edges,
            probabilities,
        })
    }
}

/// Cosine similarity with the zero-vector convention: if either vector
/// is all zero the similarity is 0.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += a as f64 * b as f64;
        nu += (a as f64) * (a as f64);
        nv += (b as f64) * (b as f64);
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

fn bin_index(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = (value - lo) / (hi - lo);
    ((t * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize
}

/// Histogram of cosine similarities over all linked node pairs, `bins`
/// equal-width bins spanning [-1, 1].
pub fn feature_similarity_distribution(
    ds: &GraphDataset,
    bins: usize,
) -> Result<EmpiricalDistribution> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need >= 2 bins, got {bins}")));
    }
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for g in &ds.graphs {
        for &(u, v) in g.edges() {
            let sim = cosine_similarity(g.feature_row(u as usize), g.feature_row(v as usize));
            counts[bin_index(sim, -1.0, 1.0, bins)] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Analysis(format!(
            "dataset '{}' has no edges to compare features across",
            ds.name
        )));
    }
    let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let bin_edges: Vec<f64> = (0..=bins).map(|k| -1.0 + 2.0 * k as f64 / bins as f64).collect();
    EmpiricalDistribution::new(bin_edges, probabilities)
}

/// Degree histogram (bucket per degree, last bucket absorbs everything
/// at or above `degree_bins - 1`) concatenated with a clustering
/// coefficient histogram over [0, 1]. Halves are normalized first, so
/// each carries half of the final mass. The cc bin edges are shifted
/// behind the degree buckets to keep one ascending edge list.
pub fn structure_distribution(
    ds: &GraphDataset,
    degree_bins: usize,
    cc_bins: usize,
) -> Result<EmpiricalDistribution> {
    if degree_bins < 2 || cc_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 bins per half, got {degree_bins} and {cc_bins}"
        )));
    }
    let mut deg_counts = vec![0u64; degree_bins];
    let mut cc_counts = vec![0u64; cc_bins];
    let mut nodes = 0u64;
    for g in &ds.graphs {
        for v in 0..g.num_nodes() {
            deg_counts[g.degree(v).min(degree_bins - 1)] += 1;
            let cc = clustering_coefficient(g, v)?;
            cc_counts[bin_index(cc, 0.0, 1.0, cc_bins)] += 1;
            nodes += 1;
        }
    }
    if nodes == 0 {
        return Err(Error::Analysis(format!("dataset '{}' has no nodes", ds.name)));
    }
    let half = |counts: &[u64]| -> Vec<f64> {
        counts.iter().map(|&c| 0.5 * c as f64 / nodes as f64).collect()
    };
    let mut probabilities = half(&deg_counts);
    probabilities.extend(half(&cc_counts));

    let mut bin_edges: Vec<f64> = (0..=degree_bins).map(|k| k as f64).collect();
    bin_edges.extend((1..=cc_bins).map(|k| degree_bins as f64 + k as f64 / cc_bins as f64));
    EmpiricalDistribution::new(bin_edges, probabilities)
}

/// Jensen-Shannon divergence, log base 2, so the result lies in [0, 1].
/// Zero-mass terms contribute nothing. Requires identical binning.
pub fn js_divergence(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::InvalidArgument(
            "distributions use different binnings".into(),
        ));
    }
    let mut d = 0.0f64;
    for (&pi, &qi) in p.probabilities.iter().zip(&q.probabilities) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            d += 0.5 * pi * (pi / m).log2();
        }
        if qi > 0.0 {
            d += 0.5 * qi * (qi / m).log2();
        }
    }
    Ok(d.max(0.0))
}

/// Pairwise JSD matrix over the datasets' selected distributions:
/// symmetric with a zero diagonal.
pub fn heatmap(
    datasets: &[GraphDataset],
    mode: HeteroMode,
    cfg: &HeteroConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "heatmap needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let dists: Vec<EmpiricalDistribution> = datasets
        .iter()
        .map(|ds| match mode {
            HeteroMode::Feature => feature_similarity_distribution(ds, cfg.similarity_bins),
            HeteroMode::Structure => structure_distribution(ds, cfg.degree_bins, cfg.cc_bins),
        })
        .collect::<Result<_>>()?;

    let n = dists.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = js_divergence(&dists[i], &dists[j])?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    Ok(matrix)
}

/// Heatmap as CSV with dataset names on both axes.
pub fn heatmap_csv(matrix: &[Vec<f64>], names: &[String]) -> String {
    let mut out = String::from("dataset");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(&names[i]);
        for v in row {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}
