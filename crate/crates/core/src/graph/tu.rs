//! Loader and writer for the TU text dataset layout.
//!
//! A dataset `NAME` in directory `dir` is the file set
//! `NAME_A.txt` (1-based global edge pairs, comma separated),
//! `NAME_graph_indicator.txt` (graph id per global node),
//! `NAME_graph_labels.txt` (one class label per graph), plus at least one
//! of `NAME_node_labels.txt` (integers, one-hot encoded) and
//! `NAME_node_attributes.txt` (comma-separated reals).

use super::{Graph, GraphDataset};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Reads a mandatory file into per-line tokens, skipping blank lines but
/// keeping the original 1-based line numbers for error reporting.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let t = line.trim();
            if t.is_empty() {
                None
            } else {
                Some((i + 1, t.to_string()))
            }
        })
        .collect())
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_int(file: &Path, line: usize, token: &str) -> Result<i64> {
    token
        .trim()
        .parse::<i64>()
        .map_err(|_| parse_err(file, line, format!("expected an integer, got {token:?}")))
}

fn parse_real(file: &Path, line: usize, token: &str) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(file, line, format!("expected a number, got {token:?}")))
}

/// Loads a TU-format dataset.
///
/// Node indices are rebased to 0 per graph; directed duplicate edges
/// collapse to one undirected edge; self-loops are dropped (with a
/// warning naming the count); raw class labels are remapped ascending to
/// `0..num_classes`. Node features are `[attributes || one-hot labels]`
/// when both files exist, otherwise whichever is present.
pub fn load_tu_dataset(dir_path: &Path, name: &str) -> Result<GraphDataset> {
    let file = |suffix: &str| dir_path.join(format!("{name}_{suffix}.txt"));

    // Graph membership of each global node (1-based file ids).
    let ind_path = file("graph_indicator");
    let indicator = read_lines(&ind_path)?;
    let mut node_graph = Vec::with_capacity(indicator.len());
    for (ln, tok) in &indicator {
        let gid = parse_int(&ind_path, *ln, tok)?;
        if gid < 1 {
            return Err(parse_err(&ind_path, *ln, format!("graph id {gid} must be >= 1")));
        }
        node_graph.push(gid);
    }
    if node_graph.is_empty() {
        return Err(Error::MalformedDataset(format!(
            "{} lists no nodes",
            ind_path.display()
        )));
    }

    // Raw graph ids may skip values; remap ascending to 0..G.
    let mut gid_map = BTreeMap::new();
    for &gid in &node_graph {
        let next = gid_map.len();
        gid_map.entry(gid).or_insert(next);
    }
    let num_graphs = gid_map.len();

    // Local node index within its graph, in global-index order.
    let mut graph_sizes = vec![0usize; num_graphs];
    let mut local_index = Vec::with_capacity(node_graph.len());
    let mut graph_of = Vec::with_capacity(node_graph.len());
    for &gid in &node_graph {
        let g = gid_map[&gid];
        graph_of.push(g);
        local_index.push(graph_sizes[g] as u32);
        graph_sizes[g] += 1;
    }

    // Class labels, one line per graph, remapped ascending.
    let lab_path = file("graph_labels");
    let label_lines = read_lines(&lab_path)?;
    if label_lines.len() != num_graphs {
        return Err(Error::MalformedDataset(format!(
            "{} has {} labels but the indicator defines {} graphs",
            lab_path.display(),
            label_lines.len(),
            num_graphs
        )));
    }
    let mut raw_labels = Vec::with_capacity(num_graphs);
    for (ln, tok) in &label_lines {
        raw_labels.push(parse_int(&lab_path, *ln, tok)?);
    }
    let mut class_map = BTreeMap::new();
    for &l in &raw_labels {
        class_map.insert(l, 0usize);
    }
    for (i, (_, v)) in class_map.iter_mut().enumerate() {
        *v = i;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_map[l]).collect();
    let num_classes = class_map.len();

    // Edges: global 1-based pairs, both endpoints inside one graph.
    let a_path = file("A");
    let mut graph_edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_graphs];
    let mut dropped_self_loops = 0usize;
    for (ln, row) in read_lines(&a_path)? {
        let mut it = row.split(',');
        let (u_tok, v_tok) = match (it.next(), it.next(), it.next()) {
            (Some(u), Some(v), None) => (u, v),
            _ => return Err(parse_err(&a_path, ln, "expected exactly two comma-separated indices")),
        };
        let u = parse_int(&a_path, ln, u_tok)?;
        let v = parse_int(&a_path, ln, v_tok)?;
        let range = 1..=node_graph.len() as i64;
        if !range.contains(&u) || !range.contains(&v) {
            return Err(Error::MalformedDataset(format!(
                "edge ({u}, {v}) at {}:{ln} references a node outside 1..={}",
                a_path.display(),
                node_graph.len()
            )));
        }
        let (ui, vi) = (u as usize - 1, v as usize - 1);
        if graph_of[ui] != graph_of[vi] {
            return Err(Error::MalformedDataset(format!(
                "edge ({u}, {v}) at {}:{ln} crosses graphs",
                a_path.display()
            )));
        }
        if u == v {
            dropped_self_loops += 1;
            continue;
        }
        graph_edges[graph_of[ui]].push((local_index[ui], local_index[vi]));
    }
    if dropped_self_loops > 0 {
        log::warn!("{name}: dropped {dropped_self_loops} self-loop(s) from {}", a_path.display());
    }

    // Node features: attributes, one-hot labels, or their concatenation.
    let nl_path = file("node_labels");
    let na_path = file("node_attributes");
    let node_labels = if nl_path.is_file() {
        let lines = read_lines(&nl_path)?;
        if lines.len() != node_graph.len() {
            return Err(Error::MalformedDataset(format!(
                "{} has {} lines but the indicator defines {} nodes",
                nl_path.display(),
                lines.len(),
                node_graph.len()
            )));
        }
        let mut vals = Vec::with_capacity(lines.len());
        for (ln, tok) in &lines {
            vals.push(parse_int(&nl_path, *ln, tok)?);
        }
        Some(vals)
    } else {
        None
    };
    let node_attrs = if na_path.is_file() {
        let lines = read_lines(&na_path)?;
        if lines.len() != node_graph.len() {
            return Err(Error::MalformedDataset(format!(
                "{} has {} lines but the indicator defines {} nodes",
                na_path.display(),
                lines.len(),
                node_graph.len()
            )));
        }
        let mut rows: Vec<Vec<f32>> = Vec::with_capacity(lines.len());
        let mut dim = None;
        for (ln, row) in &lines {
            let mut vals = Vec::new();
            for tok in row.split(',') {
                vals.push(parse_real(&na_path, *ln, tok)? as f32);
            }
            match dim {
                None => dim = Some(vals.len()),
                Some(d) if d != vals.len() => {
                    return Err(parse_err(
                        &na_path,
                        *ln,
                        format!("attribute row has {} values, expected {d}", vals.len()),
                    ));
                }
                _ => {}
            }
            rows.push(vals);
        }
        Some(rows)
    } else {
        None
    };
    if node_labels.is_none() && node_attrs.is_none() {
        return Err(Error::MissingFile(nl_path));
    }

    // Ascending one-hot positions for observed node labels.
    let label_slots: BTreeMap<i64, usize> = node_labels
        .as_ref()
        .map(|vals| {
            let mut m = BTreeMap::new();
            for &v in vals {
                m.insert(v, 0usize);
            }
            for (i, (_, slot)) in m.iter_mut().enumerate() {
                *slot = i;
            }
            m
        })
        .unwrap_or_default();

    let attr_dim = node_attrs.as_ref().map_or(0, |rows| rows[0].len());
    let feature_dim = attr_dim + label_slots.len();

    let mut features: Vec<Vec<f32>> = graph_sizes
        .iter()
        .map(|&n| vec![0.0; n * feature_dim])
        .collect();
    for global in 0..node_graph.len() {
        let g = graph_of[global];
        let base = local_index[global] as usize * feature_dim;
        if let Some(rows) = &node_attrs {
            features[g][base..base + attr_dim].copy_from_slice(&rows[global]);
        }
        if let Some(vals) = &node_labels {
            features[g][base + attr_dim + label_slots[&vals[global]]] = 1.0;
        }
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        if graph_sizes[g] == 0 {
            return Err(Error::MalformedDataset(format!("graph {} has zero nodes", g + 1)));
        }
        graphs.push(Graph::new(
            graph_sizes[g],
            std::mem::take(&mut graph_edges[g]),
            std::mem::take(&mut features[g]),
            feature_dim,
            labels[g],
        )?);
    }
    GraphDataset::new(name, graphs, num_classes)
}

/// Writes `ds` as a TU-format directory (the inverse of [`load_tu_dataset`]).
///
/// Edges are emitted in both directions, matching the public corpus
/// convention; features go to `NAME_node_attributes.txt`.
pub fn write_tu_dataset(ds: &GraphDataset, dir_path: &Path) -> Result<()> {
    fs::create_dir_all(dir_path)?;
    let file = |suffix: &str| -> PathBuf { dir_path.join(format!("{}_{suffix}.txt", ds.name)) };

    let mut a = fs::File::create(file("A"))?;
    let mut indicator = fs::File::create(file("graph_indicator"))?;
    let mut labels = fs::File::create(file("graph_labels"))?;
    let mut attrs = fs::File::create(file("node_attributes"))?;

    let mut base = 1usize; // global id of the current graph's node 0
    for (gi, g) in ds.graphs.iter().enumerate() {
        writeln!(labels, "{}", g.label())?;
        for v in 0..g.num_nodes() {
            writeln!(indicator, "{}", gi + 1)?;
            let row: Vec<String> = g.feature_row(v).iter().map(|x| x.to_string()).collect();
            writeln!(attrs, "{}", row.join(", "))?;
        }
        for &(u, v) in g.edges() {
            writeln!(a, "{}, {}", base + u as usize, base + v as usize)?;
            writeln!(a, "{}, {}", base + v as usize, base + u as usize)?;
        }
        base += g.num_nodes();
    }
    Ok(())
}
