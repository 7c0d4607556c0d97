//! TUDataset text layout: `DS_A.txt`, `DS_graph_indicator.txt`, and the
//! optional `DS_graph_labels.txt`, `DS_node_labels.txt`,
//! `DS_node_attributes.txt`. Indices are 1-based and comma separated.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Graph};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Node features for corpora with neither node labels nor attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeaturelessMode {
    /// A single constant 1.0 column.
    #[default]
    Constant,
    /// One-hot node degree, clipped at `max_degree`.
    DegreeOneHot { max_degree: usize },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub featureless: FeaturelessMode,
}

pub fn load_tudataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    load_tudataset_with(dir, LoadOptions::default())
}

fn dataset_name(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| Error::ingest(dir.display().to_string(), None, e.to_string()))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|n| n.strip_suffix("_A.txt").map(str::to_owned))
        .collect();
    names.sort();
    names
        .into_iter()
        .next()
        .ok_or_else(|| Error::ingest(dir.join("DS_A.txt").display().to_string(), None, "missing mandatory file"))
}

fn read_lines(path: &Path, mandatory: bool) -> Result<Option<Vec<(usize, String)>>> {
    if !path.exists() {
        return if mandatory {
            Err(Error::ingest(path.display().to_string(), None, "missing mandatory file"))
        } else {
            Ok(None)
        };
    }
    let text = fs::read_to_string(path).map_err(|e| Error::ingest(path.display().to_string(), None, e.to_string()))?;
    Ok(Some(
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.trim().to_owned()))
            .collect(),
    ))
}

fn parse_int(path: &Path, line: usize, s: &str) -> Result<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| Error::ingest(path.display().to_string(), Some(line), format!("not an integer: `{s}`")))
}

fn parse_index(path: &Path, line: usize, s: &str, upper: usize) -> Result<usize> {
    let v = parse_int(path, line, s)?;
    if v < 1 || v as usize > upper {
        return Err(Error::ingest(
            path.display().to_string(),
            Some(line),
            format!("index {v} out of range 1..={upper}"),
        ));
    }
    Ok(v as usize - 1)
}

pub fn load_tudataset_with(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<Dataset> {
    let dir = dir.as_ref();
    let name = dataset_name(dir)?;
    let file = |suffix: &str| -> PathBuf { dir.join(format!("{name}_{suffix}.txt")) };

    let indicator_path = file("graph_indicator");
    let indicator_lines = read_lines(&indicator_path, true)?.unwrap_or_default();
    let mut graph_of = Vec::with_capacity(indicator_lines.len());
    for (line, text) in &indicator_lines {
        let g = parse_int(&indicator_path, *line, text)?;
        if g < 1 {
            return Err(Error::ingest(indicator_path.display().to_string(), Some(*line), format!("graph id {g} < 1")));
        }
        graph_of.push(g as usize - 1);
    }
    let num_nodes_total = graph_of.len();
    let num_graphs = graph_of.iter().max().map_or(0, |m| m + 1);
    if num_graphs == 0 {
        return Err(Error::ingest(indicator_path.display().to_string(), None, "no graphs"));
    }
    // Local index of every global node.
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(num_nodes_total);
    for &g in &graph_of {
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::ingest(
            indicator_path.display().to_string(),
            None,
            format!("graph {} has zero nodes", empty + 1),
        ));
    }

    let a_path = file("A");
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, text) in read_lines(&a_path, true)?.unwrap_or_default() {
        let mut parts = text.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::ingest(a_path.display().to_string(), Some(line), "expected `u, v`"));
        };
        let u = parse_index(&a_path, line, a, num_nodes_total)?;
        let v = parse_index(&a_path, line, b, num_nodes_total)?;
        if graph_of[u] != graph_of[v] {
            return Err(Error::ingest(a_path.display().to_string(), Some(line), "edge joins two graphs"));
        }
        edges[graph_of[u]].push((local[u], local[v]));
    }

    let labels_path = file("graph_labels");
    let (graph_labels, num_classes) = match read_lines(&labels_path, false)? {
        None => (vec![None; num_graphs], 0),
        Some(lines) => {
            if lines.len() != num_graphs {
                return Err(Error::ingest(
                    labels_path.display().to_string(),
                    None,
                    format!("{} labels for {num_graphs} graphs", lines.len()),
                ));
            }
            let raw: Vec<i64> = lines
                .iter()
                .map(|(l, t)| parse_int(&labels_path, *l, t))
                .collect::<Result<_>>()?;
            let classes: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let mapped = raw
                .iter()
                .map(|y| Some(classes.binary_search(y).unwrap()))
                .collect();
            (mapped, classes.len())
        }
    };

    let features = node_features(&file, num_nodes_total, &graph_of, &edges, opts)?;

    let mut graphs = Vec::with_capacity(num_graphs);
    let d = features.cols();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); num_graphs];
    for (i, &g) in graph_of.iter().enumerate() {
        rows[g].extend_from_slice(features.row(i));
    }
    for g in 0..num_graphs {
        let x = Tensor::matrix(sizes[g], d, std::mem::take(&mut rows[g]))?;
        graphs.push(Graph::new(x, edges[g].iter().copied(), graph_labels[g])?);
    }
    Dataset::new(name, graphs, num_classes)
}

fn node_features(
    file: &dyn Fn(&str) -> PathBuf,
    n: usize,
    graph_of: &[usize],
    edges: &[Vec<(usize, usize)>],
    opts: LoadOptions,
) -> Result<Tensor> {
    let attr_path = file("node_attributes");
    if let Some(lines) = read_lines(&attr_path, false)? {
        if lines.len() != n {
            return Err(Error::ingest(attr_path.display().to_string(), None, format!("{} rows for {n} nodes", lines.len())));
        }
        let mut data = Vec::new();
        let mut d = None;
        for (line, text) in &lines {
            let row: Vec<f64> = text
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::ingest(attr_path.display().to_string(), Some(*line), format!("not a float: `{s}`")))
                })
                .collect::<Result<_>>()?;
            match d {
                None => d = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::ingest(attr_path.display().to_string(), Some(*line), "ragged attribute row"))
                }
                _ => {}
            }
            data.extend(row);
        }
        return Tensor::matrix(n, d.unwrap_or(0), data);
    }

    let nl_path = file("node_labels");
    if let Some(lines) = read_lines(&nl_path, false)? {
        if lines.len() != n {
            return Err(Error::ingest(nl_path.display().to_string(), None, format!("{} labels for {n} nodes", lines.len())));
        }
        let raw: Vec<i64> = lines
            .iter()
            .map(|(l, t)| parse_int(&nl_path, *l, t.split(',').next().unwrap_or("")))
            .collect::<Result<_>>()?;
        let values: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let d = values.len();
        let mut data = vec![0.0; n * d];
        for (i, y) in raw.iter().enumerate() {
            data[i * d + values.binary_search(y).unwrap()] = 1.0;
        }
        return Tensor::matrix(n, d, data);
    }

    match opts.featureless {
        FeaturelessMode::Constant => Ok(Tensor::full(&[n, 1], 1.0)),
        FeaturelessMode::DegreeOneHot { max_degree } => {
            // Degrees per (graph, local node) after undirected dedup.
            let mut deg = vec![0usize; n];
            let mut global_of: Vec<Vec<usize>> = vec![Vec::new(); edges.len()];
            for (i, &g) in graph_of.iter().enumerate() {
                global_of[g].push(i);
            }
            for (g, es) in edges.iter().enumerate() {
                let mut canon: Vec<(usize, usize)> = es
                    .iter()
                    .filter(|(a, b)| a != b)
                    .map(|&(a, b)| (a.min(b), a.max(b)))
                    .collect();
                canon.sort_unstable();
                canon.dedup();
                for (a, b) in canon {
                    deg[global_of[g][a]] += 1;
                    deg[global_of[g][b]] += 1;
                }
            }
            let d = max_degree + 1;
            let mut data = vec![0.0; n * d];
            for (i, &k) in deg.iter().enumerate() {
                data[i * d + k.min(max_degree)] = 1.0;
            }
            Tensor::matrix(n, d, data)
        }
    }
}

/// Writes `dataset` in TUDataset layout under `dir` with prefix `dataset.name`.
/// Features are written as node attributes so a reload reproduces them exactly.
pub fn write_tudataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = &dataset.name;
    let (mut a, mut ind, mut labels, mut attrs) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        for &(u, v) in g.edges() {
            let _ = writeln!(a, "{}, {}", u + offset + 1, v + offset + 1);
            let _ = writeln!(a, "{}, {}", v + offset + 1, u + offset + 1);
        }
        for i in 0..g.num_nodes() {
            let _ = writeln!(ind, "{}", gi + 1);
            let row: Vec<String> = g.features().row(i).iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(attrs, "{}", row.join(", "));
        }
        if let Some(y) = g.label() {
            let _ = writeln!(labels, "{y}");
        }
        offset += g.num_nodes();
    }
    fs::write(dir.join(format!("{name}_A.txt")), a)?;
    fs::write(dir.join(format!("{name}_graph_indicator.txt")), ind)?;
    fs::write(dir.join(format!("{name}_node_attributes.txt")), attrs)?;
    if dataset.graphs().iter().all(|g| g.label().is_some()) && !dataset.is_empty() {
        fs::write(dir.join(format!("{name}_graph_labels.txt")), labels)?;
    }
    Ok(())
}
