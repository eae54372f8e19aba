//! Reader and writer for the TU dortmund text format.
//!
//! `DS_A.txt` holds 1-indexed directed node pairs, `DS_graph_indicator.txt`
//! the 1-indexed graph id of every node and `DS_graph_labels.txt` one label
//! per graph. Node labels and node attributes are optional.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, GraphRecord, GraphTopology};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TuParse {
    pub dataset: Dataset,
    /// Things that were present but ignored (edge labels, attributes).
    pub warnings: Vec<String>,
}

struct TextFile {
    name: String,
    lines: Vec<(usize, String)>,
}

impl TextFile {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(TextFile { name, lines })
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { file: self.name.clone(), line, message: message.into() }
    }

    fn int(&self, line: usize, field: &str) -> Result<i64> {
        field
            .trim()
            .parse::<i64>()
            .map_err(|_| self.error(line, format!("expected an integer, found {:?}", field.trim())))
    }

    fn index(&self, line: usize, field: &str) -> Result<usize> {
        let v = self.int(line, field)?;
        if v < 1 {
            return Err(self.error(line, format!("indices are 1-based, found {v}")));
        }
        Ok(v as usize)
    }
}

fn file_path(root: &Path, name: &str, suffix: &str) -> PathBuf {
    root.join(format!("{name}_{suffix}.txt"))
}

fn required(root: &Path, name: &str, suffix: &str) -> Result<TextFile> {
    let path = file_path(root, name, suffix);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    TextFile::read(&path)
}

fn optional(root: &Path, name: &str, suffix: &str) -> Result<Option<TextFile>> {
    let path = file_path(root, name, suffix);
    if path.is_file() {
        TextFile::read(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Loads `root/name_*.txt`. Accepts either `root` or `root/name` as the
/// directory holding the files.
pub fn parse_tu_dataset(root: &Path, name: &str) -> Result<Dataset> {
    parse_tu_dataset_report(root, name).map(|p| p.dataset)
}

pub fn parse_tu_dataset_report(root: &Path, name: &str) -> Result<TuParse> {
    let nested = root.join(name);
    let dir = if file_path(&nested, name, "A").is_file() { nested } else { root.to_path_buf() };
    let dir = dir.as_path();

    let adjacency = required(dir, name, "A")?;
    let indicator = required(dir, name, "graph_indicator")?;
    let graph_labels = required(dir, name, "graph_labels")?;

    let raw_labels: Vec<i64> =
        graph_labels.lines.iter().map(|(ln, l)| graph_labels.int(*ln, l)).collect::<Result<_>>()?;
    let n_graphs = raw_labels.len();
    if n_graphs == 0 {
        return Err(Error::Dataset(format!("{name}: no graph labels")));
    }

    // node -> (graph, local index)
    let mut graph_of = Vec::with_capacity(indicator.lines.len());
    let mut local_of = Vec::with_capacity(indicator.lines.len());
    let mut sizes = vec![0usize; n_graphs];
    for (ln, l) in &indicator.lines {
        let g = indicator.index(*ln, l)?;
        if g > n_graphs {
            return Err(indicator.error(*ln, format!("graph id {g} exceeds the {n_graphs} graph labels")));
        }
        graph_of.push(g - 1);
        local_of.push(sizes[g - 1]);
        sizes[g - 1] += 1;
    }
    let n_nodes = graph_of.len();
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Dataset(format!("{name}: graph {} has no nodes", g + 1)));
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    for (ln, l) in &adjacency.lines {
        let mut fields = l.split(',');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(adjacency.error(*ln, "expected two comma-separated node ids"));
        };
        let (u, v) = (adjacency.index(*ln, a)?, adjacency.index(*ln, b)?);
        for x in [u, v] {
            if x > n_nodes {
                return Err(Error::NodeOutOfRange { file: adjacency.name.clone(), line: *ln, index: x, n_nodes });
            }
        }
        let (gu, gv) = (graph_of[u - 1], graph_of[v - 1]);
        if gu != gv {
            return Err(Error::CrossGraphEdge {
                file: adjacency.name.clone(),
                line: *ln,
                u,
                v,
                graph_u: gu + 1,
                graph_v: gv + 1,
            });
        }
        edges[gu].push((local_of[u - 1], local_of[v - 1]));
    }

    let node_labels = match optional(dir, name, "node_labels")? {
        Some(f) => {
            if f.lines.len() != n_nodes {
                return Err(Error::Dataset(format!("{}: {} lines for {n_nodes} nodes", f.name, f.lines.len())));
            }
            Some(f.lines.iter().map(|(ln, l)| f.int(*ln, l)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let node_attributes = match optional(dir, name, "node_attributes")? {
        Some(f) => {
            if f.lines.len() != n_nodes {
                return Err(Error::Dataset(format!("{}: {} lines for {n_nodes} nodes", f.name, f.lines.len())));
            }
            let rows = f
                .lines
                .iter()
                .map(|(ln, l)| {
                    l.split(',')
                        .map(|x| {
                            x.trim()
                                .parse::<f64>()
                                .map_err(|_| f.error(*ln, format!("expected a number, found {:?}", x.trim())))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Some(rows)
        }
        None => None,
    };

    let mut warnings = Vec::new();
    for suffix in ["edge_labels", "edge_attributes"] {
        let path = file_path(dir, name, suffix);
        if path.is_file() {
            let msg = format!("ignoring {}", path.display());
            log::info!("{msg}");
            warnings.push(msg);
        }
    }

    let mut class_values = raw_labels.clone();
    class_values.sort_unstable();
    class_values.dedup();

    let mut per_graph_nodes: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (node, &g) in graph_of.iter().enumerate() {
        per_graph_nodes[g].push(node);
    }

    let mut records = Vec::with_capacity(n_graphs);
    for (g, nodes) in per_graph_nodes.iter().enumerate() {
        let topology = GraphTopology::new(nodes.len(), edges[g].iter().copied())?;
        let label = class_values.binary_search(&raw_labels[g]).expect("label present");
        let mut record = GraphRecord::new(topology, label);
        record.node_labels = node_labels.as_ref().map(|l| nodes.iter().map(|&n| l[n]).collect());
        record.node_attributes = node_attributes.as_ref().map(|a| nodes.iter().map(|&n| a[n].clone()).collect());
        records.push(record);
    }

    let dataset = Dataset::new(name, records, class_values)?;
    Ok(TuParse { dataset, warnings })
}

/// Writes `dataset` into `dir` using the TU convention.
pub fn write_tu_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &dataset.name;
    let (mut a, mut indicator, mut labels, mut node_labels, mut attributes) =
        (String::new(), String::new(), String::new(), String::new(), String::new());
    let write_node_labels = dataset.has_node_labels();
    let write_attributes = dataset.records.iter().all(|r| r.node_attributes.is_some());
    let mut offset = 0;
    for (g, r) in dataset.records.iter().enumerate() {
        for &(u, v) in r.topology.edges() {
            a.push_str(&format!("{}, {}\n", offset + u + 1, offset + v + 1));
        }
        for n in 0..r.n_nodes() {
            indicator.push_str(&format!("{}\n", g + 1));
            if write_node_labels {
                node_labels.push_str(&format!("{}\n", r.node_labels.as_ref().expect("checked")[n]));
            }
            if write_attributes {
                let row: Vec<String> =
                    r.node_attributes.as_ref().expect("checked")[n].iter().map(|v| format!("{v:?}")).collect();
                attributes.push_str(&row.join(", "));
                attributes.push('\n');
            }
        }
        labels.push_str(&format!("{}\n", dataset.class_values[r.label]));
        offset += r.n_nodes();
    }
    let mut files = vec![("A", a), ("graph_indicator", indicator), ("graph_labels", labels)];
    if write_node_labels {
        files.push(("node_labels", node_labels));
    }
    if write_attributes {
        files.push(("node_attributes", attributes));
    }
    for (suffix, body) in files {
        let path = file_path(dir, name, suffix);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
