//! Graph data model: TU-format ingestion, node features, batching, splits.

mod batch;
mod features;
mod split;
mod tu;

pub use batch::{batch_graphs, GraphBatch};
pub use features::{build_node_features, FeatureScheme, DEGREE_CAP_LIMIT};
pub use split::{split_dataset, Split, SplitFractions};
pub use tu::{parse_tu_dataset, parse_tu_dataset_report, write_tu_dataset, TuParse};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Undirected simple graph stored as sorted directed pairs. Self-loops are
/// implicit (one per node) and never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphTopology {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphTopology {
    /// Builds the undirected closure of `edges`; explicit self-loops and
    /// duplicates are dropped.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut all = Vec::new();
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Dataset(format!("edge ({u}, {v}) outside {n_nodes} nodes")));
            }
            if u != v {
                all.push((u, v));
                all.push((v, u));
            }
        }
        all.sort_unstable();
        all.dedup();
        Ok(GraphTopology { n_nodes, edges: all })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Directed pairs; both directions of each undirected edge.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Degree of every node, self-loop excluded.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, _) in &self.edges {
            deg[u] += 1;
        }
        deg
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_nodes {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        GraphTopology::new(self.n_nodes, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphRecord {
    pub topology: GraphTopology,
    /// `n_nodes x F` once a feature scheme has been applied.
    pub features: Option<Tensor>,
    pub label: usize,
    /// Raw node labels as they appear in the source files.
    pub node_labels: Option<Vec<i64>>,
    pub node_attributes: Option<Vec<Vec<f64>>>,
}

impl GraphRecord {
    pub fn new(topology: GraphTopology, label: usize) -> Self {
        GraphRecord { topology, features: None, label, node_labels: None, node_attributes: None }
    }

    pub fn n_nodes(&self) -> usize {
        self.topology.n_nodes()
    }

    pub fn feature_width(&self) -> Option<usize> {
        self.features.as_ref().map(Tensor::cols)
    }

    /// Same graph with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let topology = self.topology.permuted(perm)?;
        let n = self.n_nodes();
        let mut inverse = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let features = match &self.features {
            Some(f) => Some(f.gather_rows(inverse.clone())?),
            None => None,
        };
        let node_labels = self.node_labels.as_ref().map(|l| inverse.iter().map(|&i| l[i]).collect());
        let node_attributes = self.node_attributes.as_ref().map(|a| inverse.iter().map(|&i| a[i].clone()).collect());
        Ok(GraphRecord { topology, features, label: self.label, node_labels, node_attributes })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<GraphRecord>,
    pub n_classes: usize,
    /// Raw graph label of class `i`, sorted ascending.
    pub class_values: Vec<i64>,
    pub feature_scheme: Option<FeatureScheme>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, records: Vec<GraphRecord>, class_values: Vec<i64>) -> Result<Self> {
        let name = name.into();
        if records.is_empty() {
            return Err(Error::Dataset(format!("{name}: no graphs")));
        }
        let n_classes = class_values.len();
        let mut seen = vec![false; n_classes];
        for r in &records {
            if r.label >= n_classes {
                return Err(Error::Dataset(format!("{name}: label {} outside {n_classes} classes", r.label)));
            }
            seen[r.label] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Dataset(format!("{name}: declared class without graphs")));
        }
        Ok(Dataset { name, records, n_classes, class_values, feature_scheme: None })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn feature_width(&self) -> Option<usize> {
        self.records.first().and_then(GraphRecord::feature_width)
    }

    pub fn has_node_labels(&self) -> bool {
        self.records.iter().all(|r| r.node_labels.is_some())
    }

    /// Sorted distinct raw node labels across all graphs.
    pub fn node_label_values(&self) -> Vec<i64> {
        let mut values: Vec<i64> =
            self.records.iter().filter_map(|r| r.node_labels.as_ref()).flatten().copied().collect();
        values.sort_unstable();
        values.dedup();
        values
    }

    pub fn total_nodes(&self) -> usize {
        self.records.iter().map(GraphRecord::n_nodes).sum()
    }

    pub fn total_edges(&self) -> usize {
        self.records.iter().map(|r| r.topology.edges().len() / 2).sum()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&GraphRecord> {
        indices.iter().map(|&i| &self.records[i]).collect()
    }
}
