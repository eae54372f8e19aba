use std::sync::Arc;

use super::GraphRecord;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Disjoint union of graphs. Node ids are global; the edge list holds every
/// directed edge of every graph followed by one self-loop per node.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    offsets: Vec<usize>,
    graph_of_node: Arc<[usize]>,
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    nonself_src: Arc<[usize]>,
    nonself_dst: Arc<[usize]>,
    features: Tensor,
    labels: Vec<usize>,
}

pub fn batch_graphs(records: &[&GraphRecord]) -> Result<GraphBatch> {
    let first = records.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let width = first.feature_width().ok_or_else(|| Error::Scheme("batch: node features not built".into()))?;

    let n_nodes: usize = records.iter().map(|r| r.n_nodes()).sum();
    let mut offsets = Vec::with_capacity(records.len());
    let mut graph_of_node = Vec::with_capacity(n_nodes);
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    let mut features = Vec::with_capacity(n_nodes * width);
    let mut offset = 0;
    for (g, r) in records.iter().enumerate() {
        let f = r.features.as_ref().ok_or_else(|| Error::Scheme("batch: node features not built".into()))?;
        if f.cols() != width {
            return Err(Error::FeatureWidth { expected: width, found: f.cols() });
        }
        offsets.push(offset);
        graph_of_node.extend(std::iter::repeat_n(g, r.n_nodes()));
        for &(u, v) in r.topology.edges() {
            src.push(offset + u);
            dst.push(offset + v);
        }
        features.extend_from_slice(f.data());
        offset += r.n_nodes();
    }
    let nonself_src: Arc<[usize]> = src.clone().into();
    let nonself_dst: Arc<[usize]> = dst.clone().into();
    src.extend(0..n_nodes);
    dst.extend(0..n_nodes);

    Ok(GraphBatch {
        offsets,
        graph_of_node: graph_of_node.into(),
        src: src.into(),
        dst: dst.into(),
        nonself_src,
        nonself_dst,
        features: Tensor::new(features, &[n_nodes, width])?,
        labels: records.iter().map(|r| r.label).collect(),
    })
}

impl GraphBatch {
    pub fn n_graphs(&self) -> usize {
        self.offsets.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.graph_of_node.len()
    }

    /// Length of the edge list, self-loops included.
    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn n_nonself_edges(&self) -> usize {
        self.nonself_src.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn graph_of_node(&self) -> &Arc<[usize]> {
        &self.graph_of_node
    }

    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<[usize]> {
        &self.dst
    }

    pub fn nonself_src(&self) -> &Arc<[usize]> {
        &self.nonself_src
    }

    pub fn nonself_dst(&self) -> &Arc<[usize]> {
        &self.nonself_dst
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn is_self_loop(&self, edge: usize) -> bool {
        edge >= self.n_nonself_edges()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_width(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}
