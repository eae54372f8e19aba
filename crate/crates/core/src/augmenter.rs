//! Learnable edge reweighting that produces the augmented view of a batch.

use std::sync::Arc;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gnn::{encode, EdgeWeights, EncoderParams, Mlp, ParamSet};
use crate::graph::GraphBatch;

/// Edge scorer: `[x_u ; x_v]` (width `2F`) → hidden → one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmenterParams {
    pub mlp: Mlp,
}

impl AugmenterParams {
    pub fn new(mlp: Mlp) -> Result<Self> {
        if mlp.out_dim() != 1 || !mlp.in_dim().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "augmenter must map 2F inputs to one logit, got {} -> {}",
                mlp.in_dim(),
                mlp.out_dim()
            )));
        }
        Ok(AugmenterParams { mlp })
    }

    /// Node feature width `F` this scorer expects.
    pub fn feature_width(&self) -> usize {
        self.mlp.in_dim() / 2
    }
}

impl ParamSet for AugmenterParams {
    fn tensors(&self) -> Vec<Tensor> {
        let m = &self.mlp;
        vec![m.first.weight.clone(), m.first.bias.clone(), m.second.weight.clone(), m.second.bias.clone()]
    }

    fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        let current = self.tensors();
        if tensors.len() != current.len() || tensors.iter().zip(&current).any(|(a, b)| a.dims() != b.dims()) {
            return Err(Error::Shape {
                op: "augmenter params",
                shapes: tensors.iter().map(|t| t.dims().to_vec()).collect(),
            });
        }
        let first = crate::gnn::Linear::new(tensors[0].clone(), tensors[1].clone())?;
        let second = crate::gnn::Linear::new(tensors[2].clone(), tensors[3].clone())?;
        AugmenterParams::new(Mlp::new(first, second)?)
    }
}

/// `sigmoid(MLP([x_u ; x_v]))` for every non-self edge, each direction scored
/// separately; self-loops get a constant 1.
pub fn lga_edge_weights(batch: &GraphBatch, sigma: &AugmenterParams) -> Result<EdgeWeights> {
    let f = batch.feature_width();
    if sigma.mlp.in_dim() != 2 * f {
        return Err(Error::FeatureWidth { expected: sigma.feature_width(), found: f });
    }
    let self_loops = Tensor::ones(&[batch.n_nodes(), 1])?;
    if batch.n_nonself_edges() == 0 {
        return Ok(EdgeWeights::from_trusted(self_loops));
    }
    // [x_u ; x_v] W1 == x_u W1[..F] + x_v W1[F..], so project nodes once and gather.
    let x = batch.features();
    let w1 = &sigma.mlp.first.weight;
    let from_src = x.matmul(&w1.slice_rows(0, f)?)?;
    let from_dst = x.matmul(&w1.slice_rows(f, 2 * f)?)?;
    let hidden = from_src
        .gather_rows(Arc::clone(batch.nonself_src()))?
        .add(&from_dst.gather_rows(Arc::clone(batch.nonself_dst()))?)?
        .add(&sigma.mlp.first.bias)?
        .relu();
    let weights = sigma.mlp.second.forward(&hidden)?.sigmoid();
    Ok(EdgeWeights::from_trusted(Tensor::concat_rows(&[&weights, &self_loops])?))
}

/// A batch topology paired with the edge weights to aggregate with.
#[derive(Clone, Debug)]
pub struct GraphView<'a> {
    pub batch: &'a GraphBatch,
    pub weights: EdgeWeights,
}

impl<'a> GraphView<'a> {
    /// Unit weights everywhere.
    pub fn original(batch: &'a GraphBatch) -> Self {
        GraphView { batch, weights: EdgeWeights::ones(batch) }
    }

    pub fn augment(batch: &'a GraphBatch, weights: EdgeWeights) -> Result<Self> {
        if weights.len() != batch.n_edges() {
            return Err(Error::EdgeWeights(format!("{} weights for {} edges", weights.len(), batch.n_edges())));
        }
        Ok(GraphView { batch, weights })
    }

    /// Same weights with no path back to the augmenter.
    pub fn detach_view(&self) -> Self {
        GraphView { batch: self.batch, weights: self.weights.detach() }
    }

    pub fn encode(&self, encoder: &EncoderParams) -> Result<Tensor> {
        encode(self.batch, &self.weights, encoder)
    }
}
