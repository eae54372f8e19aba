//! GIN encoder with edge-weighted sum aggregation, sum readout and a
//! projection head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmenter::AugmenterParams;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;

/// A flat, ordered list of tensors that can be rebuilt from the same list.
pub trait ParamSet: Sized {
    fn tensors(&self) -> Vec<Tensor>;

    /// Rebuilds the set from tensors in [`ParamSet::tensors`] order.
    fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self>;

    /// Copy of the set with every tensor registered on `tape`.
    fn watch(&self, tape: &Tape) -> Self {
        let watched: Vec<Tensor> = self.tensors().iter().map(|t| tape.watch(t)).collect();
        self.with_tensors(&watched).expect("same layout")
    }

    fn detach(&self) -> Self {
        let plain: Vec<Tensor> = self.tensors().iter().map(Tensor::detach).collect();
        self.with_tensors(&plain).expect("same layout")
    }

    fn n_tensors(&self) -> usize {
        self.tensors().len()
    }

    fn n_scalars(&self) -> usize {
        self.tensors().iter().map(Tensor::numel).sum()
    }
}

fn check_layout(have: &[Tensor], want: &[Tensor]) -> Result<()> {
    if have.len() != want.len() {
        return Err(Error::Arity { op: "params", expected: want.len(), found: have.len() });
    }
    for (h, w) in have.iter().zip(want) {
        if h.dims() != w.dims() {
            return Err(Error::Shape { op: "params", shapes: vec![w.dims().to_vec(), h.dims().to_vec()] });
        }
    }
    Ok(())
}

/// `x W + b` with `W: [in, out]` and `b: [1, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (_, out) = weight
            .shape()
            .as_matrix()
            .ok_or_else(|| Error::Shape { op: "linear", shapes: vec![weight.dims().to_vec()] })?;
        if bias.dims() != [1, out] {
            return Err(Error::Shape { op: "linear", shapes: vec![weight.dims().to_vec(), bias.dims().to_vec()] });
        }
        Ok(Linear { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    fn xavier(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = xavier_bound(fan_in, fan_out);
        let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
        Linear {
            weight: Tensor::new(w, &[fan_in, fan_out]).expect("positive dims"),
            bias: Tensor::zeros(&[1, fan_out]).expect("positive dims"),
        }
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Two linear layers with a relu in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new(first: Linear, second: Linear) -> Result<Self> {
        if first.out_dim() != second.in_dim() {
            return Err(Error::Shape {
                op: "mlp",
                shapes: vec![first.weight.dims().to_vec(), second.weight.dims().to_vec()],
            });
        }
        Ok(Mlp { first, second })
    }

    pub fn xavier(rng: &mut impl Rng, dims: [usize; 3]) -> Self {
        let first = Linear::xavier(rng, dims[0], dims[1]);
        let second = Linear::xavier(rng, dims[1], dims[2]);
        Mlp { first, second }
    }

    pub fn in_dim(&self) -> usize {
        self.first.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.first.out_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.second.out_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.second.forward(&self.first.forward(x)?.relu())
    }

    fn tensors(&self) -> Vec<Tensor> {
        vec![self.first.weight.clone(), self.first.bias.clone(), self.second.weight.clone(), self.second.bias.clone()]
    }

    fn from_slice(t: &[Tensor]) -> Result<Self> {
        Mlp::new(Linear::new(t[0].clone(), t[1].clone())?, Linear::new(t[2].clone(), t[3].clone())?)
    }
}

/// One GIN layer. `eps` is fixed at 0, so a node's own row enters the sum
/// through its self-loop with weight 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayerParams {
    pub mlp: Mlp,
}

impl GinLayerParams {
    pub const EPS: f64 = 0.0;
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<GinLayerParams>,
}

impl EncoderParams {
    pub fn new(layers: Vec<GinLayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("encoder needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].mlp.out_dim() != pair[1].mlp.in_dim() {
                return Err(Error::InvalidArgument(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].mlp.out_dim(),
                    pair[1].mlp.in_dim()
                )));
            }
        }
        Ok(EncoderParams { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].mlp.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").mlp.out_dim()
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<Tensor> {
        self.layers.iter().flat_map(|l| l.mlp.tensors()).collect()
    }

    fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        check_layout(tensors, &self.tensors())?;
        let layers =
            tensors.chunks(4).map(|c| Mlp::from_slice(c).map(|mlp| GinLayerParams { mlp })).collect::<Result<_>>()?;
        EncoderParams::new(layers)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams {
    pub mlp: Mlp,
}

impl ParamSet for ProjectionParams {
    fn tensors(&self) -> Vec<Tensor> {
        self.mlp.tensors()
    }

    fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        check_layout(tensors, &self.tensors())?;
        Ok(ProjectionParams { mlp: Mlp::from_slice(tensors)? })
    }
}

/// Encoder and projection head, the parameters updated by contrastive steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastParams {
    pub encoder: EncoderParams,
    pub projection: ProjectionParams,
}

impl ParamSet for ContrastParams {
    fn tensors(&self) -> Vec<Tensor> {
        let mut t = self.encoder.tensors();
        t.extend(self.projection.tensors());
        t
    }

    fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        check_layout(tensors, &self.tensors())?;
        let k = self.encoder.n_tensors();
        Ok(ContrastParams {
            encoder: self.encoder.with_tensors(&tensors[..k])?,
            projection: self.projection.with_tensors(&tensors[k..])?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub embedding: usize,
    pub projection: usize,
    pub layers: usize,
    pub augmenter_hidden: usize,
}

impl ModelDims {
    pub fn with_input(input: usize) -> Self {
        ModelDims { input, hidden: 32, embedding: 32, projection: 32, layers: 3, augmenter_hidden: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.input, self.hidden, self.embedding, self.projection, self.layers, self.augmenter_hidden];
        if all.contains(&0) {
            return Err(Error::InvalidArgument(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Encoder, projection head and augmenter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub contrast: ContrastParams,
    pub augmenter: AugmenterParams,
}

impl ModelParams {
    pub fn dims(&self) -> ModelDims {
        let enc = &self.contrast.encoder;
        ModelDims {
            input: enc.in_dim(),
            hidden: enc.layers[0].mlp.hidden_dim(),
            embedding: enc.out_dim(),
            projection: self.contrast.projection.mlp.out_dim(),
            layers: enc.layers.len(),
            augmenter_hidden: self.augmenter.mlp.hidden_dim(),
        }
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<Tensor> {
        let mut t = self.contrast.tensors();
        t.extend(self.augmenter.tensors());
        t
    }

    fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        check_layout(tensors, &self.tensors())?;
        let k = self.contrast.n_tensors();
        Ok(ModelParams {
            contrast: self.contrast.with_tensors(&tensors[..k])?,
            augmenter: self.augmenter.with_tensors(&tensors[k..])?,
        })
    }
}

/// Xavier-uniform weights and zero biases, deterministic per seed.
pub fn init_params(dims: ModelDims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(dims.layers);
    for k in 0..dims.layers {
        let input = if k == 0 { dims.input } else { dims.embedding };
        layers.push(GinLayerParams { mlp: Mlp::xavier(&mut rng, [input, dims.hidden, dims.embedding]) });
    }
    let projection = ProjectionParams { mlp: Mlp::xavier(&mut rng, [dims.embedding, dims.embedding, dims.projection]) };
    let augmenter = AugmenterParams { mlp: Mlp::xavier(&mut rng, [2 * dims.input, dims.augmenter_hidden, 1]) };
    Ok(ModelParams { contrast: ContrastParams { encoder: EncoderParams::new(layers)?, projection }, augmenter })
}

/// Per-edge weights aligned with a batch's edge list, self-loops last.
#[derive(Clone, Debug)]
pub struct EdgeWeights {
    values: Tensor,
}

impl EdgeWeights {
    /// Validates an `[E, 1]` column: entries in `[0, 1]`, self-loops exactly 1.
    pub fn new(batch: &GraphBatch, values: Tensor) -> Result<Self> {
        if values.dims() != [batch.n_edges(), 1] {
            return Err(Error::EdgeWeights(format!(
                "expected [{}, 1] weights, found {:?}",
                batch.n_edges(),
                values.dims()
            )));
        }
        let data = values.data();
        if let Some(e) = data.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::EdgeWeights(format!("weight {} of edge {e} outside [0, 1]", data[e])));
        }
        if let Some(e) = (batch.n_nonself_edges()..batch.n_edges()).find(|&e| data[e] != 1.0) {
            return Err(Error::EdgeWeights(format!("self-loop edge {e} has weight {}", data[e])));
        }
        Ok(EdgeWeights { values })
    }

    pub fn ones(batch: &GraphBatch) -> Self {
        EdgeWeights { values: Tensor::ones(&[batch.n_edges(), 1]).expect("batch has nodes") }
    }

    pub(crate) fn from_trusted(values: Tensor) -> Self {
        EdgeWeights { values }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Untracked constant with all-unit entries: aggregation can skip the product.
    fn is_constant_ones(&self) -> bool {
        !self.values.is_tracked() && self.values.data().iter().all(|&w| w == 1.0)
    }

    pub fn detach(&self) -> Self {
        EdgeWeights { values: self.values.detach() }
    }
}

pub fn gin_layer_forward(
    batch: &GraphBatch,
    h: &Tensor,
    weights: &EdgeWeights,
    layer: &GinLayerParams,
) -> Result<Tensor> {
    if h.rows() != batch.n_nodes() {
        return Err(Error::Shape { op: "gin-layer", shapes: vec![h.dims().to_vec(), vec![batch.n_nodes()]] });
    }
    if weights.len() != batch.n_edges() {
        return Err(Error::EdgeWeights(format!("{} weights for {} edges", weights.len(), batch.n_edges())));
    }
    let messages = h.gather_rows(batch.src().clone())?;
    let messages = if weights.is_constant_ones() { messages } else { messages.mul(weights.tensor())? };
    let aggregated = messages.scatter_add_rows(batch.dst().clone(), batch.n_nodes())?;
    layer.mlp.forward(&aggregated)
}

/// Node embeddings after all layers; relu between layers, none after the last.
pub fn encode(batch: &GraphBatch, weights: &EdgeWeights, encoder: &EncoderParams) -> Result<Tensor> {
    if batch.feature_width() != encoder.in_dim() {
        return Err(Error::FeatureWidth { expected: encoder.in_dim(), found: batch.feature_width() });
    }
    let mut h = batch.features().clone();
    for (k, layer) in encoder.layers.iter().enumerate() {
        if k > 0 {
            h = h.relu();
        }
        h = gin_layer_forward(batch, &h, weights, layer)?;
    }
    Ok(h)
}

/// Sum of each graph's node rows.
pub fn readout(batch: &GraphBatch, h: &Tensor) -> Result<Tensor> {
    h.scatter_add_rows(batch.graph_of_node().clone(), batch.n_graphs())
}

pub fn project(h: &Tensor, projection: &ProjectionParams) -> Result<Tensor> {
    projection.mlp.forward(h)
}

/// Graph-level embeddings `readout(encode(..))`.
pub fn embed_graphs(batch: &GraphBatch, weights: &EdgeWeights, encoder: &EncoderParams) -> Result<Tensor> {
    readout(batch, &encode(batch, weights, encoder)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{backward, finite_diff_gradient, max_relative_error};
    use crate::graph::{batch_graphs, GraphRecord, GraphTopology};

    fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
        let n = dims.iter().product();
        Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), dims).unwrap()
    }

    fn record(rng: &mut ChaCha8Rng, n: usize, edges: &[(usize, usize)], width: usize) -> GraphRecord {
        let mut r = GraphRecord::new(GraphTopology::new(n, edges.iter().copied()).unwrap(), 0);
        r.features = Some(random(rng, &[n, width]));
        r
    }

    fn params(input: usize, seed: u64) -> ModelParams {
        init_params(ModelDims { input, hidden: 5, embedding: 4, projection: 3, layers: 2, augmenter_hidden: 4 }, seed)
            .unwrap()
    }

    fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
        a.dims() == b.dims() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn weights_with(batch: &GraphBatch, nonself: f64) -> EdgeWeights {
        let mut w = vec![nonself; batch.n_nonself_edges()];
        w.extend(std::iter::repeat_n(1.0, batch.n_nodes()));
        EdgeWeights::new(batch, Tensor::new(w, &[batch.n_edges(), 1]).unwrap()).unwrap()
    }

    #[test]
    fn zero_messages_apply_mlp_per_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = record(&mut rng, 4, &[(0, 1), (1, 2), (2, 3)], 3);
        let b = batch_graphs(&[&r]).unwrap();
        let layer = &params(3, 0).contrast.encoder.layers[0];
        let out = gin_layer_forward(&b, b.features(), &weights_with(&b, 0.0), layer).unwrap();
        assert!(close(&out, &layer.mlp.forward(b.features()).unwrap(), 1e-14));
    }

    #[test]
    fn single_node_is_plain_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = record(&mut rng, 1, &[], 3);
        let b = batch_graphs(&[&r]).unwrap();
        let layer = &params(3, 0).contrast.encoder.layers[0];
        let out = gin_layer_forward(&b, b.features(), &EdgeWeights::ones(&b), layer).unwrap();
        assert!(close(&out, &layer.mlp.forward(b.features()).unwrap(), 1e-14));
    }

    #[test]
    fn triangle_matches_dense_adjacency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = record(&mut rng, 3, &[(0, 1), (1, 2), (2, 0)], 3);
        let b = batch_graphs(&[&r]).unwrap();
        // (A + I) H with A the all-ones-off-diagonal triangle.
        let a = Tensor::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let layer = &params(3, 0).contrast.encoder.layers[0];
        let dense = layer.mlp.forward(&a.matmul(b.features()).unwrap()).unwrap();
        let out = gin_layer_forward(&b, b.features(), &weights_with(&b, 1.0), layer).unwrap();
        assert!(close(&out, &dense, 1e-12));
    }

    #[test]
    fn one_layer_encoder_is_one_gin_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = record(&mut rng, 3, &[(0, 1), (1, 2)], 3);
        let b = batch_graphs(&[&r]).unwrap();
        let mut enc = params(3, 5).contrast.encoder;
        enc.layers.truncate(1);
        let w = weights_with(&b, 0.3);
        let direct = gin_layer_forward(&b, b.features(), &w, &enc.layers[0]).unwrap();
        assert_eq!(encode(&b, &w, &enc).unwrap(), direct);
    }

    #[test]
    fn permuting_nodes_permutes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = record(&mut rng, 5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 1)], 3);
        let perm = [3, 0, 4, 1, 2];
        let p = r.permuted(&perm).unwrap();
        let enc = params(3, 6).contrast.encoder;
        let (b, bp) = (batch_graphs(&[&r]).unwrap(), batch_graphs(&[&p]).unwrap());
        let h = encode(&b, &EdgeWeights::ones(&b), &enc).unwrap();
        let hp = encode(&bp, &EdgeWeights::ones(&bp), &enc).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for (x, y) in h.row(i).iter().zip(hp.row(pi)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let (g, gp) = (readout(&b, &h).unwrap(), readout(&bp, &hp).unwrap());
        assert!(close(&g, &gp, 1e-10));
    }

    #[test]
    fn zero_features_and_biases_give_zero() {
        let mut r = GraphRecord::new(GraphTopology::new(3, [(0, 1), (1, 2)]).unwrap(), 0);
        r.features = Some(Tensor::zeros(&[3, 3]).unwrap());
        let b = batch_graphs(&[&r]).unwrap();
        let h = encode(&b, &EdgeWeights::ones(&b), &params(3, 7).contrast.encoder).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn readout_sums_graph_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let singles: Vec<_> = (0..3).map(|_| record(&mut rng, 1, &[], 2)).collect();
        let b = batch_graphs(&singles.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(readout(&b, b.features()).unwrap(), *b.features());

        let g = record(&mut rng, 3, &[(0, 1)], 3);
        let b = batch_graphs(&[&g, &g]).unwrap();
        let z = embed_graphs(&b, &EdgeWeights::ones(&b), &params(3, 1).contrast.encoder).unwrap();
        assert_eq!(z.row(0), z.row(1));
    }

    #[test]
    fn batching_does_not_leak_between_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = record(&mut rng, 4, &[(0, 1), (1, 2), (2, 3)], 3);
        let c = record(&mut rng, 3, &[(0, 2)], 3);
        let enc = params(3, 2).contrast.encoder;
        let alone = batch_graphs(&[&c]).unwrap();
        let both = batch_graphs(&[&a, &c]).unwrap();
        let z1 = embed_graphs(&alone, &EdgeWeights::ones(&alone), &enc).unwrap();
        let z2 = embed_graphs(&both, &EdgeWeights::ones(&both), &enc).unwrap();
        for (x, y) in z1.row(0).iter().zip(z2.row(1)) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_cases() {
        let h = Tensor::from_rows(&[vec![0.5, 2.0], vec![1.0, 0.0]]).unwrap();
        let zero = ProjectionParams {
            mlp: Mlp::new(
                Linear::new(Tensor::zeros(&[2, 2]).unwrap(), Tensor::zeros(&[1, 2]).unwrap()).unwrap(),
                Linear::new(Tensor::zeros(&[2, 2]).unwrap(), Tensor::zeros(&[1, 2]).unwrap()).unwrap(),
            )
            .unwrap(),
        };
        assert!(project(&h, &zero).unwrap().data().iter().all(|&v| v == 0.0));
        let id = ProjectionParams {
            mlp: Mlp::new(
                Linear::new(Tensor::eye(2).unwrap(), Tensor::zeros(&[1, 2]).unwrap()).unwrap(),
                Linear::new(Tensor::eye(2).unwrap(), Tensor::zeros(&[1, 2]).unwrap()).unwrap(),
            )
            .unwrap(),
        };
        assert_eq!(project(&h, &id).unwrap(), h);
    }

    #[test]
    fn projection_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = random(&mut rng, &[3, 4]);
        let proj = params(2, 3).contrast.projection;
        let w0 = proj.mlp.first.weight.clone();
        let loss_at = |w: &Tensor| {
            let mut p = proj.clone();
            p.mlp.first.weight = w.clone();
            project(&h, &p).unwrap().square().sum()
        };
        let tape = Tape::new();
        let w = tape.watch(&w0);
        let g = backward(&loss_at(&w), std::slice::from_ref(&w), false).unwrap();
        let numeric = finite_diff_gradient(|t| loss_at(t).item(), &w0, 1e-6);
        assert!(max_relative_error(g.get(&w).unwrap().data(), numeric.data()) < 1e-6);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let (a, b, c) = (params(7, 11), params(7, 11), params(7, 12));
        assert_eq!(a, b);
        assert_ne!(a, c);
        for t in a.tensors() {
            if t.rows() == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0));
            } else {
                let bound = xavier_bound(t.rows(), t.cols());
                assert!(t.data().iter().all(|v| v.abs() <= bound));
            }
        }
        let dims = a.dims();
        assert_eq!((dims.input, dims.hidden, dims.embedding, dims.projection), (7, 5, 4, 3));
        assert_eq!(a.with_tensors(&a.tensors()).unwrap(), a);
    }

    #[test]
    fn weights_are_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let r = record(&mut rng, 2, &[(0, 1)], 2);
        let b = batch_graphs(&[&r]).unwrap();
        let bad_len = Tensor::ones(&[3, 1]).unwrap();
        assert!(EdgeWeights::new(&b, bad_len).is_err());
        let bad_self = Tensor::new(vec![0.5, 0.5, 0.9, 1.0], &[4, 1]).unwrap();
        assert!(EdgeWeights::new(&b, bad_self).is_err());
        let bad_range = Tensor::new(vec![1.5, 0.5, 1.0, 1.0], &[4, 1]).unwrap();
        assert!(EdgeWeights::new(&b, bad_range).is_err());
    }
}
