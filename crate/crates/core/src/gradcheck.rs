//! Finite-difference checks of every differentiable primitive and of
//! second-order composites built with `create_graph`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augmenter::lga_edge_weights;
use crate::autodiff::{
    backward, custom_unary, finite_diff_gradient, max_relative_error, sgd_virtual_step, CustomUnary, Tape, Tensor,
};
use crate::error::Result;
use crate::gnn::{init_params, EdgeWeights, ModelDims, ModelParams, ParamSet};
use crate::graph::{batch_graphs, GraphBatch, GraphRecord, GraphTopology};
use crate::train::{contrastive_loss, mega_objective, meta_gradient};

pub const FIRST_ORDER_TOLERANCE: f64 = 1e-4;
pub const SECOND_ORDER_TOLERANCE: f64 = 1e-3;
const STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOrder {
    First,
    Second,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub order: CheckOrder,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// `x^2` with a correct backward rule, or a deliberately wrong one.
struct CustomSquare {
    corrupt: bool,
}

impl CustomUnary for CustomSquare {
    fn name(&self) -> &'static str {
        "custom-square"
    }

    fn forward(&self, x: f64) -> f64 {
        x * x
    }

    fn backward(&self, x: &Tensor, _y: &Tensor, grad: &Tensor) -> Result<Tensor> {
        let factor = if self.corrupt { 1.0 } else { 2.0 };
        grad.mul(&x.scale(factor))
    }
}

fn random(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::new((0..n).map(|_| rng.gen_range(lo..hi)).collect(), dims).expect("positive dims")
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(data, dims).expect("positive dims")
}

type Primitive = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;

/// Compares the gradient of `sum(f(inputs) * r)` against central differences
/// for every input, returning the worst relative error.
fn check_first(f: &Primitive, inputs: &[Tensor], rng: &mut ChaCha8Rng) -> Result<f64> {
    let out_dims = f(inputs)?.dims().to_vec();
    let r = random(rng, &out_dims, -1.0, 1.0);
    let loss = |xs: &[Tensor]| -> Result<Tensor> { Ok(f(xs)?.mul(&r)?.sum()) };
    let tape = Tape::new();
    let watched: Vec<Tensor> = inputs.iter().map(|x| tape.watch(x)).collect();
    let grads = backward(&loss(&watched)?, &watched, false)?.for_params(&watched)?;
    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let numeric = finite_diff_gradient(
            |xi| {
                let mut xs = inputs.to_vec();
                xs[i] = xi.clone();
                loss(&xs).map(|t| t.item()).unwrap_or(f64::NAN)
            },
            x,
            STEP,
        );
        worst = worst.max(max_relative_error(grads[i].data(), numeric.data()));
    }
    Ok(worst)
}

fn primitives(rng: &mut ChaCha8Rng, corrupt: bool) -> Vec<(&'static str, Primitive, Vec<Tensor>)> {
    let m = |rng: &mut ChaCha8Rng, r, c| random(rng, &[r, c], -1.0, 1.0);
    let pos = |rng: &mut ChaCha8Rng, r, c| random(rng, &[r, c], 0.5, 2.0);
    let index: Arc<[usize]> = vec![2, 0, 2, 1].into();
    let gather = index.clone();
    let custom = Arc::new(CustomSquare { corrupt });
    vec![
        ("add", Box::new(|x: &[Tensor]| x[0].add(&x[1])) as Primitive, vec![m(rng, 3, 4), m(rng, 3, 4)]),
        ("add-row-broadcast", Box::new(|x: &[Tensor]| x[0].add(&x[1])), vec![m(rng, 3, 4), m(rng, 1, 4)]),
        ("sub-column-broadcast", Box::new(|x: &[Tensor]| x[0].sub(&x[1])), vec![m(rng, 3, 4), m(rng, 3, 1)]),
        ("mul", Box::new(|x: &[Tensor]| x[0].mul(&x[1])), vec![m(rng, 3, 4), m(rng, 3, 4)]),
        ("mul-scalar-broadcast", Box::new(|x: &[Tensor]| x[0].mul(&x[1])), vec![m(rng, 3, 4), m(rng, 1, 1)]),
        ("div", Box::new(|x: &[Tensor]| x[0].div(&x[1])), vec![m(rng, 3, 4), pos(rng, 3, 4)]),
        ("matmul", Box::new(|x: &[Tensor]| x[0].matmul(&x[1])), vec![m(rng, 3, 4), m(rng, 4, 2)]),
        (
            "concat-rows",
            Box::new(|x: &[Tensor]| Tensor::concat_rows(&[&x[0], &x[1]])),
            vec![m(rng, 2, 3), m(rng, 3, 3)],
        ),
        ("sum", Box::new(|x: &[Tensor]| Ok(x[0].sum())), vec![m(rng, 3, 4)]),
        ("mean", Box::new(|x: &[Tensor]| Ok(x[0].mean())), vec![m(rng, 3, 4)]),
        ("sum-rows", Box::new(|x: &[Tensor]| x[0].sum_rows()), vec![m(rng, 3, 4)]),
        ("sum-cols", Box::new(|x: &[Tensor]| x[0].sum_cols()), vec![m(rng, 3, 4)]),
        ("relu", Box::new(|x: &[Tensor]| Ok(x[0].relu())), vec![away_from_zero(rng, &[3, 4])]),
        ("sigmoid", Box::new(|x: &[Tensor]| Ok(x[0].sigmoid())), vec![m(rng, 3, 4)]),
        ("exp", Box::new(|x: &[Tensor]| Ok(x[0].exp())), vec![m(rng, 3, 4)]),
        ("log", Box::new(|x: &[Tensor]| Ok(x[0].ln())), vec![pos(rng, 3, 4)]),
        ("square", Box::new(|x: &[Tensor]| Ok(x[0].square())), vec![m(rng, 3, 4)]),
        ("sqrt", Box::new(|x: &[Tensor]| Ok(x[0].sqrt())), vec![pos(rng, 3, 4)]),
        ("scalar-scale", Box::new(|x: &[Tensor]| Ok(x[0].scale(-1.7))), vec![m(rng, 3, 4)]),
        ("transpose", Box::new(|x: &[Tensor]| x[0].transpose()), vec![m(rng, 3, 4)]),
        ("row-softmax", Box::new(|x: &[Tensor]| x[0].row_softmax()), vec![m(rng, 3, 4)]),
        ("l2-normalize-rows", Box::new(|x: &[Tensor]| x[0].l2_normalize_rows()), vec![m(rng, 3, 4)]),
        ("gather-rows", Box::new(move |x: &[Tensor]| x[0].gather_rows(gather.clone())), vec![m(rng, 3, 4)]),
        ("scatter-add-rows", Box::new(move |x: &[Tensor]| x[0].scatter_add_rows(index.clone(), 3)), vec![m(rng, 4, 2)]),
        ("reshape", Box::new(|x: &[Tensor]| x[0].reshape(&[2, 6])), vec![m(rng, 3, 4)]),
        ("custom-square", Box::new(move |x: &[Tensor]| Ok(custom_unary(&x[0], custom.clone()))), vec![m(rng, 3, 4)]),
    ]
}

/// `d/dx sum(r * d/dw sum(sigmoid(x w)^2))`: a gradient differentiated again.
fn second_order_grad_of_grad(rng: &mut ChaCha8Rng) -> Result<f64> {
    let x0 = random(rng, &[3, 4], -1.0, 1.0);
    let w0 = random(rng, &[4, 2], -1.0, 1.0);
    let r = random(rng, &[4, 2], -1.0, 1.0);
    let inner = |x: &Tensor, w: &Tensor, create_graph: bool| -> Result<Tensor> {
        let f = x.matmul(w)?.sigmoid().square().sum();
        let g = backward(&f, std::slice::from_ref(w), create_graph)?;
        Ok(g.get(w).expect("watched").clone())
    };
    let tape = Tape::new();
    let (x, w) = (tape.watch(&x0), tape.watch(&w0));
    let h = inner(&x, &w, true)?.mul(&r)?.sum();
    let analytic = backward(&h, std::slice::from_ref(&x), false)?.get(&x).expect("watched").clone();
    let numeric = finite_diff_gradient(
        |xp| {
            let t = Tape::new();
            let (xp, wp) = (t.watch(xp), t.watch(&w0));
            inner(&xp, &wp, false).and_then(|g| g.mul(&r)).map(|s| s.sum().item()).unwrap_or(f64::NAN)
        },
        &x0,
        STEP,
    );
    Ok(max_relative_error(analytic.data(), numeric.data()))
}

/// A one-step virtual update: `L2(w - lr * dL1(w, s)/dw)` differentiated
/// with respect to `s`.
fn second_order_virtual_step(rng: &mut ChaCha8Rng) -> Result<f64> {
    let w0 = random(rng, &[3, 2], -1.0, 1.0);
    let s0 = random(rng, &[4, 3], -1.0, 1.0);
    let target = random(rng, &[4, 2], -1.0, 1.0);
    let probe = random(rng, &[5, 3], -1.0, 1.0);
    let lr = 0.3;
    let objective = |w: &Tensor, s: &Tensor, create_graph: bool| -> Result<Tensor> {
        let l1 = s.sigmoid().matmul(w)?.sub(&target)?.square().mean();
        let g = backward(&l1, std::slice::from_ref(w), create_graph)?;
        let stepped = if create_graph {
            sgd_virtual_step(std::slice::from_ref(w), &g, lr)?.remove(0)
        } else {
            w.sub(&g.get(w).expect("watched").scale(lr))?
        };
        Ok(probe.tanh_like().matmul(&stepped)?.square().sum())
    };
    let tape = Tape::new();
    let (w, s) = (tape.watch(&w0), tape.watch(&s0));
    let analytic =
        backward(&objective(&w, &s, true)?, std::slice::from_ref(&s), false)?.get(&s).expect("watched").clone();
    let numeric = finite_diff_gradient(
        |sp| {
            let t = Tape::new();
            objective(&t.watch(&w0), &t.watch(sp), false).map(|l| l.item()).unwrap_or(f64::NAN)
        },
        &s0,
        STEP,
    );
    Ok(max_relative_error(analytic.data(), numeric.data()))
}

trait TanhLike {
    fn tanh_like(&self) -> Tensor;
}

impl TanhLike for Tensor {
    /// `2 sigmoid(2x) - 1`, built from recorded primitives.
    fn tanh_like(&self) -> Tensor {
        self.scale(2.0).sigmoid().scale(2.0).add(&Tensor::scalar(-1.0)).expect("scalar broadcast")
    }
}

fn meta_fixture() -> Result<(GraphBatch, ModelParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut record = |n: usize, edges: &[(usize, usize)]| -> Result<GraphRecord> {
        let mut r = GraphRecord::new(GraphTopology::new(n, edges.iter().copied())?, 0);
        r.features = Some(random(&mut rng, &[n, 2], -1.0, 1.0));
        Ok(r)
    };
    let a = record(4, &[(0, 1), (1, 2), (2, 3)])?;
    let b = record(3, &[(0, 1), (1, 2), (2, 0)])?;
    let batch = batch_graphs(&[&a, &b])?;
    let dims = ModelDims { input: 2, hidden: 6, embedding: 6, projection: 4, layers: 2, augmenter_hidden: 3 };
    Ok((batch, init_params(dims, 10)?))
}

/// The augmenter's meta gradient against central differences of the whole
/// pipeline, with the inner gradient from first-order backward.
fn second_order_meta_pipeline() -> Result<f64> {
    const TAU: f64 = 0.5;
    const LAMBDA: f64 = 0.1;
    const LR: f64 = 0.05;
    let (batch, params) = meta_fixture()?;
    let analytic: Vec<f64> =
        meta_gradient(&params, &batch, TAU, LAMBDA, LR)?.grads.iter().flat_map(|g| g.to_vec()).collect();
    let fixed_view = lga_edge_weights(&batch, &params.augmenter)?;
    let objective = |sigma_flat: &[Tensor]| -> Result<f64> {
        let sigma = params.augmenter.with_tensors(sigma_flat)?;
        let weights: EdgeWeights = lga_edge_weights(&batch, &sigma)?;
        let tape = Tape::new();
        let contrast = params.contrast.watch(&tape);
        let loss = contrastive_loss(&contrast, &batch, &weights, TAU)?;
        let g = backward(&loss, &contrast.tensors(), false)?.for_params(&contrast.tensors())?;
        let stepped: Vec<Tensor> = params
            .contrast
            .tensors()
            .iter()
            .zip(&g)
            .map(|(p, gi)| p.sub(&gi.detach().scale(LR)))
            .collect::<Result<_>>()?;
        let stepped = params.contrast.with_tensors(&stepped)?;
        Ok(mega_objective(&stepped, &batch, &fixed_view, LAMBDA)?.loss.item())
    };
    let sigma = params.augmenter.tensors();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..sigma.len() {
        let grad = finite_diff_gradient(
            |t| {
                let mut s = sigma.clone();
                s[i] = t.clone();
                objective(&s).unwrap_or(f64::NAN)
            },
            &sigma[i],
            1e-4,
        );
        numeric.extend_from_slice(grad.data());
    }
    Ok(max_relative_error(&analytic, &numeric))
}

/// Runs every check. With `corrupt_fixture`, the custom-square primitive
/// uses a wrong backward rule so the suite must fail.
pub fn run_gradcheck(seed: u64, corrupt_fixture: bool) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport::default();
    for (name, f, inputs) in primitives(&mut rng, corrupt_fixture) {
        let err = check_first(&f, &inputs, &mut rng)?;
        report.checks.push(CheckResult {
            name: name.to_string(),
            order: CheckOrder::First,
            max_rel_error: err,
            tolerance: FIRST_ORDER_TOLERANCE,
        });
    }
    let second: [(&str, f64); 3] = [
        ("grad-of-grad", second_order_grad_of_grad(&mut rng)?),
        ("virtual-step", second_order_virtual_step(&mut rng)?),
        ("meta-pipeline", second_order_meta_pipeline()?),
    ];
    for (name, err) in second {
        report.checks.push(CheckResult {
            name: name.to_string(),
            order: CheckOrder::Second,
            max_rel_error: err,
            tolerance: SECOND_ORDER_TOLERANCE,
        });
    }
    Ok(report)
}
