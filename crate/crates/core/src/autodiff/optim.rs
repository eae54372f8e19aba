use super::tape::GradientMap;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam moments for a fixed, ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.numel()]).collect();
        AdamState { first: zeros(), second: zeros(), step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.second[i]
    }
}

/// One bias-corrected Adam update. Returned tensors are fresh constants,
/// ready to be watched on the next tape.
pub fn adam_step(params: &[Tensor], grads: &GradientMap, state: &mut AdamState, lr: f64) -> Result<Vec<Tensor>> {
    let grads = grads.for_params(params)?;
    adam_step_with(params, &grads, state, lr)
}

/// [`adam_step`] with gradients already aligned to `params`.
pub fn adam_step_with(params: &[Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<Vec<Tensor>> {
    if params.len() != state.first.len() || grads.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} params, {} gradients, state for {}",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut out = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if g.shape() != p.shape() || state.first[i].len() != p.numel() {
            return Err(Error::Shape { op: "adam", shapes: vec![p.dims().to_vec(), g.dims().to_vec()] });
        }
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        let data = p
            .data()
            .iter()
            .zip(g.data())
            .enumerate()
            .map(|(j, (&w, &gj))| {
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                w - lr * m_hat / (v_hat.sqrt() + state.eps)
            })
            .collect();
        out.push(Tensor::new(data, p.dims())?);
    }
    Ok(out)
}

/// The differentiable inner step `p - lr * grad(p)`.
///
/// `grads` must come from a backward pass with `create_graph`, so the new
/// parameters stay connected to whatever the gradients depend on.
pub fn sgd_virtual_step(params: &[Tensor], grads: &GradientMap, lr: f64) -> Result<Vec<Tensor>> {
    if !grads.is_differentiable() {
        return Err(Error::NotDifferentiable);
    }
    let gs = grads.for_params(params)?;
    params.iter().zip(gs).map(|(p, g)| p.sub(&g.scale(lr))).collect()
}
