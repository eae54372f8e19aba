use super::tensor::Tensor;

/// Central-difference estimate of the gradient of a scalar function.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor, step: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let base = x.to_vec();
    let mut grad = Vec::with_capacity(base.len());
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + step;
        let hi = f(&Tensor::new(probe.clone(), x.dims()).expect("same shape"));
        probe[i] = base[i] - step;
        let lo = f(&Tensor::new(probe.clone(), x.dims()).expect("same shape"));
        probe[i] = base[i];
        grad.push((hi - lo) / (2.0 * step));
    }
    Tensor::new(grad, x.dims()).expect("same shape")
}

/// Largest elementwise deviation, relative to the larger gradient scale.
///
/// `max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|)`; two all-zero
/// gradients compare as exactly equal.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    if analytic.iter().chain(numeric).any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}
