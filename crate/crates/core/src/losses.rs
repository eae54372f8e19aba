//! Contrastive and correlation losses over paired original/augmented features.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Row-aligned features of original (`z`) and augmented (`z_aug`) graphs.
#[derive(Clone, Debug)]
pub struct FeaturePairBatch {
    pub z: Tensor,
    pub z_aug: Tensor,
}

impl FeaturePairBatch {
    pub fn new(z: Tensor, z_aug: Tensor) -> Result<Self> {
        if z.shape().rank() != 2 || z.dims() != z_aug.dims() {
            return Err(Error::Shape { op: "feature pairs", shapes: vec![z.dims().to_vec(), z_aug.dims().to_vec()] });
        }
        Ok(FeaturePairBatch { z, z_aug })
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn square_dim(op: &'static str, m: &Tensor) -> Result<usize> {
    match m.shape().as_matrix() {
        Some((r, c)) if r == c => Ok(r),
        _ => Err(Error::NonSquare { op, shape: m.dims().to_vec() }),
    }
}

pub fn trace_sum(m: &Tensor) -> Result<Tensor> {
    let n = square_dim("trace", m)?;
    Ok(m.mul(&Tensor::eye(n)?)?.sum())
}

/// Sum of all entries off the main diagonal.
pub fn offdiag_sum(m: &Tensor) -> Result<Tensor> {
    let n = square_dim("offdiag", m)?;
    Ok(m.mul(&Tensor::full(&[n, n], 1.0)?.sub(&Tensor::eye(n)?)?)?.sum())
}

fn check_rows_nonzero(which: &'static str, axis: &'static str, t: &Tensor) -> Result<()> {
    for i in 0..t.rows() {
        if t.row(i).iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroNorm { which, axis, index: i });
        }
    }
    Ok(())
}

fn check_cols_nonzero(which: &'static str, t: &Tensor) -> Result<()> {
    let cols = t.cols();
    for j in 0..cols {
        if (0..t.rows()).all(|i| t.at(i, j) == 0.0) {
            return Err(Error::ZeroNorm { which, axis: "column", index: j });
        }
    }
    Ok(())
}

/// `C_ij = cos(z_i, z'_j)`, an `N x N` matrix.
pub fn instance_corr(pairs: &FeaturePairBatch) -> Result<Tensor> {
    check_rows_nonzero("z", "row", &pairs.z)?;
    check_rows_nonzero("z_aug", "row", &pairs.z_aug)?;
    let a = pairs.z.l2_normalize_rows()?;
    let b = pairs.z_aug.l2_normalize_rows()?;
    a.matmul(&b.transpose()?)
}

/// Uncentered cosine between feature columns along the batch, `D x D`.
pub fn feature_corr(pairs: &FeaturePairBatch) -> Result<Tensor> {
    check_cols_nonzero("z", &pairs.z)?;
    check_cols_nonzero("z_aug", &pairs.z_aug)?;
    let a = pairs.z.transpose()?.l2_normalize_rows()?;
    let b = pairs.z_aug.transpose()?.l2_normalize_rows()?;
    a.matmul(&b.transpose()?)
}

/// NT-Xent with cosine similarity. For anchor `i` the negatives are
/// `(z_i, z'_j)` and `(z'_i, z_j)` for every `j != i`; the per-anchor losses
/// are averaged.
pub fn nt_xent(pairs: &FeaturePairBatch, tau: f64) -> Result<Tensor> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let n = pairs.len();
    let s = instance_corr(pairs)?;
    let e = s.scale(1.0 / tau).exp();
    let eye = Tensor::eye(n)?;
    let diag_e = e.mul(&eye)?.sum_cols()?;
    // Row i holds pairs (z_i, z'_j); column i holds (z_j, z'_i).
    let denom = e.sum_cols()?.add(&e.transpose()?.sum_cols()?)?.sub(&diag_e)?;
    let positive = s.mul(&eye)?.sum_cols()?.scale(1.0 / tau);
    Ok(denom.ln().sub(&positive)?.mean())
}

/// Pieces of the MEGA objective; `loss` is the differentiable total.
#[derive(Clone, Debug)]
pub struct MegaTerms {
    pub loss: Tensor,
    pub trace_c: f64,
    pub offdiag_c: f64,
    /// Unscaled feature term `sum_i (1 - D_ii)^2 + sum_{i != j} D_ij^2`.
    pub feature: f64,
}

pub fn mega_terms(c: &Tensor, d: &Tensor, lambda: f64) -> Result<MegaTerms> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let tr_c = trace_sum(c)?;
    let de_c = offdiag_sum(c)?;
    let n = square_dim("mega feature term", d)?;
    let identity_gap = Tensor::eye(n)?.sub(d)?;
    let feature = trace_sum(&identity_gap.square())?.add(&offdiag_sum(&d.square())?)?;
    let loss = tr_c.sub(&de_c)?.add(&feature.scale(lambda))?;
    Ok(MegaTerms { trace_c: tr_c.item(), offdiag_c: de_c.item(), feature: feature.item(), loss })
}

/// `tr(C) - de(C) + lambda * [tr((I - D)^2) + de(D^2)]`, squares elementwise.
pub fn mega_loss(c: &Tensor, d: &Tensor, lambda: f64) -> Result<Tensor> {
    mega_terms(c, d, lambda).map(|t| t.loss)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::{backward, finite_diff_gradient, max_relative_error, Tape};

    fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
        let n = dims.iter().product();
        Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), dims).unwrap()
    }

    fn pairs(z: Tensor, za: Tensor) -> FeaturePairBatch {
        FeaturePairBatch::new(z, za).unwrap()
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    fn column(t: &Tensor, j: usize) -> Vec<f64> {
        (0..t.rows()).map(|i| t.at(i, j)).collect()
    }

    #[test]
    fn trace_and_offdiag() {
        let eye = Tensor::eye(3).unwrap();
        assert_eq!((trace_sum(&eye).unwrap().item(), offdiag_sum(&eye).unwrap().item()), (3.0, 0.0));
        let ones = Tensor::ones(&[3, 3]).unwrap();
        assert_eq!((trace_sum(&ones).unwrap().item(), offdiag_sum(&ones).unwrap().item()), (3.0, 6.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, &[4, 4]);
        let (mut tr, mut de) = (0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    tr += m.at(i, j);
                } else {
                    de += m.at(i, j);
                }
            }
        }
        assert!((trace_sum(&m).unwrap().item() - tr).abs() < 1e-12);
        assert!((offdiag_sum(&m).unwrap().item() - de).abs() < 1e-12);
        assert!(matches!(trace_sum(&Tensor::ones(&[2, 3]).unwrap()), Err(Error::NonSquare { .. })));
    }

    #[test]
    fn nt_xent_closed_forms() {
        let one = pairs(Tensor::new(vec![1.0, 2.0], &[1, 2]).unwrap(), Tensor::new(vec![0.5, -1.0], &[1, 2]).unwrap());
        assert!(nt_xent(&one, 0.5).unwrap().item().abs() < 1e-15);

        let e2 = Tensor::eye(2).unwrap();
        let loss = nt_xent(&pairs(e2.clone(), e2.clone()), 1.0).unwrap().item();
        let e = std::f64::consts::E;
        assert!((loss - ((e + 2.0).ln() - 1.0)).abs() < 1e-12);
        assert!((loss - 0.5514).abs() < 1e-4);

        assert!(nt_xent(&pairs(e2.clone(), e2.clone()), 0.0).is_err());
        let zero_row = Tensor::new(vec![1.0, 0.0, 0.0, 0.0], &[2, 2]).unwrap();
        assert!(matches!(nt_xent(&pairs(e2, zero_row), 1.0), Err(Error::ZeroNorm { index: 1, .. })));
    }

    #[test]
    fn nt_xent_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (z, za) = (random(&mut rng, &[4, 3]), random(&mut rng, &[4, 3]));
        let tau = 0.5;
        let mut total = 0.0;
        for i in 0..4 {
            let pos = (cos(z.row(i), za.row(i)) / tau).exp();
            let mut den = pos;
            for j in (0..4).filter(|&j| j != i) {
                den += (cos(z.row(i), za.row(j)) / tau).exp();
                den += (cos(za.row(i), z.row(j)) / tau).exp();
            }
            total += -(pos / den).ln();
        }
        let got = nt_xent(&pairs(z, za), tau).unwrap().item();
        assert!((got - total / 4.0).abs() < 1e-12);
        assert!(got >= 0.0);
    }

    #[test]
    fn instance_corr_cases() {
        let eye = Tensor::eye(3).unwrap();
        assert_eq!(instance_corr(&pairs(eye.clone(), eye.clone())).unwrap(), eye);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random(&mut rng, &[3, 4]);
        let c = instance_corr(&pairs(z.clone(), z.scale(-1.0))).unwrap();
        for i in 0..3 {
            assert!((c.at(i, i) + 1.0).abs() < 1e-12);
        }
        let za = random(&mut rng, &[3, 4]);
        let c = instance_corr(&pairs(z.clone(), za.clone())).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((c.at(i, j) - cos(z.row(i), za.row(j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feature_corr_cases() {
        let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(feature_corr(&pairs(z.clone(), z)).unwrap(), Tensor::eye(2).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = random(&mut rng, &[4, 2]);
        let dup =
            Tensor::from_rows(&(0..4).map(|i| vec![base.at(i, 0), base.at(i, 1), base.at(i, 0)]).collect::<Vec<_>>())
                .unwrap();
        let d = feature_corr(&pairs(dup.clone(), dup)).unwrap();
        assert!((d.at(0, 2) - 1.0).abs() < 1e-12 && (d.at(2, 0) - 1.0).abs() < 1e-12);

        let (z, za) = (random(&mut rng, &[5, 3]), random(&mut rng, &[5, 3]));
        let d = feature_corr(&pairs(z.clone(), za.clone())).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                assert!((d.at(p, q) - cos(&column(&z, p), &column(&za, q))).abs() < 1e-12);
            }
        }
        let zero_col = Tensor::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            feature_corr(&pairs(zero_col.clone(), zero_col)),
            Err(Error::ZeroNorm { axis: "column", index: 1, .. })
        ));
    }

    #[test]
    fn mega_loss_cases() {
        for n in [2, 3, 5] {
            for lambda in [0.0, 0.1, 1.0] {
                let got = mega_loss(&Tensor::eye(n).unwrap(), &Tensor::eye(4).unwrap(), lambda).unwrap();
                assert_eq!(got.item(), n as f64);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (c, d) = (random(&mut rng, &[3, 3]), random(&mut rng, &[4, 4]));
        let lambda = 0.7;
        let mut expect = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                expect += if i == j { c.at(i, j) } else { -c.at(i, j) };
            }
        }
        for p in 0..4 {
            for q in 0..4 {
                let v = d.at(p, q);
                expect += lambda * if p == q { (1.0 - v) * (1.0 - v) } else { v * v };
            }
        }
        let terms = mega_terms(&c, &d, lambda).unwrap();
        assert!((terms.loss.item() - expect).abs() < 1e-12);
        let il = mega_loss(&c, &d, 0.0).unwrap().item();
        assert!((il - (terms.trace_c - terms.offdiag_c)).abs() < 1e-12);
        assert!(mega_loss(&c, &d, -1.0).is_err());
    }

    #[test]
    fn feature_term_zero_only_at_identity() {
        let c = Tensor::eye(2).unwrap();
        assert_eq!(mega_terms(&c, &Tensor::eye(3).unwrap(), 1.0).unwrap().feature, 0.0);
        let mut d = Tensor::eye(3).unwrap().to_vec();
        d[1] = 1e-3;
        let t = mega_terms(&c, &Tensor::new(d, &[3, 3]).unwrap(), 1.0).unwrap();
        assert!(t.feature > 0.0);
    }

    #[test]
    fn instance_term_gradient_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tape = Tape::new();
        let c = tape.watch(&random(&mut rng, &[3, 3]));
        let d = random(&mut rng, &[2, 2]);
        let g = backward(&mega_loss(&c, &d, 0.1).unwrap(), std::slice::from_ref(&c), false).unwrap();
        let g = g.get(&c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(if i == j { g.at(i, j) > 0.0 } else { g.at(i, j) < 0.0 });
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (z0, za0) = (random(&mut rng, &[4, 6]), random(&mut rng, &[4, 6]));
        type LossFn = fn(&Tensor, &Tensor) -> Tensor;
        let losses: [LossFn; 2] = [
            |z, za| nt_xent(&pairs(z.clone(), za.clone()), 0.5).unwrap(),
            |z, za| {
                let p = pairs(z.clone(), za.clone());
                mega_loss(&instance_corr(&p).unwrap(), &feature_corr(&p).unwrap(), 0.3).unwrap()
            },
        ];
        for f in losses {
            let tape = Tape::new();
            let (z, za) = (tape.watch(&z0), tape.watch(&za0));
            let g = backward(&f(&z, &za), &[z.clone(), za.clone()], false).unwrap();
            let nz = finite_diff_gradient(|t| f(t, &za0).item(), &z0, 1e-6);
            let nza = finite_diff_gradient(|t| f(&z0, t).item(), &za0, 1e-6);
            assert!(max_relative_error(g.get(&z).unwrap().data(), nz.data()) < 1e-4);
            assert!(max_relative_error(g.get(&za).unwrap().data(), nza.data()) < 1e-4);
        }
    }

    #[test]
    fn nt_xent_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (z, za) = (random(&mut rng, &[3, 4]), random(&mut rng, &[3, 4]));
        let a = nt_xent(&pairs(z.clone(), za.clone()), 0.5).unwrap().item();
        let b = nt_xent(&pairs(z.scale(3.7), za.scale(3.7)), 0.5).unwrap().item();
        assert!((a - b).abs() < 1e-10);
    }
}
