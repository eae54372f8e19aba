//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! Backward rules are expressed with the same tensor operations as the
//! forward pass. Passing `create_graph = true` to [`backward`] records those
//! rules on the tape, which makes gradients differentiable again; this is
//! what the meta step uses to push `L_MEGA` back through an SGD step.

mod numeric;
mod ops;
mod optim;
mod tape;
mod tensor;

pub use numeric::{finite_diff_gradient, max_relative_error};
pub use ops::{apply, custom_unary, CustomUnary, OpKind};
pub use optim::{adam_step, adam_step_with, sgd_virtual_step, AdamState};
pub use tape::{backward, GradientMap, NodeId, Tape};
pub use tensor::{detach, Shape, Tensor};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(3.0));
        let g = backward(&x.square(), std::slice::from_ref(&x), false).unwrap();
        assert_eq!(g.get(&x).unwrap().item(), 6.0);
    }

    #[test]
    fn second_derivative_of_cube() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(2.0));
        let cube = x.square().mul(&x).unwrap();
        let g = backward(&cube, std::slice::from_ref(&x), true).unwrap();
        let dx = g.get(&x).unwrap();
        assert_eq!(dx.item(), 12.0);
        assert!(dx.is_tracked());
        let gg = backward(&dx.sum(), std::slice::from_ref(&x), false).unwrap();
        assert_eq!(gg.get(&x).unwrap().item(), 12.0);
        assert!(tape.backward_nodes() > 0);
    }

    #[test]
    fn meta_style_composite_matches_finite_differences() {
        // g(a) = d/dw (w*a)^2 at w = 1 is 2a^2; d/da sum(g) = 4a = 8 at a = 2
        let outer = |a_val: f64, create: bool| {
            let tape = Tape::new();
            let w = tape.watch(&Tensor::scalar(1.0));
            let a = tape.watch(&Tensor::scalar(a_val));
            let inner = w.mul(&a).unwrap().square();
            let g = backward(&inner, std::slice::from_ref(&w), create).unwrap();
            (tape, a, g.get(&w).unwrap().clone())
        };
        let (_tape, a, gw) = outer(2.0, true);
        let ga = backward(&gw.sum(), std::slice::from_ref(&a), false).unwrap();
        let analytic = ga.get(&a).unwrap().item();
        let fd = finite_diff_gradient(|t| outer(t.item(), false).2.item(), &Tensor::scalar(2.0), 1e-4);
        assert!((analytic - 8.0).abs() < 1e-12);
        assert!((analytic - fd.item()).abs() / 8.0 < 1e-8);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::new(vec![1.0, -2.0], &[2]).unwrap());
        let d = detach(&x);
        assert_eq!(d.data(), x.data());
        assert!(d.node_id().is_none());
        let loss = d.square().sum().add(&x.sum().scale(0.0)).unwrap();
        let g = backward(&loss, std::slice::from_ref(&x), false).unwrap();
        assert!(g.get(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(1.0));
        let y = tape.watch(&Tensor::new(vec![1.0, 2.0], &[2]).unwrap());
        let g = backward(&x.square(), &[x.clone(), y.clone()], true).unwrap();
        let gy = g.get(&y).unwrap();
        assert_eq!(gy.data(), &[0.0, 0.0]);
        assert!(gy.is_tracked());
    }

    #[test]
    fn backward_errors() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::new(vec![1.0, 2.0], &[2]).unwrap());
        assert!(matches!(backward(&x, std::slice::from_ref(&x), false), Err(crate::Error::NotScalar(_))));
        let constant = Tensor::scalar(1.0);
        assert!(matches!(backward(&constant, std::slice::from_ref(&x), false), Err(crate::Error::NotOnTape("loss"))));
        let loss = x.sum();
        assert!(matches!(backward(&loss, &[Tensor::scalar(0.0)], false), Err(crate::Error::NotOnTape("parameter"))));
    }

    #[test]
    fn shared_node_gradients_accumulate() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(3.0));
        // x*x + x -> 2x + 1
        let loss = x.mul(&x).unwrap().add(&x).unwrap();
        let g = backward(&loss, std::slice::from_ref(&x), false).unwrap();
        assert_eq!(g.get(&x).unwrap().item(), 7.0);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::new(vec![0.0, 1.0, -1.0], &[3]).unwrap());
        let g = backward(&x.relu().sum(), std::slice::from_ref(&x), false).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
