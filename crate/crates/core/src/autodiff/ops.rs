use std::fmt;
use std::sync::Arc;

use super::tape::{Input, Tape};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Primitive operation kinds understood by the tape.
///
/// Binary elementwise kinds accept a right-hand side of the same shape, a
/// single element, a `[1, n]` row or an `[m, 1]` column.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Matmul,
    ConcatRows,
    Sum,
    Mean,
    SumRows,
    SumCols,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Square,
    Sqrt,
    Transpose,
    RowSoftmax,
    L2NormalizeRows,
    GatherRows(Arc<[usize]>),
    ScatterAddRows { index: Arc<[usize]>, rows: usize },
    Scale(f64),
    Reshape(Shape),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Matmul => "matmul",
            OpKind::ConcatRows => "concat-rows",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumRows => "sum-rows",
            OpKind::SumCols => "sum-cols",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::Transpose => "transpose",
            OpKind::RowSoftmax => "row-softmax",
            OpKind::L2NormalizeRows => "l2-normalize-rows",
            OpKind::GatherRows(_) => "gather-rows",
            OpKind::ScatterAddRows { .. } => "scatter-add-rows",
            OpKind::Scale(_) => "scalar-scale",
            OpKind::Reshape(_) => "reshape",
        }
    }
}

/// An elementwise unary operation with a user-supplied backward rule.
///
/// `backward` must be written with tensor operations so that it is itself
/// differentiable when gradients are built with `create_graph`.
pub trait CustomUnary: Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, x: f64) -> f64;
    fn backward(&self, x: &Tensor, y: &Tensor, grad: &Tensor) -> Result<Tensor>;
}

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Kind(OpKind),
    Custom(Arc<dyn CustomUnary>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Leaf => f.write_str("leaf"),
            Op::Kind(k) => f.write_str(k.name()),
            Op::Custom(c) => write!(f, "custom:{}", c.name()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Broadcast {
    Same,
    Scalar,
    Row,
    Col,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    if b.numel() == 1 {
        return Ok(Broadcast::Scalar);
    }
    match (a.shape().as_matrix(), b.shape().as_matrix()) {
        (Some((_, n)), Some((1, bn))) if bn == n => Ok(Broadcast::Row),
        (Some((m, _)), Some((bm, 1))) if bm == m => Ok(Broadcast::Col),
        _ => Err(shape_err(op, &[a, b])),
    }
}

fn shape_err(op: &'static str, ts: &[&Tensor]) -> Error {
    Error::Shape { op, shapes: ts.iter().map(|t| t.dims().to_vec()).collect() }
}

fn matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.shape().as_matrix().ok_or_else(|| shape_err(op, &[t]))
}

fn binary_map(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let bc = broadcast(op, a, b)?;
    let cols = a.cols();
    let (ad, bd) = (a.data(), b.data());
    Ok(ad
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let j = match bc {
                Broadcast::Same => i,
                Broadcast::Scalar => 0,
                Broadcast::Row => i % cols,
                Broadcast::Col => i / cols,
            };
            f(x, bd[j])
        })
        .collect())
}

fn unary(x: &Tensor, f: impl Fn(f64) -> f64) -> (Shape, Vec<f64>) {
    (x.shape().clone(), x.data().iter().map(|&v| f(v)).collect())
}

fn check_arity(op: &'static str, inputs: &[&Tensor], expected: usize) -> Result<()> {
    if inputs.len() != expected {
        return Err(Error::Arity { op, expected, found: inputs.len() });
    }
    Ok(())
}

fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<(Shape, Vec<f64>)> {
    let op = kind.name();
    let arity = match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Matmul => 2,
        OpKind::ConcatRows => inputs.len().max(1),
        _ => 1,
    };
    check_arity(op, inputs, arity)?;
    let x = inputs[0];
    Ok(match kind {
        OpKind::Add => (x.shape().clone(), binary_map(op, x, inputs[1], |a, b| a + b)?),
        OpKind::Sub => (x.shape().clone(), binary_map(op, x, inputs[1], |a, b| a - b)?),
        OpKind::Mul => (x.shape().clone(), binary_map(op, x, inputs[1], |a, b| a * b)?),
        OpKind::Div => (x.shape().clone(), binary_map(op, x, inputs[1], |a, b| a / b)?),
        OpKind::Matmul => {
            let y = inputs[1];
            let (m, k) = matrix(op, x)?;
            let (k2, n) = matrix(op, y)?;
            if k != k2 {
                return Err(shape_err(op, inputs));
            }
            let (a, b) = (x.data(), y.data());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let row = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = a[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                        *o += av * bv;
                    }
                }
            }
            (Shape::matrix(m, n), out)
        }
        OpKind::ConcatRows => {
            let (_, cols) = matrix(op, x)?;
            let mut rows = 0;
            for t in inputs {
                match t.shape().as_matrix() {
                    Some((r, c)) if c == cols => rows += r,
                    _ => return Err(shape_err(op, inputs)),
                }
            }
            let data = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
            (Shape::matrix(rows, cols), data)
        }
        OpKind::Sum => (Shape::scalar(), vec![x.data().iter().sum()]),
        OpKind::Mean => (Shape::scalar(), vec![x.data().iter().sum::<f64>() / x.numel() as f64]),
        OpKind::SumRows => {
            let (m, n) = matrix(op, x)?;
            let data = (0..m).map(|i| x.data()[i * n..(i + 1) * n].iter().sum()).collect();
            (Shape::matrix(m, 1), data)
        }
        OpKind::SumCols => {
            let (m, n) = matrix(op, x)?;
            let mut data = vec![0.0; n];
            for i in 0..m {
                for (o, v) in data.iter_mut().zip(&x.data()[i * n..(i + 1) * n]) {
                    *o += v;
                }
            }
            (Shape::matrix(1, n), data)
        }
        OpKind::Relu => unary(x, |v| if v > 0.0 { v } else { 0.0 }),
        OpKind::Sigmoid => unary(x, sigmoid),
        OpKind::Exp => unary(x, f64::exp),
        OpKind::Log => unary(x, f64::ln),
        OpKind::Square => unary(x, |v| v * v),
        OpKind::Sqrt => unary(x, f64::sqrt),
        OpKind::Scale(c) => unary(x, |v| v * c),
        OpKind::Transpose => {
            let (m, n) = matrix(op, x)?;
            let mut data = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    data[j * m + i] = x.data()[i * n + j];
                }
            }
            (Shape::matrix(n, m), data)
        }
        OpKind::RowSoftmax => {
            let (m, n) = matrix(op, x)?;
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                let row = &x.data()[i * n..(i + 1) * n];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                data.extend(exps.iter().map(|e| e / total));
            }
            (Shape::matrix(m, n), data)
        }
        OpKind::L2NormalizeRows => {
            let (m, n) = matrix(op, x)?;
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                let row = &x.data()[i * n..(i + 1) * n];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                data.extend(row.iter().map(|v| v / norm));
            }
            (Shape::matrix(m, n), data)
        }
        OpKind::GatherRows(index) => {
            let (m, n) = matrix(op, x)?;
            if index.is_empty() {
                return Err(shape_err(op, inputs));
            }
            let mut data = Vec::with_capacity(index.len() * n);
            for &r in index.iter() {
                if r >= m {
                    return Err(Error::IndexOutOfRange { op, index: r, bound: m });
                }
                data.extend_from_slice(&x.data()[r * n..(r + 1) * n]);
            }
            (Shape::matrix(index.len(), n), data)
        }
        OpKind::ScatterAddRows { index, rows } => {
            let (m, n) = matrix(op, x)?;
            if index.len() != m || *rows == 0 {
                return Err(shape_err(op, inputs));
            }
            let mut data = vec![0.0; rows * n];
            for (i, &r) in index.iter().enumerate() {
                if r >= *rows {
                    return Err(Error::IndexOutOfRange { op, index: r, bound: *rows });
                }
                for (o, v) in data[r * n..(r + 1) * n].iter_mut().zip(&x.data()[i * n..(i + 1) * n]) {
                    *o += v;
                }
            }
            (Shape::matrix(*rows, n), data)
        }
        OpKind::Reshape(shape) => {
            if shape.numel() != x.numel() {
                return Err(Error::Shape { op, shapes: vec![x.dims().to_vec(), shape.dims().to_vec()] });
            }
            (shape.clone(), x.data().to_vec())
        }
    })
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn record(op: Op, name: &'static str, inputs: &[&Tensor], shape: Shape, data: Vec<f64>) -> Result<Tensor> {
    let mut tape: Option<&Tape> = None;
    for t in inputs {
        if let Some(tt) = t.tape() {
            match tape {
                Some(existing) if !existing.same(tt) => return Err(Error::TapeMismatch { op: name }),
                _ => tape = Some(tt),
            }
        }
    }
    match tape {
        None => Ok(Tensor::from_vec(shape, data)),
        Some(tape) => {
            let recorded = inputs
                .iter()
                .map(|t| Input { id: t.node_id(), shape: t.shape().clone(), data: t.data_arc().clone() })
                .collect();
            Ok(tape.push(op, recorded, shape, data.into()))
        }
    }
}

/// Evaluates `kind` on `inputs`; records a node iff some input is tracked.
pub fn apply(kind: OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    let (shape, data) = forward(&kind, inputs)?;
    let name = kind.name();
    record(Op::Kind(kind), name, inputs, shape, data)
}

pub fn custom_unary(x: &Tensor, op: Arc<dyn CustomUnary>) -> Tensor {
    let (shape, data) = unary(x, |v| op.forward(v));
    let name = op.name();
    record(Op::Custom(op), name, &[x], shape, data).expect("unary op on a single tape")
}

fn apply1(kind: OpKind, x: &Tensor) -> Tensor {
    apply(kind, &[x]).expect("shape-agnostic unary op")
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        apply(OpKind::Add, &[self, rhs])
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        apply(OpKind::Sub, &[self, rhs])
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        apply(OpKind::Mul, &[self, rhs])
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        apply(OpKind::Div, &[self, rhs])
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        apply(OpKind::Matmul, &[self, rhs])
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        apply(OpKind::ConcatRows, parts)
    }

    pub fn sum(&self) -> Tensor {
        apply1(OpKind::Sum, self)
    }

    pub fn mean(&self) -> Tensor {
        apply1(OpKind::Mean, self)
    }

    pub fn sum_rows(&self) -> Result<Tensor> {
        apply(OpKind::SumRows, &[self])
    }

    pub fn sum_cols(&self) -> Result<Tensor> {
        apply(OpKind::SumCols, &[self])
    }

    pub fn relu(&self) -> Tensor {
        apply1(OpKind::Relu, self)
    }

    pub fn sigmoid(&self) -> Tensor {
        apply1(OpKind::Sigmoid, self)
    }

    pub fn exp(&self) -> Tensor {
        apply1(OpKind::Exp, self)
    }

    pub fn ln(&self) -> Tensor {
        apply1(OpKind::Log, self)
    }

    pub fn square(&self) -> Tensor {
        apply1(OpKind::Square, self)
    }

    pub fn sqrt(&self) -> Tensor {
        apply1(OpKind::Sqrt, self)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        apply1(OpKind::Scale(c), self)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        apply(OpKind::Transpose, &[self])
    }

    pub fn row_softmax(&self) -> Result<Tensor> {
        apply(OpKind::RowSoftmax, &[self])
    }

    /// Divides each row by its Euclidean norm. Zero rows yield NaN.
    pub fn l2_normalize_rows(&self) -> Result<Tensor> {
        apply(OpKind::L2NormalizeRows, &[self])
    }

    pub fn gather_rows(&self, index: impl Into<Arc<[usize]>>) -> Result<Tensor> {
        apply(OpKind::GatherRows(index.into()), &[self])
    }

    pub fn scatter_add_rows(&self, index: impl Into<Arc<[usize]>>, rows: usize) -> Result<Tensor> {
        apply(OpKind::ScatterAddRows { index: index.into(), rows }, &[self])
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        apply(OpKind::Reshape(Shape::new(dims)?), &[self])
    }

    /// Rows `start..end` as a new tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        self.gather_rows((start..end).collect::<Vec<_>>())
    }
}

/// Sums `g` down to `shape` after broadcasting in a binary op.
fn reduce_to(g: &Tensor, shape: &Shape) -> Result<Tensor> {
    if g.shape() == shape {
        return Ok(g.clone());
    }
    if shape.numel() == 1 {
        return g.sum().reshape(shape.dims());
    }
    match shape.as_matrix() {
        Some((1, _)) => g.sum_cols(),
        Some((_, 1)) => g.sum_rows(),
        _ => Err(Error::Shape { op: "reduce", shapes: vec![g.dims().to_vec(), shape.dims().to_vec()] }),
    }
}

/// Broadcasts `g` (scalar, row or column) up to `shape`.
fn expand(g: &Tensor, shape: &Shape) -> Result<Tensor> {
    Tensor::full_like(shape, 1.0).mul(g)
}

/// Vector-Jacobian products for one node. Entries are `None` where `needs`
/// is false.
pub(crate) fn vjp(op: &Op, g: &Tensor, xs: &[Tensor], y: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
    let need = |i: usize| needs.get(i).copied().unwrap_or(false);
    let kind = match op {
        Op::Leaf => return Ok(Vec::new()),
        Op::Custom(c) => return Ok(vec![Some(c.backward(&xs[0], y, g)?)]),
        Op::Kind(k) => k,
    };
    let one = |t: Result<Tensor>| -> Result<Vec<Option<Tensor>>> { Ok(vec![Some(t?)]) };
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            let (a, b) = (&xs[0], &xs[1]);
            let ga = if need(0) {
                Some(match kind {
                    OpKind::Add | OpKind::Sub => g.clone(),
                    OpKind::Mul => g.mul(b)?,
                    _ => g.div(b)?,
                })
            } else {
                None
            };
            let gb = if need(1) {
                let full = match kind {
                    OpKind::Add => g.clone(),
                    OpKind::Sub => g.scale(-1.0),
                    OpKind::Mul => g.mul(a)?,
                    _ => g.mul(y)?.div(b)?.scale(-1.0),
                };
                Some(reduce_to(&full, b.shape())?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        }
        OpKind::Matmul => {
            let (a, b) = (&xs[0], &xs[1]);
            let ga = if need(0) { Some(g.matmul(&b.transpose()?)?) } else { None };
            let gb = if need(1) { Some(a.transpose()?.matmul(g)?) } else { None };
            Ok(vec![ga, gb])
        }
        OpKind::ConcatRows => {
            let mut start = 0;
            let mut out = Vec::with_capacity(xs.len());
            for (i, x) in xs.iter().enumerate() {
                let end = start + x.rows();
                out.push(if need(i) { Some(g.slice_rows(start, end)?) } else { None });
                start = end;
            }
            Ok(out)
        }
        OpKind::Sum => one(expand(g, xs[0].shape())),
        OpKind::Mean => one(expand(&g.scale(1.0 / xs[0].numel() as f64), xs[0].shape())),
        OpKind::SumRows | OpKind::SumCols => one(expand(g, xs[0].shape())),
        OpKind::Relu => {
            let mask: Vec<f64> = xs[0].data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
            one(g.mul(&Tensor::from_vec(xs[0].shape().clone(), mask)))
        }
        OpKind::Sigmoid => one(g.mul(&y.sub(&y.square())?)),
        OpKind::Exp => one(g.mul(y)),
        OpKind::Log => one(g.div(&xs[0])),
        OpKind::Square => one(Ok(g.mul(&xs[0])?.scale(2.0))),
        OpKind::Sqrt => one(Ok(g.div(y)?.scale(0.5))),
        OpKind::Scale(c) => one(Ok(g.scale(*c))),
        OpKind::Transpose => one(g.transpose()),
        OpKind::RowSoftmax => {
            let dot = g.mul(y)?.sum_rows()?;
            one(y.mul(&g.sub(&dot)?))
        }
        OpKind::L2NormalizeRows => {
            let x = &xs[0];
            let norm = x.square().sum_rows()?.sqrt();
            let dot = g.mul(y)?.sum_rows()?;
            one(g.sub(&y.mul(&dot)?)?.div(&norm))
        }
        OpKind::GatherRows(index) => one(g.scatter_add_rows(index.clone(), xs[0].rows())),
        OpKind::ScatterAddRows { index, .. } => one(g.gather_rows(index.clone())),
        OpKind::Reshape(_) => one(g.reshape(xs[0].dims())),
    }
}
