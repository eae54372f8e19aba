use std::fmt;
use std::sync::Arc;

use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Dimensions of a dense row-major tensor. Every extent is positive.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidShape(dims.to_vec()));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub(crate) fn matrix(rows: usize, cols: usize) -> Self {
        debug_assert!(rows > 0 && cols > 0);
        Shape(vec![rows, cols])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// `(rows, cols)` for a rank-2 shape.
    pub fn as_matrix(&self) -> Option<(usize, usize)> {
        match self.0.as_slice() {
            &[r, c] => Some((r, c)),
            _ => None,
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone)]
pub(crate) struct Var {
    pub(crate) tape: Tape,
    pub(crate) id: NodeId,
}

/// Dense `f64` array, optionally recorded on a [`Tape`].
///
/// Cloning is cheap: the buffer is shared. A tensor without a node id is a
/// constant and never receives gradient.
#[derive(Clone)]
pub struct Tensor {
    shape: Shape,
    data: Arc<[f64]>,
    pub(crate) var: Option<Var>,
}

impl Tensor {
    pub fn new(data: Vec<f64>, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::DataLength { op: "tensor", expected: shape.numel(), found: data.len() });
        }
        Ok(Tensor { shape, data: data.into(), var: None })
    }

    pub(crate) fn from_parts(shape: Shape, data: Arc<[f64]>, var: Option<Var>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data, var }
    }

    pub(crate) fn from_vec(shape: Shape, data: Vec<f64>) -> Self {
        Self::from_parts(shape, data.into(), None)
    }

    /// Builds a rank-2 tensor from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Tensor::new(rows.concat(), &[rows.len(), cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(Shape::scalar(), vec![value])
    }

    pub fn full(dims: &[usize], value: f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        Ok(Self::from_vec(shape, vec![value; n]))
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, 0.0)
    }

    pub fn ones(dims: &[usize]) -> Result<Self> {
        Self::full(dims, 1.0)
    }

    pub fn eye(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::new(data, &[n, n])
    }

    pub(crate) fn full_like(shape: &Shape, value: f64) -> Self {
        Self::from_vec(shape.clone(), vec![value; shape.numel()])
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> &Arc<[f64]> {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Number of rows of a rank-2 tensor (the only extent for rank 1).
    pub fn rows(&self) -> usize {
        self.shape.dims()[0]
    }

    /// Number of columns of a rank-2 tensor (1 for rank 1).
    pub fn cols(&self) -> usize {
        self.shape.dims().get(1).copied().unwrap_or(1)
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    /// First element; the value of a scalar.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.var.as_ref().map(|v| v.id)
    }

    pub fn is_tracked(&self) -> bool {
        self.var.is_some()
    }

    pub fn tape(&self) -> Option<&Tape> {
        self.var.as_ref().map(|v| &v.tape)
    }

    /// Same values, cut from the tape.
    pub fn detach(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.clone(), var: None }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("node", &self.node_id())
            .field("data", &&self.data[..self.data.len().min(8)])
            .finish()
    }
}

/// Value equality; tape membership is ignored.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

pub fn detach(t: &Tensor) -> Tensor {
    t.detach()
}
