use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;

use super::ops::{vjp, Op};
use super::tensor::{Shape, Tensor, Var};
use crate::error::{Error, Result};

/// Position of a node on its tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
pub(crate) struct Input {
    pub(crate) id: Option<NodeId>,
    pub(crate) shape: Shape,
    pub(crate) data: Arc<[f64]>,
}

/// A recorded node without its bookkeeping flag: op, inputs, output shape and data.
type NodeView = (Op, Vec<Input>, Shape, Arc<[f64]>);

struct Node {
    op: Op,
    inputs: Vec<Input>,
    shape: Shape,
    data: Arc<[f64]>,
    from_backward: bool,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    recording_backward: bool,
}

/// Append-only record of operations; nodes are stored in topological order.
///
/// A tape is cheap to clone (shared handle). One tape per training step is
/// the intended usage: parameters are registered with [`Tape::watch`], the
/// forward pass records onto it and the tape is dropped after the update.
#[derive(Clone, Default)]
pub struct Tape(Arc<Mutex<TapeInner>>);

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `t` as a root node and returns the tracked handle.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        self.push(Op::Leaf, Vec::new(), t.shape().clone(), t.data_arc().clone())
    }

    pub fn len(&self) -> usize {
        self.0.lock().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of nodes recorded while differentiating with `create_graph`.
    pub fn backward_nodes(&self) -> usize {
        self.0.lock().nodes.iter().filter(|n| n.from_backward).count()
    }

    pub fn same(&self, other: &Tape) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn push(&self, op: Op, inputs: Vec<Input>, shape: Shape, data: Arc<[f64]>) -> Tensor {
        let mut inner = self.0.lock();
        debug_assert!(inputs.iter().all(|i| i.id.is_none_or(|id| id.0 < inner.nodes.len())));
        let id = NodeId(inner.nodes.len());
        let from_backward = inner.recording_backward;
        inner.nodes.push(Node { op, inputs, shape: shape.clone(), data: data.clone(), from_backward });
        drop(inner);
        Tensor::from_parts(shape, data, Some(Var { tape: self.clone(), id }))
    }

    fn set_recording_backward(&self, on: bool) -> bool {
        std::mem::replace(&mut self.0.lock().recording_backward, on)
    }

    fn snapshot(&self, end: usize) -> Vec<NodeView> {
        let inner = self.0.lock();
        inner.nodes[..end].iter().map(|n| (n.op.clone(), n.inputs.clone(), n.shape.clone(), n.data.clone())).collect()
    }
}

/// Gradients keyed by parameter node.
#[derive(Clone)]
pub struct GradientMap {
    tape: Tape,
    grads: HashMap<NodeId, Tensor>,
    create_graph: bool,
}

impl GradientMap {
    pub fn get(&self, param: &Tensor) -> Option<&Tensor> {
        let var = param.var.as_ref()?;
        if !var.tape.same(&self.tape) {
            return None;
        }
        self.grads.get(&var.id)
    }

    /// Gradients in the order of `params`.
    pub fn for_params(&self, params: &[Tensor]) -> Result<Vec<Tensor>> {
        params.iter().enumerate().map(|(i, p)| self.get(p).cloned().ok_or(Error::MissingGradient(i))).collect()
    }

    pub fn is_differentiable(&self) -> bool {
        self.create_graph
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

struct RecordingGuard<'a> {
    tape: &'a Tape,
    previous: bool,
}

impl Drop for RecordingGuard<'_> {
    fn drop(&mut self) {
        self.tape.set_recording_backward(self.previous);
    }
}

/// Reverse-mode sweep from a scalar `loss` to `params`.
///
/// With `create_graph`, every backward rule is itself recorded on the tape,
/// so the returned gradients can be differentiated again.
pub fn backward(loss: &Tensor, params: &[Tensor], create_graph: bool) -> Result<GradientMap> {
    if loss.numel() != 1 {
        return Err(Error::NotScalar(loss.dims().to_vec()));
    }
    let loss_var = loss.var.as_ref().ok_or(Error::NotOnTape("loss"))?;
    let tape = loss_var.tape.clone();
    let end = loss_var.id.0 + 1;

    let mut is_param = vec![false; end];
    let mut param_ids = Vec::with_capacity(params.len());
    for p in params {
        let v = p.var.as_ref().ok_or(Error::NotOnTape("parameter"))?;
        if !v.tape.same(&tape) {
            return Err(Error::NotOnTape("parameter"));
        }
        if v.id.0 < end {
            is_param[v.id.0] = true;
        }
        param_ids.push(v.id);
    }

    let nodes = tape.snapshot(end);
    let mut relevant = is_param.clone();
    for (i, (_, inputs, _, _)) in nodes.iter().enumerate() {
        if !relevant[i] {
            relevant[i] = inputs.iter().any(|inp| inp.id.is_some_and(|id| relevant[id.0]));
        }
    }

    let _guard = RecordingGuard { tape: &tape, previous: tape.set_recording_backward(create_graph) };

    let mut grads: Vec<Option<Tensor>> = vec![None; end];
    grads[end - 1] = Some(Tensor::full_like(loss.shape(), 1.0));
    let mut found: HashMap<NodeId, Tensor> = HashMap::new();

    for i in (0..end).rev() {
        let Some(g) = grads[i].take() else { continue };
        if !relevant[i] {
            continue;
        }
        if is_param[i] {
            found.insert(NodeId(i), g.clone());
        }
        let (op, inputs, shape, data) = &nodes[i];
        if inputs.is_empty() {
            continue;
        }
        let needs: Vec<bool> = inputs.iter().map(|inp| inp.id.is_some_and(|id| relevant[id.0])).collect();
        if !needs.iter().any(|&n| n) {
            continue;
        }
        let attach = |id: Option<NodeId>| if create_graph { id.map(|id| Var { tape: tape.clone(), id }) } else { None };
        let xs: Vec<Tensor> =
            inputs.iter().map(|inp| Tensor::from_parts(inp.shape.clone(), inp.data.clone(), attach(inp.id))).collect();
        let out = Tensor::from_parts(shape.clone(), data.clone(), attach(Some(NodeId(i))));
        let input_grads = vjp(op, &g, &xs, &out, &needs)?;
        for ((inp, need), ig) in inputs.iter().zip(&needs).zip(input_grads) {
            let (Some(id), true, Some(ig)) = (inp.id, *need, ig) else { continue };
            debug_assert_eq!(ig.shape(), &inp.shape);
            let slot = &mut grads[id.0];
            *slot = Some(match slot.take() {
                Some(acc) => acc.add(&ig)?,
                None => ig,
            });
        }
    }

    let mut out = HashMap::with_capacity(params.len());
    for (p, id) in params.iter().zip(param_ids) {
        let g = match found.get(&id) {
            Some(g) => g.clone(),
            None => Tensor::full_like(p.shape(), 0.0),
        };
        // Differentiable gradients must live on the tape even when constant.
        let g = if create_graph && !g.is_tracked() { tape.watch(&g) } else { g };
        out.insert(id, g);
    }
    Ok(GradientMap { tape: tape.clone(), grads: out, create_graph })
}
