//! Dense `f64` tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted value. Operations on
//! tensors that require gradients record a backward rule together with their
//! inputs; [`Tensor::backward`] replays those rules in reverse order of
//! recording and accumulates into the gradient slot of every leaf that asked
//! for one. Leaf gradients accumulate across calls until [`Tensor::zero_grad`].

mod conv;
mod gradcheck;
mod ops;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{dim_err, Error, Result};

pub use conv::conv2d;
pub use gradcheck::{finite_diff_check, finite_diff_check_at};
pub use ops::{concat, matmul_fc, pixel_shuffle};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Backward rule of a recorded operation.
///
/// Returns one entry per input; `None` for inputs that do not need a gradient.
pub(crate) trait GradFn: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[Tensor], output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

struct Origin {
    inputs: Vec<Tensor>,
    op: Box<dyn GradFn>,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    origin: Option<Origin>,
}

/// N-dimensional real array, row-major.
#[derive(Clone)]
pub struct Tensor(Arc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.origin.as_ref().map(|o| o.op.name()))
            .finish()
    }
}

impl Tensor {
    /// Builds a leaf tensor; fails when `shape` does not match `data.len()`.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(dim_err("tensor", format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(dim_err(
                "tensor",
                format!("shape {shape:?} holds {n} elements, got {}", data.len()),
            ));
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    /// Leaf tensor that accumulates a gradient.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Ok(Self::new(shape, data)?.requiring_grad())
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let n = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![value; n], false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Self::leaf(vec![1], vec![value], false)
    }

    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            origin: None,
        }))
    }

    /// Result of an operation. The backward rule is kept only when some input
    /// requires a gradient.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: Vec<Tensor>,
        op: impl GradFn + 'static,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = inputs.iter().any(Tensor::requires_grad);
        let origin = requires_grad.then(|| Origin {
            inputs,
            op: Box::new(op),
        });
        Tensor(Arc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            origin,
        }))
    }

    /// Untracked copy with every value clamped to `[0, 1]`.
    pub fn clamp01(&self) -> Tensor {
        let data = self.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::leaf(self.0.shape.clone(), data, false)
    }

    /// Fresh leaf with the same values that accumulates a gradient.
    pub fn requiring_grad(&self) -> Tensor {
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), true)
    }

    /// Fresh leaf with the same values and no gradient tracking.
    pub fn detach(&self) -> Tensor {
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), false)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.origin.is_none()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.numel(),
            1,
            "item() on tensor of shape {:?}",
            self.shape()
        );
        self.0.data[0]
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    /// Extents of a `[C, H, W]` tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match *self.shape() {
            [c, h, w] => Ok((c, h, w)),
            ref s => Err(dim_err("chw", format!("expected rank 3, got shape {s:?}"))),
        }
    }

    /// Operations reachable from this tensor that take part in
    /// differentiation, in recording order.
    pub fn record(&self) -> ComputationRecord {
        let nodes = self.reachable();
        ComputationRecord {
            entries: nodes
                .iter()
                .map(|t| RecordEntry {
                    id: t.id(),
                    op: t.0.origin.as_ref().map_or("leaf", |o| o.op.name()),
                    inputs: t
                        .0
                        .origin
                        .as_ref()
                        .map(|o| {
                            o.inputs
                                .iter()
                                .filter(|i| i.requires_grad())
                                .map(Tensor::id)
                                .collect()
                        })
                        .unwrap_or_default(),
                })
                .collect(),
        }
    }

    fn reachable(&self) -> Vec<Tensor> {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut out = Vec::new();
        while let Some(t) = stack.pop() {
            if !t.requires_grad() || !seen.insert(t.id()) {
                continue;
            }
            if let Some(origin) = &t.0.origin {
                stack.extend(origin.inputs.iter().filter(|i| i.requires_grad()).cloned());
            }
            out.push(t);
        }
        // Ids grow monotonically with creation, so ascending id is a valid
        // recording order.
        out.sort_by_key(Tensor::id);
        out
    }

    /// Reverse-mode pass from a scalar. Leaf gradients accumulate.
    pub fn backward(&self) -> Result<()> {
        self.backward_visit(|_| {})
    }

    /// As [`Tensor::backward`], calling `visit` with each replayed entry.
    pub fn backward_visit(&self, mut visit: impl FnMut(&RecordEntry)) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Usage(
                "backward on a tensor that does not require gradients".into(),
            ));
        }
        let nodes = self.reachable();
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for node in nodes.iter().rev() {
            let Some(grad) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.origin {
                None => {
                    visit(&RecordEntry {
                        id: node.id(),
                        op: "leaf",
                        inputs: Vec::new(),
                    });
                    let mut slot = node.0.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
                        None => *slot = Some(grad),
                    }
                }
                Some(origin) => {
                    visit(&RecordEntry {
                        id: node.id(),
                        op: origin.op.name(),
                        inputs: origin.inputs.iter().map(Tensor::id).collect(),
                    });
                    let grads = origin.op.backward(&origin.inputs, node.data(), &grad);
                    debug_assert_eq!(grads.len(), origin.inputs.len());
                    for (input, g) in origin.inputs.iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel(), "{}", origin.op.name());
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered list of recorded operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationRecord {
    pub entries: Vec<RecordEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordEntry {
    pub id: u64,
    pub op: &'static str,
    pub inputs: Vec<u64>,
}
