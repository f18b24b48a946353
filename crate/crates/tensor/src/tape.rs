//! Recording tape for reverse-mode differentiation.
//!
//! A [`Tape`] is owned by one computation (one training step). Every operation
//! whose inputs require gradients appends a node holding its parents and a
//! local gradient rule; nodes are appended after their inputs, so the tape
//! order is already topological and the reverse sweep visits each node once.
//! Operations on inputs that need no gradient record nothing, and their
//! intermediate values are freed as soon as the last [`Var`] is dropped.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Local gradient rule: given the output gradient and a mask of which inputs
/// need a gradient, returns one optional gradient per input.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    parents: Vec<Option<usize>>,
    shape: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    /// Side of every non-smooth point passed so far, when tracking is on.
    kinks: Option<RefCell<Vec<bool>>>,
}

/// A value living on a [`Tape`].
#[derive(Clone)]
pub struct Var<'t> {
    tape: &'t Tape,
    node: Option<usize>,
    value: Rc<Tensor>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that also logs, for every non-smooth op (ReLU-type activations
    /// and the absolute value in the MRAE loss), which side of its kink each
    /// element falls on.
    pub fn tracking_kinks() -> Self {
        Tape {
            kinks: Some(RefCell::new(Vec::new())),
            ..Self::default()
        }
    }

    /// The logged kink sides in op order, if tracking is on.
    pub fn kink_pattern(&self) -> Option<Vec<bool>> {
        self.kinks.as_ref().map(|k| k.borrow().clone())
    }

    pub(crate) fn note_kinks<I: Iterator<Item = bool>>(&self, sides: impl FnOnce() -> I) {
        if let Some(k) = &self.kinks {
            k.borrow_mut().extend(sides());
        }
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable leaf.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let id = self.push(Node {
            parents: Vec::new(),
            shape: value.shape().to_vec(),
            backward: None,
        });
        Var {
            tape: self,
            node: Some(id),
            value: Rc::new(value),
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        Var {
            tape: self,
            node: None,
            value: Rc::new(value),
        }
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Wraps an op result, recording `backward` only when some input
    /// requires a gradient.
    pub(crate) fn record<'t, F>(&'t self, value: Tensor, inputs: &[&Var<'t>], backward: F) -> Var<'t>
    where
        F: Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    {
        let parents: Vec<Option<usize>> = inputs.iter().map(|v| v.node).collect();
        let node = if parents.iter().any(Option::is_some) {
            Some(self.push(Node {
                parents,
                shape: value.shape().to_vec(),
                backward: Some(Box::new(backward)),
            }))
        } else {
            None
        };
        Var {
            tape: self,
            node,
            value: Rc::new(value),
        }
    }

    /// Reverse sweep from a scalar root.
    ///
    /// Returns a gradient for every leaf on the tape; leaves the root does not
    /// depend on receive zeros.
    pub fn backward(&self, root: &Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(root.tape, self) {
            return Err(TensorError::Usage("root belongs to a different tape".into()));
        }
        if root.value.len() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                root.value.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        if let Some(id) = root.node {
            grads[id] = Some(Tensor::full(root.value.shape(), 1.0));
            for id in (0..=id).rev() {
                let node = &nodes[id];
                let Some(backward) = &node.backward else {
                    continue;
                };
                let Some(g) = grads[id].take() else {
                    continue;
                };
                let mask: Vec<bool> = node.parents.iter().map(Option::is_some).collect();
                let parent_grads = backward(&g, &mask);
                for (parent, pg) in node.parents.iter().zip(parent_grads) {
                    if let (Some(p), Some(pg)) = (parent, pg) {
                        match &mut grads[*p] {
                            Some(acc) => acc.add_assign(&pg)?,
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
            }
        }
        let mut by_node = BTreeMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if node.backward.is_none() {
                let g = grads[id].take().unwrap_or_else(|| Tensor::zeros(&node.shape));
                by_node.insert(id, g);
            }
        }
        Ok(Gradients { by_node })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    by_node: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var<'_>) -> Option<&Tensor> {
        var.node.and_then(|id| self.by_node.get(&id))
    }

    /// Gradient for `var`, or zeros when `var` is not a leaf of this sweep.
    pub fn wrt(&self, var: &Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub(crate) fn shared(&self) -> Rc<Tensor> {
        Rc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Copies the value out, detached from the tape.
    pub fn to_tensor(&self) -> Tensor {
        (*self.value).clone()
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("node", &self.node)
            .field("value", &self.value)
            .finish()
    }
}
