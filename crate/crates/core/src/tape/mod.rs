//! Reverse-mode differentiation over dense arrays.
//!
//! A [`Tape`] is an append-only arena of nodes. Every operation pushes one
//! node holding its value, the indices of its parents and a backward rule
//! mapping the node's gradient to contributions for each parent. Parents
//! always precede their children, so a reverse sweep over the arena is a
//! valid topological order.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::array::DenseArray;
use crate::error::{Error, Result};

mod conv;
mod ops;

pub use ops::NORM_EPS;

/// Maps `(output grad, parent values, output value)` to one gradient
/// contribution per parent, in parent order.
pub type BackwardFn = Box<dyn Fn(&DenseArray, &[&DenseArray], &DenseArray) -> Vec<DenseArray>>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    value: DenseArray,
    grad: Option<DenseArray>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Deliberate backward-rule defects, used as negative controls for the
/// gradient checker.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the matmul backward contributions by 1.01.
    MatmulGradScale,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Fault) -> Self {
        Self {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub(crate) fn fault(&self) -> Option<Fault> {
        self.fault
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: DenseArray) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            parents: Vec::new(),
            backward: None,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input that never receives gradients.
    pub fn constant(&mut self, value: DenseArray) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v`; zeros if nothing has reached it.
    pub fn grad(&self, v: Var) -> DenseArray {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| DenseArray::zeros(node.value.shape()))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: DenseArray, parents: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates `d root / d node` into every node reachable from `root`.
    ///
    /// Gradients accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut pending: Vec<Option<DenseArray>> = Vec::new();
        pending.resize_with(root.0 + 1, || None);
        pending[root.0] = Some(DenseArray::full(root_value.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Some(rule) = &node.backward {
                let parent_values: Vec<&DenseArray> =
                    node.parents.iter().map(|&p| &self.nodes[p].value).collect();
                let contributions = rule(&g, &parent_values, &node.value);
                debug_assert_eq!(contributions.len(), node.parents.len());
                for (&p, c) in node.parents.iter().zip(contributions) {
                    if !self.nodes[p].requires_grad {
                        continue;
                    }
                    match &mut pending[p] {
                        Some(acc) => acc.add_assign(&c),
                        slot => *slot = Some(c),
                    }
                }
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}
