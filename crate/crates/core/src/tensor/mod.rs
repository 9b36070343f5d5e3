//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted node. Operations on tensors
//! that require gradients record a backward closure and their parents, so the
//! graph is rebuilt on every forward pass and discarded afterwards. Calling
//! [`Tensor::backward`] on a scalar walks the graph in reverse topological
//! order and accumulates gradients into every reachable tensor that requires
//! them.
//!
//! Tensors are generic over [`Real`] so the same layer code runs at 32-bit
//! for training and at 64-bit for finite-difference gradient checks.

mod conv;
mod norm;
mod ops;
mod optim;
mod real;

pub use norm::{RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use real::Real;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

struct Origin<T: Real> {
    op: &'static str,
    parents: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Real> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    origin: Option<Origin<T>>,
}

/// A dense row-major array with an optional gradient slot.
pub struct Tensor<T: Real>(Rc<Node<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.op())
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    /// Builds a constant (non-differentiable) tensor.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape, data, false)
    }

    /// Builds a leaf that collects gradients, e.g. a model parameter.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape, data, true)
    }

    fn leaf(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} holds {numel} values but got {}", data.len()),
            ));
        }
        Ok(Tensor(Rc::new(Node {
            shape: shape.to_vec(),
            data,
            requires_grad,
            grad: RefCell::new(None),
            origin: None,
        })))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![T::zero(); n])
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad: false,
            grad: RefCell::new(None),
            origin: None,
        }))
    }

    /// Wraps the output of an operation. The backward closure is kept only
    /// when some parent needs a gradient.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let origin = requires_grad.then(|| Origin {
            op,
            parents,
            backward: Box::new(backward) as BackwardFn<T>,
        });
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            origin,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Name of the operation that produced this tensor, if it is tracked.
    pub fn op(&self) -> Option<&'static str> {
        self.0.origin.as_ref().map(|o| o.op)
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        match self.0.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::shape(
                "item",
                format!("expected one element, shape is {:?}", self.0.shape),
            )),
        }
    }

    /// Detached copy with no history.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.0.shape.clone(), self.0.data.clone())
    }

    /// Same values, different shape. Gradients flow through unchanged.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.0.data.clone(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    fn key(&self) -> *const Node<T> {
        Rc::as_ptr(&self.0)
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Gradients are added to whatever is already in each grad slot, so two
    /// calls without [`Tensor::zero_grad`] in between accumulate.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, shape is {:?}", self.shape()),
            ));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut pending: HashMap<*const Node<T>, Vec<T>> = HashMap::new();
        pending.insert(self.key(), vec![T::one()]);
        for node in order.iter().rev() {
            let Some(upstream) = pending.remove(&node.key()) else {
                continue;
            };
            if let Some(origin) = &node.0.origin {
                let grads = (origin.backward)(&upstream);
                debug_assert_eq!(grads.len(), origin.parents.len());
                for (parent, g) in origin.parents.iter().zip(grads) {
                    let Some(g) = g else { continue };
                    if !parent.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(g.len(), parent.numel(), "grad size from {}", origin.op);
                    match pending.get_mut(&parent.key()) {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        None => {
                            pending.insert(parent.key(), g);
                        }
                    }
                }
            }
            let mut slot = node.0.grad.borrow_mut();
            match slot.as_mut() {
                Some(acc) => acc.iter_mut().zip(&upstream).for_each(|(a, b)| *a += *b),
                None => *slot = Some(upstream),
            }
        }
        Ok(())
    }

    /// Nodes that require grad, parents before children.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // (node, children already pushed)
        let mut stack = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.key()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(origin) = &node.0.origin {
                for p in origin.parents.iter().filter(|p| p.requires_grad()) {
                    if !visited.contains(&p.key()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }

    /// Converts to another precision. The result is a fresh leaf.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        let data = self.0.data.iter().map(|v| U::from_f64(v.as_f64())).collect();
        Tensor::<U>::from_parts(self.0.shape.clone(), data)
    }
}
