use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::{Real, Result, TensorError};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// True when ops should record backward closures on the tape.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Runs `f` with tape recording disabled; ops produce detached leaves.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    let out = f();
    GRAD_ENABLED.with(|c| c.set(prev));
    out
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Node<T>)>;

pub(crate) struct Node<T: Real> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: RefCell<Vec<T>>,
    pub(crate) grad: RefCell<Option<Vec<T>>>,
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) backward: Option<BackwardFn<T>>,
    pub(crate) requires_grad: bool,
}

/// Dense row-major tensor. Cloning is a cheap handle copy; graph context is
/// single-threaded (`Rc`-based), per the one-tape-per-context contract.
#[derive(Clone)]
pub struct Tensor<T: Real>(pub(crate) Rc<Node<T>>);

impl<T: Real> Tensor<T> {
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::shape(
                "from_vec",
                format!("data length {} vs shape {:?}", data.len(), shape),
            ));
        }
        Ok(Self::leaf(data, shape.to_vec(), false))
    }

    pub fn scalar(v: T) -> Self {
        Self::leaf(vec![v], vec![], false)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::leaf(vec![T::zero(); numel], shape.to_vec(), false)
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::leaf(vec![T::one(); numel], shape.to_vec(), false)
    }

    /// Leaf that participates in gradients (used by `Param`).
    pub fn param_leaf(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::shape(
                "param_leaf",
                format!("data length {} vs shape {:?}", data.len(), shape),
            ));
        }
        Ok(Self::leaf(data, shape.to_vec(), true))
    }

    pub(crate) fn leaf(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
            requires_grad,
        }))
    }

    /// Result node. When recording is off or no parent needs gradients the
    /// node is detached (parents dropped, graph freed eagerly).
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&Node<T>) + 'static,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.0.requires_grad);
        if !track {
            return Self::leaf(data, shape, false);
        }
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            parents,
            backward: Some(Box::new(backward)),
            requires_grad: true,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    pub fn with_data<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.0.data.borrow())
    }

    /// Overwrites the stored values (shape-preserving). Intended for leaves.
    pub fn set_data(&self, data: &[T]) {
        let mut d = self.0.data.borrow_mut();
        assert_eq!(d.len(), data.len(), "set_data length mismatch");
        d.copy_from_slice(data);
    }

    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.0.shape.clone()));
        }
        Ok(self.0.data.borrow()[0])
    }

    /// Detached copy of the values as a fresh constant leaf.
    pub fn detach(&self) -> Self {
        Self::leaf(self.to_vec(), self.0.shape.clone(), false)
    }

    pub fn grad_vec(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, v) in buf.iter_mut().zip(g) {
                    *b += *v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn accumulate_grad_owned(&self, g: Vec<T>) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, v) in buf.iter_mut().zip(&g) {
                    *b += *v;
                }
            }
            None => *slot = Some(g),
        }
    }

    /// Reverse pass from a scalar loss. Populates `grad` on every reachable
    /// tensor with `requires_grad`; unreachable parameters keep `None`
    /// (read as zeros by the optimizer).
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.0.shape.clone()));
        }
        *self.0.grad.borrow_mut() = Some(vec![T::one()]);

        // Iterative post-order DFS, then reverse for the backward sweep.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        seen.insert(self.0.id);
        while let Some((node, child)) = stack.pop() {
            let parents = &node.0.parents;
            if child < parents.len() {
                let next = parents[child].clone();
                stack.push((node, child + 1));
                if next.0.requires_grad && seen.insert(next.0.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        for node in order.iter().rev() {
            if let Some(back) = &node.0.backward {
                if node.0.grad.borrow().is_some() {
                    back(&node.0);
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let data = self.0.data.borrow();
        let head: Vec<&T> = data.iter().take(8).collect();
        write!(
            f,
            "Tensor{{shape: {:?}, data: {:?}{}}}",
            self.0.shape,
            head,
            if data.len() > 8 { ", .." } else { "" }
        )
    }
}
