//! Dense float32 tensors with reverse-mode differentiation.
//!
//! The engine is define-by-run: every op call allocates a fresh output tensor
//! and, when gradients are enabled, records a node holding the op name, the
//! parent handles and a backward closure. Graphs are rebuilt on each forward
//! pass and freed when the outputs drop. Parameters are leaf tensors that
//! survive across passes; their gradients accumulate additively until the
//! caller clears them, which is what lets one backward pass serve several
//! loss terms.
//!
//! Determinism contract: every reduction in this module (and in the custom
//! ops layered on top) accumulates in ascending index order on a single
//! thread, so identical inputs give bit-identical outputs and gradients.

mod adam;
mod gradcheck;
mod ops;

pub use adam::Adam;
pub use gradcheck::finite_diff_check;

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU8, Ordering};

// Non-finite trap: 0 = unread (consult the environment), 1 = off, 2 = on.
static TRAP_STATE: AtomicU8 = AtomicU8::new(0);

/// Enables or disables the non-finite output trap, overriding the
/// `MAMBASEG_TRAP_NONFINITE` environment variable.
///
/// With the trap on, any op that produces a NaN or infinity panics right away
/// and names the op and the offending position instead of letting the value
/// poison the rest of the graph.
pub fn set_nonfinite_trap(enabled: bool) {
    TRAP_STATE.store(if enabled { 2 } else { 1 }, Ordering::SeqCst);
}

/// True when ops should panic on non-finite outputs.
pub fn nonfinite_trap() -> bool {
    match TRAP_STATE.load(Ordering::SeqCst) {
        1 => false,
        2 => true,
        _ => {
            let on = std::env::var_os("MAMBASEG_TRAP_NONFINITE")
                .is_some_and(|v| v != "0" && !v.is_empty());
            TRAP_STATE.store(if on { 2 } else { 1 }, Ordering::SeqCst);
            on
        }
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// True when ops currently record backward nodes (the default).
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Runs `f` with gradient recording disabled.
///
/// Ops called inside build no graph and allocate no saved buffers, which is
/// what inference paths use. Nesting is fine; the previous state is restored
/// even if `f` panics.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

/// Per-parent gradient buffers produced by a backward closure, `None` for
/// parents that need no gradient.
pub(crate) type BackwardFn = Box<dyn Fn(&[f32]) -> Vec<Option<Vec<f32>>>>;

struct Node {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    shape: Vec<usize>,
    data: RefCell<Vec<f32>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f32>>>,
    node: Option<Node>,
}

/// A shared handle to an n-dimensional float32 array, row-major.
///
/// Cloning is cheap (reference count bump) and clones alias the same storage.
/// Tensor values are immutable once created except through [`Tensor::set_data`],
/// which exists for optimizer updates on leaves between steps.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl Tensor {
    /// Builds a constant (non-differentiable) tensor from row-major data.
    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        assert!(
            data.len() == numel,
            "from_vec: {} values do not fill shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                shape: shape.to_vec(),
                data: RefCell::new(data),
                requires_grad: false,
                grad: RefCell::new(None),
                node: None,
            }),
        }
    }

    /// Builds a trainable leaf; gradients accumulate here during backward.
    pub fn param(data: Vec<f32>, shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        assert!(
            data.len() == numel,
            "param: {} values do not fill shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                shape: shape.to_vec(),
                data: RefCell::new(data),
                requires_grad: true,
                grad: RefCell::new(None),
                node: None,
            }),
        }
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(vec![0.0; shape.iter().product()], shape)
    }

    /// Tensor of the given shape filled with `value`.
    pub fn full(shape: &[usize], value: f32) -> Tensor {
        Tensor::from_vec(vec![value; shape.iter().product()], shape)
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: f32) -> Tensor {
        Tensor::from_vec(vec![value], &[1])
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Name of the op that produced this tensor, or `"leaf"`.
    pub fn op_name(&self) -> &'static str {
        self.inner.node.as_ref().map_or("leaf", |n| n.op)
    }

    /// Copies the values out.
    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.data.borrow().clone()
    }

    /// Runs `f` against the raw storage without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[f32]) -> R) -> R {
        f(&self.inner.data.borrow())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        assert!(
            self.numel() == 1,
            "item: tensor has shape {:?}, expected one element",
            self.shape()
        );
        self.inner.data.borrow()[0]
    }

    /// Overwrites the stored values in place. Meant for optimizer updates and
    /// checkpoint restores on leaves; using it on an op output invalidates
    /// nothing but also reruns nothing, so don't.
    pub fn set_data(&self, values: &[f32]) {
        let mut data = self.inner.data.borrow_mut();
        assert!(
            values.len() == data.len(),
            "set_data: {} values for tensor of {} elements",
            values.len(),
            data.len()
        );
        data.copy_from_slice(values);
    }

    /// Copy of the accumulated gradient, if any backward pass has reached
    /// this tensor since the last [`Tensor::zero_grad`].
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.borrow().clone()
    }

    /// Clears the accumulated gradient.
    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Stable identity of the underlying allocation, used to deduplicate
    /// graph nodes during traversal.
    fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    pub(crate) fn accumulate_grad(&self, g: &[f32]) {
        if !self.inner.requires_grad {
            return;
        }
        debug_assert_eq!(g.len(), self.numel(), "gradient length mismatch");
        let mut grad = self.inner.grad.borrow_mut();
        match grad.as_mut() {
            Some(buf) => {
                for (acc, add) in buf.iter_mut().zip(g) {
                    *acc += add;
                }
            }
            None => *grad = Some(g.to_vec()),
        }
    }

    /// Records the result of an op. `backward` maps the output gradient to
    /// one optional gradient buffer per parent, in parent order.
    pub(crate) fn from_op(
        op: &'static str,
        parents: Vec<Tensor>,
        shape: Vec<usize>,
        data: Vec<f32>,
        backward: BackwardFn,
    ) -> Tensor {
        let numel: usize = shape.iter().product();
        debug_assert_eq!(data.len(), numel, "{op}: output size mismatch");
        if nonfinite_trap() {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                panic!("{op}: non-finite output {} at flat index {i} of shape {:?}", data[i], shape);
            }
        }
        let requires_grad = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                requires_grad,
                grad: RefCell::new(None),
                node: if requires_grad {
                    Some(Node { op, parents, backward })
                } else {
                    None
                },
            }),
        }
    }

    /// Reverse-mode differentiation from a scalar loss.
    ///
    /// Seeds `dL/dL = 1`, walks the recorded graph once in reverse
    /// topological order and adds each op's contribution into its parents'
    /// gradient buffers. Calling it twice without clearing gradients doubles
    /// them; that is intentional (gradient accumulation), the optimizer owns
    /// the clearing.
    pub fn backward(&self) {
        assert!(
            self.numel() == 1,
            "backward: loss must be a single element, got shape {:?}",
            self.shape()
        );
        self.accumulate_grad(&[1.0]);
        let order = topo_order(self);
        for t in order.iter().rev() {
            let Some(node) = t.inner.node.as_ref() else { continue };
            let gout = match t.inner.grad.borrow().as_ref() {
                Some(g) => g.clone(),
                // Unreachable from a connected graph, but a node whose every
                // consumer produced no gradient contributes nothing.
                None => continue,
            };
            let grads = (node.backward)(&gout);
            assert_eq!(
                grads.len(),
                node.parents.len(),
                "{}: backward produced {} gradients for {} parents",
                node.op,
                grads.len(),
                node.parents.len()
            );
            for (parent, grad) in node.parents.iter().zip(grads) {
                if let Some(g) = grad {
                    parent.accumulate_grad(&g);
                }
            }
        }
    }
}

/// Post-order over the recorded graph: every tensor appears after all of its
/// parents, so iterating the result in reverse visits each node exactly once
/// with its output gradient fully accumulated.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![(root.clone(), 0usize)];
    seen.insert(root.ptr_id());
    while let Some((t, next_parent)) = stack.pop() {
        let parent = t
            .inner
            .node
            .as_ref()
            .and_then(|n| n.parents.get(next_parent))
            .cloned();
        match parent {
            Some(p) => {
                stack.push((t, next_parent + 1));
                if seen.insert(p.ptr_id()) {
                    stack.push((p, 0));
                }
            }
            None => order.push(t),
        }
    }
    order
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("op", &self.op_name())
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaves_have_no_graph() {
        let t = Tensor::from_vec(vec![1.0, 2.0], &[2]);
        assert_eq!(t.op_name(), "leaf");
        assert!(!t.requires_grad());
        assert_eq!(t.to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn sum_backward_is_ones() {
        let x = Tensor::param(vec![0.5, -1.0, 2.0, 7.0], &[2, 2]);
        let loss = x.sum();
        loss.backward();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn grads_accumulate_until_cleared() {
        let x = Tensor::param(vec![3.0], &[1]);
        x.sum().backward();
        x.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn shared_subexpression_gets_both_contributions() {
        // y = x + x: dy/dx = 2 through two paths into the same parent.
        let x = Tensor::param(vec![1.0, 2.0], &[2]);
        let y = x.add(&x);
        y.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn no_grad_suppresses_graph_recording() {
        let x = Tensor::param(vec![1.0], &[1]);
        let y = no_grad(|| x.mul(&x));
        assert!(!y.requires_grad());
        // No node was recorded, so the result presents as a leaf.
        assert_eq!(y.op_name(), "leaf");
        assert!(grad_enabled());
    }

    #[test]
    fn forward_is_pure() {
        let x = Tensor::param(vec![0.3, -0.7, 1.9], &[3]);
        let run = || x.silu().softmax(0).to_vec();
        let a = run();
        let b = run();
        assert_eq!(a, b, "identical inputs must give bit-identical outputs");
    }

    #[test]
    #[should_panic(expected = "backward: loss must be a single element")]
    fn backward_rejects_non_scalars() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]);
        x.add(&x).backward();
    }

    #[test]
    fn trap_names_op_and_position() {
        set_nonfinite_trap(true);
        let result = std::panic::catch_unwind(|| {
            let x = Tensor::from_vec(vec![0.0, 200.0], &[2]);
            x.exp()
        });
        set_nonfinite_trap(false);
        let err = *result.unwrap_err().downcast::<String>().unwrap();
        assert!(err.contains("exp"), "got: {err}");
        assert!(err.contains("index 1"), "got: {err}");
    }
}
