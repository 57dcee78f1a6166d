//! Central finite-difference verification of the backward pass. Meant to run
//! in `f64`: the 32-bit training dtype is too noisy for finite differences.

use std::cell::Cell;

use crate::{no_grad, Result, Tensor};

thread_local! {
    static VERIFY_MODE: Cell<bool> = const { Cell::new(false) };
}

/// True while a verification scope is active; ops add NaN/Inf checks.
pub fn verify_mode() -> bool {
    VERIFY_MODE.with(|c| c.get())
}

pub fn with_verify<R>(f: impl FnOnce() -> R) -> R {
    let prev = VERIFY_MODE.with(|c| c.replace(true));
    let out = f();
    VERIFY_MODE.with(|c| c.set(prev));
    out
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Compares analytic gradients of `f` against central differences for every
/// input marked `requires_grad`. Large tensors are stride-sampled down to
/// `max_per_tensor` elements. Relative error uses a small denominator floor
/// so near-zero gradients are compared absolutely.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64, max_per_tensor: usize) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    with_verify(|| {
        for t in inputs {
            t.zero_grad();
        }
        let loss = f(inputs)?;
        loss.backward()?;
        let analytic: Vec<Option<Vec<f64>>> = inputs.iter().map(|t| t.grad_vec()).collect();
        for t in inputs {
            t.zero_grad();
        }

        let mut max_rel = 0.0f64;
        let mut checked = 0usize;
        for (ti, t) in inputs.iter().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            let n = t.numel();
            if n == 0 {
                continue;
            }
            let stride = n.div_ceil(max_per_tensor).max(1);
            let mut j = 0;
            while j < n {
                let orig = t.0.data.borrow()[j];
                t.0.data.borrow_mut()[j] = orig + eps;
                let lp = no_grad(|| f(inputs).and_then(|l| l.item()))?;
                t.0.data.borrow_mut()[j] = orig - eps;
                let lm = no_grad(|| f(inputs).and_then(|l| l.item()))?;
                t.0.data.borrow_mut()[j] = orig;
                let numeric = (lp - lm) / (2.0 * eps);
                let a = analytic[ti].as_ref().map_or(0.0, |g| g[j]);
                let denom = (a.abs() + numeric.abs()).max(1e-3);
                let rel = (a - numeric).abs() / denom;
                if rel > max_rel {
                    max_rel = rel;
                }
                checked += 1;
                j += stride;
            }
        }
        Ok(GradCheckReport {
            max_rel_err: max_rel,
            checked,
        })
    })
}
