//! Forward + backward definitions for the op set.

mod attention;
mod conv;
mod elementwise;
mod loss;
mod matmul;
mod norm;
mod scan;
mod shape;

pub use attention::multihead_attention;
pub use scan::{discretize, scan_discretized, selective_scan, ScanMode};

use crate::{Real, Result, TensorError};

/// Broadcast compatibility for elementwise binary ops: identical shapes, a
/// scalar rhs, or an rhs whose shape is a suffix of the lhs (tiled over the
/// leading dims).
pub(crate) enum Broadcast {
    Same,
    Scalar,
    Suffix { len: usize },
}

pub(crate) fn broadcast_kind<T: Real>(
    op: &'static str,
    lhs: &crate::Tensor<T>,
    rhs: &crate::Tensor<T>,
) -> Result<Broadcast> {
    let (ls, rs) = (lhs.shape(), rhs.shape());
    if ls == rs {
        return Ok(Broadcast::Same);
    }
    if rhs.numel() == 1 {
        return Ok(Broadcast::Scalar);
    }
    if rs.len() < ls.len() && ls[ls.len() - rs.len()..] == *rs {
        return Ok(Broadcast::Suffix { len: rhs.numel() });
    }
    Err(TensorError::shape(
        op,
        format!("cannot broadcast {rs:?} onto {ls:?}"),
    ))
}

pub(crate) fn check_finite<T: Real>(op: &'static str, data: &[T]) -> Result<()> {
    if crate::gradcheck::verify_mode() && data.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFiniteInput { op });
    }
    Ok(())
}
