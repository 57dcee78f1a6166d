use rayon::prelude::*;

use super::check_finite;
use crate::{Real, Result, Tensor, TensorError};

/// c[i,:] += sum_p a[i,p] * b[p,:], rows of `c` split across threads.
fn mm_nn<T: Real>(a: &[T], b: &[T], c: &mut [T], _m: usize, k: usize, n: usize) {
    c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| {
        let arow = &a[i * k..][..k];
        for p in 0..k {
            let av = arow[p];
            let brow = &b[p * n..][..n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += av * *bj;
            }
        }
    });
}

/// da[i,p] = sum_j g[i,j] * b[p,j]  (g × bᵀ)
fn mm_nt<T: Real>(g: &[T], b: &[T], da: &mut [T], m: usize, n: usize, k: usize) {
    let _ = m;
    da.par_chunks_mut(k).enumerate().for_each(|(i, darow)| {
        let grow = &g[i * n..][..n];
        for (p, d) in darow.iter_mut().enumerate() {
            let brow = &b[p * n..][..n];
            let mut acc = T::zero();
            for (gv, bv) in grow.iter().zip(brow) {
                acc += *gv * *bv;
            }
            *d += acc;
        }
    });
}

/// db[p,:] += sum_i a[i,p] * g[i,:]  (aᵀ × g), rows of `db` split across threads.
fn mm_tn<T: Real>(a: &[T], g: &[T], db: &mut [T], m: usize, k: usize, n: usize) {
    db.par_chunks_mut(n).enumerate().for_each(|(p, dbrow)| {
        for i in 0..m {
            let av = a[i * k + p];
            let grow = &g[i * n..][..n];
            for (dj, gj) in dbrow.iter_mut().zip(grow) {
                *dj += av * *gj;
            }
        }
    });
}

impl<T: Real> Tensor<T> {
    /// Batched matrix product. `self` is `[.., m, k]`; `rhs` is either a
    /// shared `[k, n]` weight or `[.., k, n]` with matching leading dims.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let ls = self.shape();
        let rs = rhs.shape();
        if ls.len() < 2 || rs.len() < 2 {
            return Err(TensorError::shape(
                "matmul",
                format!("need >=2 dims, got {ls:?} x {rs:?}"),
            ));
        }
        let (m, k) = (ls[ls.len() - 2], ls[ls.len() - 1]);
        let (rk, n) = (rs[rs.len() - 2], rs[rs.len() - 1]);
        let shared_rhs = rs.len() == 2;
        if rk != k || (!shared_rhs && rs[..rs.len() - 2] != ls[..ls.len() - 2]) {
            return Err(TensorError::shape(
                "matmul",
                format!("{ls:?} x {rs:?} incompatible"),
            ));
        }
        let batch: usize = ls[..ls.len() - 2].iter().product();
        let mut out_shape = ls[..ls.len() - 2].to_vec();
        out_shape.extend_from_slice(&[m, n]);

        let a = self.0.data.borrow();
        let b = rhs.0.data.borrow();
        let mut data = vec![T::zero(); batch * m * n];
        if shared_rhs {
            // one flat row space: row r is (batch r/m, row r%m)
            mm_nn(&a, &b, &mut data, batch * m, k, n);
        } else {
            for bi in 0..batch {
                mm_nn(
                    &a[bi * m * k..][..m * k],
                    &b[bi * k * n..][..k * n],
                    &mut data[bi * m * n..][..m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        drop(a);
        drop(b);
        check_finite("matmul", &data)?;
        let parents = vec![self.clone(), rhs.clone()];
        Ok(Tensor::from_op(data, out_shape, parents, move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let lhs = &node.parents[0];
            let rhs = &node.parents[1];
            let a = lhs.0.data.borrow();
            let b = rhs.0.data.borrow();
            if lhs.0.requires_grad {
                let mut da = vec![T::zero(); a.len()];
                if shared_rhs {
                    mm_nt(g, &b, &mut da, batch * m, n, k);
                } else {
                    for bi in 0..batch {
                        mm_nt(
                            &g[bi * m * n..][..m * n],
                            &b[bi * k * n..][..k * n],
                            &mut da[bi * m * k..][..m * k],
                            m,
                            n,
                            k,
                        );
                    }
                }
                lhs.accumulate_grad_owned(da);
            }
            if rhs.0.requires_grad {
                let mut db = vec![T::zero(); b.len()];
                if shared_rhs {
                    mm_tn(&a, g, &mut db, batch * m, k, n);
                } else {
                    for bi in 0..batch {
                        mm_tn(
                            &a[bi * m * k..][..m * k],
                            &g[bi * m * n..][..m * n],
                            &mut db[bi * k * n..][..k * n],
                            m,
                            k,
                            n,
                        );
                    }
                }
                drop(a);
                drop(b);
                rhs.accumulate_grad_owned(db);
            }
        }))
    }
}
