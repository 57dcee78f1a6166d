use rayon::prelude::*;

use super::check_finite;
use crate::{Real, Result, Tensor, TensorError};

/// Evaluation strategy for the selective scan recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Direct left-to-right recurrence h_t = ā_t·h_{t-1} + b̄_t·x_t.
    Sequential,
    /// Chunked associative prefix scan over pairs (a, b) with the combine
    /// rule (a2·a1, a2·b1 + b2); numerically equivalent up to rounding.
    Parallel,
}

const SCAN_CHUNK: usize = 64;

fn dims3<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        s => Err(TensorError::shape(op, format!("want 3 dims, got {s:?}"))),
    }
}

/// ZOH discretization: ā = exp(Δ ⊗ A), b̄ = Δ ⊗ B. Output shapes are
/// `[B, L, E, N]`. Intended for verification at small sizes; the training
/// path fuses this into `selective_scan`.
pub fn discretize<T: Real>(
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b_mat: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (bb, l, e) = dims3("discretize", delta)?;
    let n = match a.shape() {
        [ae, n] if *ae == e => *n,
        s => {
            return Err(TensorError::shape(
                "discretize",
                format!("A want [E,N], got {s:?}"),
            ))
        }
    };
    let (b2, l2, n2) = dims3("discretize", b_mat)?;
    if b2 != bb || l2 != l || n2 != n {
        return Err(TensorError::shape(
            "discretize",
            format!("B want [{bb},{l},{n}], got {:?}", b_mat.shape()),
        ));
    }

    let dd = delta.0.data.borrow();
    let ad = a.0.data.borrow();
    let bd = b_mat.0.data.borrow();
    let mut abar = vec![T::zero(); bb * l * e * n];
    let mut bbar = vec![T::zero(); bb * l * e * n];
    for bi in 0..bb {
        for t in 0..l {
            for ei in 0..e {
                let dv = dd[(bi * l + t) * e + ei];
                let out = ((bi * l + t) * e + ei) * n;
                for ni in 0..n {
                    abar[out + ni] = (dv * ad[ei * n + ni]).exp();
                    bbar[out + ni] = dv * bd[(bi * l + t) * n + ni];
                }
            }
        }
    }
    drop(dd);
    drop(ad);
    drop(bd);
    check_finite("discretize", &abar)?;

    let shape = vec![bb, l, e, n];
    let abar_t = Tensor::from_op(
        abar,
        shape.clone(),
        vec![delta.clone(), a.clone()],
        move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let y = node.data.borrow();
            let dd = node.parents[0].0.data.borrow();
            let ad = node.parents[1].0.data.borrow();
            let mut ddelta = vec![T::zero(); bb * l * e];
            let mut da = vec![T::zero(); e * n];
            for bi in 0..bb {
                for t in 0..l {
                    for ei in 0..e {
                        let di = (bi * l + t) * e + ei;
                        let base = di * n;
                        for ni in 0..n {
                            let gy = g[base + ni] * y[base + ni];
                            ddelta[di] += gy * ad[ei * n + ni];
                            da[ei * n + ni] += gy * dd[di];
                        }
                    }
                }
            }
            drop(y);
            drop(dd);
            drop(ad);
            node.parents[0].accumulate_grad_owned(ddelta);
            node.parents[1].accumulate_grad_owned(da);
        },
    );
    let bbar_t = Tensor::from_op(
        bbar,
        shape,
        vec![delta.clone(), b_mat.clone()],
        move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let dd = node.parents[0].0.data.borrow();
            let bd = node.parents[1].0.data.borrow();
            let mut ddelta = vec![T::zero(); bb * l * e];
            let mut db = vec![T::zero(); bb * l * n];
            for bi in 0..bb {
                for t in 0..l {
                    for ei in 0..e {
                        let di = (bi * l + t) * e + ei;
                        let base = di * n;
                        for ni in 0..n {
                            ddelta[di] += g[base + ni] * bd[(bi * l + t) * n + ni];
                            db[(bi * l + t) * n + ni] += g[base + ni] * dd[di];
                        }
                    }
                }
            }
            drop(dd);
            drop(bd);
            node.parents[0].accumulate_grad_owned(ddelta);
            node.parents[1].accumulate_grad_owned(db);
        },
    );
    Ok((abar_t, bbar_t))
}

/// Scan over already-discretized parameters. `abar`/`bbar` are `[B,L,E,N]`,
/// `c` is `[B,L,N]`, `x` is `[B,L,E]`; returns y with y_t = Σ_n c_t·h_t.
/// Stores the full state trajectory for backward, so it is meant for
/// verification-scale inputs; training uses the fused `selective_scan`.
pub fn scan_discretized<T: Real>(
    abar: &Tensor<T>,
    bbar: &Tensor<T>,
    c: &Tensor<T>,
    x: &Tensor<T>,
    mode: ScanMode,
) -> Result<Tensor<T>> {
    let (bb, l, e) = dims3("scan", x)?;
    let n = match abar.shape() {
        [b2, l2, e2, n] if *b2 == bb && *l2 == l && *e2 == e => *n,
        s => {
            return Err(TensorError::shape(
                "scan",
                format!("abar want [{bb},{l},{e},N], got {s:?}"),
            ))
        }
    };
    if bbar.shape() != abar.shape() {
        return Err(TensorError::shape("scan", "bbar shape vs abar"));
    }
    if c.shape() != [bb, l, n] {
        return Err(TensorError::shape(
            "scan",
            format!("c want [{bb},{l},{n}], got {:?}", c.shape()),
        ));
    }

    let ad = abar.0.data.borrow();
    let bd = bbar.0.data.borrow();
    let cd = c.0.data.borrow();
    let xd = x.0.data.borrow();
    let mut y = vec![T::zero(); bb * l * e];
    // full trajectory h[b,t,e,n], kept for the backward pass
    let mut hs = vec![T::zero(); bb * l * e * n];
    for bi in 0..bb {
        for ei in 0..e {
            // run the recurrence per state channel n (ā varies per n)
            for ni in 0..n {
                let mut col = vec![(T::zero(), T::zero()); l];
                for t in 0..l {
                    let base = ((bi * l + t) * e + ei) * n;
                    col[t] = (
                        ad[base + ni],
                        bd[base + ni] * xd[(bi * l + t) * e + ei],
                    );
                }
                let h = match mode {
                    ScanMode::Sequential => scan_seq(&col),
                    ScanMode::Parallel => scan_par(&col),
                };
                for t in 0..l {
                    hs[((bi * l + t) * e + ei) * n + ni] = h[t];
                }
            }
            for t in 0..l {
                let base = ((bi * l + t) * e + ei) * n;
                let mut acc = T::zero();
                for ni in 0..n {
                    acc += cd[(bi * l + t) * n + ni] * hs[base + ni];
                }
                y[(bi * l + t) * e + ei] = acc;
            }
        }
    }
    drop(ad);
    drop(bd);
    drop(cd);
    drop(xd);
    check_finite("scan", &y)?;

    let parents = vec![abar.clone(), bbar.clone(), c.clone(), x.clone()];
    Ok(Tensor::from_op(y, vec![bb, l, e], parents, move |node| {
        let g = node.grad.borrow();
        let g = g.as_ref().unwrap();
        let ad = node.parents[0].0.data.borrow();
        let bd = node.parents[1].0.data.borrow();
        let cd = node.parents[2].0.data.borrow();
        let xd = node.parents[3].0.data.borrow();
        let mut dabar = vec![T::zero(); ad.len()];
        let mut dbbar = vec![T::zero(); bd.len()];
        let mut dc = vec![T::zero(); cd.len()];
        let mut dx = vec![T::zero(); xd.len()];
        for bi in 0..bb {
            for ei in 0..e {
                let mut dh = vec![T::zero(); n];
                for t in (0..l).rev() {
                    let base = ((bi * l + t) * e + ei) * n;
                    let gy = g[(bi * l + t) * e + ei];
                    let xv = xd[(bi * l + t) * e + ei];
                    let mut dxv = T::zero();
                    for ni in 0..n {
                        let h = hs[base + ni];
                        dc[(bi * l + t) * n + ni] += gy * h;
                        let dhn = dh[ni] + gy * cd[(bi * l + t) * n + ni];
                        let h_prev = if t == 0 {
                            T::zero()
                        } else {
                            hs[((bi * l + t - 1) * e + ei) * n + ni]
                        };
                        dabar[base + ni] += dhn * h_prev;
                        dbbar[base + ni] += dhn * xv;
                        dxv += dhn * bd[base + ni];
                        dh[ni] = dhn * ad[base + ni];
                    }
                    dx[(bi * l + t) * e + ei] += dxv;
                }
            }
        }
        drop(ad);
        drop(bd);
        drop(cd);
        drop(xd);
        node.parents[0].accumulate_grad_owned(dabar);
        node.parents[1].accumulate_grad_owned(dbbar);
        node.parents[2].accumulate_grad_owned(dc);
        node.parents[3].accumulate_grad_owned(dx);
    }))
}

fn scan_seq<T: Real>(col: &[(T, T)]) -> Vec<T> {
    let mut out = Vec::with_capacity(col.len());
    let mut h = T::zero();
    for &(a, b) in col {
        h = a * h + b;
        out.push(h);
    }
    out
}

/// Chunked two-pass associative scan. Pass 1 folds each chunk into its
/// combined pair, pass 2 carries chunk prefixes, pass 3 expands within
/// chunks from the carried state.
fn scan_par<T: Real>(col: &[(T, T)]) -> Vec<T> {
    let l = col.len();
    let mut out = vec![T::zero(); l];
    let n_chunks = l.div_ceil(SCAN_CHUNK);
    let mut summaries = Vec::with_capacity(n_chunks);
    for ch in 0..n_chunks {
        let s = ch * SCAN_CHUNK;
        let e = (s + SCAN_CHUNK).min(l);
        let mut acc = (T::one(), T::zero());
        for &(a, b) in &col[s..e] {
            // combine(acc, (a,b)) = (a*acc.0, a*acc.1 + b)
            acc = (a * acc.0, a * acc.1 + b);
        }
        summaries.push(acc);
    }
    let mut carry = T::zero();
    let mut carries = Vec::with_capacity(n_chunks);
    for s in &summaries {
        carries.push(carry);
        carry = s.0 * carry + s.1;
    }
    for ch in 0..n_chunks {
        let s = ch * SCAN_CHUNK;
        let e = (s + SCAN_CHUNK).min(l);
        let mut h = carries[ch];
        for (t, &(a, b)) in col[s..e].iter().enumerate() {
            h = a * h + b;
            out[s + t] = h;
        }
    }
    out
}

/// Fused selective scan used by the model: takes the pre-discretization
/// parameters, applies ZOH on the fly, and checkpoints the state every
/// `SCAN_CHUNK` steps so backward recomputes within chunks instead of
/// storing the `[B,L,E,N]` trajectory.
///
/// Shapes: `x`, `delta` `[B,L,E]`; `a` `[E,N]`; `b`, `c` `[B,L,N]`.
pub fn selective_scan<T: Real>(
    x: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    mode: ScanMode,
) -> Result<Tensor<T>> {
    let (bb, l, e) = dims3("selective_scan", x)?;
    if delta.shape() != [bb, l, e] {
        return Err(TensorError::shape("selective_scan", "delta vs x"));
    }
    let n = match a.shape() {
        [ae, n] if *ae == e => *n,
        s => {
            return Err(TensorError::shape(
                "selective_scan",
                format!("A want [E,N], got {s:?}"),
            ))
        }
    };
    if b.shape() != [bb, l, n] || c.shape() != [bb, l, n] {
        return Err(TensorError::shape("selective_scan", "b/c want [B,L,N]"));
    }

    let n_ckpt = l.div_ceil(SCAN_CHUNK);
    let xd_guard = x.0.data.borrow();
    let dd_guard = delta.0.data.borrow();
    let ad_guard = a.0.data.borrow();
    let bd_guard = b.0.data.borrow();
    let cd_guard = c.0.data.borrow();
    let (xd, dd, ad, bd, cd): (&[T], &[T], &[T], &[T], &[T]) =
        (&xd_guard, &dd_guard, &ad_guard, &bd_guard, &cd_guard);

    // per (batch, channel) column jobs
    let jobs: Vec<(usize, usize)> = (0..bb)
        .flat_map(|bi| (0..e).map(move |ei| (bi, ei)))
        .collect();
    let cols: Vec<(Vec<T>, Vec<T>)> = jobs
        .par_iter()
        .map(|&(bi, ei)| {
            let mut y_col = vec![T::zero(); l];
            // state entering step s*SCAN_CHUNK, for each chunk s
            let mut ckpt_col = vec![T::zero(); n_ckpt * n];
            let arow = &ad[ei * n..][..n];
            match mode {
                ScanMode::Sequential => {
                    let mut h = vec![T::zero(); n];
                    for t in 0..l {
                        if t % SCAN_CHUNK == 0 {
                            ckpt_col[(t / SCAN_CHUNK) * n..][..n].copy_from_slice(&h);
                        }
                        let dv = dd[(bi * l + t) * e + ei];
                        let xv = xd[(bi * l + t) * e + ei];
                        let brow = &bd[(bi * l + t) * n..][..n];
                        let crow = &cd[(bi * l + t) * n..][..n];
                        let mut acc = T::zero();
                        for ni in 0..n {
                            let abar = (dv * arow[ni]).exp();
                            h[ni] = abar * h[ni] + dv * brow[ni] * xv;
                            acc += crow[ni] * h[ni];
                        }
                        y_col[t] = acc;
                    }
                }
                ScanMode::Parallel => {
                    // chunk summaries per state channel
                    for ni in 0..n {
                        let an = arow[ni];
                        let mut carries = vec![T::zero(); n_ckpt];
                        let mut carry = T::zero();
                        for ch in 0..n_ckpt {
                            let s = ch * SCAN_CHUNK;
                            let te = (s + SCAN_CHUNK).min(l);
                            carries[ch] = carry;
                            let mut acc = (T::one(), T::zero());
                            for t in s..te {
                                let dv = dd[(bi * l + t) * e + ei];
                                let abar = (dv * an).exp();
                                let bu = dv * bd[(bi * l + t) * n + ni] * xd[(bi * l + t) * e + ei];
                                acc = (abar * acc.0, abar * acc.1 + bu);
                            }
                            carry = acc.0 * carry + acc.1;
                        }
                        for ch in 0..n_ckpt {
                            let s = ch * SCAN_CHUNK;
                            let te = (s + SCAN_CHUNK).min(l);
                            ckpt_col[ch * n + ni] = carries[ch];
                            let mut h = carries[ch];
                            for t in s..te {
                                let dv = dd[(bi * l + t) * e + ei];
                                let abar = (dv * an).exp();
                                h = abar * h + dv * bd[(bi * l + t) * n + ni] * xd[(bi * l + t) * e + ei];
                                y_col[t] += cd[(bi * l + t) * n + ni] * h;
                            }
                        }
                    }
                }
            }
            (y_col, ckpt_col)
        })
        .collect();

    let mut y = vec![T::zero(); bb * l * e];
    let mut ckpts = vec![T::zero(); bb * n_ckpt * e * n];
    for (&(bi, ei), (y_col, ckpt_col)) in jobs.iter().zip(&cols) {
        for t in 0..l {
            y[(bi * l + t) * e + ei] = y_col[t];
        }
        for s in 0..n_ckpt {
            ckpts[((bi * n_ckpt + s) * e + ei) * n..][..n].copy_from_slice(&ckpt_col[s * n..][..n]);
        }
    }
    drop(xd_guard);
    drop(dd_guard);
    drop(ad_guard);
    drop(bd_guard);
    drop(cd_guard);
    check_finite("selective_scan", &y)?;

    let parents = vec![x.clone(), delta.clone(), a.clone(), b.clone(), c.clone()];
    Ok(Tensor::from_op(y, vec![bb, l, e], parents, move |node| {
        let g_guard = node.grad.borrow();
        let g: &[T] = g_guard.as_ref().unwrap();
        let xd_guard = node.parents[0].0.data.borrow();
        let dd_guard = node.parents[1].0.data.borrow();
        let ad_guard = node.parents[2].0.data.borrow();
        let bd_guard = node.parents[3].0.data.borrow();
        let cd_guard = node.parents[4].0.data.borrow();
        let (xd, dd, ad, bd, cd): (&[T], &[T], &[T], &[T], &[T]) =
            (&xd_guard, &dd_guard, &ad_guard, &bd_guard, &cd_guard);
        let ckpts: &[T] = &ckpts;

        // per batch item: own dx/ddelta/db/dc slices plus a da partial
        let per_batch: Vec<(Vec<T>, Vec<T>, Vec<T>, Vec<T>, Vec<T>)> = (0..bb)
            .into_par_iter()
            .map(|bi| {
                let mut dx_b = vec![T::zero(); l * e];
                let mut dd_b = vec![T::zero(); l * e];
                let mut da_b = vec![T::zero(); e * n];
                let mut db_b = vec![T::zero(); l * n];
                let mut dc_b = vec![T::zero(); l * n];
                let mut hbuf = vec![T::zero(); SCAN_CHUNK * n];
                let mut dh = vec![T::zero(); n];
                for ei in 0..e {
                    let arow = &ad[ei * n..][..n];
                    dh.iter_mut().for_each(|v| *v = T::zero());
                    for ch in (0..n_ckpt).rev() {
                        let s = ch * SCAN_CHUNK;
                        let te = (s + SCAN_CHUNK).min(l);
                        // recompute states h_t for t in [s, te)
                        let start = ((bi * n_ckpt + ch) * e + ei) * n;
                        let mut h: Vec<T> = ckpts[start..][..n].to_vec();
                        for t in s..te {
                            let dv = dd[(bi * l + t) * e + ei];
                            let xv = xd[(bi * l + t) * e + ei];
                            for ni in 0..n {
                                let abar = (dv * arow[ni]).exp();
                                h[ni] = abar * h[ni] + dv * bd[(bi * l + t) * n + ni] * xv;
                            }
                            hbuf[(t - s) * n..][..n].copy_from_slice(&h);
                        }
                        for t in (s..te).rev() {
                            let dv = dd[(bi * l + t) * e + ei];
                            let xv = xd[(bi * l + t) * e + ei];
                            let gy = g[(bi * l + t) * e + ei];
                            let mut dxv = T::zero();
                            let mut ddv = T::zero();
                            for ni in 0..n {
                                let ht = hbuf[(t - s) * n + ni];
                                dc_b[t * n + ni] += gy * ht;
                                let dhn = dh[ni] + gy * cd[(bi * l + t) * n + ni];
                                let h_prev = if t == s {
                                    ckpts[start + ni]
                                } else {
                                    hbuf[(t - s - 1) * n + ni]
                                };
                                let abar = (dv * arow[ni]).exp();
                                let dabar = dhn * h_prev;
                                da_b[ei * n + ni] += dabar * dv * abar;
                                ddv += dabar * arow[ni] * abar;
                                let bv = bd[(bi * l + t) * n + ni];
                                ddv += dhn * bv * xv;
                                db_b[t * n + ni] += dhn * dv * xv;
                                dxv += dhn * dv * bv;
                                dh[ni] = dhn * abar;
                            }
                            dx_b[t * e + ei] += dxv;
                            dd_b[t * e + ei] += ddv;
                        }
                    }
                }
                (dx_b, dd_b, da_b, db_b, dc_b)
            })
            .collect();

        let mut dx = vec![T::zero(); xd.len()];
        let mut ddelta = vec![T::zero(); dd.len()];
        let mut da = vec![T::zero(); ad.len()];
        let mut db = vec![T::zero(); bd.len()];
        let mut dc = vec![T::zero(); cd.len()];
        for (bi, (dx_b, dd_b, da_b, db_b, dc_b)) in per_batch.iter().enumerate() {
            dx[bi * l * e..][..l * e].copy_from_slice(dx_b);
            ddelta[bi * l * e..][..l * e].copy_from_slice(dd_b);
            for (o, v) in da.iter_mut().zip(da_b) {
                *o += *v;
            }
            db[bi * l * n..][..l * n].copy_from_slice(db_b);
            dc[bi * l * n..][..l * n].copy_from_slice(dc_b);
        }
        drop(xd_guard);
        drop(dd_guard);
        drop(ad_guard);
        drop(bd_guard);
        drop(cd_guard);
        drop(g_guard);
        node.parents[0].accumulate_grad_owned(dx);
        node.parents[1].accumulate_grad_owned(ddelta);
        node.parents[2].accumulate_grad_owned(da);
        node.parents[3].accumulate_grad_owned(db);
        node.parents[4].accumulate_grad_owned(dc);
    }))
}
