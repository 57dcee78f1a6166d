use rayon::prelude::*;

use super::check_finite;
use crate::{Real, Result, Tensor, TensorError};

const KV_TILE: usize = 64;

/// Exact multi-head attention over `[B, L, D]` inputs, computed with the
/// online-softmax tiling scheme: scores are consumed tile by tile, keeping a
/// running max and normalizer, so the L×L score matrix is never materialized
/// and logits of magnitude ~100 stay in range. Per-row log-sum-exp values are
/// kept for the backward pass, which re-derives score tiles instead of
/// storing them.
pub fn multihead_attention<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    n_heads: usize,
) -> Result<Tensor<T>> {
    let (b, l, d) = match q.shape() {
        [b, l, d] => (*b, *l, *d),
        s => {
            return Err(TensorError::shape(
                "attention",
                format!("want [B,L,D], got {s:?}"),
            ))
        }
    };
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(TensorError::shape(
            "attention",
            format!(
                "q {:?}, k {:?}, v {:?} must match",
                q.shape(),
                k.shape(),
                v.shape()
            ),
        ));
    }
    if n_heads == 0 || d % n_heads != 0 {
        return Err(TensorError::shape(
            "attention",
            format!("dim {d} not divisible by {n_heads} heads"),
        ));
    }
    let hd = d / n_heads;
    let scale = T::cast(1.0 / (hd as f64).sqrt());

    let qd_guard = q.0.data.borrow();
    let kd_guard = k.0.data.borrow();
    let vd_guard = v.0.data.borrow();
    let (qd, kd, vd): (&[T], &[T], &[T]) = (&qd_guard, &kd_guard, &vd_guard);
    let mut out = vec![T::zero(); b * l * d];
    let mut lse = vec![T::zero(); b * n_heads * l];

    // (batch, head) slices are independent; each writes disjoint columns.
    let jobs: Vec<(usize, usize)> = (0..b)
        .flat_map(|bi| (0..n_heads).map(move |h| (bi, h)))
        .collect();
    let results: Vec<(Vec<T>, Vec<T>)> = jobs
        .par_iter()
        .map(|&(bi, h)| {
            let mut o_h = vec![T::zero(); l * hd];
            let mut lse_h = vec![T::zero(); l];
            let col = h * hd;
            let row = |t: usize| (bi * l + t) * d + col;
            let mut scores = vec![T::zero(); KV_TILE];
            for i in 0..l {
                let qi = &qd[row(i)..][..hd];
                let mut m = T::neg_infinity();
                let mut den = T::zero();
                let acc = &mut o_h[i * hd..][..hd];
                for tile in (0..l).step_by(KV_TILE) {
                    let te = (tile + KV_TILE).min(l);
                    let mut tile_max = T::neg_infinity();
                    for (s, j) in (tile..te).enumerate() {
                        let kj = &kd[row(j)..][..hd];
                        let mut dot = T::zero();
                        for (a, c) in qi.iter().zip(kj) {
                            dot += *a * *c;
                        }
                        let sc = dot * scale;
                        scores[s] = sc;
                        if sc > tile_max {
                            tile_max = sc;
                        }
                    }
                    let m_new = if tile_max > m { tile_max } else { m };
                    let rescale = if m.is_finite() { (m - m_new).exp() } else { T::zero() };
                    for a in acc.iter_mut() {
                        *a *= rescale;
                    }
                    den *= rescale;
                    for (s, j) in (tile..te).enumerate() {
                        let p = (scores[s] - m_new).exp();
                        den += p;
                        let vj = &vd[row(j)..][..hd];
                        for (a, c) in acc.iter_mut().zip(vj) {
                            *a += p * *c;
                        }
                    }
                    m = m_new;
                }
                let inv = T::one() / den;
                for a in acc.iter_mut() {
                    *a *= inv;
                }
                lse_h[i] = m + den.ln();
            }
            (o_h, lse_h)
        })
        .collect();
    for (&(bi, h), (o_h, lse_h)) in jobs.iter().zip(&results) {
        let col = h * hd;
        for i in 0..l {
            out[(bi * l + i) * d + col..][..hd].copy_from_slice(&o_h[i * hd..][..hd]);
        }
        lse[(bi * n_heads + h) * l..][..l].copy_from_slice(lse_h);
    }
    drop(qd_guard);
    drop(kd_guard);
    drop(vd_guard);
    check_finite("attention", &out)?;

    let parents = vec![q.clone(), k.clone(), v.clone()];
    Ok(Tensor::from_op(out, vec![b, l, d], parents, move |node| {
        let g_guard = node.grad.borrow();
        let g: &[T] = g_guard.as_ref().unwrap();
        let o_guard = node.data.borrow();
        let qd_guard = node.parents[0].0.data.borrow();
        let kd_guard = node.parents[1].0.data.borrow();
        let vd_guard = node.parents[2].0.data.borrow();
        let (o, qd, kd, vd): (&[T], &[T], &[T], &[T]) =
            (&o_guard, &qd_guard, &kd_guard, &vd_guard);

        let jobs: Vec<(usize, usize)> = (0..b)
            .flat_map(|bi| (0..n_heads).map(move |h| (bi, h)))
            .collect();
        // per-(batch,head) partials: (dQ, dK, dV), each [l, hd]
        let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = jobs
            .par_iter()
            .map(|&(bi, h)| {
                let col = h * hd;
                let row = |t: usize| (bi * l + t) * d + col;
                let lse_h = &lse[(bi * n_heads + h) * l..][..l];
                let mut dq = vec![T::zero(); l * hd];
                let mut dk = vec![T::zero(); l * hd];
                let mut dv = vec![T::zero(); l * hd];
                // rowsum(dO ⊙ O), one value per query row
                let mut delta = vec![T::zero(); l];
                for i in 0..l {
                    let gi = &g[row(i)..][..hd];
                    let oi = &o[row(i)..][..hd];
                    let mut acc = T::zero();
                    for (a, c) in gi.iter().zip(oi) {
                        acc += *a * *c;
                    }
                    delta[i] = acc;
                }
                for i in 0..l {
                    let qi = &qd[row(i)..][..hd];
                    let gi = &g[row(i)..][..hd];
                    let dqi_start = i * hd;
                    for j in 0..l {
                        let kj = &kd[row(j)..][..hd];
                        let vj = &vd[row(j)..][..hd];
                        let mut dot = T::zero();
                        for (a, c) in qi.iter().zip(kj) {
                            dot += *a * *c;
                        }
                        let p = (dot * scale - lse_h[i]).exp();
                        let mut dp = T::zero();
                        for (a, c) in gi.iter().zip(vj) {
                            dp += *a * *c;
                        }
                        let ds = p * (dp - delta[i]) * scale;
                        for t in 0..hd {
                            dq[dqi_start + t] += ds * kj[t];
                            dk[j * hd + t] += ds * qi[t];
                            dv[j * hd + t] += p * gi[t];
                        }
                    }
                }
                (dq, dk, dv)
            })
            .collect();

        let mut dqf = vec![T::zero(); b * l * d];
        let mut dkf = vec![T::zero(); b * l * d];
        let mut dvf = vec![T::zero(); b * l * d];
        for (&(bi, h), (dq, dk, dv)) in jobs.iter().zip(&partials) {
            let col = h * hd;
            for i in 0..l {
                let dst = (bi * l + i) * d + col;
                dqf[dst..][..hd].copy_from_slice(&dq[i * hd..][..hd]);
                dkf[dst..][..hd].copy_from_slice(&dk[i * hd..][..hd]);
                dvf[dst..][..hd].copy_from_slice(&dv[i * hd..][..hd]);
            }
        }
        drop(qd_guard);
        drop(kd_guard);
        drop(vd_guard);
        drop(o_guard);
        drop(g_guard);
        node.parents[0].accumulate_grad_owned(dqf);
        node.parents[1].accumulate_grad_owned(dkf);
        node.parents[2].accumulate_grad_owned(dvf);
    }))
}
