use crate::{Real, Result, Tensor, TensorError};

/// (batch, rows, row_len) view of a `[L, D]` or `[B, L, D]` tensor.
fn row_view<T: Real>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [l, d] => Ok((1, *l, *d)),
        [b, l, d] => Ok((*b, *l, *d)),
        s => Err(TensorError::shape(op, format!("want 2-D or 3-D, got {s:?}"))),
    }
}

impl<T: Real> Tensor<T> {
    /// Copy with a new shape of identical element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape()),
            ));
        }
        let data = self.to_vec();
        Ok(Tensor::from_op(
            data,
            shape.to_vec(),
            vec![self.clone()],
            move |node| {
                let g = node.grad.borrow();
                node.parents[0].accumulate_grad(g.as_ref().unwrap());
            },
        ))
    }

    /// Gathers rows along the second-to-last dim; the same index list is
    /// applied to every batch item. Duplicate indices are allowed.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let (b, l, d) = row_view("select_rows", self)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= l) {
            return Err(TensorError::shape(
                "select_rows",
                format!("index {bad} out of {l} rows"),
            ));
        }
        let x = self.0.data.borrow();
        let mut data = Vec::with_capacity(b * idx.len() * d);
        for bi in 0..b {
            let base = bi * l * d;
            for &i in idx {
                data.extend_from_slice(&x[base + i * d..][..d]);
            }
        }
        drop(x);
        let mut shape = self.shape().to_vec();
        let pos = shape.len() - 2;
        shape[pos] = idx.len();
        let idx: Vec<usize> = idx.to_vec();
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let mut dx = vec![T::zero(); b * l * d];
            for bi in 0..b {
                for (r, &i) in idx.iter().enumerate() {
                    let src = &g[(bi * idx.len() + r) * d..][..d];
                    let dst = &mut dx[bi * l * d + i * d..][..d];
                    for (o, v) in dst.iter_mut().zip(src) {
                        *o += *v;
                    }
                }
            }
            node.parents[0].accumulate_grad_owned(dx);
        }))
    }

    /// Gathers rows with a distinct index list per batch item (used by the
    /// per-sample mask shuffles). `self` must be `[B, L, D]`.
    pub fn select_rows_per_batch(&self, idx: &[Vec<u32>]) -> Result<Tensor<T>> {
        let (b, l, d) = row_view("select_rows_per_batch", self)?;
        if self.shape().len() != 3 || idx.len() != b {
            return Err(TensorError::shape(
                "select_rows_per_batch",
                format!("{} index lists for batch {b}", idx.len()),
            ));
        }
        let k = idx[0].len();
        if idx.iter().any(|v| v.len() != k) {
            return Err(TensorError::shape(
                "select_rows_per_batch",
                "ragged index lists",
            ));
        }
        let x = self.0.data.borrow();
        let mut data = Vec::with_capacity(b * k * d);
        for (bi, rows) in idx.iter().enumerate() {
            let base = bi * l * d;
            for &i in rows {
                let i = i as usize;
                if i >= l {
                    return Err(TensorError::shape(
                        "select_rows_per_batch",
                        format!("index {i} out of {l} rows"),
                    ));
                }
                data.extend_from_slice(&x[base + i * d..][..d]);
            }
        }
        drop(x);
        let shape = vec![b, k, d];
        let idx = idx.to_vec();
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let mut dx = vec![T::zero(); b * l * d];
            for (bi, rows) in idx.iter().enumerate() {
                for (r, &i) in rows.iter().enumerate() {
                    let src = &g[(bi * k + r) * d..][..d];
                    let dst = &mut dx[bi * l * d + i as usize * d..][..d];
                    for (o, v) in dst.iter_mut().zip(src) {
                        *o += *v;
                    }
                }
            }
            node.parents[0].accumulate_grad_owned(dx);
        }))
    }

    /// Concatenates along the second-to-last (row) dim.
    pub fn concat_rows(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(TensorError::shape("concat_rows", "no inputs"));
        }
        let (b, _, d) = row_view("concat_rows", parts[0])?;
        let nd = parts[0].shape().len();
        let mut rows = Vec::with_capacity(parts.len());
        for p in parts {
            let (pb, pl, pd) = row_view("concat_rows", p)?;
            if pb != b || pd != d || p.shape().len() != nd {
                return Err(TensorError::shape(
                    "concat_rows",
                    format!("{:?} vs {:?}", p.shape(), parts[0].shape()),
                ));
            }
            rows.push(pl);
        }
        let total: usize = rows.iter().sum();
        let mut data = Vec::with_capacity(b * total * d);
        for bi in 0..b {
            for (p, &pl) in parts.iter().zip(&rows) {
                let x = p.0.data.borrow();
                data.extend_from_slice(&x[bi * pl * d..][..pl * d]);
            }
        }
        let mut shape = parts[0].shape().to_vec();
        let pos = shape.len() - 2;
        shape[pos] = total;
        let parents: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(Tensor::from_op(data, shape, parents, move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            for (pi, parent) in node.parents.iter().enumerate() {
                if !parent.0.requires_grad {
                    continue;
                }
                let pl = rows[pi];
                let offset: usize = rows[..pi].iter().sum();
                let mut dp = vec![T::zero(); b * pl * d];
                for bi in 0..b {
                    let src = &g[(bi * total + offset) * d..][..pl * d];
                    dp[bi * pl * d..][..pl * d].copy_from_slice(src);
                }
                parent.accumulate_grad_owned(dp);
            }
        }))
    }

    /// Tiles a `[D]` vector into `[B, N, D]` (shared trainable token rows).
    pub fn broadcast_rows(&self, b: usize, n: usize) -> Result<Tensor<T>> {
        let d = self.numel();
        if self.shape().len() > 1 {
            return Err(TensorError::shape(
                "broadcast_rows",
                format!("want 1-D, got {:?}", self.shape()),
            ));
        }
        let x = self.0.data.borrow();
        let mut data = Vec::with_capacity(b * n * d);
        for _ in 0..b * n {
            data.extend_from_slice(&x);
        }
        drop(x);
        Ok(Tensor::from_op(
            data,
            vec![b, n, d],
            vec![self.clone()],
            move |node| {
                let g = node.grad.borrow();
                let g = g.as_ref().unwrap();
                let mut dv = vec![T::zero(); d];
                for chunk in g.chunks_exact(d) {
                    for (o, v) in dv.iter_mut().zip(chunk) {
                        *o += *v;
                    }
                }
                node.parents[0].accumulate_grad_owned(dv);
            },
        ))
    }
}
