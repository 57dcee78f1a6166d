use super::check_finite;
use crate::{Real, Result, Tensor, TensorError};

fn last_dim<T: Real>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.is_empty() {
        return Err(TensorError::shape(op, "scalar input"));
    }
    let d = s[s.len() - 1];
    Ok((x.numel() / d, d))
}

impl<T: Real> Tensor<T> {
    /// LayerNorm over the last dim with affine weights `gamma`, `beta` (len D).
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let (rows, d) = last_dim("layer_norm", self)?;
        if gamma.numel() != d || beta.numel() != d {
            return Err(TensorError::shape(
                "layer_norm",
                format!("affine len vs last dim {d}"),
            ));
        }
        let x = self.0.data.borrow();
        let gm = gamma.0.data.borrow();
        let bt = beta.0.data.borrow();
        let mut data = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut means = vec![T::zero(); rows];
        let dn = T::cast(d as f64);
        for r in 0..rows {
            let row = &x[r * d..][..d];
            let mu = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / dn;
            let inv = T::one() / (var + eps).sqrt();
            means[r] = mu;
            inv_std[r] = inv;
            let out = &mut data[r * d..][..d];
            for j in 0..d {
                out[j] = (row[j] - mu) * inv * gm[j] + bt[j];
            }
        }
        drop(x);
        drop(gm);
        drop(bt);
        check_finite("layer_norm", &data)?;
        let shape = self.shape().to_vec();
        let parents = vec![self.clone(), gamma.clone(), beta.clone()];
        Ok(Tensor::from_op(data, shape, parents, move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let x = node.parents[0].0.data.borrow();
            let gm = node.parents[1].0.data.borrow();
            let mut dx = vec![T::zero(); x.len()];
            let mut dgamma = vec![T::zero(); d];
            let mut dbeta = vec![T::zero(); d];
            let dn = T::cast(d as f64);
            for r in 0..rows {
                let xr = &x[r * d..][..d];
                let gr = &g[r * d..][..d];
                let inv = inv_std[r];
                let mu = means[r];
                let mut sum_dyg = T::zero();
                let mut sum_dyg_xc = T::zero();
                for j in 0..d {
                    let xc = (xr[j] - mu) * inv;
                    let dyg = gr[j] * gm[j];
                    sum_dyg += dyg;
                    sum_dyg_xc += dyg * xc;
                    dgamma[j] += gr[j] * xc;
                    dbeta[j] += gr[j];
                }
                let m1 = sum_dyg / dn;
                let m2 = sum_dyg_xc / dn;
                let out = &mut dx[r * d..][..d];
                for j in 0..d {
                    let xc = (xr[j] - mu) * inv;
                    out[j] = inv * (gr[j] * gm[j] - m1 - xc * m2);
                }
            }
            drop(x);
            drop(gm);
            node.parents[0].accumulate_grad_owned(dx);
            node.parents[1].accumulate_grad_owned(dgamma);
            node.parents[2].accumulate_grad_owned(dbeta);
        }))
    }

    /// RMSNorm over the last dim with weight `gamma` (len D).
    pub fn rms_norm(&self, gamma: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let (rows, d) = last_dim("rms_norm", self)?;
        if gamma.numel() != d {
            return Err(TensorError::shape(
                "rms_norm",
                format!("weight len vs last dim {d}"),
            ));
        }
        let x = self.0.data.borrow();
        let gm = gamma.0.data.borrow();
        let mut data = vec![T::zero(); x.len()];
        let mut inv_rms = vec![T::zero(); rows];
        let dn = T::cast(d as f64);
        for r in 0..rows {
            let row = &x[r * d..][..d];
            let ms = row.iter().map(|&v| v * v).sum::<T>() / dn;
            let inv = T::one() / (ms + eps).sqrt();
            inv_rms[r] = inv;
            let out = &mut data[r * d..][..d];
            for j in 0..d {
                out[j] = row[j] * inv * gm[j];
            }
        }
        drop(x);
        drop(gm);
        check_finite("rms_norm", &data)?;
        let shape = self.shape().to_vec();
        let parents = vec![self.clone(), gamma.clone()];
        Ok(Tensor::from_op(data, shape, parents, move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let x = node.parents[0].0.data.borrow();
            let gm = node.parents[1].0.data.borrow();
            let mut dx = vec![T::zero(); x.len()];
            let mut dgamma = vec![T::zero(); d];
            let dn = T::cast(d as f64);
            for r in 0..rows {
                let xr = &x[r * d..][..d];
                let gr = &g[r * d..][..d];
                let inv = inv_rms[r];
                let mut dot = T::zero();
                for j in 0..d {
                    dot += gr[j] * gm[j] * xr[j];
                    dgamma[j] += gr[j] * xr[j] * inv;
                }
                let k = dot * inv * inv * inv / dn;
                let out = &mut dx[r * d..][..d];
                for j in 0..d {
                    out[j] = gr[j] * gm[j] * inv - xr[j] * k;
                }
            }
            drop(x);
            drop(gm);
            node.parents[0].accumulate_grad_owned(dx);
            node.parents[1].accumulate_grad_owned(dgamma);
        }))
    }

    /// Softmax along the last dim, computed with a single online
    /// max/normalizer pass (overflow-safe for large logits).
    pub fn softmax_last(&self) -> Result<Tensor<T>> {
        let (rows, d) = last_dim("softmax", self)?;
        let x = self.0.data.borrow();
        let mut data = vec![T::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * d..][..d];
            let mut m = T::neg_infinity();
            let mut l = T::zero();
            for &v in row {
                if v > m {
                    l = l * (m - v).exp() + T::one();
                    m = v;
                } else {
                    l += (v - m).exp();
                }
            }
            let out = &mut data[r * d..][..d];
            for j in 0..d {
                out[j] = (row[j] - m).exp() / l;
            }
        }
        drop(x);
        check_finite("softmax", &data)?;
        let shape = self.shape().to_vec();
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let y = node.data.borrow();
            let mut dx = vec![T::zero(); y.len()];
            for r in 0..rows {
                let yr = &y[r * d..][..d];
                let gr = &g[r * d..][..d];
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                let out = &mut dx[r * d..][..d];
                for j in 0..d {
                    out[j] = yr[j] * (gr[j] - dot);
                }
            }
            drop(y);
            node.parents[0].accumulate_grad_owned(dx);
        }))
    }
}
