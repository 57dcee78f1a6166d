use super::check_finite;
use crate::{Real, Result, Tensor, TensorError};

impl<T: Real> Tensor<T> {
    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let total: T = self.0.data.borrow().iter().copied().sum();
        Ok(Tensor::from_op(vec![total], vec![], vec![self.clone()], |node| {
            let g = node.grad.borrow().as_ref().unwrap()[0];
            let n = node.parents[0].numel();
            node.parents[0].accumulate_grad_owned(vec![g; n]);
        }))
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        if n == 0 {
            return Ok(Tensor::scalar(T::zero()));
        }
        let inv = T::one() / T::cast(n as f64);
        let total: T = self.0.data.borrow().iter().copied().sum();
        Ok(Tensor::from_op(
            vec![total * inv],
            vec![],
            vec![self.clone()],
            move |node| {
                let g = node.grad.borrow().as_ref().unwrap()[0] * inv;
                let n = node.parents[0].numel();
                node.parents[0].accumulate_grad_owned(vec![g; n]);
            },
        ))
    }

    /// Mean squared error against a same-shape target. An empty tensor pair
    /// yields 0 (vacuous mean), so masked losses degrade gracefully.
    pub fn mse(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != target.shape() {
            return Err(TensorError::shape(
                "mse",
                format!("{:?} vs {:?}", self.shape(), target.shape()),
            ));
        }
        let n = self.numel();
        if n == 0 {
            return Ok(Tensor::scalar(T::zero()));
        }
        let inv = T::one() / T::cast(n as f64);
        let p = self.0.data.borrow();
        let t = target.0.data.borrow();
        let total: T = p
            .iter()
            .zip(t.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        drop(p);
        drop(t);
        let parents = vec![self.clone(), target.clone()];
        Ok(Tensor::from_op(
            vec![total * inv],
            vec![],
            parents,
            move |node| {
                let g = node.grad.borrow().as_ref().unwrap()[0];
                let p = node.parents[0].0.data.borrow();
                let t = node.parents[1].0.data.borrow();
                let two = T::cast(2.0);
                let dp: Vec<T> = p
                    .iter()
                    .zip(t.iter())
                    .map(|(&a, &b)| two * (a - b) * inv * g)
                    .collect();
                let dt: Vec<T> = dp.iter().map(|&v| -v).collect();
                drop(p);
                drop(t);
                node.parents[0].accumulate_grad_owned(dp);
                node.parents[1].accumulate_grad_owned(dt);
            },
        ))
    }

    /// Cross-entropy with logits: mean over rows of `lse(z) - z[target]`.
    pub fn cross_entropy_logits(&self, targets: &[usize]) -> Result<Tensor<T>> {
        let ones = vec![T::one(); targets.len()];
        let zeros = vec![T::zero(); targets.len()];
        self.weighted_margin_ce(targets, &ones, &zeros)
    }

    /// Per-sample weighted, margin-adjusted cross-entropy over `[M, C]`
    /// logits: mean_i w_i · ( lse(z_i with z_y - m_i) - (z_iy - m_i) ).
    /// With unit weights and zero margins this is exactly plain CE — same
    /// code path, bit for bit.
    pub fn weighted_margin_ce(
        &self,
        targets: &[usize],
        weights: &[T],
        margins: &[T],
    ) -> Result<Tensor<T>> {
        let (m, c) = match self.shape() {
            [m, c] => (*m, *c),
            s => {
                return Err(TensorError::shape(
                    "cross_entropy",
                    format!("want [M,C] logits, got {s:?}"),
                ))
            }
        };
        if targets.len() != m || weights.len() != m || margins.len() != m {
            return Err(TensorError::shape(
                "cross_entropy",
                format!("{m} rows vs {} targets", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= c) {
            return Err(TensorError::shape(
                "cross_entropy",
                format!("target {bad} out of {c} classes"),
            ));
        }
        if m == 0 {
            return Ok(Tensor::scalar(T::zero()));
        }
        let z = self.0.data.borrow();
        let inv_m = T::one() / T::cast(m as f64);
        let mut total = T::zero();
        for i in 0..m {
            let row = &z[i * c..][..c];
            let y = targets[i];
            let zy = row[y] - margins[i];
            let mut mx = zy;
            for (j, &v) in row.iter().enumerate() {
                let v = if j == y { zy } else { v };
                if v > mx {
                    mx = v;
                }
            }
            let mut denom = T::zero();
            for (j, &v) in row.iter().enumerate() {
                let v = if j == y { zy } else { v };
                denom += (v - mx).exp();
            }
            let lse = mx + denom.ln();
            total += weights[i] * (lse - zy);
        }
        drop(z);
        let out = vec![total * inv_m];
        check_finite("cross_entropy", &out)?;
        let targets = targets.to_vec();
        let weights = weights.to_vec();
        let margins = margins.to_vec();
        Ok(Tensor::from_op(out, vec![], vec![self.clone()], move |node| {
            let g = node.grad.borrow().as_ref().unwrap()[0];
            let z = node.parents[0].0.data.borrow();
            let mut dz = vec![T::zero(); z.len()];
            for i in 0..m {
                let row = &z[i * c..][..c];
                let y = targets[i];
                let zy = row[y] - margins[i];
                let mut mx = zy;
                for (j, &v) in row.iter().enumerate() {
                    let v = if j == y { zy } else { v };
                    if v > mx {
                        mx = v;
                    }
                }
                let mut denom = T::zero();
                for (j, &v) in row.iter().enumerate() {
                    let v = if j == y { zy } else { v };
                    denom += (v - mx).exp();
                }
                let scale = g * weights[i] * inv_m;
                let drow = &mut dz[i * c..][..c];
                for j in 0..c {
                    let v = if j == y { zy } else { row[j] };
                    let p = (v - mx).exp() / denom;
                    drow[j] = scale * (p - if j == y { T::one() } else { T::zero() });
                }
            }
            drop(z);
            node.parents[0].accumulate_grad_owned(dz);
        }))
    }
}
