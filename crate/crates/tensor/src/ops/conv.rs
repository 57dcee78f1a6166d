use super::check_finite;
use crate::{Real, Result, Tensor, TensorError};

impl<T: Real> Tensor<T> {
    /// Causal depthwise 1-D convolution over `[B, L, E]` with kernel `[E, K]`
    /// and bias `[E]`. Left zero-padding of K-1 keeps position t independent
    /// of positions > t.
    pub fn causal_conv1d(&self, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, l, e) = match self.shape() {
            [b, l, e] => (*b, *l, *e),
            s => {
                return Err(TensorError::shape(
                    "causal_conv1d",
                    format!("want [B,L,E], got {s:?}"),
                ))
            }
        };
        let (ke, k) = match kernel.shape() {
            [ke, k] => (*ke, *k),
            s => {
                return Err(TensorError::shape(
                    "causal_conv1d",
                    format!("kernel want [E,K], got {s:?}"),
                ))
            }
        };
        if ke != e || bias.numel() != e {
            return Err(TensorError::shape(
                "causal_conv1d",
                format!("channels {e} vs kernel {ke}"),
            ));
        }
        let x = self.0.data.borrow();
        let w = kernel.0.data.borrow();
        let bs = bias.0.data.borrow();
        let mut data = vec![T::zero(); b * l * e];
        for bi in 0..b {
            for t in 0..l {
                let out = &mut data[(bi * l + t) * e..][..e];
                for c in 0..e {
                    let mut acc = bs[c];
                    for j in 0..k {
                        let src = t as isize - (k as isize - 1) + j as isize;
                        if src >= 0 {
                            acc += w[c * k + j] * x[(bi * l + src as usize) * e + c];
                        }
                    }
                    out[c] = acc;
                }
            }
        }
        drop(x);
        drop(w);
        drop(bs);
        check_finite("causal_conv1d", &data)?;
        let parents = vec![self.clone(), kernel.clone(), bias.clone()];
        Ok(Tensor::from_op(
            data,
            vec![b, l, e],
            parents,
            move |node| {
                let g = node.grad.borrow();
                let g = g.as_ref().unwrap();
                let x = node.parents[0].0.data.borrow();
                let w = node.parents[1].0.data.borrow();
                let mut dx = vec![T::zero(); b * l * e];
                let mut dw = vec![T::zero(); e * k];
                let mut db = vec![T::zero(); e];
                for bi in 0..b {
                    for t in 0..l {
                        let grow = &g[(bi * l + t) * e..][..e];
                        for c in 0..e {
                            let gv = grow[c];
                            db[c] += gv;
                            for j in 0..k {
                                let src = t as isize - (k as isize - 1) + j as isize;
                                if src >= 0 {
                                    let xi = (bi * l + src as usize) * e + c;
                                    dw[c * k + j] += gv * x[xi];
                                    dx[xi] += gv * w[c * k + j];
                                }
                            }
                        }
                    }
                }
                drop(x);
                drop(w);
                node.parents[0].accumulate_grad_owned(dx);
                node.parents[1].accumulate_grad_owned(dw);
                node.parents[2].accumulate_grad_owned(db);
            },
        ))
    }
}
