use super::{broadcast_kind, check_finite, Broadcast};
use crate::{Real, Result, Tensor};

impl<T: Real> Tensor<T> {
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(T) -> T,
        // df receives (input, output) so cheap forms like y*(1-y) are possible
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Tensor<T>> {
        let data: Vec<T> = self.0.data.borrow().iter().map(|&v| f(v)).collect();
        check_finite(op, &data)?;
        let shape = self.shape().to_vec();
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let y = node.data.borrow();
            let x = node.parents[0].0.data.borrow();
            let dx: Vec<T> = (0..g.len()).map(|i| g[i] * df(x[i], y[i])).collect();
            drop(x);
            node.parents[0].accumulate_grad_owned(dx);
        }))
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        self.unary("exp", |v| v.exp(), |_, y| y)
    }

    pub fn log(&self) -> Result<Tensor<T>> {
        self.unary("log", |v| v.ln(), |x, _| T::one() / x)
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        self.unary("sigmoid", sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    /// log(1 + e^x), computed overflow-safe.
    pub fn softplus(&self) -> Result<Tensor<T>> {
        self.unary("softplus", softplus_scalar, |x, _| sigmoid_scalar(x))
    }

    pub fn silu(&self) -> Result<Tensor<T>> {
        self.unary("silu", |v| v * sigmoid_scalar(v), |x, _| {
            let s = sigmoid_scalar(x);
            s + x * s * (T::one() - s)
        })
    }

    /// tanh-approximation GELU.
    pub fn gelu(&self) -> Result<Tensor<T>> {
        self.unary("gelu", gelu_scalar, gelu_grad_scalar)
    }

    pub fn tanh(&self) -> Result<Tensor<T>> {
        self.unary("tanh", |v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        self.unary("neg", |v| -v, |_, _| -T::one())
    }

    pub fn scale(&self, c: T) -> Result<Tensor<T>> {
        self.unary("scale", move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: T) -> Result<Tensor<T>> {
        self.unary("add_scalar", move |v| v + c, |_, _| T::one())
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary("add", rhs, |a, b| a + b, |_, _| (T::one(), T::one()))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary("sub", rhs, |a, b| a - b, |_, _| (T::one(), -T::one()))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary("mul", rhs, |a, b| a * b, |a, b| (b, a))
    }

    fn binary(
        &self,
        op: &'static str,
        rhs: &Tensor<T>,
        f: impl Fn(T, T) -> T,
        df: impl Fn(T, T) -> (T, T) + 'static,
    ) -> Result<Tensor<T>> {
        let kind = broadcast_kind(op, self, rhs)?;
        let a = self.0.data.borrow();
        let b = rhs.0.data.borrow();
        let data: Vec<T> = match kind {
            Broadcast::Same => a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => {
                let s = b[0];
                a.iter().map(|&x| f(x, s)).collect()
            }
            Broadcast::Suffix { len, .. } => a
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b[i % len]))
                .collect(),
        };
        drop(a);
        drop(b);
        check_finite(op, &data)?;
        let shape = self.shape().to_vec();
        let parents = vec![self.clone(), rhs.clone()];
        Ok(Tensor::from_op(data, shape, parents, move |node| {
            let g = node.grad.borrow();
            let g = g.as_ref().unwrap();
            let a = node.parents[0].0.data.borrow();
            let b = node.parents[1].0.data.borrow();
            let blen = b.len();
            let mut da = vec![T::zero(); a.len()];
            let mut db = vec![T::zero(); blen];
            for i in 0..g.len() {
                let (ga, gb) = df(a[i], b[i % blen]);
                da[i] = g[i] * ga;
                db[i % blen] += g[i] * gb;
            }
            drop(a);
            drop(b);
            node.parents[0].accumulate_grad_owned(da);
            node.parents[1].accumulate_grad_owned(db);
        }))
    }
}

pub(crate) fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus_scalar<T: Real>(v: T) -> T {
    // log1p(e^v) for v<=0, v + log1p(e^-v) otherwise
    if v > T::zero() {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn gelu_scalar<T: Real>(x: T) -> T {
    let half = T::cast(0.5);
    let c = T::cast(0.7978845608028654); // sqrt(2/pi)
    let k = T::cast(0.044715);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad_scalar<T: Real>(x: T, _y: T) -> T {
    let half = T::cast(0.5);
    let c = T::cast(0.7978845608028654);
    let k = T::cast(0.044715);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::cast(3.0) * k * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * dinner
}
