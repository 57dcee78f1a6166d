//! Parameter initialization helpers. All randomness flows through the
//! caller-provided stream so models are reproducible from a seed.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use stridenet_tensor::Real;

pub fn normal(rng: &mut ChaCha12Rng, std: f64) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * std
}

/// PyTorch-style linear init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn linear_uniform<T: Real>(rng: &mut ChaCha12Rng, fan_in: usize, n: usize) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n)
        .map(|_| T::cast(rng.random_range(-bound..bound)))
        .collect()
}

pub fn normal_tokens<T: Real>(rng: &mut ChaCha12Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::cast(normal(rng, 0.02))).collect()
}

/// A_log so that A = -exp(A_log) starts at -(n+1) per state channel.
pub fn a_log_init<T: Real>(e: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(e * n);
    for _ in 0..e {
        for ni in 0..n {
            out.push(T::cast(((ni + 1) as f64).ln()));
        }
    }
    out
}

/// Step-size bias: inverse softplus of dt sampled log-uniformly in
/// [1e-3, 1e-1], keeping initial steps small and positive.
pub fn dt_bias_init<T: Real>(rng: &mut ChaCha12Rng, e: usize) -> Vec<T> {
    (0..e)
        .map(|_| {
            let lo = (1e-3f64).ln();
            let hi = (1e-1f64).ln();
            let dt = rng.random_range(lo..hi).exp();
            // softplus^-1(dt) = ln(e^dt - 1)
            T::cast((dt.exp_m1()).ln())
        })
        .collect()
}
