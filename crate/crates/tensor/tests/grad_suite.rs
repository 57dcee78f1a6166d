//! Finite-difference verification of every differentiable op, in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use stridenet_tensor::gradcheck::grad_check;
use stridenet_tensor::ops::{discretize, multihead_attention, scan_discretized, selective_scan, ScanMode};
use stridenet_tensor::{Result, Tensor};

const EPS: f64 = 1e-4;
const PRIMITIVE_TOL: f64 = 1e-4;

fn randn(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * 0.5
        })
        .collect();
    Tensor::param_leaf(data, shape).unwrap()
}

fn check(name: &str, f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>, inputs: &[Tensor<f64>], tol: f64) {
    let report = grad_check(f, inputs, EPS, 48).unwrap();
    assert!(
        report.max_rel_err <= tol,
        "{name}: max rel err {} > {tol} over {} elements",
        report.max_rel_err,
        report.checked
    );
}

#[test]
fn unary_ops_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let cases: Vec<(&str, fn(&Tensor<f64>) -> Result<Tensor<f64>>)> = vec![
        ("exp", |x| x.exp()),
        ("sigmoid", |x| x.sigmoid()),
        ("softplus", |x| x.softplus()),
        ("silu", |x| x.silu()),
        ("gelu", |x| x.gelu()),
        ("tanh", |x| x.tanh()),
        ("neg", |x| x.neg()),
        ("softmax", |x| x.softmax_last()),
    ];
    for (name, op) in cases {
        let x = randn(&mut rng, &[3, 5]);
        check(
            name,
            |inp| {
                let y = op(&inp[0])?;
                // weighted sum so the reduction is not symmetric
                let w = Tensor::from_vec((0..15).map(|i| 0.1 * i as f64 - 0.7).collect(), &[3, 5])?;
                y.mul(&w)?.sum_all()
            },
            &[x],
            PRIMITIVE_TOL,
        );
    }
    // log needs positive inputs
    let x = Tensor::param_leaf((1..=12).map(|i| 0.3 * i as f64).collect(), &[3, 4]).unwrap();
    check("log", |inp| inp[0].log()?.mean_all(), &[x], PRIMITIVE_TOL);
}

#[test]
fn binary_ops_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let a = randn(&mut rng, &[2, 3, 4]);
    let b = randn(&mut rng, &[2, 3, 4]);
    check("add", |i| i[0].add(&i[1])?.mean_all(), &[a.clone(), b.clone()], PRIMITIVE_TOL);
    check("sub", |i| i[0].sub(&i[1])?.mean_all(), &[a.clone(), b.clone()], PRIMITIVE_TOL);
    check("mul", |i| i[0].mul(&i[1])?.mean_all(), &[a.clone(), b], PRIMITIVE_TOL);
    let suffix = randn(&mut rng, &[4]);
    check(
        "add_suffix_broadcast",
        |i| i[0].add(&i[1])?.mean_all(),
        &[a.clone(), suffix.clone()],
        PRIMITIVE_TOL,
    );
    check(
        "mul_suffix_broadcast",
        |i| i[0].mul(&i[1])?.mean_all(),
        &[a, suffix],
        PRIMITIVE_TOL,
    );
}

#[test]
fn matmul_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let x = randn(&mut rng, &[2, 3, 4]);
    let w = randn(&mut rng, &[4, 5]);
    check(
        "matmul_shared_rhs",
        |i| i[0].matmul(&i[1])?.mean_all(),
        &[x, w],
        PRIMITIVE_TOL,
    );
    let a = randn(&mut rng, &[2, 3, 4]);
    let b = randn(&mut rng, &[2, 4, 2]);
    check(
        "matmul_batched",
        |i| i[0].matmul(&i[1])?.mean_all(),
        &[a, b],
        PRIMITIVE_TOL,
    );
}

#[test]
fn norms_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let x = randn(&mut rng, &[4, 6]);
    let gamma = randn(&mut rng, &[6]);
    let beta = randn(&mut rng, &[6]);
    check(
        "layer_norm",
        |i| i[0].layer_norm(&i[1], &i[2], 1e-5)?.mean_all(),
        &[x.clone(), gamma.clone(), beta],
        PRIMITIVE_TOL,
    );
    check(
        "rms_norm",
        |i| i[0].rms_norm(&i[1], 1e-5)?.mean_all(),
        &[x, gamma],
        PRIMITIVE_TOL,
    );
}

#[test]
fn conv_and_shape_ops_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let x = randn(&mut rng, &[2, 7, 3]);
    let w = randn(&mut rng, &[3, 4]);
    let b = randn(&mut rng, &[3]);
    check(
        "causal_conv1d",
        |i| i[0].causal_conv1d(&i[1], &i[2])?.mean_all(),
        &[x.clone(), w, b],
        PRIMITIVE_TOL,
    );
    check(
        "select_rows",
        |i| i[0].select_rows(&[6, 0, 0, 3])?.mean_all(),
        &[x.clone()],
        PRIMITIVE_TOL,
    );
    let idx = vec![vec![1u32, 1, 5], vec![0, 2, 4]];
    check(
        "select_rows_per_batch",
        |i| i[0].select_rows_per_batch(&idx)?.mean_all(),
        &[x.clone()],
        PRIMITIVE_TOL,
    );
    let y = randn(&mut rng, &[2, 2, 3]);
    check(
        "concat_rows",
        |i| Tensor::concat_rows(&[&i[0], &i[1]])?.mean_all(),
        &[x.clone(), y],
        PRIMITIVE_TOL,
    );
    check(
        "reshape",
        |i| i[0].reshape(&[2, 21])?.softmax_last()?.mean_all(),
        &[x],
        PRIMITIVE_TOL,
    );
    let tok = randn(&mut rng, &[5]);
    check(
        "broadcast_rows",
        |i| {
            let w = Tensor::from_vec((0..30).map(|v| v as f64 * 0.05).collect(), &[2, 3, 5])?;
            i[0].broadcast_rows(2, 3)?.mul(&w)?.sum_all()
        },
        &[tok],
        PRIMITIVE_TOL,
    );
}

#[test]
fn losses_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let pred = randn(&mut rng, &[3, 4]);
    let target = randn(&mut rng, &[3, 4]);
    check(
        "mse",
        |i| i[0].mse(&i[1]),
        &[pred, target],
        PRIMITIVE_TOL,
    );
    let logits = randn(&mut rng, &[5, 4]);
    let targets = [0usize, 3, 1, 2, 2];
    check(
        "cross_entropy",
        |i| i[0].cross_entropy_logits(&targets),
        &[logits.clone()],
        PRIMITIVE_TOL,
    );
    let weights = [1.0, 0.25, 2.0, 0.5, 1.5];
    let margins = [0.5, 0.0, 0.3, 0.9, 0.1];
    check(
        "weighted_margin_ce",
        |i| i[0].weighted_margin_ce(&targets, &weights, &margins),
        &[logits],
        PRIMITIVE_TOL,
    );
}

#[test]
fn attention_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    let q = randn(&mut rng, &[2, 5, 8]);
    let k = randn(&mut rng, &[2, 5, 8]);
    let v = randn(&mut rng, &[2, 5, 8]);
    check(
        "attention",
        |i| multihead_attention(&i[0], &i[1], &i[2], 2)?.mean_all(),
        &[q, k, v],
        PRIMITIVE_TOL,
    );
}

#[test]
fn scan_ops_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(14);
    let (b, l, e, n) = (2, 9, 3, 4);
    // delta through softplus keeps it positive, matching real usage
    let delta_raw = randn(&mut rng, &[b, l, e]);
    let a_log = randn(&mut rng, &[e, n]);
    let bmat = randn(&mut rng, &[b, l, n]);
    let cmat = randn(&mut rng, &[b, l, n]);
    let x = randn(&mut rng, &[b, l, e]);

    check(
        "discretize",
        |i| {
            let delta = i[0].softplus()?;
            let a = i[1].exp()?.neg()?;
            let (abar, bbar) = discretize(&delta, &a, &i[2])?;
            abar.mean_all()?.add(&bbar.mean_all()?)
        },
        &[delta_raw.clone(), a_log.clone(), bmat.clone()],
        PRIMITIVE_TOL,
    );

    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        check(
            &format!("scan_discretized_{mode:?}"),
            |i| {
                let delta = i[0].softplus()?;
                let a = i[1].exp()?.neg()?;
                let (abar, bbar) = discretize(&delta, &a, &i[2])?;
                scan_discretized(&abar, &bbar, &i[3], &i[4], mode)?.mean_all()
            },
            &[
                delta_raw.clone(),
                a_log.clone(),
                bmat.clone(),
                cmat.clone(),
                x.clone(),
            ],
            PRIMITIVE_TOL,
        );
        check(
            &format!("selective_scan_{mode:?}"),
            |i| {
                let delta = i[0].softplus()?;
                let a = i[1].exp()?.neg()?;
                selective_scan(&i[4], &delta, &a, &i[2], &i[3], mode)?.mean_all()
            },
            &[
                delta_raw.clone(),
                a_log.clone(),
                bmat.clone(),
                cmat.clone(),
                x.clone(),
            ],
            PRIMITIVE_TOL,
        );
    }
}

#[test]
fn linear_layer_gradient_is_tight() {
    // analytic-grad sanity at the spec's tighter linear-layer tolerance
    let mut rng = ChaCha12Rng::seed_from_u64(15);
    let x = randn(&mut rng, &[4, 6]);
    let w = randn(&mut rng, &[6, 3]);
    let b = randn(&mut rng, &[3]);
    let report = grad_check(
        |i| i[0].matmul(&i[1])?.add(&i[2])?.mean_all(),
        &[x, w, b],
        EPS,
        64,
    )
    .unwrap();
    assert!(report.max_rel_err <= 1e-6, "got {}", report.max_rel_err);
}
