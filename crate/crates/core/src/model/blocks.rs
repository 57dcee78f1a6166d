//! Sequence-modeling blocks: the selective-state-space block and the
//! pre-normalized attention block. Both map [B, L, D] -> [B, L, D].

use rand_chacha::ChaCha12Rng;
use stridenet_tensor::ops::{multihead_attention, selective_scan, ScanMode};
use stridenet_tensor::optim::ParamStore;
use stridenet_tensor::{Real, Result, Tensor};

use super::init;
use crate::config::{BlockKind, ModelConfig};

pub struct Linear<T: Real> {
    pub w: Tensor<T>,
    pub b: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let w = store.add(
            format!("{name}.w"),
            init::linear_uniform(rng, d_in, d_in * d_out),
            &[d_in, d_out],
        )?;
        let b = if bias {
            Some(store.add(
                format!("{name}.b"),
                init::linear_uniform(rng, d_in, d_out),
                &[d_out],
            )?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = x.matmul(&self.w)?;
        match &self.b {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }
}

const CONV_WIDTH: usize = 4;
const NORM_EPS: f64 = 1e-5;

/// Selective-SSM block: RMS-norm, x/z projections, causal depthwise conv +
/// SiLU, input-dependent B/C/Δ, ZOH discretization, scan, SiLU(z) gating,
/// out-projection, residual.
pub struct SsmBlock<T: Real> {
    norm_w: Tensor<T>,
    in_x: Linear<T>,
    in_z: Linear<T>,
    conv_w: Tensor<T>,
    conv_b: Tensor<T>,
    b_proj: Linear<T>,
    c_proj: Linear<T>,
    dt_lo: Linear<T>,
    dt_hi: Linear<T>,
    dt_bias: Tensor<T>,
    a_log: Tensor<T>,
    out: Linear<T>,
    scan_mode: ScanMode,
}

impl<T: Real> SsmBlock<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        prefix: &str,
        d: usize,
        n_state: usize,
        rng: &mut ChaCha12Rng,
        scan_mode: ScanMode,
    ) -> Result<Self> {
        let e = ModelConfig::e_of(d);
        let r = ModelConfig::dt_rank(d);
        Ok(SsmBlock {
            norm_w: store.add(format!("{prefix}.norm.w"), vec![T::one(); d], &[d])?,
            in_x: Linear::init(store, &format!("{prefix}.in_x"), d, e, false, rng)?,
            in_z: Linear::init(store, &format!("{prefix}.in_z"), d, e, false, rng)?,
            conv_w: store.add(
                format!("{prefix}.conv.w"),
                init::linear_uniform(rng, CONV_WIDTH, e * CONV_WIDTH),
                &[e, CONV_WIDTH],
            )?,
            conv_b: store.add(format!("{prefix}.conv.b"), vec![T::zero(); e], &[e])?,
            b_proj: Linear::init(store, &format!("{prefix}.b_proj"), e, n_state, false, rng)?,
            c_proj: Linear::init(store, &format!("{prefix}.c_proj"), e, n_state, false, rng)?,
            dt_lo: Linear::init(store, &format!("{prefix}.dt_lo"), e, r, false, rng)?,
            dt_hi: Linear::init(store, &format!("{prefix}.dt_hi"), r, e, false, rng)?,
            dt_bias: store.add(format!("{prefix}.dt_bias"), init::dt_bias_init(rng, e), &[e])?,
            a_log: store.add(format!("{prefix}.a_log"), init::a_log_init(e, n_state), &[e, n_state])?,
            out: Linear::init(store, &format!("{prefix}.out"), e, d, false, rng)?,
            scan_mode,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let xn = x.rms_norm(&self.norm_w, T::cast(NORM_EPS))?;
        let xp = self.in_x.forward(&xn)?;
        let z = self.in_z.forward(&xn)?;
        let xc = xp.causal_conv1d(&self.conv_w, &self.conv_b)?.silu()?;
        let b_mat = self.b_proj.forward(&xc)?;
        let c_mat = self.c_proj.forward(&xc)?;
        let delta = self
            .dt_hi
            .forward(&self.dt_lo.forward(&xc)?)?
            .add(&self.dt_bias)?
            .softplus()?;
        let a = self.a_log.exp()?.neg()?;
        let y = selective_scan(&xc, &delta, &a, &b_mat, &c_mat, self.scan_mode)?;
        let gated = y.mul(&z.silu()?)?;
        self.out.forward(&gated)?.add(x)
    }
}

/// Pre-normalized attention block with a GeGLU feed-forward. Residuals
/// follow the write-up exactly: both are taken from the normalized
/// activations, not the raw block input.
pub struct TransBlock<T: Real> {
    ln1_g: Tensor<T>,
    ln1_b: Tensor<T>,
    ln2_g: Tensor<T>,
    ln2_b: Tensor<T>,
    q: Linear<T>,
    k: Linear<T>,
    v: Linear<T>,
    o: Linear<T>,
    ffn_gate: Linear<T>,
    ffn_val: Linear<T>,
    ffn_out: Linear<T>,
    n_heads: usize,
}

impl<T: Real> TransBlock<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        prefix: &str,
        d: usize,
        n_heads: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let hidden = 4 * d;
        Ok(TransBlock {
            ln1_g: store.add(format!("{prefix}.ln1.g"), vec![T::one(); d], &[d])?,
            ln1_b: store.add(format!("{prefix}.ln1.b"), vec![T::zero(); d], &[d])?,
            ln2_g: store.add(format!("{prefix}.ln2.g"), vec![T::one(); d], &[d])?,
            ln2_b: store.add(format!("{prefix}.ln2.b"), vec![T::zero(); d], &[d])?,
            q: Linear::init(store, &format!("{prefix}.q"), d, d, true, rng)?,
            k: Linear::init(store, &format!("{prefix}.k"), d, d, true, rng)?,
            v: Linear::init(store, &format!("{prefix}.v"), d, d, true, rng)?,
            o: Linear::init(store, &format!("{prefix}.o"), d, d, true, rng)?,
            ffn_gate: Linear::init(store, &format!("{prefix}.ffn_gate"), d, hidden, true, rng)?,
            ffn_val: Linear::init(store, &format!("{prefix}.ffn_val"), d, hidden, true, rng)?,
            ffn_out: Linear::init(store, &format!("{prefix}.ffn_out"), hidden, d, true, rng)?,
            n_heads,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let x1 = x.layer_norm(&self.ln1_g, &self.ln1_b, T::cast(NORM_EPS))?;
        let attn = multihead_attention(
            &self.q.forward(&x1)?,
            &self.k.forward(&x1)?,
            &self.v.forward(&x1)?,
            self.n_heads,
        )?;
        let x2 = self.o.forward(&attn)?;
        let x3 = x1.add(&x2)?;
        let x4 = x3.layer_norm(&self.ln2_g, &self.ln2_b, T::cast(NORM_EPS))?;
        let gate = self.ffn_gate.forward(&x4)?.gelu()?;
        let val = self.ffn_val.forward(&x4)?;
        let x5 = self.ffn_out.forward(&gate.mul(&val)?)?;
        x4.add(&x5)
    }
}

pub enum Block<T: Real> {
    Mamba(SsmBlock<T>),
    Trans(TransBlock<T>),
}

impl<T: Real> Block<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        prefix: &str,
        kind: BlockKind,
        d: usize,
        cfg: &ModelConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        Ok(match kind {
            BlockKind::Mamba => Block::Mamba(SsmBlock::init(
                store,
                prefix,
                d,
                cfg.n_state,
                rng,
                ScanMode::Parallel,
            )?),
            BlockKind::Trans => {
                Block::Trans(TransBlock::init(store, prefix, d, cfg.n_heads, rng)?)
            }
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Block::Mamba(b) => b.forward(x),
            Block::Trans(b) => b.forward(x),
        }
    }
}

/// Sequential application of `blocks`.
pub fn forward_blocks<T: Real>(blocks: &[Block<T>], tokens: &Tensor<T>) -> Result<Tensor<T>> {
    let mut x = tokens.clone();
    for b in blocks {
        x = b.forward(&x)?;
    }
    Ok(x)
}
