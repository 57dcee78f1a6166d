//! Token embedding: linear stride projection with a trailing class token,
//! fixed sinusoidal encodings for the size/interval sequences, learned
//! segment indicators, and learned positional embeddings.

use rand_chacha::ChaCha12Rng;
use stridenet_tensor::optim::ParamStore;
use stridenet_tensor::{Real, Result, Tensor};

use super::init;
use crate::config::ModelConfig;
use crate::repr::{FlowSample, ReprConfig};

/// SE(x): even index 2j -> sin(x / 10000^(2j/D)), odd 2j+1 -> cos(same).
pub fn sinusoidal_encode(x: f64, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    let mut j = 0;
    while 2 * j < d {
        let denom = 10000f64.powf(2.0 * j as f64 / d as f64);
        out[2 * j] = (x / denom).sin();
        if 2 * j + 1 < d {
            out[2 * j + 1] = (x / denom).cos();
        }
        j += 1;
    }
    out
}

/// Token positions of each modality within the fused sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    pub n_stride: usize,
    pub m_seq: usize,
    pub multimodal: bool,
}

impl TokenLayout {
    pub fn of(model: &ModelConfig, repr: &ReprConfig) -> Self {
        TokenLayout {
            n_stride: repr.n_strides(),
            m_seq: repr.m_seq,
            multimodal: model.multimodal,
        }
    }

    pub fn total_len(&self) -> usize {
        if self.multimodal {
            self.n_stride + 2 * self.m_seq + 1
        } else {
            self.n_stride + 1
        }
    }

    /// The class token sits at the end of the sequence.
    pub fn class_index(&self) -> usize {
        self.total_len() - 1
    }

    pub fn size_start(&self) -> usize {
        self.n_stride
    }

    pub fn interval_start(&self) -> usize {
        self.n_stride + self.m_seq
    }
}

/// Raw per-sample model inputs before embedding. Sequence values carry any
/// zero-masking already applied (scalars are corrupted before encoding).
pub struct ModelInput {
    /// `[B, n_stride, l_s]` stride bytes normalized to [0,1].
    pub strides: Vec<f32>,
    /// `[B, m_seq]` clamped sizes as f64 scalars.
    pub sizes: Vec<f64>,
    /// `[B, m_seq]` normalized intervals.
    pub intervals: Vec<f64>,
    pub batch: usize,
}

impl ModelInput {
    pub fn from_samples(samples: &[&FlowSample], repr: &ReprConfig) -> ModelInput {
        let b = samples.len();
        let n_stride = repr.n_strides();
        let l_s = repr.l_s;
        let mut strides = Vec::with_capacity(b * n_stride * l_s);
        let mut sizes = Vec::with_capacity(b * repr.m_seq);
        let mut intervals = Vec::with_capacity(b * repr.m_seq);
        for s in samples {
            strides.extend(s.byte_array.iter().map(|&v| v as f32 / 255.0));
            sizes.extend(s.size_seq.iter().map(|&v| v as f64));
            intervals.extend(s.interval_seq.iter().copied());
        }
        ModelInput {
            strides,
            sizes,
            intervals,
            batch: b,
        }
    }

    /// Zeroes the given sequence positions in place (pre-encoding corruption).
    pub fn zero_positions(&mut self, m_seq: usize, size_zeroed: &[Vec<u32>], int_zeroed: &[Vec<u32>]) {
        for (bi, idx) in size_zeroed.iter().enumerate() {
            for &p in idx {
                self.sizes[bi * m_seq + p as usize] = 0.0;
            }
        }
        for (bi, idx) in int_zeroed.iter().enumerate() {
            for &p in idx {
                self.intervals[bi * m_seq + p as usize] = 0.0;
            }
        }
    }
}

pub struct Embedder<T: Real> {
    pub stride_w: Tensor<T>,
    pub cls: Tensor<T>,
    pub pe: Tensor<T>,
    seg_stride: Option<Tensor<T>>,
    seg_size: Option<Tensor<T>>,
    seg_int: Option<Tensor<T>>,
    pub layout: TokenLayout,
    l_s: usize,
    d: usize,
}

impl<T: Real> Embedder<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        model: &ModelConfig,
        repr: &ReprConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let layout = TokenLayout::of(model, repr);
        let d = model.d_enc;
        let l = layout.total_len();
        let stride_w = store.add(
            "embed.stride.w",
            init::linear_uniform(rng, repr.l_s, repr.l_s * d),
            &[repr.l_s, d],
        )?;
        let cls = store.add("embed.cls", init::normal_tokens(rng, d), &[d])?;
        let pe = store.add("embed.pe_enc", init::normal_tokens(rng, l * d), &[l, d])?;
        let (seg_stride, seg_size, seg_int) = if model.multimodal {
            (
                Some(store.add("embed.seg_stride", init::normal_tokens(rng, d), &[d])?),
                Some(store.add("embed.seg_size", init::normal_tokens(rng, d), &[d])?),
                Some(store.add("embed.seg_int", init::normal_tokens(rng, d), &[d])?),
            )
        } else {
            (None, None, None)
        };
        Ok(Embedder {
            stride_w,
            cls,
            pe,
            seg_stride,
            seg_size,
            seg_int,
            layout,
            l_s: repr.l_s,
            d,
        })
    }

    /// Full embedded sequence X0 (class token last, positional embeddings
    /// added); masking selects rows afterwards.
    pub fn embed(&self, input: &ModelInput) -> Result<Tensor<T>> {
        let b = input.batch;
        let n_stride = self.layout.n_stride;
        let strides = Tensor::from_vec(
            input.strides.iter().map(|&v| T::cast(v as f64)).collect(),
            &[b, n_stride, self.l_s],
        )?;
        let stride_tokens = strides.matmul(&self.stride_w)?;
        let cls_rows = self.cls.broadcast_rows(b, 1)?;
        let x0 = if self.layout.multimodal {
            let m = self.layout.m_seq;
            let size_enc = self.encode_sequence(&input.sizes, b, m)?;
            let int_enc = self.encode_sequence(&input.intervals, b, m)?;
            let st = stride_tokens.add(self.seg_stride.as_ref().unwrap())?;
            let sz = size_enc.add(self.seg_size.as_ref().unwrap())?;
            let iv = int_enc.add(self.seg_int.as_ref().unwrap())?;
            Tensor::concat_rows(&[&st, &sz, &iv, &cls_rows])?
        } else {
            Tensor::concat_rows(&[&stride_tokens, &cls_rows])?
        };
        x0.add(&self.pe)
    }

    /// Fixed sinusoidal encoding of scalar features: a constant `[B, m, D]`
    /// tensor (no gradient path into the inputs).
    fn encode_sequence(&self, values: &[f64], b: usize, m: usize) -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(b * m * self.d);
        for &v in values {
            data.extend(sinusoidal_encode(v, self.d).into_iter().map(T::cast));
        }
        Tensor::from_vec(data, &[b, m, self.d])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_zero_alternates_zero_one() {
        let se = sinusoidal_encode(0.0, 6);
        assert_eq!(se, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn sinusoidal_first_component_is_plain_sin() {
        for x in [0.3, 1.7, -4.0] {
            let se = sinusoidal_encode(x, 8);
            assert!((se[0] - x.sin()).abs() < 1e-12);
            assert!((se[1] - x.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoidal_is_bounded() {
        for i in 0..50 {
            let x = (i as f64) * 137.035 - 2000.0;
            assert!(sinusoidal_encode(x, 16).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
