//! Model assembly: encoder, masked-reconstruction autoencoder, and the
//! classification head.

pub mod blocks;
pub mod embed;
pub mod init;

use rand_chacha::ChaCha12Rng;
use stridenet_tensor::optim::ParamStore;
use stridenet_tensor::{Real, Result, Tensor};

use crate::config::ModelConfig;
use crate::repr::ReprConfig;
pub use blocks::{forward_blocks, Block, Linear};
pub use embed::{sinusoidal_encode, Embedder, ModelInput, TokenLayout};

const NORM_EPS: f64 = 1e-5;

/// Embedder plus the encoder stack; shared between pre-training and
/// fine-tuning (parameter names line up so checkpoints transfer).
pub struct EncoderModel<T: Real> {
    pub embed: Embedder<T>,
    pub blocks: Vec<Block<T>>,
}

impl<T: Real> EncoderModel<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        model: &ModelConfig,
        repr: &ReprConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let embed = Embedder::init(store, model, repr, rng)?;
        let mut blocks = Vec::with_capacity(model.n_enc_blocks);
        for i in 0..model.n_enc_blocks {
            blocks.push(Block::init(
                store,
                &format!("enc.{i}"),
                model.block_kind,
                model.d_enc,
                model,
                rng,
            )?);
        }
        Ok(EncoderModel { embed, blocks })
    }

    pub fn forward(&self, tokens: &Tensor<T>) -> Result<Tensor<T>> {
        forward_blocks(&self.blocks, tokens)
    }
}

/// Masked autoencoder: encoder over visible tokens, a linear width change,
/// shared mask token, decoder positional embeddings, decoder stack, and
/// per-modality reconstruction heads.
pub struct PretrainModel<T: Real> {
    pub encoder: EncoderModel<T>,
    pub enc2dec: Linear<T>,
    pub mask_token: Tensor<T>,
    pub pe_dec: Tensor<T>,
    pub dec_blocks: Vec<Block<T>>,
    pub stride_head: Linear<T>,
    pub size_head: Option<Linear<T>>,
    pub int_head: Option<Linear<T>>,
    pub cfg: ModelConfig,
    pub repr: ReprConfig,
}

impl<T: Real> PretrainModel<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        model: &ModelConfig,
        repr: &ReprConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let encoder = EncoderModel::init(store, model, repr, rng)?;
        let layout = encoder.embed.layout;
        let l = layout.total_len();
        let d_dec = model.d_dec;
        let enc2dec = Linear::init(store, "dec.in", model.d_enc, d_dec, true, rng)?;
        let mask_token = store.add("dec.mask_token", init::normal_tokens(rng, d_dec), &[d_dec])?;
        let pe_dec = store.add("dec.pe_dec", init::normal_tokens(rng, l * d_dec), &[l, d_dec])?;
        let mut dec_blocks = Vec::with_capacity(model.n_dec_blocks);
        for i in 0..model.n_dec_blocks {
            dec_blocks.push(Block::init(
                store,
                &format!("dec.{i}"),
                model.block_kind,
                d_dec,
                model,
                rng,
            )?);
        }
        let stride_head = Linear::init(store, "dec.head_stride", d_dec, repr.l_s, true, rng)?;
        let (size_head, int_head) = if model.multimodal {
            (
                Some(Linear::init(
                    store,
                    "dec.head_size",
                    d_dec,
                    repr.mtu as usize + 1,
                    true,
                    rng,
                )?),
                Some(Linear::init(store, "dec.head_int", d_dec, 1, true, rng)?),
            )
        } else {
            (None, None)
        };
        Ok(PretrainModel {
            encoder,
            enc2dec,
            mask_token,
            pe_dec,
            dec_blocks,
            stride_head,
            size_head,
            int_head,
            cfg: model.clone(),
            repr: repr.clone(),
        })
    }
}

/// Encoder plus the MLP head over the trailing class token.
pub struct ClassifierModel<T: Real> {
    pub encoder: EncoderModel<T>,
    head_norm_g: Tensor<T>,
    head_norm_b: Tensor<T>,
    fc1: Linear<T>,
    fc2: Linear<T>,
    pub n_classes: usize,
    pub cfg: ModelConfig,
    pub repr: ReprConfig,
}

impl<T: Real> ClassifierModel<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        model: &ModelConfig,
        repr: &ReprConfig,
        n_classes: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let encoder = EncoderModel::init(store, model, repr, rng)?;
        let d = model.d_enc;
        Ok(ClassifierModel {
            encoder,
            head_norm_g: store.add("head.norm.g", vec![T::one(); d], &[d])?,
            head_norm_b: store.add("head.norm.b", vec![T::zero(); d], &[d])?,
            fc1: Linear::init(store, "head.fc1", d, d, true, rng)?,
            fc2: Linear::init(store, "head.fc2", d, n_classes, true, rng)?,
            n_classes,
            cfg: model.clone(),
            repr: repr.clone(),
        })
    }

    /// Class logits from the trailing class token only.
    pub fn logits(&self, input: &ModelInput) -> Result<Tensor<T>> {
        let x0 = self.encoder.embed.embed(input)?;
        let enc = self.encoder.forward(&x0)?;
        self.head_from_encoded(&enc, input.batch)
    }

    pub fn head_from_encoded(&self, enc: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
        let cls_index = self.encoder.embed.layout.class_index();
        let cls = enc.select_rows(&[cls_index])?.reshape(&[batch, self.cfg.d_enc])?;
        let normed = cls.layer_norm(&self.head_norm_g, &self.head_norm_b, T::cast(NORM_EPS))?;
        let hidden = self.fc1.forward(&normed)?.gelu()?;
        self.fc2.forward(&hidden)
    }
}
