//! The assembled multimodal model: image encoder (conv+pool blocks, global
//! average pooling, dense), text encoder (embedding, Bi-LSTM, additive
//! attention pooling, dense), one fusion strategy, and the three task heads.
//!
//! Ablations replace an absent branch's output with a zero vector of the
//! right extent, so an image-only model is invariant to the report tokens
//! and a text-only model to the pixels. Parameters for an absent branch are
//! not allocated at all.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fusion::{
    fuse_concat, fuse_elementwise, BilinearCache, BilinearFusion, BilinearWeights, CrossAttnCache,
    CrossAttnFusion, FusionKind, GatedCache, GatedFusion,
};
use crate::heads::{
    dice_loss, dice_loss_grad, smooth_l1_coords, smooth_l1_coords_grad, BBox, ClassifierHead,
    DecoderCache, DecoderHead, LocalizerCache, LocalizerHead,
};
use crate::layers::{
    global_pool, global_pool_backward, glorot_uniform, AttentionPool, AttentionPoolCache, BiLstm,
    BiLstmCache, Conv2dCache, Conv2dLayer, DenseCache, DenseLayer, EmbeddingTable, LstmGrads,
    Pool2d, Pool2dCache, PoolKind,
};
use crate::rng::{stream, Rng};
use crate::synthdata::{CaseRecord, Vocab, BOS, EOS, PAD};
use crate::tensor::{Tensor, Unary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
    Both,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Image, Modality::Text, Modality::Both];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Text => "text",
            Modality::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown modality '{s}'; valid names: image, text, both"
                ))
            })
    }

    pub fn uses_image(self) -> bool {
        matches!(self, Modality::Image | Modality::Both)
    }

    pub fn uses_text(self) -> bool {
        matches!(self, Modality::Text | Modality::Both)
    }
}

/// All hyperparameters. Every field has a default, so partial JSON configs
/// deserialize cleanly; command-line flags override file values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub modality: Modality,
    pub fusion: FusionKind,
    /// `None` runs the full bilinear tensor; `Some(r)` the rank-r factorization.
    pub bilinear_rank: Option<usize>,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub pool_windows: Vec<usize>,
    pub image_side: usize,
    pub d_img: usize,
    pub vocab_size: usize,
    pub d_emb: usize,
    pub lstm_hidden: usize,
    pub d_att: usize,
    pub d_txt: usize,
    pub d_z: usize,
    pub crossattn_dv: usize,
    pub num_classes: usize,
    pub mask_grid: usize,
    pub decoder_hidden: usize,
    pub max_gen_len: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub epochs: usize,
    /// Per-case updates only; values other than 1 are rejected.
    pub batch_size: usize,
    pub seed: u64,
    pub lambda_box: f64,
    pub lambda_mask: f64,
    pub lambda_gen: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            modality: Modality::Both,
            fusion: FusionKind::Gated,
            bilinear_rank: None,
            conv_channels: vec![4, 8],
            conv_kernels: vec![3, 3],
            pool_windows: vec![2, 2],
            image_side: 16,
            d_img: 16,
            vocab_size: Vocab::corpus_default().len(),
            d_emb: 16,
            lstm_hidden: 16,
            d_att: 16,
            d_txt: 16,
            d_z: 16,
            crossattn_dv: 16,
            num_classes: 2,
            mask_grid: 4,
            decoder_hidden: 32,
            max_gen_len: 8,
            learning_rate: 0.02,
            momentum: 0.9,
            grad_clip: 5.0,
            epochs: 20,
            batch_size: 1,
            seed: 0,
            lambda_box: 0.5,
            lambda_mask: 0.5,
            lambda_gen: 0.5,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by gradient checks and fast tests.
    pub fn tiny() -> Self {
        ModelConfig {
            conv_channels: vec![2, 3],
            conv_kernels: vec![3, 2],
            pool_windows: vec![2, 2],
            image_side: 8,
            d_img: 4,
            vocab_size: 10,
            d_emb: 4,
            lstm_hidden: 3,
            d_att: 3,
            d_txt: 4,
            d_z: 4,
            crossattn_dv: 3,
            mask_grid: 2,
            decoder_hidden: 5,
            max_gen_len: 6,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_side", self.image_side),
            ("d_img", self.d_img),
            ("vocab_size", self.vocab_size),
            ("d_emb", self.d_emb),
            ("lstm_hidden", self.lstm_hidden),
            ("d_att", self.d_att),
            ("d_txt", self.d_txt),
            ("d_z", self.d_z),
            ("crossattn_dv", self.crossattn_dv),
            ("mask_grid", self.mask_grid),
            ("decoder_hidden", self.decoder_hidden),
            ("max_gen_len", self.max_gen_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("num_classes must be >= 2".into()));
        }
        if self.vocab_size <= 3 {
            return Err(Error::InvalidArgument(
                "vocab_size must exceed the special token ids".into(),
            ));
        }
        if self.batch_size != 1 {
            return Err(Error::InvalidArgument(
                "training uses per-case updates; batch_size must be 1".into(),
            ));
        }
        if self.conv_channels.is_empty()
            || self.conv_channels.len() != self.conv_kernels.len()
            || self.conv_channels.len() != self.pool_windows.len()
        {
            return Err(Error::InvalidArgument(
                "conv_channels, conv_kernels and pool_windows must be nonempty and equal length"
                    .into(),
            ));
        }
        self.conv_output_side()?;
        if self.fusion == FusionKind::Elementwise && self.d_img != self.d_txt {
            return Err(Error::InvalidArgument(format!(
                "elementwise fusion requires d_img == d_txt ({} vs {})",
                self.d_img, self.d_txt
            )));
        }
        if self.bilinear_rank == Some(0) {
            return Err(Error::InvalidArgument("bilinear_rank must be >= 1".into()));
        }
        Ok(())
    }

    /// Spatial side after the conv+pool stack (errors if any stage empties).
    pub fn conv_output_side(&self) -> Result<usize> {
        let mut side = self.image_side;
        for (i, (&k, &p)) in self.conv_kernels.iter().zip(&self.pool_windows).enumerate() {
            if k == 0 || p == 0 || k > side {
                return Err(Error::InvalidArgument(format!(
                    "conv block {i}: kernel {k} does not fit side {side}"
                )));
            }
            side = side - k + 1;
            if p > side {
                return Err(Error::InvalidArgument(format!(
                    "conv block {i}: pool window {p} does not fit side {side}"
                )));
            }
            side = (side - p) / p + 1;
        }
        Ok(side)
    }

    /// Dimension of the joint vector the heads consume.
    pub fn joint_dim(&self) -> usize {
        match self.fusion {
            FusionKind::Concat => self.d_img + self.d_txt,
            FusionKind::Elementwise => self.d_img,
            _ => self.d_z,
        }
    }

    /// Report row label, e.g. `both-gated`.
    pub fn model_name(&self) -> String {
        format!("{}-{}", self.modality.name(), self.fusion.name())
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2dLayer,
    pub pool: Pool2d,
}

#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub blocks: Vec<ConvBlock>,
    pub to_feat: DenseLayer,
}

pub struct ImageCaches {
    blocks: Vec<(Conv2dCache, Pool2dCache)>,
    global: crate::layers::GlobalPoolCache,
    dense: DenseCache,
}

impl ImageEncoder {
    fn init(rng: &mut Rng, cfg: &ModelConfig) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut c_in = 1usize;
        for ((&c_out, &k), &p) in cfg
            .conv_channels
            .iter()
            .zip(&cfg.conv_kernels)
            .zip(&cfg.pool_windows)
        {
            let fan_in = c_in * k * k;
            let fan_out = c_out * k * k;
            blocks.push(ConvBlock {
                conv: Conv2dLayer::new(
                    glorot_uniform(rng, &[c_out, c_in, k, k], fan_in, fan_out),
                    Tensor::zeros(&[c_out])?,
                    Some(Unary::Relu),
                )?,
                pool: Pool2d {
                    kind: PoolKind::Max,
                    window: p,
                    stride: p,
                },
            });
            c_in = c_out;
        }
        let to_feat = DenseLayer::new(
            glorot_uniform(rng, &[cfg.d_img, c_in], c_in, cfg.d_img),
            Tensor::zeros(&[cfg.d_img])?,
            Some(Unary::Tanh),
        )?;
        Ok(ImageEncoder { blocks, to_feat })
    }

    fn forward(&self, image: &Tensor) -> Result<(Tensor, ImageCaches)> {
        // Fixed input centering: pixels in [0, 1] map to [-1, 1] so the
        // first conv sees zero-centered, unit-scale activations.
        let mut x = image.scale(2.0).sub(&Tensor::full(image.shape().clone(), 1.0))?;
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, conv_cache) = b.conv.forward(&x)?;
            let (p, pool_cache) = b.pool.forward(&y)?;
            block_caches.push((conv_cache, pool_cache));
            x = p;
        }
        let (pooled, global) = global_pool(PoolKind::Avg, &x)?;
        let (v, dense) = self.to_feat.forward(&pooled)?;
        Ok((
            v,
            ImageCaches {
                blocks: block_caches,
                global,
                dense,
            },
        ))
    }

    fn backward(
        &self,
        caches: &ImageCaches,
        d_v: &Tensor,
        grads: &mut GradMap,
        prefix: &str,
    ) -> Result<()> {
        let (d_pooled, dense_grads) = self.to_feat.backward(&caches.dense, d_v)?;
        grads.insert(format!("{prefix}.to_feat.weight"), dense_grads.d_weight);
        grads.insert(format!("{prefix}.to_feat.bias"), dense_grads.d_bias);
        let mut d_map = global_pool_backward(PoolKind::Avg, &caches.global, &d_pooled)?;
        for (i, (b, (conv_cache, pool_cache))) in
            self.blocks.iter().zip(&caches.blocks).enumerate().rev()
        {
            let d_conv_out = b.pool.backward(pool_cache, &d_map)?;
            let (d_in, conv_grads) = b.conv.backward(conv_cache, &d_conv_out)?;
            grads.insert(format!("{prefix}.block{i}.conv.kernels"), conv_grads.d_kernels);
            grads.insert(format!("{prefix}.block{i}.conv.bias"), conv_grads.d_bias);
            d_map = d_in;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embed: EmbeddingTable,
    pub bilstm: BiLstm,
    pub attn_pool: AttentionPool,
    pub to_feat: DenseLayer,
}

pub struct TextCaches {
    tokens: Vec<usize>,
    bilstm: BiLstmCache,
    attn: AttentionPoolCache,
    dense: DenseCache,
}

impl TextEncoder {
    fn init(rng: &mut Rng, cfg: &ModelConfig) -> Result<Self> {
        let width = 2 * cfg.lstm_hidden;
        Ok(TextEncoder {
            embed: EmbeddingTable::new(glorot_uniform(
                rng,
                &[cfg.vocab_size, cfg.d_emb],
                cfg.vocab_size,
                cfg.d_emb,
            ))?,
            bilstm: BiLstm::init(rng, cfg.d_emb, cfg.lstm_hidden)?,
            attn_pool: AttentionPool::init(rng, width, cfg.d_att)?,
            to_feat: DenseLayer::new(
                glorot_uniform(rng, &[cfg.d_txt, width], width, cfg.d_txt),
                Tensor::zeros(&[cfg.d_txt])?,
                Some(Unary::Tanh),
            )?,
        })
    }

    /// Returns `(states [T, 2h], pooled text vector, caches)`.
    fn forward(&self, tokens: &[usize]) -> Result<(Tensor, Tensor, TextCaches)> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("report token sequence is empty".into()));
        }
        let xs = self.embed.lookup(tokens)?;
        let (states, bilstm) = self.bilstm.forward(&xs)?;
        let (c, _alphas, attn) = self.attn_pool.forward(&states)?;
        let (v, dense) = self.to_feat.forward(&c)?;
        Ok((
            states,
            v,
            TextCaches {
                tokens: tokens.to_vec(),
                bilstm,
                attn,
                dense,
            },
        ))
    }

    /// `d_states_extra` carries a gradient that bypasses the pooling path
    /// (cross-modal attention reads the states directly).
    fn backward(
        &self,
        caches: &TextCaches,
        d_v: &Tensor,
        d_states_extra: Option<&Tensor>,
        grads: &mut GradMap,
        prefix: &str,
    ) -> Result<()> {
        let (d_c, dense_grads) = self.to_feat.backward(&caches.dense, d_v)?;
        grads.insert(format!("{prefix}.to_feat.weight"), dense_grads.d_weight);
        grads.insert(format!("{prefix}.to_feat.bias"), dense_grads.d_bias);
        let (mut d_states, attn_grads) = self.attn_pool.backward(&caches.attn, &d_c)?;
        grads.insert(format!("{prefix}.attn_pool.w_a"), attn_grads.d_w_a);
        grads.insert(format!("{prefix}.attn_pool.w"), attn_grads.d_w);
        if let Some(extra) = d_states_extra {
            d_states = d_states.add(extra)?;
        }
        let (d_xs, bilstm_grads) = self.bilstm.backward(&caches.bilstm, &d_states)?;
        insert_lstm_grads(grads, &format!("{prefix}.bilstm.fwd"), bilstm_grads.forward);
        insert_lstm_grads(grads, &format!("{prefix}.bilstm.bwd"), bilstm_grads.backward);
        let emb_grads = self.embed.backward(&caches.tokens, &d_xs)?;
        grads.insert(format!("{prefix}.embed.table"), emb_grads.d_table);
        Ok(())
    }
}

/// Fusion strategy instance with parameters.
#[derive(Debug, Clone)]
pub enum Fusion {
    Concat,
    Elementwise,
    Gated(GatedFusion),
    Bilinear(BilinearFusion),
    CrossAttn(CrossAttnFusion),
}

pub enum FusionCaches {
    Concat { d_img: usize },
    Elementwise { v_img: Tensor, v_txt: Tensor },
    Gated(GatedCache),
    Bilinear(BilinearCache),
    CrossAttn { cache: CrossAttnCache, d_txt: usize },
}

impl Fusion {
    fn init(rng: &mut Rng, cfg: &ModelConfig) -> Result<Self> {
        Ok(match cfg.fusion {
            FusionKind::Concat => Fusion::Concat,
            FusionKind::Elementwise => Fusion::Elementwise,
            FusionKind::Gated => {
                Fusion::Gated(GatedFusion::init(rng, cfg.d_img, cfg.d_txt, cfg.d_z)?)
            }
            FusionKind::Bilinear => Fusion::Bilinear(BilinearFusion::init(
                rng,
                cfg.d_img,
                cfg.d_txt,
                cfg.d_z,
                cfg.bilinear_rank,
            )?),
            FusionKind::Crossattn => Fusion::CrossAttn(CrossAttnFusion::init(
                rng,
                cfg.d_img,
                2 * cfg.lstm_hidden,
                cfg.crossattn_dv,
                cfg.d_z,
            )?),
        })
    }

    fn forward(
        &self,
        v_img: &Tensor,
        v_txt: &Tensor,
        states: &Tensor,
    ) -> Result<(Tensor, FusionCaches)> {
        Ok(match self {
            Fusion::Concat => (
                fuse_concat(v_img, v_txt)?,
                FusionCaches::Concat { d_img: v_img.len() },
            ),
            Fusion::Elementwise => (
                fuse_elementwise(v_img, v_txt)?,
                FusionCaches::Elementwise {
                    v_img: v_img.clone(),
                    v_txt: v_txt.clone(),
                },
            ),
            Fusion::Gated(f) => {
                let (z, _gate, cache) = f.forward(v_img, v_txt)?;
                (z, FusionCaches::Gated(cache))
            }
            Fusion::Bilinear(f) => {
                let (z, cache) = f.forward(v_img, v_txt)?;
                (z, FusionCaches::Bilinear(cache))
            }
            Fusion::CrossAttn(f) => {
                let (z, _weights, cache) = f.forward(v_img, states)?;
                (
                    z,
                    FusionCaches::CrossAttn {
                        cache,
                        d_txt: v_txt.len(),
                    },
                )
            }
        })
    }

    /// Returns `(d_v_img, d_v_txt, d_states)` and records parameter grads.
    fn backward(
        &self,
        cache: &FusionCaches,
        dz: &Tensor,
        grads: &mut GradMap,
    ) -> Result<(Tensor, Tensor, Option<Tensor>)> {
        match (self, cache) {
            (Fusion::Concat, FusionCaches::Concat { d_img }) => {
                let d_v_img = Tensor::from_vec(&[*d_img], dz.data()[..*d_img].to_vec())?;
                let d_v_txt =
                    Tensor::from_vec(&[dz.len() - d_img], dz.data()[*d_img..].to_vec())?;
                Ok((d_v_img, d_v_txt, None))
            }
            (Fusion::Elementwise, FusionCaches::Elementwise { v_img, v_txt }) => {
                Ok((dz.mul(v_txt)?, dz.mul(v_img)?, None))
            }
            (Fusion::Gated(f), FusionCaches::Gated(c)) => {
                let (d_img, d_txt, g) = f.backward(c, dz)?;
                grads.insert("fusion.gated.w_g".into(), g.d_w_g);
                grads.insert("fusion.gated.b_g".into(), g.d_b_g);
                grads.insert("fusion.gated.w_i".into(), g.d_w_i);
                grads.insert("fusion.gated.b_i".into(), g.d_b_i);
                grads.insert("fusion.gated.w_t".into(), g.d_w_t);
                grads.insert("fusion.gated.b_t".into(), g.d_b_t);
                Ok((d_img, d_txt, None))
            }
            (Fusion::Bilinear(f), FusionCaches::Bilinear(c)) => {
                let (d_img, d_txt, g) = f.backward(c, dz)?;
                match g.d_weights {
                    BilinearWeights::Full(w) => {
                        grads.insert("fusion.bilinear.w".into(), w);
                    }
                    BilinearWeights::LowRank { u, v } => {
                        grads.insert("fusion.bilinear.u".into(), u);
                        grads.insert("fusion.bilinear.v".into(), v);
                    }
                }
                grads.insert("fusion.bilinear.b".into(), g.d_bias);
                Ok((d_img, d_txt, None))
            }
            (Fusion::CrossAttn(f), FusionCaches::CrossAttn { cache, d_txt }) => {
                let (d_img, d_states, g) = f.backward(cache, dz)?;
                grads.insert("fusion.crossattn.w_k".into(), g.d_w_k);
                grads.insert("fusion.crossattn.w_v".into(), g.d_w_v);
                grads.insert("fusion.crossattn.out.weight".into(), g.d_out_weight);
                grads.insert("fusion.crossattn.out.bias".into(), g.d_out_bias);
                // The pooled text vector is bypassed by this strategy, so
                // its gradient is exactly zero.
                Ok((d_img, Tensor::zeros(&[*d_txt])?, Some(d_states)))
            }
            _ => Err(Error::InvalidArgument(
                "fusion cache does not match fusion kind".into(),
            )),
        }
    }
}

pub type GradMap = BTreeMap<String, Tensor>;

fn insert_lstm_grads(grads: &mut GradMap, prefix: &str, g: LstmGrads) {
    grads.insert(format!("{prefix}.w_i"), g.w_i);
    grads.insert(format!("{prefix}.w_f"), g.w_f);
    grads.insert(format!("{prefix}.w_o"), g.w_o);
    grads.insert(format!("{prefix}.w_g"), g.w_g);
    grads.insert(format!("{prefix}.u_i"), g.u_i);
    grads.insert(format!("{prefix}.u_f"), g.u_f);
    grads.insert(format!("{prefix}.u_o"), g.u_o);
    grads.insert(format!("{prefix}.u_g"), g.u_g);
    grads.insert(format!("{prefix}.b_i"), g.b_i);
    grads.insert(format!("{prefix}.b_f"), g.b_f);
    grads.insert(format!("{prefix}.b_o"), g.b_o);
    grads.insert(format!("{prefix}.b_g"), g.b_g);
}

/// The assembled model.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub image_enc: Option<ImageEncoder>,
    pub text_enc: Option<TextEncoder>,
    pub fusion: Fusion,
    pub classifier: ClassifierHead,
    pub localizer: LocalizerHead,
    pub decoder: DecoderHead,
}

/// Everything the heads produced for one case, plus the backward caches.
pub struct ForwardAll {
    pub probs: Tensor,
    pub logits: Tensor,
    /// Raw sigmoid box coordinates `[4]` (ordering fix applies at
    /// prediction time, not in the loss).
    pub box_raw: Tensor,
    /// Mask probabilities `[g, g]`.
    pub mask: Tensor,
    pub z: Tensor,
    /// Teacher-forced token loss against the case description.
    pub gen_loss: f64,
    caches: AllCaches,
}

struct AllCaches {
    image: Option<ImageCaches>,
    text: Option<TextCaches>,
    fusion: FusionCaches,
    cls: DenseCache,
    loc: LocalizerCache,
    dec: DecoderCache,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub bbox: f64,
    pub mask: f64,
    pub gen: f64,
}

impl Model {
    /// Deterministic initialization: one SplitMix64 stream seeded by
    /// `(seed, PARAM_INIT)` drawn in a fixed component order.
    pub fn init(config: &ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut rng = Rng::from_seeds(&[config.seed, stream::PARAM_INIT]);
        let image_enc = if config.modality.uses_image() {
            Some(ImageEncoder::init(&mut rng, config)?)
        } else {
            None
        };
        let text_enc = if config.modality.uses_text() {
            Some(TextEncoder::init(&mut rng, config)?)
        } else {
            None
        };
        let fusion = Fusion::init(&mut rng, config)?;
        let d_joint = config.joint_dim();
        let classifier = ClassifierHead::init(&mut rng, d_joint, config.num_classes)?;
        let localizer = LocalizerHead::init(&mut rng, d_joint, config.mask_grid)?;
        let decoder = DecoderHead::init(
            &mut rng,
            config.vocab_size,
            config.d_emb,
            d_joint,
            config.decoder_hidden,
            BOS,
            EOS,
            PAD,
        )?;
        Ok(Model {
            config: config.clone(),
            image_enc,
            text_enc,
            fusion,
            classifier,
            localizer,
            decoder,
        })
    }

    /// Encoder outputs with ablation: an absent branch contributes zeros.
    fn encode(
        &self,
        case: &CaseRecord,
    ) -> Result<(Tensor, Tensor, Tensor, Option<ImageCaches>, Option<TextCaches>)> {
        let cfg = &self.config;
        let (v_img, img_caches) = match &self.image_enc {
            Some(enc) => {
                let (v, c) = enc.forward(&case.image)?;
                (v, Some(c))
            }
            None => (Tensor::zeros(&[cfg.d_img])?, None),
        };
        let (states, v_txt, txt_caches) = match &self.text_enc {
            Some(enc) => {
                let (s, v, c) = enc.forward(&case.report)?;
                (s, v, Some(c))
            }
            None => (
                Tensor::zeros(&[1, 2 * cfg.lstm_hidden])?,
                Tensor::zeros(&[cfg.d_txt])?,
                None,
            ),
        };
        Ok((v_img, v_txt, states, img_caches, txt_caches))
    }

    /// Full forward pass over all heads with caches for backward.
    pub fn forward_all(&self, case: &CaseRecord) -> Result<ForwardAll> {
        let (v_img, v_txt, states, img_caches, txt_caches) = self.encode(case)?;
        let (z, fusion_cache) = self.fusion.forward(&v_img, &v_txt, &states)?;
        let (logits, cls_cache) = self.classifier.forward(&z)?;
        let probs = logits.softmax(0)?;
        let (box_raw, mask_flat, loc_cache) = self.localizer.forward(&z)?;
        let g = self.config.mask_grid;
        let mask = mask_flat.reshaped(&[g, g])?;
        let (gen_loss, dec_cache) = self.decoder.teacher_forced(&z, &case.description)?;
        Ok(ForwardAll {
            probs,
            logits,
            box_raw,
            mask,
            z,
            gen_loss,
            caches: AllCaches {
                image: img_caches,
                text: txt_caches,
                fusion: fusion_cache,
                cls: cls_cache,
                loc: loc_cache,
                dec: dec_cache,
            },
        })
    }

    /// Composite loss for one case.
    pub fn loss(&self, case: &CaseRecord) -> Result<LossBreakdown> {
        let fwd = self.forward_all(case)?;
        self.losses_from_forward(case, &fwd)
    }

    fn losses_from_forward(&self, case: &CaseRecord, fwd: &ForwardAll) -> Result<LossBreakdown> {
        let cfg = &self.config;
        let cls = crate::heads::cross_entropy(&fwd.probs, case.label)?;
        let pred4 = box4(&fwd.box_raw);
        let target4 = case.bbox.coords();
        let bbox = smooth_l1_coords(&pred4, &target4);
        let mask = dice_loss(&fwd.mask, &case.mask)?;
        let gen = fwd.gen_loss;
        Ok(LossBreakdown {
            total: cls + cfg.lambda_box * bbox + cfg.lambda_mask * mask + cfg.lambda_gen * gen,
            cls,
            bbox,
            mask,
            gen,
        })
    }

    /// Forward, composite loss, and a gradient for every parameter tensor.
    pub fn loss_and_grads(&self, case: &CaseRecord) -> Result<(LossBreakdown, GradMap)> {
        let cfg = &self.config;
        let fwd = self.forward_all(case)?;
        let losses = self.losses_from_forward(case, &fwd)?;
        let mut grads = GradMap::new();

        // Classification head: d logits = probs - onehot.
        let (_, dlogits) = self.classifier.loss_and_logit_grad(&fwd.logits, case.label)?;
        let (dz_cls, cls_grads) = self.classifier.dense.backward(&fwd.caches.cls, &dlogits)?;
        grads.insert("heads.classifier.weight".into(), cls_grads.d_weight);
        grads.insert("heads.classifier.bias".into(), cls_grads.d_bias);

        // Box head.
        let pred4 = box4(&fwd.box_raw);
        let box_grad = smooth_l1_coords_grad(&pred4, &case.bbox.coords());
        let d_box = Tensor::from_vec(
            &[4],
            box_grad.iter().map(|&g| g * cfg.lambda_box).collect(),
        )?;
        let (dz_box, box_grads) = self
            .localizer
            .box_dense
            .backward(&fwd.caches.loc.box_cache, &d_box)?;
        grads.insert("heads.box.weight".into(), box_grads.d_weight);
        grads.insert("heads.box.bias".into(), box_grads.d_bias);

        // Mask head.
        let d_mask = dice_loss_grad(&fwd.mask, &case.mask)?
            .scale(cfg.lambda_mask)
            .reshaped(&[cfg.mask_grid * cfg.mask_grid])?;
        let (dz_mask, mask_grads) = self
            .localizer
            .mask_dense
            .backward(&fwd.caches.loc.mask_cache, &d_mask)?;
        grads.insert("heads.mask.weight".into(), mask_grads.d_weight);
        grads.insert("heads.mask.bias".into(), mask_grads.d_bias);

        // Decoder head.
        let (dz_gen, dec_grads) = self
            .decoder
            .teacher_forced_backward(&fwd.caches.dec, cfg.lambda_gen)?;
        insert_lstm_grads(&mut grads, "heads.decoder.cell", dec_grads.cell);
        grads.insert("heads.decoder.embed.table".into(), dec_grads.d_embed);
        grads.insert("heads.decoder.out.weight".into(), dec_grads.d_out.d_weight);
        grads.insert("heads.decoder.out.bias".into(), dec_grads.d_out.d_bias);

        let dz = dz_cls.add(&dz_box)?.add(&dz_mask)?.add(&dz_gen)?;

        // Fusion.
        let (d_v_img, d_v_txt, d_states) = self.fusion.backward(&fwd.caches.fusion, &dz, &mut grads)?;

        // Branch encoders (absent branches received zeros; nothing to do).
        if let (Some(enc), Some(caches)) = (&self.image_enc, &fwd.caches.image) {
            enc.backward(caches, &d_v_img, &mut grads, "image")?;
        }
        if let (Some(enc), Some(caches)) = (&self.text_enc, &fwd.caches.text) {
            enc.backward(caches, &d_v_txt, d_states.as_ref(), &mut grads, "text")?;
        }
        Ok((losses, grads))
    }

    /// Inference for one case: predicted class, box (ordering fix applied),
    /// mask probabilities, and a greedy description.
    pub fn predict(&self, case: &CaseRecord) -> Result<Prediction> {
        let (v_img, v_txt, states, _, _) = self.encode(case)?;
        let (z, _) = self.fusion.forward(&v_img, &v_txt, &states)?;
        let (probs, class) = self.classifier.classify(&z)?;
        let (box_raw, mask_flat, _) = self.localizer.forward(&z)?;
        let bbox = LocalizerHead::predict_box(&box_raw);
        let g = self.config.mask_grid;
        let tokens = self.decoder.greedy(&z, self.config.max_gen_len)?;
        Ok(Prediction {
            probs,
            class,
            bbox,
            mask: mask_flat.reshaped(&[g, g])?,
            tokens,
        })
    }

    /// Named references to every parameter tensor, in a fixed order
    /// (checkpoints, SGD and gradient checks all share these names).
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut names = Vec::new();
        let mut tensors: Vec<&Tensor> = Vec::new();
        collect_param_refs(self, &mut names, &mut |t| tensors.push(t));
        names.into_iter().zip(tensors).collect()
    }

    /// Named mutable references to every parameter tensor, same order and
    /// names as [`Model::params`].
    pub fn param_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(enc) = &mut self.image_enc {
            for (i, b) in enc.blocks.iter_mut().enumerate() {
                out.push((format!("image.block{i}.conv.kernels"), &mut b.conv.kernels));
                out.push((format!("image.block{i}.conv.bias"), &mut b.conv.bias));
            }
            out.push(("image.to_feat.weight".into(), &mut enc.to_feat.weight));
            out.push(("image.to_feat.bias".into(), &mut enc.to_feat.bias));
        }
        if let Some(enc) = &mut self.text_enc {
            out.push(("text.embed.table".into(), &mut enc.embed.table));
            for (tag, cell) in [
                ("fwd", &mut enc.bilstm.forward_cell),
                ("bwd", &mut enc.bilstm.backward_cell),
            ] {
                out.push((format!("text.bilstm.{tag}.w_i"), &mut cell.w_i));
                out.push((format!("text.bilstm.{tag}.w_f"), &mut cell.w_f));
                out.push((format!("text.bilstm.{tag}.w_o"), &mut cell.w_o));
                out.push((format!("text.bilstm.{tag}.w_g"), &mut cell.w_g));
                out.push((format!("text.bilstm.{tag}.u_i"), &mut cell.u_i));
                out.push((format!("text.bilstm.{tag}.u_f"), &mut cell.u_f));
                out.push((format!("text.bilstm.{tag}.u_o"), &mut cell.u_o));
                out.push((format!("text.bilstm.{tag}.u_g"), &mut cell.u_g));
                out.push((format!("text.bilstm.{tag}.b_i"), &mut cell.b_i));
                out.push((format!("text.bilstm.{tag}.b_f"), &mut cell.b_f));
                out.push((format!("text.bilstm.{tag}.b_o"), &mut cell.b_o));
                out.push((format!("text.bilstm.{tag}.b_g"), &mut cell.b_g));
            }
            out.push(("text.attn_pool.w_a".into(), &mut enc.attn_pool.w_a));
            out.push(("text.attn_pool.w".into(), &mut enc.attn_pool.w));
            out.push(("text.to_feat.weight".into(), &mut enc.to_feat.weight));
            out.push(("text.to_feat.bias".into(), &mut enc.to_feat.bias));
        }
        match &mut self.fusion {
            Fusion::Concat | Fusion::Elementwise => {}
            Fusion::Gated(g) => {
                out.push(("fusion.gated.w_g".into(), &mut g.w_g));
                out.push(("fusion.gated.b_g".into(), &mut g.b_g));
                out.push(("fusion.gated.w_i".into(), &mut g.w_i));
                out.push(("fusion.gated.b_i".into(), &mut g.b_i));
                out.push(("fusion.gated.w_t".into(), &mut g.w_t));
                out.push(("fusion.gated.b_t".into(), &mut g.b_t));
            }
            Fusion::Bilinear(b) => {
                match &mut b.weights {
                    BilinearWeights::Full(w) => out.push(("fusion.bilinear.w".into(), w)),
                    BilinearWeights::LowRank { u, v } => {
                        out.push(("fusion.bilinear.u".into(), u));
                        out.push(("fusion.bilinear.v".into(), v));
                    }
                }
                out.push(("fusion.bilinear.b".into(), &mut b.bias));
            }
            Fusion::CrossAttn(c) => {
                out.push(("fusion.crossattn.w_k".into(), &mut c.w_k));
                out.push(("fusion.crossattn.w_v".into(), &mut c.w_v));
                out.push(("fusion.crossattn.out.weight".into(), &mut c.out.weight));
                out.push(("fusion.crossattn.out.bias".into(), &mut c.out.bias));
            }
        }
        out.push(("heads.classifier.weight".into(), &mut self.classifier.dense.weight));
        out.push(("heads.classifier.bias".into(), &mut self.classifier.dense.bias));
        out.push(("heads.box.weight".into(), &mut self.localizer.box_dense.weight));
        out.push(("heads.box.bias".into(), &mut self.localizer.box_dense.bias));
        out.push(("heads.mask.weight".into(), &mut self.localizer.mask_dense.weight));
        out.push(("heads.mask.bias".into(), &mut self.localizer.mask_dense.bias));
        out.push(("heads.decoder.embed.table".into(), &mut self.decoder.embed.table));
        let cell = &mut self.decoder.cell;
        out.push(("heads.decoder.cell.w_i".into(), &mut cell.w_i));
        out.push(("heads.decoder.cell.w_f".into(), &mut cell.w_f));
        out.push(("heads.decoder.cell.w_o".into(), &mut cell.w_o));
        out.push(("heads.decoder.cell.w_g".into(), &mut cell.w_g));
        out.push(("heads.decoder.cell.u_i".into(), &mut cell.u_i));
        out.push(("heads.decoder.cell.u_f".into(), &mut cell.u_f));
        out.push(("heads.decoder.cell.u_o".into(), &mut cell.u_o));
        out.push(("heads.decoder.cell.u_g".into(), &mut cell.u_g));
        out.push(("heads.decoder.cell.b_i".into(), &mut cell.b_i));
        out.push(("heads.decoder.cell.b_f".into(), &mut cell.b_f));
        out.push(("heads.decoder.cell.b_o".into(), &mut cell.b_o));
        out.push(("heads.decoder.cell.b_g".into(), &mut cell.b_g));
        out.push(("heads.decoder.out.weight".into(), &mut self.decoder.out.weight));
        out.push(("heads.decoder.out.bias".into(), &mut self.decoder.out.bias));
        out
    }

    /// Named snapshot of every parameter (cloned).
    pub fn param_map(&self) -> BTreeMap<String, Tensor> {
        self.params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }
}

fn collect_param_refs<'a>(
    model: &'a Model,
    names: &mut Vec<String>,
    push: &mut dyn FnMut(&'a Tensor),
) {
    // Immutable visit mirroring `param_tensors_mut` exactly.
    if let Some(enc) = &model.image_enc {
        for (i, b) in enc.blocks.iter().enumerate() {
            names.push(format!("image.block{i}.conv.kernels"));
            push(&b.conv.kernels);
            names.push(format!("image.block{i}.conv.bias"));
            push(&b.conv.bias);
        }
        names.push("image.to_feat.weight".into());
        push(&enc.to_feat.weight);
        names.push("image.to_feat.bias".into());
        push(&enc.to_feat.bias);
    }
    if let Some(enc) = &model.text_enc {
        names.push("text.embed.table".into());
        push(&enc.embed.table);
        for (tag, cell) in [("fwd", &enc.bilstm.forward_cell), ("bwd", &enc.bilstm.backward_cell)]
        {
            for (suffix, t) in [
                ("w_i", &cell.w_i),
                ("w_f", &cell.w_f),
                ("w_o", &cell.w_o),
                ("w_g", &cell.w_g),
                ("u_i", &cell.u_i),
                ("u_f", &cell.u_f),
                ("u_o", &cell.u_o),
                ("u_g", &cell.u_g),
                ("b_i", &cell.b_i),
                ("b_f", &cell.b_f),
                ("b_o", &cell.b_o),
                ("b_g", &cell.b_g),
            ] {
                names.push(format!("text.bilstm.{tag}.{suffix}"));
                push(t);
            }
        }
        names.push("text.attn_pool.w_a".into());
        push(&enc.attn_pool.w_a);
        names.push("text.attn_pool.w".into());
        push(&enc.attn_pool.w);
        names.push("text.to_feat.weight".into());
        push(&enc.to_feat.weight);
        names.push("text.to_feat.bias".into());
        push(&enc.to_feat.bias);
    }
    match &model.fusion {
        Fusion::Concat | Fusion::Elementwise => {}
        Fusion::Gated(g) => {
            for (n, t) in [
                ("fusion.gated.w_g", &g.w_g),
                ("fusion.gated.b_g", &g.b_g),
                ("fusion.gated.w_i", &g.w_i),
                ("fusion.gated.b_i", &g.b_i),
                ("fusion.gated.w_t", &g.w_t),
                ("fusion.gated.b_t", &g.b_t),
            ] {
                names.push(n.into());
                push(t);
            }
        }
        Fusion::Bilinear(b) => {
            match &b.weights {
                BilinearWeights::Full(w) => {
                    names.push("fusion.bilinear.w".into());
                    push(w);
                }
                BilinearWeights::LowRank { u, v } => {
                    names.push("fusion.bilinear.u".into());
                    push(u);
                    names.push("fusion.bilinear.v".into());
                    push(v);
                }
            }
            names.push("fusion.bilinear.b".into());
            push(&b.bias);
        }
        Fusion::CrossAttn(c) => {
            for (n, t) in [
                ("fusion.crossattn.w_k", &c.w_k),
                ("fusion.crossattn.w_v", &c.w_v),
                ("fusion.crossattn.out.weight", &c.out.weight),
                ("fusion.crossattn.out.bias", &c.out.bias),
            ] {
                names.push(n.into());
                push(t);
            }
        }
    }
    for (n, t) in [
        ("heads.classifier.weight", &model.classifier.dense.weight),
        ("heads.classifier.bias", &model.classifier.dense.bias),
        ("heads.box.weight", &model.localizer.box_dense.weight),
        ("heads.box.bias", &model.localizer.box_dense.bias),
        ("heads.mask.weight", &model.localizer.mask_dense.weight),
        ("heads.mask.bias", &model.localizer.mask_dense.bias),
        ("heads.decoder.embed.table", &model.decoder.embed.table),
    ] {
        names.push(n.into());
        push(t);
    }
    let cell = &model.decoder.cell;
    for (suffix, t) in [
        ("w_i", &cell.w_i),
        ("w_f", &cell.w_f),
        ("w_o", &cell.w_o),
        ("w_g", &cell.w_g),
        ("u_i", &cell.u_i),
        ("u_f", &cell.u_f),
        ("u_o", &cell.u_o),
        ("u_g", &cell.u_g),
        ("b_i", &cell.b_i),
        ("b_f", &cell.b_f),
        ("b_o", &cell.b_o),
        ("b_g", &cell.b_g),
    ] {
        names.push(format!("heads.decoder.cell.{suffix}"));
        push(t);
    }
    names.push("heads.decoder.out.weight".into());
    push(&model.decoder.out.weight);
    names.push("heads.decoder.out.bias".into());
    push(&model.decoder.out.bias);
}

fn box4(t: &Tensor) -> [f64; 4] {
    [t.data()[0], t.data()[1], t.data()[2], t.data()[3]]
}

/// One model's inference outputs for a case.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: Tensor,
    pub class: usize,
    pub bbox: BBox,
    pub mask: Tensor,
    pub tokens: Vec<usize>,
}
