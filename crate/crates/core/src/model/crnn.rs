use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pooling::{linear_softmax_pool, linear_softmax_pool_backward};
use super::preset::{ScenarioPreset, N_BLOCKS};
use crate::nn::{
    relu, relu_backward, AvgPool, BatchNorm, BatchNormCache, BiGru, BiGruLayerCache, Checkpoint, Conv2d, Ctx, Dense,
    Dropout, Layer, Mode, ParamSet, Sigmoid, Tensor,
};
use crate::{Error, Result, N_CLASSES, N_MELS};

/// Architecture sizes. The defaults are the full-size network; the
/// channel counts and GRU width can be shrunk for quick experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: Vec<usize>,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub n_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32, 64, 128, 128, 128, 128],
            gru_hidden: 128,
            gru_layers: 2,
            n_classes: N_CLASSES,
            dropout: 0.33,
        }
    }
}

impl ModelConfig {
    /// Small network for desk-scale runs. Dropout is off: at four
    /// channels per block it drowns the signal.
    pub fn tiny() -> Self {
        Self {
            channels: vec![4; 7],
            gru_hidden: 32,
            dropout: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != N_BLOCKS || self.channels.contains(&0) {
            return Err(Error::Config(format!(
                "need {N_BLOCKS} positive channel counts, got {:?}",
                self.channels
            )));
        }
        if self.gru_hidden == 0 || self.gru_layers == 0 || self.n_classes == 0 {
            return Err(Error::Config("GRU size, layer count and class count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm,
    dropout: Dropout,
    pool: AvgPool,
}

/// Frame-level and clip-level probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `[B, T', C]`
    pub frame_probs: Tensor,
    /// `[B, C]`
    pub clip_probs: Tensor,
}

#[derive(Debug)]
struct BlockCache {
    input: Tensor,
    conv_out: Tensor,
    bn: Option<BatchNormCache>,
    bn_out: Tensor,
    mask: Option<Vec<f64>>,
    pool_in_shape: Vec<usize>,
}

/// Intermediate values of a forward pass, consumed by
/// [`CrnnModel::backward`].
#[derive(Debug)]
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    cnn_out_shape: Vec<usize>,
    gru_in: Tensor,
    gru: Vec<(Tensor, BiGruLayerCache)>,
    gru_out: Tensor,
    frame_probs: Tensor,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    preset: ScenarioPreset,
}

/// Convolutional blocks, a stacked bidirectional GRU and a sigmoid
/// classifier, with weights in a single [`ParamSet`].
#[derive(Debug, Clone)]
pub struct CrnnModel {
    pub config: ModelConfig,
    pub preset: ScenarioPreset,
    pub params: ParamSet,
    blocks: Vec<ConvBlock>,
    gru: BiGru,
    classifier: Dense,
}

impl CrnnModel {
    /// Creates a freshly initialized network. The same seed always gives
    /// the same weights.
    pub fn build(preset: &ScenarioPreset, config: &ModelConfig, seed: u64) -> Result<Self> {
        preset.validate()?;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut blocks = Vec::with_capacity(N_BLOCKS);
        let mut c_in = 1;
        for (i, (&c_out, &pool)) in config.channels.iter().zip(&preset.pool_specs).enumerate() {
            blocks.push(ConvBlock {
                conv: Conv2d::new(&format!("block{i}.conv"), c_in, c_out, &mut params, &mut rng)?,
                bn: BatchNorm::new(&format!("block{i}.bn"), c_out, &mut params)?,
                dropout: Dropout { p: config.dropout },
                pool: AvgPool::new(pool),
            });
            c_in = c_out;
        }
        let gru = BiGru::new("gru", c_in, config.gru_hidden, config.gru_layers, &mut params, &mut rng)?;
        let classifier = Dense::new("classifier", 2 * config.gru_hidden, config.n_classes, &mut params, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            preset: preset.clone(),
            params,
            blocks,
            gru,
            classifier,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    /// Runs the network on `x: [B, 1, T, 128]`.
    pub fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<(ModelOutput, ForwardCache)> {
        let [batch, c, t_len, f_len] = x.dims::<4>("model input")?;
        if c != 1 || f_len != N_MELS {
            return Err(Error::Shape(format!(
                "model input must be [B, 1, T, {N_MELS}], got {:?}",
                x.shape()
            )));
        }
        let min_t = self.preset.time_factor();
        if t_len < min_t {
            return Err(Error::Shape(format!(
                "input has {t_len} frames, the time pooling needs at least {min_t}"
            )));
        }

        let params = &mut self.params;
        let mut cur = x.clone();
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (conv_out, ()) = block.conv.forward(params, &cur, ctx)?;
            let (bn_out, bn_cache) = block.bn.forward(params, &conv_out, ctx)?;
            let act = relu(&bn_out);
            let (dropped, mask) = block.dropout.forward(params, &act, ctx)?;
            let (pooled, ()) = block.pool.forward(params, &dropped, ctx)?;
            block_caches.push(BlockCache {
                input: cur,
                conv_out,
                bn: bn_cache,
                bn_out,
                mask,
                pool_in_shape: dropped.shape().to_vec(),
            });
            cur = pooled;
        }

        // [B, C, T', 1] -> [B, T', C]
        let [_, channels, t_out, f_out] = cur.dims::<4>("cnn output")?;
        debug_assert_eq!(f_out, 1);
        let cnn_out_shape = cur.shape().to_vec();
        let mut seq = vec![0.0; batch * t_out * channels];
        for b in 0..batch {
            for ch in 0..channels {
                for t in 0..t_out {
                    seq[(b * t_out + t) * channels + ch] = cur.data[(b * channels + ch) * t_out + t];
                }
            }
        }
        let gru_in = Tensor::new(&[batch, t_out, channels], seq)?;

        let (gru_out, gru_cache) = self.gru.forward(params, &gru_in, ctx)?;
        let (logits, ()) = self.classifier.forward(params, &gru_out, ctx)?;
        let (frame_probs, _) = Sigmoid.forward(params, &logits, ctx)?;
        frame_probs.ensure_finite("frame probabilities")?;
        let clip_probs = linear_softmax_pool(&frame_probs)?;

        Ok((
            ModelOutput {
                frame_probs: frame_probs.clone(),
                clip_probs,
            },
            ForwardCache {
                blocks: block_caches,
                cnn_out_shape,
                gru_in,
                gru: gru_cache,
                gru_out,
                frame_probs,
            },
        ))
    }

    /// Evaluation-mode forward pass: running batch-norm statistics, no
    /// dropout.
    pub fn predict(&mut self, x: &Tensor) -> Result<ModelOutput> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(x, &mut Ctx::new(Mode::Eval, &mut rng))?.0)
    }

    /// Accumulates parameter gradients for upstream gradients on the frame
    /// and clip probabilities. Returns the gradient with respect to the
    /// input features.
    pub fn backward(&mut self, cache: &ForwardCache, d_frame: &Tensor, d_clip: &Tensor) -> Result<Tensor> {
        if d_frame.shape() != cache.frame_probs.shape() {
            return Err(Error::Shape(format!(
                "frame gradient {:?}, expected {:?}",
                d_frame.shape(),
                cache.frame_probs.shape()
            )));
        }
        let params = &mut self.params;
        let mut d_probs = linear_softmax_pool_backward(&cache.frame_probs, d_clip)?;
        for (a, b) in d_probs.data.iter_mut().zip(&d_frame.data) {
            *a += b;
        }
        let d_logits = Sigmoid.backward(params, &cache.frame_probs, &cache.frame_probs, &d_probs)?;
        let d_gru_out = self.classifier.backward(params, &cache.gru_out, &(), &d_logits)?;
        let d_seq = self.gru.backward(params, &cache.gru_in, &cache.gru, &d_gru_out)?;

        let [batch, channels, t_out, _]: [usize; 4] = cache.cnn_out_shape.as_slice().try_into().unwrap();
        let mut d_cur = vec![0.0; d_seq.len()];
        for b in 0..batch {
            for ch in 0..channels {
                for t in 0..t_out {
                    d_cur[(b * channels + ch) * t_out + t] = d_seq.data[(b * t_out + t) * channels + ch];
                }
            }
        }
        let mut grad = Tensor::new(&cache.cnn_out_shape, d_cur)?;

        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let pool_in = Tensor::zeros(&bc.pool_in_shape);
            let g = block.pool.backward(params, &pool_in, &(), &grad)?;
            let g = block.dropout.backward(params, &pool_in, &bc.mask, &g)?;
            let g = relu_backward(&bc.bn_out, &g);
            let g = block.bn.backward(params, &bc.conv_out, &bc.bn, &g)?;
            grad = block.conv.backward(params, &bc.input, &(), &g)?;
        }
        Ok(grad)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = CheckpointMeta {
            model: self.config.clone(),
            preset: self.preset.clone(),
        };
        Checkpoint {
            metadata: toml::to_string(&meta).expect("metadata serializes"),
            params: self.params.clone(),
        }
    }

    /// Rebuilds a model from a checkpoint written by
    /// [`to_checkpoint`](Self::to_checkpoint).
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta =
            toml::from_str(&ckpt.metadata).map_err(|e| Error::Data(format!("checkpoint metadata: {e}")))?;
        let mut model = Self::build(&meta.preset, &meta.model, 0)?;
        model.params.ensure_same_layout(&ckpt.params)?;
        model.params = ckpt.params.clone();
        Ok(model)
    }
}
