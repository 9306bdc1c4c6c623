//! Fully convolutional segmentation network and the pooling tagging head.
//!
//! Layout: `len(block_channels)` blocks of `convs_per_block` × {3×3 conv, BN,
//! ReLU}, then a 1×1 conv to `n_classes` channels and a sigmoid. No striding or
//! pooling, so masks keep the input's time and mel resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::LogMelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Mode, Param, Real, Relu, Sigmoid, Tensor4};
use crate::pooling::Pooling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_mels: usize,
    pub n_classes: usize,
    pub block_channels: Vec<usize>,
    pub convs_per_block: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl NetworkConfig {
    /// Four doubled blocks of 32, 64, 128, 128 feature maps.
    pub fn paper(n_mels: usize, n_classes: usize) -> Self {
        NetworkConfig {
            n_mels,
            n_classes,
            block_channels: vec![32, 64, 128, 128],
            convs_per_block: 2,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }

    /// Two doubled blocks of 16 and 32 feature maps.
    pub fn desk(n_mels: usize, n_classes: usize) -> Self {
        NetworkConfig {
            block_channels: vec![16, 32],
            ..Self::paper(n_mels, n_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() || self.block_channels.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid block channels {:?}",
                self.block_channels
            )));
        }
        if self.n_classes == 0 || self.n_mels == 0 || self.convs_per_block == 0 {
            return Err(Error::InvalidArgument(
                "n_classes, n_mels and convs_per_block must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            return Err(Error::InvalidArgument("bad batch norm settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvBnRelu<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
    relu: Relu<T>,
}

#[derive(Debug, Clone)]
pub struct SegmentationNet<T> {
    pub config: NetworkConfig,
    layers: Vec<ConvBnRelu<T>>,
    head: Conv2d<T>,
    sigmoid: Sigmoid<T>,
}

/// A named tensor of parameters or running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> SegmentationNet<T> {
    /// Builds the network with deterministic Glorot-uniform initialization.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut in_ch = 1;
        for (bi, &ch) in config.block_channels.iter().enumerate() {
            for ci in 0..config.convs_per_block {
                let name = format!("block{bi}.conv{ci}");
                layers.push(ConvBnRelu {
                    conv: Conv2d::new(&name, in_ch, ch, 3, &mut rng)?,
                    bn: BatchNorm2d::new(
                        &format!("block{bi}.bn{ci}"),
                        ch,
                        config.bn_momentum,
                        config.bn_eps,
                    ),
                    relu: Relu::new(),
                });
                in_ch = ch;
            }
        }
        let head = Conv2d::new("head", in_ch, config.n_classes, 1, &mut rng)?;
        Ok(SegmentationNet {
            config,
            layers,
            head,
            sigmoid: Sigmoid::new(),
        })
    }

    /// `x` is `(batch, 1, time, n_mels)`; returns masks `(batch, n_classes, time, n_mels)`.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        if x.dims[1] != 1 || x.dims[3] != self.config.n_mels {
            return Err(Error::Shape(format!(
                "network expects (batch, 1, time, {}), got {:?}",
                self.config.n_mels, x.dims
            )));
        }
        let mut h = x.clone();
        for layer in &mut self.layers {
            let a = layer.conv.forward_owned(h)?;
            let b = layer.bn.forward_owned(a, mode)?;
            h = layer.relu.forward_owned(b);
        }
        let logits = self.head.forward_owned(h)?;
        let masks = self.sigmoid.forward(&logits);
        masks.check_finite("masks")?;
        Ok(masks)
    }

    /// Backpropagates a mask gradient, accumulating parameter gradients.
    pub fn backward(&mut self, d_masks: &Tensor4<T>) -> Result<Tensor4<T>> {
        let d = self.sigmoid.backward(d_masks)?;
        let mut d = self.head.backward(&d)?;
        for layer in self.layers.iter_mut().rev() {
            let a = layer.relu.backward(&d)?;
            let b = layer.bn.backward(&a)?;
            d = layer.conv.backward(&b)?;
        }
        Ok(d)
    }

    /// Trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.conv.params_mut());
            out.extend(layer.bn.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    /// Trainable parameters followed by BN running statistics.
    pub fn state(&self) -> Vec<NamedTensor<T>> {
        let mut out = Vec::new();
        let push = |out: &mut Vec<NamedTensor<T>>, p: &Param<T>| {
            out.push(NamedTensor {
                name: p.name.clone(),
                dims: p.shape.clone(),
                data: p.value.clone(),
            })
        };
        for layer in &self.layers {
            push(&mut out, &layer.conv.weight);
            push(&mut out, &layer.conv.bias);
            push(&mut out, &layer.bn.gamma);
            push(&mut out, &layer.bn.beta);
        }
        push(&mut out, &self.head.weight);
        push(&mut out, &self.head.bias);
        for layer in &self.layers {
            let c = layer.bn.channels;
            let base = layer.bn.gamma.name.trim_end_matches(".gamma");
            out.push(NamedTensor {
                name: format!("{base}.running_mean"),
                dims: vec![c],
                data: layer.bn.running_mean.clone(),
            });
            out.push(NamedTensor {
                name: format!("{base}.running_var"),
                dims: vec![c],
                data: layer.bn.running_var.clone(),
            });
        }
        out
    }

    /// Overwrites parameters and running statistics. Every tensor of this
    /// network must be present with identical dims.
    pub fn load_state(&mut self, tensors: &[NamedTensor<T>]) -> Result<()> {
        let find = |name: &str, dims: &[usize]| -> Result<Vec<T>> {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if t.dims != dims {
                return Err(Error::Shape(format!(
                    "tensor {name}: stored dims {:?}, network expects {dims:?}",
                    t.dims
                )));
            }
            Ok(t.data.clone())
        };
        let mut loaded = Vec::new();
        for p in self.params_mut() {
            loaded.push(find(&p.name, &p.shape)?);
        }
        let mut stats = Vec::new();
        for layer in &self.layers {
            let c = layer.bn.channels;
            let base = layer.bn.gamma.name.trim_end_matches(".gamma");
            stats.push((
                find(&format!("{base}.running_mean"), &[c])?,
                find(&format!("{base}.running_var"), &[c])?,
            ));
        }
        for (p, v) in self.params_mut().into_iter().zip(loaded) {
            p.value = v;
        }
        for (layer, (m, v)) in self.layers.iter_mut().zip(stats) {
            layer.bn.running_mean = m;
            layer.bn.running_var = v;
        }
        Ok(())
    }

    /// Eval-mode masks for one clip.
    pub fn infer(&mut self, logmel: &LogMelSpectrogram) -> Result<MaskStack> {
        let x = logmel_tensor(std::slice::from_ref(logmel))?;
        let masks = self.forward(&x.cast(), Mode::Eval)?;
        Ok(MaskStack::from_tensor(&masks, 0))
    }
}

/// Stacks equal-length log-mel spectrograms into a `(batch, 1, time, mel)` tensor.
pub fn logmel_tensor(clips: &[LogMelSpectrogram]) -> Result<Tensor4<f32>> {
    let first = clips
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (t, m) = (first.n_frames, first.n_mels);
    let mut data = Vec::with_capacity(clips.len() * t * m);
    for c in clips {
        if c.n_frames != t || c.n_mels != m {
            return Err(Error::Shape(format!(
                "batch mixes {}x{} and {}x{} spectrograms",
                t, m, c.n_frames, c.n_mels
            )));
        }
        data.extend(c.values.iter().map(|&v| v as f32));
    }
    Tensor4::from_vec([clips.len(), 1, t, m], data)
}

/// Per-sample, per-class pooled probabilities: `out[b][k] = pool(h_bk)`.
pub fn pool_masks<T: Real>(masks: &Tensor4<T>, pooling: &Pooling) -> Result<Vec<Vec<T>>> {
    pooling.validate()?;
    (0..masks.batch())
        .map(|b| {
            (0..masks.channels())
                .map(|k| pooling.forward(masks.plane(b, k)))
                .collect()
        })
        .collect()
}

/// Mask gradient from per-sample, per-class gradients of the pooled values.
pub fn pool_masks_backward<T: Real>(
    masks: &Tensor4<T>,
    pooling: &Pooling,
    d_tags: &[Vec<T>],
) -> Result<Tensor4<T>> {
    let mut d = Tensor4::zeros(masks.dims);
    let p = masks.plane_len();
    let k_count = masks.channels();
    if d_tags.len() != masks.batch() || d_tags.iter().any(|v| v.len() != k_count) {
        return Err(Error::Shape("tag gradient does not match masks".into()));
    }
    for (b, row) in d_tags.iter().enumerate() {
        for (k, &g) in row.iter().enumerate() {
            let local = pooling.backward(masks.plane(b, k))?;
            let off = (b * k_count + k) * p;
            for (dst, l) in d.data[off..off + p].iter_mut().zip(local) {
                *dst = g * l;
            }
        }
    }
    Ok(d)
}

/// The `n_classes` masks of one clip, each `n_frames × n_mels` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    pub data: Vec<f32>,
    pub n_classes: usize,
    pub n_frames: usize,
    pub n_mels: usize,
}

impl MaskStack {
    pub fn new(data: Vec<f32>, n_classes: usize, n_frames: usize, n_mels: usize) -> Result<Self> {
        if data.len() != n_classes * n_frames * n_mels {
            return Err(Error::Shape(format!(
                "{} values for {n_classes}x{n_frames}x{n_mels} masks",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("mask values must lie in [0, 1]".into()));
        }
        Ok(MaskStack {
            data,
            n_classes,
            n_frames,
            n_mels,
        })
    }

    pub fn from_tensor<T: Real>(t: &Tensor4<T>, b: usize) -> Self {
        MaskStack {
            data: t.sample(b).iter().map(|v| v.as_f64() as f32).collect(),
            n_classes: t.dims[1],
            n_frames: t.dims[2],
            n_mels: t.dims[3],
        }
    }

    pub fn mask(&self, k: usize) -> &[f32] {
        let n = self.n_frames * self.n_mels;
        &self.data[k * n..(k + 1) * n]
    }
}

/// Clip-level presence probabilities, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct TagProbabilities(pub Vec<f64>);

pub fn predict_tags(masks: &MaskStack, pooling: &Pooling) -> Result<TagProbabilities> {
    pooling.validate()?;
    let p = (0..masks.n_classes)
        .map(|k| pooling.forward(masks.mask(k)).map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(TagProbabilities(p))
}
