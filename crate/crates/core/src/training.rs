//! Mini-batch training from weak labels, and the checkpoint container.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::clip_seed;
use crate::dsp::{FeatureConfig, LogMelSpectrogram};
use crate::error::{Error, Result};
use crate::network::{
    logmel_tensor, pool_masks, pool_masks_backward, NamedTensor, NetworkConfig, SegmentationNet,
};
use crate::nn::{bce_grad, bce_loss, AdamState, LossKind, Mode, Tensor4};
use crate::pooling::Pooling;
use crate::tensor_io::Cursor;

/// Predictions are clamped to `[P_CLAMP, 1 − P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub pooling: Pooling,
    pub seed: u64,
    /// Held-out fold; every other fold trains.
    pub fold: usize,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 24,
            lr: 0.001,
            epochs: 30,
            pooling: Pooling::Gwrp { r: 0.995 },
            seed: 0,
            fold: 0,
            loss: LossKind::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        self.pooling.validate()
    }
}

/// Shuffled clip indices for one epoch, keyed by `(seed, epoch)`; the last
/// batch keeps the remainder.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(clip_seed(seed, epoch as u64)));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Network, optimizer and bookkeeping of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: SegmentationNet<f32>,
    pub adam: AdamState<f32>,
    pub config: TrainConfig,
    pub epoch: usize,
    /// Mean training loss of each finished epoch.
    pub loss_log: Vec<f64>,
}

impl Trainer {
    pub fn new(network: NetworkConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            net: SegmentationNet::new(network, config.seed)?,
            adam: AdamState::new(config.lr),
            config,
            epoch: 0,
            loss_log: Vec::new(),
        })
    }

    /// Tag probabilities `p[b][k]` for a batch, without touching any state.
    pub fn predict(&mut self, x: &Tensor4<f32>, mode: Mode) -> Result<Vec<Vec<f32>>> {
        let masks = self.net.forward(x, mode)?;
        pool_masks(&masks, &self.config.pooling)
    }

    /// One optimizer step on a batch; returns the mean per-clip loss before the
    /// update. `Mode::Eval` freezes batch norm (running statistics are used and
    /// left untouched).
    pub fn train_step(&mut self, x: &Tensor4<f32>, y: &[Vec<f32>], mode: Mode) -> Result<f64> {
        let b = x.batch();
        if y.len() != b {
            return Err(Error::Shape(format!("{} label rows for batch {b}", y.len())));
        }
        self.net.zero_grad();
        let masks = self.net.forward(x, mode)?;
        let tags = pool_masks(&masks, &self.config.pooling)?;
        let mut loss = 0.0;
        let mut d_tags = Vec::with_capacity(b);
        let scale = 1.0 / b as f32;
        for (p, t) in tags.iter().zip(y) {
            loss += bce_loss(p, t, P_CLAMP, self.config.loss)?;
            let g = bce_grad(p, t, P_CLAMP, self.config.loss)?;
            d_tags.push(g.into_iter().map(|v| v * scale).collect::<Vec<_>>());
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {loss} at epoch {} (try a lower learning rate)",
                self.epoch
            )));
        }
        let d_masks = pool_masks_backward(&masks, &self.config.pooling, &d_tags)?;
        self.net.backward(&d_masks)?;
        let params = self.net.params_mut();
        self.adam.step(
            params
                .into_iter()
                .map(|p| (p.value.as_mut_slice(), p.grad.as_slice())),
        )?;
        Ok(loss)
    }

    /// Runs one epoch over `data`; returns and records the mean batch loss.
    pub fn run_epoch(&mut self, data: &TrainingSet) -> Result<f64> {
        let batches = make_batches(data.len(), self.config.batch_size, self.config.seed, self.epoch);
        let mut total = 0.0;
        let mut count = 0usize;
        for idx in &batches {
            let (x, y) = data.batch(idx)?;
            let loss = self.train_step(&x, &y, Mode::Train)?;
            total += loss * idx.len() as f64;
            count += idx.len();
        }
        let mean = total / count.max(1) as f64;
        self.loss_log.push(mean);
        self.epoch += 1;
        Ok(mean)
    }
}

/// Precomputed features and weak labels of the training clips.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Vec<LogMelSpectrogram>,
    pub labels: Vec<Vec<f32>>,
}

impl TrainingSet {
    pub fn new(features: Vec<LogMelSpectrogram>, weak: &[Vec<bool>]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Dataset("no training clips".into()));
        }
        if features.len() != weak.len() {
            return Err(Error::Shape(format!(
                "{} feature sets vs {} label rows",
                features.len(),
                weak.len()
            )));
        }
        let labels = weak
            .iter()
            .map(|w| w.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .collect();
        Ok(TrainingSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor4<f32>, Vec<Vec<f32>>)> {
        let feats: Vec<LogMelSpectrogram> = idx.iter().map(|&i| self.features[i].clone()).collect();
        let x = logmel_tensor(&feats)?;
        Ok((x, idx.iter().map(|&i| self.labels[i].clone()).collect()))
    }
}

/// Everything needed to rebuild, resume or audit a run, stored as the
/// `__config__` blob of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub features: FeatureConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub class_names: Vec<String>,
    pub epoch: usize,
    pub adam_step: u64,
    pub loss_log: Vec<f64>,
    /// Free-form provenance, e.g. the command line that produced the run.
    #[serde(default)]
    pub run: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// Network parameters and BN running statistics.
    pub tensors: Vec<NamedTensor<f32>>,
    /// Adam first and second moments, in parameter order.
    pub adam_m: Vec<NamedTensor<f32>>,
    pub adam_v: Vec<NamedTensor<f32>>,
}

impl Checkpoint {
    pub fn capture(
        trainer: &mut Trainer,
        features: &FeatureConfig,
        class_names: &[String],
        run: serde_json::Value,
    ) -> Self {
        let tensors = trainer.net.state();
        let shapes: Vec<(String, Vec<usize>)> = trainer
            .net
            .params_mut()
            .iter()
            .map(|p| (p.name.clone(), p.shape.clone()))
            .collect();
        let moments = |bufs: &[Vec<f32>], tag: &str| -> Vec<NamedTensor<f32>> {
            bufs.iter()
                .zip(&shapes)
                .map(|(b, (name, dims))| NamedTensor {
                    name: format!("adam.{tag}.{name}"),
                    dims: dims.clone(),
                    data: b.clone(),
                })
                .collect()
        };
        Checkpoint {
            meta: CheckpointMeta {
                features: features.clone(),
                network: trainer.net.config.clone(),
                train: trainer.config.clone(),
                class_names: class_names.to_vec(),
                epoch: trainer.epoch,
                adam_step: trainer.adam.step_count,
                loss_log: trainer.loss_log.clone(),
                run,
            },
            adam_m: moments(&trainer.adam.m, "m"),
            adam_v: moments(&trainer.adam.v, "v"),
            tensors,
        }
    }

    /// Builds the stored network.
    pub fn network(&self) -> Result<SegmentationNet<f32>> {
        let mut net = SegmentationNet::new(self.meta.network.clone(), self.meta.train.seed)?;
        net.load_state(&self.tensors)?;
        Ok(net)
    }

    /// Loads the stored weights into an existing network; fails on any mismatch.
    pub fn load_into(&self, net: &mut SegmentationNet<f32>) -> Result<()> {
        net.load_state(&self.tensors)
    }

    /// Rebuilds the trainer (network, optimizer, epoch, loss log) to continue training.
    pub fn trainer(&self) -> Result<Trainer> {
        let mut t = Trainer::new(self.meta.network.clone(), self.meta.train.clone())?;
        t.net.load_state(&self.tensors)?;
        t.epoch = self.meta.epoch;
        t.loss_log = self.meta.loss_log.clone();
        t.adam.step_count = self.meta.adam_step;
        t.adam.m = self.adam_m.iter().map(|n| n.data.clone()).collect();
        t.adam.v = self.adam_v.iter().map(|n| n.data.clone()).collect();
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_vec(&self.meta)?;
        let count = 1 + self.tensors.len() + self.adam_m.len() + self.adam_v.len();
        let mut body = Vec::new();
        push_record(&mut body, CONFIG_NAME, DTYPE_U8, &[config.len()], &config)?;
        for t in self.tensors.iter().chain(&self.adam_m).chain(&self.adam_v) {
            let payload: Vec<u8> = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            push_record(&mut body, &t.name, DTYPE_F32, &t.dims, &payload)?;
        }
        let mut out = Vec::with_capacity(body.len() + 20);
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(count as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        if cur.take(8).map_err(|_| bad_magic())? != CKPT_MAGIC {
            return Err(bad_magic());
        }
        let version = cur.u32()?;
        if version != CKPT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CKPT_VERSION,
            });
        }
        let count = cur.u32()? as usize;
        let body_start = cur.position();
        if bytes.len() < body_start + 4 {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&bytes[body_start..body_end]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut body = Cursor::new(&bytes[body_start..body_end]);
        let mut meta = None;
        let mut tensors = Vec::new();
        let (mut adam_m, mut adam_v) = (Vec::new(), Vec::new());
        for _ in 0..count {
            let name_len = body.u16()? as usize;
            let name = String::from_utf8(body.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let dtype = body.u8()?;
            let rank = body.u8()? as usize;
            let dims = (0..rank)
                .map(|_| body.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name}: dims overflow")))?;
            match dtype {
                DTYPE_U8 => {
                    let blob = body.take(n)?;
                    if name == CONFIG_NAME {
                        meta = Some(serde_json::from_slice::<CheckpointMeta>(blob)?);
                    }
                }
                DTYPE_F32 => {
                    let raw = body.take(n.checked_mul(4).ok_or_else(|| {
                        Error::Format(format!("tensor {name}: too large"))
                    })?)?;
                    let data: Vec<f32> = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    let t = NamedTensor { name, dims, data };
                    if t.name.starts_with("adam.m.") {
                        adam_m.push(t);
                    } else if t.name.starts_with("adam.v.") {
                        adam_v.push(t);
                    } else {
                        tensors.push(t);
                    }
                }
                other => {
                    return Err(Error::Format(format!("tensor {name}: unknown dtype {other}")))
                }
            }
        }
        if !body.is_at_end() {
            return Err(Error::Format("unexpected bytes after the last tensor".into()));
        }
        let meta = meta.ok_or_else(|| Error::Format("checkpoint has no __config__ blob".into()))?;
        Ok(Checkpoint {
            meta,
            tensors,
            adam_m,
            adam_v,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub const CKPT_MAGIC: &[u8; 8] = b"WSEDCKPT";
pub const CKPT_VERSION: u32 = 1;
const CONFIG_NAME: &str = "__config__";
const DTYPE_F32: u8 = 0;
/// Raw bytes; used only for the JSON config blob.
const DTYPE_U8: u8 = 1;

fn bad_magic() -> Error {
    Error::Format("not a checkpoint (bad magic, expected WSEDCKPT)".into())
}

fn push_record(out: &mut Vec<u8>, name: &str, dtype: u8, dims: &[usize], payload: &[u8]) -> Result<()> {
    let name_len = u16::try_from(name.len())
        .map_err(|_| Error::InvalidArgument(format!("tensor name too long: {name}")))?;
    out.extend_from_slice(&name_len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dtype);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(payload);
    Ok(())
}

/// Trains for `config.epochs` more epochs, calling `on_epoch(epoch, loss)` after each.
pub fn train(
    trainer: &mut Trainer,
    data: &TrainingSet,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<()> {
    if let Some(n) = data.labels.first().map(Vec::len) {
        if n != trainer.net.config.n_classes {
            return Err(Error::Shape(format!(
                "{n} label columns for a {}-class network",
                trainer.net.config.n_classes
            )));
        }
    }
    let target = trainer.config.epochs;
    while trainer.epoch < target {
        let loss = trainer.run_epoch(data)?;
        on_epoch(trainer.epoch, loss);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_examples() {
        let b = make_batches(10, 4, 1, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(make_batches(10, 4, 1, 0), b);
        assert_ne!(make_batches(100, 8, 1, 0), make_batches(100, 8, 1, 1));
        assert_ne!(make_batches(100, 8, 1, 0), make_batches(100, 8, 2, 0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        let bad = TrainConfig {
            pooling: Pooling::Gwrp { r: 1.5 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn tiny_net(k: usize) -> NetworkConfig {
        NetworkConfig {
            block_channels: vec![4],
            convs_per_block: 1,
            ..NetworkConfig::desk(8, k)
        }
    }

    fn features(n: usize, seed: u64) -> Vec<LogMelSpectrogram> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| LogMelSpectrogram {
                values: (0..16 * 8).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                n_frames: 16,
                n_mels: 8,
                frame_rate: 31.25,
            })
            .collect()
    }

    fn config(epochs: usize, batch: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: batch,
            lr: 0.01,
            pooling: Pooling::Gwrp { r: 0.9 },
            ..Default::default()
        }
    }

    #[test]
    fn overfits_identical_clips() {
        let x = vec![features(1, 3)[0].clone(); 8];
        let weak = vec![vec![true, false, true]; 8];
        let data = TrainingSet::new(x, &weak).unwrap();
        let mut t = Trainer::new(tiny_net(3), config(50, 4)).unwrap();
        train(&mut t, &data, |_, _| {}).unwrap();
        assert_eq!(t.loss_log.len(), 50);
        let last = *t.loss_log.last().unwrap();
        assert!(last < 0.05, "final loss {last}");
        assert!(last < t.loss_log[0]);
    }

    #[test]
    fn first_loss_is_near_chance() {
        // Untrained sigmoid outputs sit near 0.5, so each class costs about ln 2.
        let data = TrainingSet::new(features(6, 1), &vec![vec![true, false, false, true]; 6]).unwrap();
        let mut t = Trainer::new(tiny_net(4), config(1, 6)).unwrap();
        let (x, y) = data.batch(&[0, 1, 2, 3, 4, 5]).unwrap();
        let loss = t.train_step(&x, &y, Mode::Train).unwrap();
        let chance = 4.0 * std::f64::consts::LN_2;
        assert!(loss > 0.5 * chance && loss < 1.5 * chance, "loss {loss}");
    }

    #[test]
    fn one_step_raises_positive_probability() {
        let data = TrainingSet::new(features(1, 9), &[vec![true]]).unwrap();
        let mut cfg = config(1, 1);
        cfg.lr = 1e-3;
        let mut t = Trainer::new(tiny_net(1), cfg).unwrap();
        let (x, y) = data.batch(&[0]).unwrap();
        let before = t.predict(&x, Mode::Eval).unwrap()[0][0];
        t.train_step(&x, &y, Mode::Eval).unwrap();
        let after = t.predict(&x, Mode::Eval).unwrap()[0][0];
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = TrainingSet::new(features(10, 5), &vec![vec![true, false]; 10]).unwrap();
        let run = || {
            let mut t = Trainer::new(tiny_net(2), config(2, 4)).unwrap();
            train(&mut t, &data, |_, _| {}).unwrap();
            Checkpoint::capture(&mut t, &FeatureConfig::desk(), &["a".into(), "b".into()], serde_json::Value::Null)
                .to_bytes()
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_label_width_mismatch() {
        let data = TrainingSet::new(features(2, 5), &vec![vec![true]; 2]).unwrap();
        let mut t = Trainer::new(tiny_net(2), config(1, 2)).unwrap();
        assert!(matches!(train(&mut t, &data, |_, _| {}), Err(Error::Shape(_))));
        assert!(TrainingSet::new(features(2, 5), &[vec![true]]).is_err());
        assert!(TrainingSet::new(vec![], &[]).is_err());
    }

    fn trained_checkpoint() -> (Trainer, Checkpoint) {
        let data = TrainingSet::new(features(4, 2), &vec![vec![false, true]; 4]).unwrap();
        let mut t = Trainer::new(tiny_net(2), config(2, 2)).unwrap();
        train(&mut t, &data, |_, _| {}).unwrap();
        let names = vec!["bell".to_string(), "dog".to_string()];
        let ck = Checkpoint::capture(&mut t, &FeatureConfig::desk(), &names, serde_json::json!({"cmd": "test"}));
        (t, ck)
    }

    #[test]
    fn checkpoint_round_trip() {
        let (mut t, ck) = trained_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta.epoch, 2);
        assert_eq!(back.meta.loss_log.len(), 2);
        let x = logmel_tensor(&features(1, 7)).unwrap();
        let want = t.predict(&x, Mode::Eval).unwrap();
        let mut net = back.network().unwrap();
        let masks = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(pool_masks(&masks, &back.meta.train.pooling).unwrap(), want);
        // Resuming restores the optimizer exactly.
        let resumed = back.trainer().unwrap();
        assert_eq!(resumed.adam.step_count, t.adam.step_count);
        assert_eq!(resumed.adam.m, t.adam.m);
        assert_eq!(resumed.adam.v, t.adam.v);
    }

    #[test]
    fn resumed_training_matches_uninterrupted() {
        let data = TrainingSet::new(features(6, 4), &vec![vec![true, false]; 6]).unwrap();
        let mut full = Trainer::new(tiny_net(2), config(3, 4)).unwrap();
        train(&mut full, &data, |_, _| {}).unwrap();
        let mut part = Trainer::new(tiny_net(2), config(1, 4)).unwrap();
        train(&mut part, &data, |_, _| {}).unwrap();
        let bytes = Checkpoint::capture(&mut part, &FeatureConfig::desk(), &[], serde_json::Value::Null)
            .to_bytes()
            .unwrap();
        let mut resumed = Checkpoint::from_bytes(&bytes).unwrap().trainer().unwrap();
        resumed.config.epochs = 3;
        train(&mut resumed, &data, |_, _| {}).unwrap();
        assert_eq!(resumed.loss_log, full.loss_log);
        assert_eq!(resumed.net.state(), full.net.state());
    }

    #[test]
    fn checkpoint_corruption_is_detected() {
        let (_, ck) = trained_checkpoint();
        let bytes = ck.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Version { found: 9, .. })));

        let mut bad = bytes.clone();
        let mid = bytes.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checksum { .. })));

        for cut in [3, 12, 17, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }

        let mut other = Trainer::new(tiny_net(3), config(1, 1)).unwrap();
        assert!(matches!(ck.load_into(&mut other.net), Err(Error::Shape(_))));
    }
}
