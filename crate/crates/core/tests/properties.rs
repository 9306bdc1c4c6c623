use proptest::prelude::*;

use wsed::datagen::{class_catalogue, random_recipe, DatasetConfig};
use wsed::dsp::{hann_window, istft, stft, FeatureConfig, Waveform};
use wsed::network::NetworkConfig;
use wsed::pooling::Pooling;
use wsed::tensor_io::{read_tensor, write_tensor};
use wsed::training::{make_batches, Checkpoint, TrainConfig, Trainer};

fn tiny_checkpoint() -> Vec<u8> {
    let net = NetworkConfig {
        block_channels: vec![2],
        convs_per_block: 1,
        ..NetworkConfig::desk(4, 2)
    };
    let cfg = TrainConfig {
        pooling: Pooling::Gap,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(net, cfg).unwrap();
    Checkpoint::capture(&mut t, &FeatureConfig::desk(), &["a".into(), "b".into()], serde_json::Value::Null)
        .to_bytes()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batches_partition_every_epoch(n in 0usize..200, b in 1usize..40, seed in any::<u64>(), epoch in 0usize..50) {
        let batches = make_batches(n, b, seed, epoch);
        prop_assert_eq!(batches.len(), n.div_ceil(b));
        prop_assert!(batches.iter().rev().skip(1).all(|x| x.len() == b));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn tensor_container_round_trips(dims in prop::collection::vec(1usize..6, 1..4), seed in any::<u32>()) {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37 + seed as f32).sin()).collect();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &dims, &data).unwrap();
        let back = read_tensor(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.dims, dims);
        prop_assert_eq!(back.data, data);
    }

    #[test]
    fn any_checkpoint_byte_flip_is_rejected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = tiny_checkpoint();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn stft_round_trip_interior(n in 600usize..3000, seed in any::<u64>(), half in any::<bool>()) {
        let w = 256;
        let hop = if half { w / 2 } else { w / 4 };
        let window = hann_window(w);
        let x: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 500.0 - 1.0).collect();
        let spec = stft(&Waveform::new(x.clone(), 8000).unwrap(), w, hop, &window).unwrap();
        let y = istft(&spec, &window).unwrap();
        let end = (spec.n_frames - 1) * hop + w - hop;
        for i in hop..end {
            prop_assert!((y.samples[i] - x[i]).abs() < 1e-9, "sample {}", i);
        }
    }

    #[test]
    fn recipes_place_disjoint_events_inside_the_clip(seed in any::<u64>(), k in 1usize..=8, per_clip in 1usize..=4) {
        let cfg = DatasetConfig { n_classes: k, events_per_clip: per_clip, ..DatasetConfig::default() };
        let classes = class_catalogue()[..k].to_vec();
        let longest = classes.iter().map(|c| c.duration.1).fold(0.0, f64::max);
        // Configs whose events cannot fit are refused up front.
        prop_assert_eq!(cfg.validate().is_ok(), longest * per_clip as f64 <= cfg.clip_seconds);
        prop_assume!(cfg.validate().is_ok());
        let r = random_recipe(&cfg, &classes, seed, 0.0);
        prop_assert_eq!(r.events.len(), per_clip);
        let mut end = 0.0;
        for e in &r.events {
            let (lo, hi) = classes[e.class].duration;
            prop_assert!(e.duration >= lo - 1e-4 && e.duration <= hi + 1e-4);
            prop_assert!(e.onset >= end - 1e-9);
            end = e.onset + e.duration;
        }
        prop_assert!(end <= cfg.clip_seconds + 1e-9);
    }
}
