//! Weakly-supervised sound event detection.
//!
//! A convolutional segmentation network maps a log-mel spectrogram to one
//! time-frequency mask per sound class. A global pooling reduces each mask to a
//! clip-level presence probability, so the whole model trains from clip-level
//! (weak) labels. At inference the masks give frame-wise activity, event lists
//! after thresholding, and separated waveforms after masking the STFT.

pub mod dataset;
pub mod cli;
pub mod datagen;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod pipeline;
pub mod pooling;
pub mod postprocess;
pub mod separation;
pub mod tensor_io;
pub mod training;

pub use error::{Error, Result};
