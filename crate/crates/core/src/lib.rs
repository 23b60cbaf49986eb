//! Reconstruction of audio band-power spectrograms from EEG band-power
//! features.
//!
//! The pipeline resamples and bandpasses EEG, computes 4-band power
//! spectrograms over 64-sample windows for the T7/T8 temporal channels and
//! for the audio stimulus, and fits ridge regressions from EEG to audio
//! features under leave-one-stimulus-out cross-validation. Reconstructions
//! are scored with Pearson correlation and per-subject Fisher-fused p-values.

// `!(x >= 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod regression;
pub mod sigproc;
pub mod spectrogram;
pub mod stats;

pub use error::{Error, Result};
