//! High-frequency attentive super-resolution and gaze estimation for
//! low-resolution face images.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense `f64` tensors with reverse-mode differentiation.
//! * [`spectral`]: orthonormal DCT, diagonal high-pass mask, HF extractor.
//! * [`blocks`]: channel attention, RCAB, HFAB, pixel shuffle, down/up blocks.
//! * [`sr`]: the super-resolution network.
//! * [`gaze`]: the five-branch gaze estimator.
//! * [`train`]: losses, Adam, pretraining and the alternating two-phase schedule.
//! * [`data`]: synthetic faces, bicubic resampling, metrics, PPM and checkpoints.
//! * [`overlay`]: gaze arrows drawn onto images.

pub mod blocks;
pub mod data;
pub mod error;
pub mod gaze;
pub mod overlay;
pub mod spectral;
pub mod sr;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
