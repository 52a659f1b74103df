//! Synthetic data, resampling, image metrics and on-disk formats.

pub mod checkpoint;
pub mod dataset;
pub mod metrics;
pub mod ppm;
pub mod resize;
pub mod synth;

pub use checkpoint::Checkpoint;
pub use dataset::{split_by_identity, Split};
pub use metrics::{angular_error, psnr, ssim};
pub use resize::bicubic_resize;
pub use synth::{synth_sample, FaceSample};
