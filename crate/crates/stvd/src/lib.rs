//! Self-supervised denoising for low-SNR grayscale video.
//!
//! The library trains a compact encoder / temporal-bottleneck / decoder
//! network to reconstruct motion-augmented frame-difference targets from
//! three temporally strided input frames, then scores results with an
//! annotation-based foreground/background divergence metric alongside
//! classical PSNR/SSIM on synthetic ground truth.
//!
//! Module map:
//! - [`clip`], [`io`]: frame/clip/annotation types and their on-disk formats
//! - [`targets`]: reconstruction-target formulas
//! - [`autodiff`]: the tensor tape backing training
//! - [`model`]: the network and its checkpoint format
//! - [`trainer`]: training loop and full-clip inference
//! - [`metrics`]: divergence metric, PSNR/SSIM, blob-detection proxy
//! - [`synth`]: deterministic synthetic low-SNR video generator
//! - [`compose`]: classical per-frame processing and channel composition
//! - [`gradcheck`]: finite-difference verification suite
//!
//! See the crate `examples/` directory for runnable walkthroughs of each
//! capability, and the `stvd` binary for the command-line pipeline.

pub mod autodiff;
pub mod clip;
pub mod compose;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod targets;
pub mod trainer;

pub use error::{Error, Result};
