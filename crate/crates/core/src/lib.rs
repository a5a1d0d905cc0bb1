//! Orbital-video 4D generation toolkit.
//!
//! The crate covers the whole path from procedural dynamic assets to a fitted
//! 4D Gaussian-splat cloud:
//!
//! - [`scene`] renders animated assets along a camera orbit.
//! - [`curator`] scores and filters assets (SSIM probes, motion magnitude,
//!   alpha-map boundary checks).
//! - [`diffusion`] holds the motion-conditioned latent video denoiser, its
//!   losses, DDIM sampling and the three-term guidance.
//! - [`splat`] is the differentiable 4D Gaussian rasterizer and the
//!   coarse-to-fine construction.
//! - [`eval`] computes PSNR/SSIM reports.
//! - [`pipeline`] wires everything into workspace commands used by the CLI.

pub mod curator;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod optim;
pub mod pipeline;
pub mod scene;
pub mod splat;
pub mod tensor;

pub use error::{Error, Result};
