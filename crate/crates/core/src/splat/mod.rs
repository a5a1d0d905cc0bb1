//! Differentiable 4D Gaussian splatting.

pub mod construct;
pub mod gaussian;
pub mod io;
pub mod loss;
pub mod optimize;
pub mod project;
pub mod raster;

pub use construct::{construct, construct_with_progress, init_cloud, video_views, ConstructConfig, ConstructReport, Stages};
pub use gaussian::{Gaussian3D, Gaussian4D, GaussianCloud4D, BASIS_LEN, PARAMS_PER_GAUSSIAN};
pub use io::{load_cloud, render_sweep, save_cloud, write_png, CloudHeader};
pub use loss::{splat_loss, splat_loss_with_grad, SplatLossParts, SplatLossWeights};
pub use optimize::{optimize, optimize_with_progress, view_loss_and_grad, LearningRates, OptimizeConfig, OptimizeReport, SplatView};
pub use raster::{render, render_backward, render_with_cache, FrameGrad, RasterCache, RasterSettings};
