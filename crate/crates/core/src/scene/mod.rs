//! Procedural animated assets and their orbital renders.

pub mod asset;
pub mod camera;
pub mod frame;
pub mod io;
pub mod render;
pub mod setup;
pub mod trajectory;

pub use asset::{sample_asset, AnimatedPrimitive, DynamicAsset, MotionProgram, Shape};
pub use camera::{CameraPose, Intrinsics};
pub use frame::{FrameImage, OrbitalVideo, VideoMeta, DEPTH_SENTINEL};
pub use render::{render_frame, render_orbital, RenderSettings};
pub use setup::OrbitSetup;
pub use trajectory::{build_trajectory, OrbitTrajectory};
