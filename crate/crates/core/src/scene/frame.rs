use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::trajectory::OrbitTrajectory;

/// Depth written where no surface covers a pixel.
pub const DEPTH_SENTINEL: f64 = 0.0;

/// One rendered view: linear rgb, coverage alpha and camera-space depth.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    /// `height * width * 3`, row-major, channel-last.
    pub rgb: Vec<f64>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
}

impl FrameImage {
    pub fn background(width: usize, height: usize, color: [f64; 3]) -> Self {
        let rgb = (0..width * height).flat_map(|_| color).collect();
        Self {
            width,
            height,
            rgb,
            alpha: vec![0.0; width * height],
            depth: vec![DEPTH_SENTINEL; width * height],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_dims(&self, other: &FrameImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::invalid(format!(
                "frame size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.rgb
            .iter()
            .chain(&self.alpha)
            .chain(&self.depth)
            .all(|v| v.is_finite())
    }

    pub fn covered_pixels(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }
}

/// An orbital sweep of one asset; `is_static` marks the frozen-time counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalVideo {
    pub frames: Vec<FrameImage>,
    pub trajectory: OrbitTrajectory,
    pub is_static: bool,
}

impl OrbitalVideo {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames
            .first()
            .map(|f| (f.width, f.height))
            .unwrap_or((0, 0))
    }
}

/// Provenance carried alongside a stored video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub seed: u64,
    pub motion_scale: f64,
    pub label: u32,
}
