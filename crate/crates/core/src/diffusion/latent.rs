//! Latent video tensors and the fixed area-downsampling codec that stands in
//! for a learned autoencoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{FrameImage, OrbitalVideo};

/// Spatial reduction factor of the codec.
pub const LATENT_FACTOR: usize = 4;
pub const LATENT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentShape {
    pub fn numel(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Latent shape produced by encoding a `frames × height × width` video.
    pub fn for_video(frames: usize, height: usize, width: usize) -> Result<Self> {
        if !height.is_multiple_of(LATENT_FACTOR) || !width.is_multiple_of(LATENT_FACTOR) || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "frame size {width}x{height} must be a positive multiple of {LATENT_FACTOR}"
            )));
        }
        Ok(Self {
            frames,
            height: height / LATENT_FACTOR,
            width: width / LATENT_FACTOR,
            channels: LATENT_CHANNELS,
        })
    }
}

/// `frames × height × width × channels` tensor, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    pub shape: LatentShape,
    pub data: Vec<f64>,
}

impl LatentVideo {
    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn from_data(shape: LatentShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(format!(
                "latent data has {} values, shape {shape:?} needs {}",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn same_shape(&self, other: &LatentVideo) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "latent shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.shape.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn map2(&self, other: &LatentVideo, f: impl Fn(f64, f64) -> f64) -> Result<LatentVideo> {
        self.same_shape(other)?;
        Ok(LatentVideo {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, k: f64) -> LatentVideo {
        LatentVideo {
            shape: self.shape,
            data: self.data.iter().map(|v| k * v).collect(),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Average each `4 × 4` pixel block; rgb passes through as the three latent
/// channels.
pub fn encode_frames(frames: &[FrameImage]) -> Result<LatentVideo> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("cannot encode an empty video"))?;
    let shape = LatentShape::for_video(frames.len(), first.height, first.width)?;
    let (lh, lw, c) = (shape.height, shape.width, shape.channels);
    let inv = 1.0 / (LATENT_FACTOR * LATENT_FACTOR) as f64;
    let mut data = vec![0.0; shape.numel()];
    for (t, f) in frames.iter().enumerate() {
        first.same_dims(f)?;
        let out = &mut data[t * shape.frame_len()..(t + 1) * shape.frame_len()];
        for y in 0..f.height {
            for x in 0..f.width {
                let dst = ((y / LATENT_FACTOR) * lw + x / LATENT_FACTOR) * c;
                let src = (y * f.width + x) * 3;
                for k in 0..c {
                    out[dst + k] += f.rgb[src + k];
                }
            }
        }
        debug_assert_eq!(out.len(), lh * lw * c);
    }
    for v in data.iter_mut() {
        *v *= inv;
    }
    Ok(LatentVideo { shape, data })
}

pub fn encode(video: &OrbitalVideo) -> Result<LatentVideo> {
    encode_frames(&video.frames)
}

/// Nearest-neighbour ×4 upsampling back to rgb frames. Values are not
/// clamped; alpha is set to 1 and depth to the sentinel.
pub fn decode(latent: &LatentVideo) -> Vec<FrameImage> {
    let s = latent.shape;
    let (h, w) = (s.height * LATENT_FACTOR, s.width * LATENT_FACTOR);
    (0..s.frames)
        .map(|t| {
            let src = latent.frame(t);
            let mut rgb = Vec::with_capacity(h * w * 3);
            for y in 0..h {
                for x in 0..w {
                    let p = ((y / LATENT_FACTOR) * s.width + x / LATENT_FACTOR) * s.channels;
                    rgb.extend_from_slice(&src[p..p + 3]);
                }
            }
            FrameImage {
                width: w,
                height: h,
                rgb,
                alpha: vec![1.0; h * w],
                depth: vec![crate::scene::DEPTH_SENTINEL; h * w],
            }
        })
        .collect()
}

/// Clamp decoded frames into the displayable range.
pub fn clamp_frames(frames: &mut [FrameImage]) {
    for f in frames {
        for v in f.rgb.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
}
