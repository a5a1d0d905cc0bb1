//! On-disk orbital videos: a `[T, H, W, 5]` raw tensor (r, g, b, alpha,
//! depth) plus a JSON sidecar with the trajectory and asset provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::frame::{FrameImage, OrbitalVideo, VideoMeta};
use crate::scene::trajectory::{build_trajectory, OrbitTrajectory};
use crate::tensor::RawTensor;

pub const VIDEO_CHANNELS: [&str; 5] = ["r", "g", "b", "alpha", "depth"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSidecar {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<String>,
    pub elevation: f64,
    pub distance: f64,
    pub start_azimuth: f64,
    pub azimuths: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub seed: u64,
    pub motion_scale: f64,
    pub label: u32,
    pub is_static: bool,
}

pub fn sidecar_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

pub fn video_to_tensor(video: &OrbitalVideo) -> Result<RawTensor> {
    let (w, h) = video.dims();
    let mut data = Vec::with_capacity(video.len() * w * h * 5);
    for f in &video.frames {
        if f.width != w || f.height != h {
            return Err(Error::invalid("frames of one video must share dimensions"));
        }
        for p in 0..w * h {
            data.extend_from_slice(&[
                f.rgb[3 * p] as f32,
                f.rgb[3 * p + 1] as f32,
                f.rgb[3 * p + 2] as f32,
                f.alpha[p] as f32,
                f.depth[p] as f32,
            ]);
        }
    }
    RawTensor::new(vec![video.len(), h, w, 5], data)
}

pub fn write_video(path: &Path, video: &OrbitalVideo, meta: &VideoMeta) -> Result<()> {
    let (w, h) = video.dims();
    let traj = &video.trajectory;
    video_to_tensor(video)?.write(path)?;
    let sidecar = VideoSidecar {
        frames: video.len(),
        width: w,
        height: h,
        channels: VIDEO_CHANNELS.iter().map(|s| s.to_string()).collect(),
        elevation: traj.elevation(),
        distance: traj.distance(),
        start_azimuth: traj.start_azimuth,
        azimuths: traj.poses.iter().map(|p| p.azimuth).collect(),
        timestamps: traj.timestamps.clone(),
        seed: meta.seed,
        motion_scale: meta.motion_scale,
        label: meta.label,
        is_static: video.is_static,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&side, e))?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_video(path: &Path) -> Result<(OrbitalVideo, VideoMeta)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: VideoSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    let tensor = RawTensor::read(path)?;
    let expected = vec![sidecar.frames, sidecar.height, sidecar.width, 5];
    if tensor.dims != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("tensor dims {:?}, sidecar implies {expected:?}", tensor.dims),
        });
    }
    let trajectory = build_trajectory(
        sidecar.frames,
        sidecar.elevation,
        sidecar.distance,
        sidecar.start_azimuth,
    )?;
    let frames = tensor_to_frames(&tensor)?;
    Ok((
        OrbitalVideo {
            frames,
            trajectory,
            is_static: sidecar.is_static,
        },
        VideoMeta {
            seed: sidecar.seed,
            motion_scale: sidecar.motion_scale,
            label: sidecar.label,
        },
    ))
}

pub fn tensor_to_frames(tensor: &RawTensor) -> Result<Vec<FrameImage>> {
    let [t, h, w, c] = tensor.dims[..] else {
        return Err(Error::invalid("video tensor must have rank 4"));
    };
    if c != 5 {
        return Err(Error::invalid("video tensor must have 5 channels"));
    }
    Ok((0..t)
        .map(|i| {
            let chunk = &tensor.data[i * h * w * 5..(i + 1) * h * w * 5];
            let mut f = FrameImage {
                width: w,
                height: h,
                rgb: Vec::with_capacity(h * w * 3),
                alpha: Vec::with_capacity(h * w),
                depth: Vec::with_capacity(h * w),
            };
            for px in chunk.chunks_exact(5) {
                f.rgb.extend(px[..3].iter().map(|&v| v as f64));
                f.alpha.push(px[3] as f64);
                f.depth.push(px[4] as f64);
            }
            f
        })
        .collect())
}

/// Build a video for a trajectory from frames stored elsewhere.
pub fn video_from_frames(
    frames: Vec<FrameImage>,
    trajectory: OrbitTrajectory,
    is_static: bool,
) -> Result<OrbitalVideo> {
    if frames.len() != trajectory.len() {
        return Err(Error::invalid(format!(
            "{} frames for a {}-pose trajectory",
            frames.len(),
            trajectory.len()
        )));
    }
    Ok(OrbitalVideo {
        frames,
        trajectory,
        is_static,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::asset::sample_asset;
    use crate::scene::render::{render_orbital, RenderSettings};

    #[test]
    fn video_roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let settings = RenderSettings {
            width: 12,
            height: 10,
            ..Default::default()
        };
        let asset = sample_asset(5, 1.0, 2);
        let traj = build_trajectory(4, 0.0, 2.0, 30.0).unwrap();
        let video = render_orbital(&asset, &traj, true, &settings).unwrap();
        let meta = VideoMeta {
            seed: 5,
            motion_scale: 1.0,
            label: 2,
        };
        let path = dir.path().join("v.orb4d");
        write_video(&path, &video, &meta).unwrap();
        let (back, back_meta) = read_video(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.trajectory, video.trajectory);
        assert!(!back.is_static);
        for (a, b) in back.frames.iter().zip(&video.frames) {
            for (x, y) in a.rgb.iter().zip(&b.rgb) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let side: VideoSidecar =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side.azimuths, vec![30.0, 120.0, 210.0, 300.0]);
        assert_eq!(side.channels.len(), 5);
    }
}
