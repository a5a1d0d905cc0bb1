//! Cloud checkpoints (raw tensor + JSON header), orbital sweeps of a fitted
//! cloud and PNG previews.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{FrameImage, Intrinsics, OrbitTrajectory, OrbitalVideo};
use crate::splat::gaussian::{GaussianCloud4D, BASIS_LEN, PARAMS_PER_GAUSSIAN};
use crate::splat::raster::{render, RasterSettings};
use crate::tensor::RawTensor;

pub const CLOUD_VERSION: u32 = 1;
/// Highest polynomial power of the temporal basis.
pub const BASIS_DEGREE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudHeader {
    pub version: u32,
    pub count: usize,
    pub basis_degree: usize,
    pub basis_len: usize,
    pub params_per_gaussian: usize,
    pub background: [f64; 3],
}

/// Parameters are stored as f32.
pub fn save_cloud(path: &Path, cloud: &GaussianCloud4D) -> Result<()> {
    RawTensor::from_f64(vec![cloud.len(), PARAMS_PER_GAUSSIAN], &cloud.to_params())?.write(path)?;
    let header = CloudHeader {
        version: CLOUD_VERSION,
        count: cloud.len(),
        basis_degree: BASIS_DEGREE,
        basis_len: BASIS_LEN,
        params_per_gaussian: PARAMS_PER_GAUSSIAN,
        background: cloud.background,
    };
    let hp = path.with_extension("json");
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&hp, e))?;
    fs::write(&hp, text).map_err(|e| Error::io(&hp, e))
}

pub fn load_cloud(path: &Path) -> Result<GaussianCloud4D> {
    let hp = path.with_extension("json");
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: CloudHeader = serde_json::from_str(&text).map_err(|e| Error::json(&hp, e))?;
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if header.version != CLOUD_VERSION {
        return Err(format(format!("unsupported cloud version {}", header.version)));
    }
    if header.basis_degree != BASIS_DEGREE
        || header.basis_len != BASIS_LEN
        || header.params_per_gaussian != PARAMS_PER_GAUSSIAN
    {
        return Err(format("cloud uses a different temporal basis".into()));
    }
    let tensor = RawTensor::read(path)?;
    if tensor.dims != [header.count, PARAMS_PER_GAUSSIAN] {
        return Err(format(format!(
            "tensor dims {:?}, header says {} gaussians",
            tensor.dims, header.count
        )));
    }
    let cloud = GaussianCloud4D::from_params(&tensor.to_f64(), header.background)?;
    if !cloud.is_finite() {
        return Err(format("cloud contains non-finite parameters".into()));
    }
    Ok(cloud)
}

/// Render the cloud along `traj`, each frame at its own timestamp.
pub fn render_sweep(
    cloud: &GaussianCloud4D,
    traj: &OrbitTrajectory,
    intr: &Intrinsics,
    raster: &RasterSettings,
) -> OrbitalVideo {
    let frames = traj
        .poses
        .iter()
        .zip(&traj.timestamps)
        .map(|(p, &t)| render(cloud, p, t, intr, raster))
        .collect();
    OrbitalVideo {
        frames,
        trajectory: traj.clone(),
        is_static: false,
    }
}

/// 8-bit rgb preview; values are clamped to [0, 1] and rounded.
pub fn write_png(path: &Path, frame: &FrameImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), frame.width as u32, frame.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = frame
        .rgb
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let to_err = |e: png::EncodingError| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(to_err)?;
    writer.write_image_data(&bytes).map_err(to_err)?;
    writer.finish().map_err(to_err)
}
