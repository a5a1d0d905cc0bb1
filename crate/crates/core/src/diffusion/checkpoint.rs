//! Denoiser checkpoints: parameters as a raw tensor plus a JSON header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::network::{Denoiser, DenoiserConfig};
use crate::diffusion::schedule::ScheduleConfig;
use crate::error::{Error, Result};
use crate::tensor::RawTensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub architecture: DenoiserConfig,
    pub architecture_hash: String,
    pub schedule: ScheduleConfig,
    pub trained_steps: usize,
    pub motion_scale: f64,
    pub param_count: usize,
}

pub fn header_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

/// Parameters are stored as f32, so a reloaded model is the rounded one.
pub fn save_checkpoint(path: &Path, net: &Denoiser, schedule: &ScheduleConfig) -> Result<()> {
    RawTensor::from_f64(vec![net.param_count()], &net.params)?.write(path)?;
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        architecture: net.config,
        architecture_hash: net.config.architecture_hash(),
        schedule: *schedule,
        trained_steps: net.trained_steps,
        motion_scale: net.motion_scale,
        param_count: net.param_count(),
    };
    let hp = header_path(path);
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&hp, e))?;
    fs::write(&hp, text).map_err(|e| Error::io(&hp, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Denoiser, ScheduleConfig)> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::json(&hp, e))?;
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if header.version != CHECKPOINT_VERSION {
        return Err(format(format!("unsupported checkpoint version {}", header.version)));
    }
    if header.architecture.architecture_hash() != header.architecture_hash {
        return Err(format("architecture hash does not match its description".into()));
    }
    let tensor = RawTensor::read(path)?;
    if tensor.dims != [header.param_count] {
        return Err(format(format!(
            "parameter tensor dims {:?}, header says {}",
            tensor.dims, header.param_count
        )));
    }
    let mut net = Denoiser::from_params(header.architecture, tensor.to_f64())
        .map_err(|e| format(e.to_string()))?;
    net.trained_steps = header.trained_steps;
    net.motion_scale = header.motion_scale;
    Ok((net, header.schedule))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.orb4d");
        let mut net = Denoiser::new(DenoiserConfig::default(), 4).unwrap();
        net.trained_steps = 12;
        net.motion_scale = 0.02;
        save_checkpoint(&path, &net, &ScheduleConfig::default()).unwrap();
        let (back, sched) = load_checkpoint(&path).unwrap();
        assert_eq!(sched, ScheduleConfig::default());
        assert_eq!(back.trained_steps, 12);
        assert_eq!(back.motion_scale, 0.02);
        for (a, b) in back.params.iter().zip(&net.params) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn tampered_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.orb4d");
        let net = Denoiser::new(DenoiserConfig::default(), 4).unwrap();
        save_checkpoint(&path, &net, &ScheduleConfig::default()).unwrap();
        let hp = header_path(&path);
        let text = fs::read_to_string(&hp).unwrap().replace("\"hidden\": 8", "\"hidden\": 9");
        fs::write(&hp, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
