//! Versioned JSON pipeline configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curator::{CurationRule, SsimParams};
use crate::diffusion::{DenoiserConfig, SampleConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::scene::OrbitSetup;
use crate::splat::ConstructConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub assets: usize,
    /// Assigned to assets in turn.
    pub motion_scales: Vec<f64>,
    pub labels: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            assets: 4,
            motion_scales: vec![1.0],
            labels: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub s_high: f64,
    pub s_low: f64,
    pub boundary_margin: usize,
    pub ssim: SsimParams,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            s_high: 0.95,
            s_low: 0.4,
            boundary_margin: 1,
            ssim: SsimParams::default(),
        }
    }
}

impl CurationConfig {
    pub fn rule(&self, frames: usize) -> CurationRule {
        CurationRule {
            s_high: self.s_high,
            s_low: self.s_low,
            boundary_margin: self.boundary_margin,
            ..CurationRule::for_frames(frames)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct DiffusionConfig {
    /// Architecture and noise schedule shared by the dynamic and static models.
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    /// Normalized motion magnitude fed at sampling time; `None` uses each
    /// asset's own measured magnitude.
    pub motion: Option<f64>,
}


/// What the reconstruction stage fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructSource {
    /// Videos generated by the sample stage.
    Sample,
    /// Ground-truth dynamic renders from the dataset.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplatStageConfig {
    pub source: ReconstructSource,
    pub construct: ConstructConfig,
    /// Frame indices of the held-out sweep written as PNG previews.
    pub previews: Vec<usize>,
}

impl Default for SplatStageConfig {
    fn default() -> Self {
        Self {
            source: ReconstructSource::Sample,
            construct: ConstructConfig::default(),
            previews: vec![0, 6, 12, 18],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct EvalConfig {
    pub ssim: SsimParams,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub scene: OrbitSetup,
    pub dataset: DatasetConfig,
    pub curation: CurationConfig,
    pub diffusion: DiffusionConfig,
    pub splat: SplatStageConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            scene: OrbitSetup::default(),
            dataset: DatasetConfig::default(),
            curation: CurationConfig::default(),
            diffusion: DiffusionConfig::default(),
            splat: SplatStageConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("<config>", e))
    }

    /// Hex sha256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Every range check of the downstream stages.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "config schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.scene.validate()?;
        let r = &self.scene.render;
        if !r.width.is_multiple_of(4) || !r.height.is_multiple_of(4) {
            return Err(Error::invalid("frame size must be a multiple of the latent factor 4"));
        }
        if self.dataset.assets == 0 {
            return Err(Error::invalid("dataset.assets must be positive"));
        }
        if self.dataset.motion_scales.is_empty()
            || self.dataset.motion_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::invalid("dataset.motion_scales must be non-empty, finite and >= 0"));
        }
        if self.dataset.labels == 0 || self.dataset.labels as usize > self.diffusion.denoiser.num_labels {
            return Err(Error::invalid("dataset.labels must lie in 1..=denoiser.num_labels"));
        }
        self.curation.rule(self.scene.frames).validate(self.scene.frames)?;
        self.curation.ssim.validate()?;
        let m = self.curation.boundary_margin;
        if 2 * m >= r.width.min(r.height) {
            return Err(Error::invalid("boundary margin must be below half the frame size"));
        }
        self.diffusion.denoiser.validate()?;
        self.diffusion.train.validate()?;
        self.diffusion.sample.weights.validate()?;
        if self.diffusion.sample.steps == 0 || self.diffusion.sample.steps > self.diffusion.denoiser.schedule.train_steps {
            return Err(Error::invalid("sample.steps must lie in 1..=train_steps"));
        }
        if let Some(m) = self.diffusion.motion {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::invalid("diffusion.motion must lie in [0, 1]"));
            }
        }
        self.splat.construct.validate()?;
        let ssim_window = self.splat.construct.optimize.weights.ssim.window;
        if ssim_window > r.width.min(r.height) || self.eval.ssim.window > r.width.min(r.height) {
            return Err(Error::invalid("ssim window exceeds the frame size"));
        }
        if self.splat.previews.iter().any(|&i| i >= self.scene.frames) {
            return Err(Error::invalid("preview index out of range"));
        }
        self.eval.ssim.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_json().unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"schema_version": 1, "seed": 9}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scene.frames, 24);
        assert_eq!(cfg.splat.construct.coarse_iterations, 5000);
        assert_eq!(cfg.diffusion.train.learning_rate, 3e-5);

        let nested: PipelineConfig =
            serde_json::from_str(r#"{"scene": {"render": {"width": 16}}, "diffusion": {"sample": {"weights": {"w2": 1.5}}}}"#).unwrap();
        assert_eq!(nested.scene.render.width, 16);
        assert_eq!(nested.scene.render.height, PipelineConfig::default().scene.render.height);
        assert_eq!(nested.diffusion.sample.weights.w1, 7.0);
        assert_eq!(nested.diffusion.sample.weights.w2, 1.5);
        assert_eq!(nested.diffusion.sample.steps, 50);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.schema_version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.curation.s_low = 0.99;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.scene.render.width = 30;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.diffusion.train.omega = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.splat.construct.gaussians = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
