//! Coarse-to-fine construction of a 4D cloud from a dynamic orbital video and
//! its static counterpart.

use glam::DVec3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Intrinsics, OrbitalVideo};
use crate::splat::gaussian::{Gaussian4D, GaussianCloud4D};
use crate::splat::optimize::{optimize_with_progress, LearningRates, OptimizeConfig, SplatView};

/// Which optimization stages run. Every variant spends the same total
/// iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stages {
    /// Coarse on dynamic + static frames, then fine on dynamic frames.
    Full,
    /// Coarse stage only.
    WithoutFine,
    /// Dynamic frames only, initialized from the dynamic video.
    WithoutCoarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructConfig {
    pub gaussians: usize,
    pub coarse_iterations: usize,
    pub fine_iterations: usize,
    pub stages: Stages,
    pub init_scale: f64,
    pub init_opacity: f64,
    /// Sphere used to place samples from frames without depth.
    pub init_radius: f64,
    pub background: [f64; 3],
    /// `iterations` is ignored; the stage counts above apply.
    pub optimize: OptimizeConfig,
    pub seed: u64,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        Self {
            gaussians: 4096,
            coarse_iterations: 5000,
            fine_iterations: 2000,
            stages: Stages::Full,
            init_scale: 0.03,
            init_opacity: 0.3,
            init_radius: 0.6,
            background: [0.5; 3],
            optimize: OptimizeConfig { batch_size: 1, ..Default::default() },
            seed: 0,
        }
    }
}

impl ConstructConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gaussians == 0 {
            return Err(Error::invalid("gaussians must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_radius > 0.0) {
            return Err(Error::invalid("init_scale and init_radius must be positive"));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return Err(Error::invalid("init_opacity must lie in (0, 1)"));
        }
        self.optimize.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstructReport {
    pub coarse_losses: Vec<f64>,
    pub fine_losses: Vec<f64>,
}

/// Supervision views of a video; static videos are pinned to their first
/// timestamp.
pub fn video_views(video: &OrbitalVideo) -> Vec<SplatView> {
    let t0 = video.trajectory.timestamps.first().copied().unwrap_or(0.0);
    video
        .frames
        .iter()
        .zip(&video.trajectory.poses)
        .zip(&video.trajectory.timestamps)
        .map(|((f, p), &t)| SplatView {
            frame: f.clone(),
            pose: *p,
            tau: if video.is_static { t0 } else { t },
        })
        .collect()
}

fn ray_sphere(origin: DVec3, dir: DVec3, radius: f64) -> Option<f64> {
    let b = origin.dot(dir);
    let c = origin.length_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Back-project alpha-weighted pixel samples of `video` into Gaussians.
/// Pixels with a depth value are placed at that depth; the rest land on the
/// init sphere.
pub fn init_cloud(video: &OrbitalVideo, intr: &Intrinsics, cfg: &ConstructConfig) -> Result<GaussianCloud4D> {
    cfg.validate()?;
    let px = intr.width * intr.height;
    let weights: Vec<f64> = video
        .frames
        .iter()
        .flat_map(|f| f.alpha.iter().map(|a| a.clamp(0.0, 1.0)))
        .collect();
    if video.frames.iter().any(|f| f.pixel_count() != px) {
        return Err(Error::invalid("video frames do not match the intrinsics"));
    }
    let dist = WeightedIndex::new(&weights)
        .map_err(|_| Error::invalid("static video has no foreground pixels to initialize from"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gaussians = Vec::with_capacity(cfg.gaussians);
    let mut attempts = 0usize;
    while gaussians.len() < cfg.gaussians {
        attempts += 1;
        if attempts > 64 * cfg.gaussians {
            return Err(Error::invalid("too few foreground pixels intersect the init sphere"));
        }
        let k = dist.sample(&mut rng);
        let (fi, q) = (k / px, k % px);
        let frame = &video.frames[fi];
        let pose = &video.trajectory.poses[fi];
        let (x, y) = (q % intr.width, q / intr.width);
        let ray_cam = intr.ray(x as f64 + 0.5, y as f64 + 0.5);
        let cam_to_world = pose.rotation().transpose();
        let dir = cam_to_world * ray_cam;
        let eye = pose.eye();
        let point = if frame.depth[q] > 0.0 {
            eye + dir * (frame.depth[q] / ray_cam.z)
        } else {
            match ray_sphere(eye - DVec3::from(pose.target), dir, cfg.init_radius) {
                Some(t) => eye + dir * t,
                None => continue,
            }
        };
        let color = [0, 1, 2].map(|c| frame.rgb[3 * q + c].clamp(0.0, 1.0));
        gaussians.push(Gaussian4D::isotropic(point.to_array(), cfg.init_scale, cfg.init_opacity, color));
    }
    Ok(GaussianCloud4D::new(gaussians, cfg.background))
}

/// Position learning rates of two consecutive stages that together follow
/// one exponential decay.
fn split_schedule(lr: &LearningRates, first: usize, second: usize) -> (LearningRates, LearningRates) {
    let total = (first + second).max(1) as f64;
    let ratio = if lr.position > 0.0 && lr.position_final > 0.0 {
        lr.position_final / lr.position
    } else {
        1.0
    };
    let mid = ratio.powf(first as f64 / total);
    let a = LearningRates {
        position_final: lr.position * mid,
        ..*lr
    };
    let b = LearningRates {
        position: lr.position * mid,
        motion: lr.motion * mid,
        ..*lr
    };
    (a, b)
}

pub fn construct(
    v: &OrbitalVideo,
    v_static: &OrbitalVideo,
    intr: &Intrinsics,
    cfg: &ConstructConfig,
) -> Result<(GaussianCloud4D, ConstructReport)> {
    construct_with_progress(v, v_static, intr, cfg, |_, _, _| {})
}

/// `progress(stage, iteration, loss)` with stage `"coarse"` or `"fine"`.
pub fn construct_with_progress(
    v: &OrbitalVideo,
    v_static: &OrbitalVideo,
    intr: &Intrinsics,
    cfg: &ConstructConfig,
    mut progress: impl FnMut(&str, usize, f64),
) -> Result<(GaussianCloud4D, ConstructReport)> {
    cfg.validate()?;
    if v.is_empty() || v_static.is_empty() {
        return Err(Error::invalid("construction needs non-empty dynamic and static videos"));
    }
    let dynamic = video_views(v);
    let mut merged = dynamic.clone();
    merged.extend(video_views(v_static));

    let (first, second) = match cfg.stages {
        Stages::Full => (cfg.coarse_iterations, cfg.fine_iterations),
        Stages::WithoutFine | Stages::WithoutCoarse => (cfg.coarse_iterations + cfg.fine_iterations, 0),
    };
    let (lr_a, lr_b) = split_schedule(&cfg.optimize.lr, first, second);
    let init_source = if cfg.stages == Stages::WithoutCoarse { v } else { v_static };
    let first_views = if cfg.stages == Stages::WithoutCoarse { &dynamic } else { &merged };

    let cloud = init_cloud(init_source, intr, cfg)?;
    let mut report = ConstructReport::default();
    let opt_a = OptimizeConfig { iterations: first, lr: lr_a, seed: cfg.seed, ..cfg.optimize };
    let (mut cloud, rep) = optimize_with_progress(&cloud, first_views, intr, &opt_a, |i, l| progress("coarse", i, l))?;
    report.coarse_losses = rep.losses;
    if second > 0 {
        let opt_b = OptimizeConfig { iterations: second, lr: lr_b, seed: cfg.seed ^ 0x5eed, ..cfg.optimize };
        let (c, rep) = optimize_with_progress(&cloud, &dynamic, intr, &opt_b, |i, l| progress("fine", i, l))?;
        cloud = c;
        report.fine_losses = rep.losses;
    }
    Ok((cloud, report))
}
