//! Photometric fitting of a Gaussian cloud to posed, timestamped frames.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::scene::{CameraPose, FrameImage, Intrinsics};
use crate::splat::gaussian::{offset, GaussianCloud4D, PARAMS_PER_GAUSSIAN};
use crate::splat::loss::{splat_loss_with_grad, SplatLossWeights};
use crate::splat::raster::{render_backward, render_with_cache, RasterSettings};

/// One supervision frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatView {
    pub frame: FrameImage,
    pub pose: CameraPose,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    /// Position and motion coefficients; decays exponentially to `position_final`.
    pub position: f64,
    pub position_final: f64,
    pub motion: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-3,
            position_final: 1.6e-5,
            motion: 1.6e-3,
            log_scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 1e-2,
        }
    }
}

impl LearningRates {
    fn all(&self) -> [f64; 7] {
        [
            self.position,
            self.position_final,
            self.motion,
            self.log_scale,
            self.rotation,
            self.opacity,
            self.color,
        ]
    }

    /// Learning rates of one Gaussian's parameter block at `progress ∈ [0, 1]`.
    fn block(&self, progress: f64) -> [f64; PARAMS_PER_GAUSSIAN] {
        let decay = if self.position > 0.0 && self.position_final > 0.0 {
            (self.position_final / self.position).powf(progress)
        } else {
            1.0
        };
        let mut out = [0.0; PARAMS_PER_GAUSSIAN];
        for (i, v) in out.iter_mut().enumerate() {
            *v = match i {
                i if i < offset::LOG_SCALE => self.position * decay,
                i if i < offset::ROTATION => self.log_scale,
                i if i < offset::OPACITY => self.rotation,
                offset::OPACITY => self.opacity,
                i if i < offset::MOTION => self.color,
                _ => self.motion * decay,
            };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub iterations: usize,
    /// Views per iteration.
    pub batch_size: usize,
    pub lr: LearningRates,
    pub adam: AdamConfig,
    pub weights: SplatLossWeights,
    pub raster: RasterSettings,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 4,
            lr: LearningRates::default(),
            adam: AdamConfig::default(),
            weights: SplatLossWeights::default(),
            raster: RasterSettings::default(),
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.lr.all().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("learning rates must be finite and >= 0"));
        }
        self.weights.validate()?;
        self.raster.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    /// Mean minibatch loss per iteration.
    pub losses: Vec<f64>,
}

/// Cycles through shuffled epochs of view indices.
struct ViewSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl ViewSampler {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Loss and parameter gradient of one view.
pub fn view_loss_and_grad(
    cloud: &GaussianCloud4D,
    view: &SplatView,
    intr: &Intrinsics,
    weights: &SplatLossWeights,
    raster: &RasterSettings,
) -> Result<(f64, Vec<f64>)> {
    let (frame, cache) = render_with_cache(cloud, &view.pose, view.tau, intr, raster);
    let (parts, fg) = splat_loss_with_grad(&frame, &view.frame, weights)?;
    let mut grad = vec![0.0; cloud.len() * PARAMS_PER_GAUSSIAN];
    render_backward(cloud, &view.pose, view.tau, intr, raster, &cache, &fg, &mut grad)?;
    Ok((parts.total, grad))
}

pub fn optimize(
    cloud: &GaussianCloud4D,
    views: &[SplatView],
    intr: &Intrinsics,
    cfg: &OptimizeConfig,
) -> Result<(GaussianCloud4D, OptimizeReport)> {
    optimize_with_progress(cloud, views, intr, cfg, |_, _| {})
}

pub fn optimize_with_progress(
    cloud: &GaussianCloud4D,
    views: &[SplatView],
    intr: &Intrinsics,
    cfg: &OptimizeConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<(GaussianCloud4D, OptimizeReport)> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::invalid("optimization needs at least one supervision view"));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cannot optimize an empty cloud"));
    }
    for v in views {
        if v.frame.width != intr.width || v.frame.height != intr.height {
            return Err(Error::invalid("supervision frame size does not match the intrinsics"));
        }
    }
    let mut cloud = cloud.clone();
    let mut params = cloud.to_params();
    let mut adam = Adam::new(params.len(), cfg.adam);
    let mut sampler = ViewSampler::new(views.len(), cfg.seed);
    let batch = cfg.batch_size.min(views.len());
    let mut losses = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let picks: Vec<usize> = (0..batch).map(|_| sampler.next()).collect();
        let results: Vec<Result<(f64, Vec<f64>)>> = picks
            .par_iter()
            .map(|&v| view_loss_and_grad(&cloud, &views[v], intr, &cfg.weights, &cfg.raster))
            .collect();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (r, &v) in results.into_iter().zip(&picks) {
            let (l, g) = r?;
            if !l.is_finite() {
                return Err(Error::NonFinite(format!(
                    "splat loss {l} at iteration {it} on view {v} (tau {})",
                    views[v].tau
                )));
            }
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let inv = 1.0 / batch as f64;
        loss *= inv;
        grad.iter_mut().for_each(|g| *g *= inv);
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {} (gaussian {}) is {} at iteration {it}",
                bad % PARAMS_PER_GAUSSIAN,
                bad / PARAMS_PER_GAUSSIAN,
                grad[bad]
            )));
        }
        let progress_frac = if cfg.iterations > 1 { it as f64 / (cfg.iterations - 1) as f64 } else { 0.0 };
        let block = cfg.lr.block(progress_frac);
        adam.step_with(&mut params, &grad, |i| block[i % PARAMS_PER_GAUSSIAN]);
        cloud = GaussianCloud4D::from_params(&params, cloud.background)?;
        cloud.normalize_rotations();
        params = cloud.to_params();
        losses.push(loss);
        progress(it, loss);
    }
    Ok((cloud, OptimizeReport { losses }))
}
