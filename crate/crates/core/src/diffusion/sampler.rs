//! DDIM sampling with motion-magnitude conditioning and three-term guidance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::guidance::{cfg_combine, GuidanceWeights};
use crate::diffusion::latent::{LatentShape, LatentVideo};
use crate::diffusion::network::{ConditionSignal, Denoiser};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// Anything that predicts the noise in `z_t`.
pub trait NoisePredictor: Sync {
    fn predict(
        &self,
        z_t: &LatentVideo,
        t: usize,
        cond: &ConditionSignal,
        motion: Option<f64>,
    ) -> Result<LatentVideo>;

    fn is_static(&self) -> bool {
        false
    }

    fn ready(&self) -> bool {
        true
    }
}

impl NoisePredictor for Denoiser {
    fn predict(
        &self,
        z_t: &LatentVideo,
        t: usize,
        cond: &ConditionSignal,
        motion: Option<f64>,
    ) -> Result<LatentVideo> {
        self.forward(z_t, t, cond, motion)
    }

    fn is_static(&self) -> bool {
        self.config.static_mode
    }

    fn ready(&self) -> bool {
        self.is_trained()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub steps: usize,
    pub weights: GuidanceWeights,
    pub seed: u64,
    /// Clamp range applied to each intermediate clean-latent estimate.
    pub clip_x0: Option<[f64; 2]>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            weights: GuidanceWeights::default(),
            seed: 0,
            clip_x0: Some([0.0, 1.0]),
        }
    }
}

pub fn gaussian_latent(shape: LatentShape, seed: u64) -> LatentVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.numel()).map(|_| StandardNormal.sample(&mut rng)).collect();
    LatentVideo { shape, data }
}

/// Run the deterministic DDIM chain from `z_init` at the top step, querying
/// `eps_at(z_t, t)` once per step.
pub fn ddim_sample_from(
    schedule: &NoiseSchedule,
    z_init: LatentVideo,
    steps: usize,
    mut eps_at: impl FnMut(&LatentVideo, usize) -> Result<LatentVideo>,
) -> Result<LatentVideo> {
    let mut z = z_init;
    for (t, t_prev) in schedule.ddim_timesteps(steps)? {
        let eps = eps_at(&z, t)?;
        z = schedule.ddim_step(&z, &eps, t, t_prev)?;
        if !z.is_finite() {
            return Err(Error::NonFinite(format!("latent diverged at step {t}")));
        }
    }
    Ok(z)
}

/// Noise estimate consistent with the clamped clean-latent estimate.
pub fn clipped_noise(
    schedule: &NoiseSchedule,
    z_t: &LatentVideo,
    eps: &LatentVideo,
    t: usize,
    [lo, hi]: [f64; 2],
) -> Result<LatentVideo> {
    let x0 = schedule.predict_x0(z_t, eps, t)?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    if b == 0.0 {
        return Ok(eps.clone());
    }
    z_t.map2(&x0, |z, x| (z - a * x.clamp(lo, hi)) / b)
}

/// Generate a latent video. `motion` is the normalized magnitude fed to the
/// motion embedding of the dynamic model.
pub fn sample(
    denoiser: &dyn NoisePredictor,
    static_denoiser: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    shape: LatentShape,
    cond: &ConditionSignal,
    motion: f64,
    cfg: &SampleConfig,
) -> Result<LatentVideo> {
    if !denoiser.ready() {
        return Err(Error::InvalidState("denoiser has not been trained".into()));
    }
    if !static_denoiser.ready() {
        return Err(Error::InvalidState("static denoiser has not been trained".into()));
    }
    if denoiser.is_static() || !static_denoiser.is_static() {
        return Err(Error::invalid(
            "guidance needs a dynamic denoiser and a static-mode denoiser",
        ));
    }
    if !motion.is_finite() {
        return Err(Error::invalid(format!("motion magnitude must be finite, got {motion}")));
    }
    let z_init = gaussian_latent(shape, cfg.seed);
    ddim_sample_from(schedule, z_init, cfg.steps, |z, t| {
        let eps_c = denoiser.predict(z, t, cond, Some(motion))?;
        let eps_u = denoiser.predict(z, t, &ConditionSignal::None, None)?;
        let eps_s = static_denoiser.predict(z, t, cond, None)?;
        let eps = cfg_combine(&eps_c, &eps_u, &eps_s, &cfg.weights)?;
        match cfg.clip_x0 {
            Some(range) => clipped_noise(schedule, z, &eps, t, range),
            None => Ok(eps),
        }
    })
}
