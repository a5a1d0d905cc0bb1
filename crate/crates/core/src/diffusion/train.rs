//! Denoiser training on curated latent pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::latent::LatentVideo;
use crate::diffusion::loss::latent_motion_magnitude;
use crate::diffusion::network::{ConditionSignal, Denoiser};
use crate::diffusion::sampler::gaussian_latent;
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};

/// Which condition `y` a training example is presented with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    None,
    Label,
    Image,
    StaticVideo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub z0: LatentVideo,
    pub z0_static: LatentVideo,
    pub label: u32,
    /// Pixel-space motion magnitude of the source video.
    pub motion: f64,
}

impl TrainExample {
    pub fn condition(&self, kind: ConditionKind) -> ConditionSignal {
        match kind {
            ConditionKind::None => ConditionSignal::None,
            ConditionKind::Label => ConditionSignal::Label(self.label),
            ConditionKind::Image => {
                let s = self.z0_static.shape;
                ConditionSignal::Image(LatentVideo {
                    shape: crate::diffusion::LatentShape { frames: 1, ..s },
                    data: self.z0_static.frame(0).to_vec(),
                })
            }
            ConditionKind::StaticVideo => ConditionSignal::StaticVideo(self.z0_static.clone()),
        }
    }

    /// The same asset frozen in time, used to train the static model.
    pub fn frozen(&self) -> TrainExample {
        TrainExample {
            id: self.id.clone(),
            z0: self.z0_static.clone(),
            z0_static: self.z0_static.clone(),
            label: self.label,
            motion: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub omega: f64,
    pub cond_dropout: f64,
    pub condition: ConditionKind,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Decay of the parameter moving average copied into the model at the
    /// end of training; `None` keeps the last iterate.
    pub ema_decay: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            learning_rate: 3e-5,
            batch_size: 4,
            omega: 5e-4,
            cond_dropout: 0.1,
            condition: ConditionKind::StaticVideo,
            seed: 0,
            adam: AdamConfig::default(),
            ema_decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid(format!("omega must be non-negative, got {}", self.omega)));
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::invalid("ema decay must lie in [0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return Err(Error::invalid("condition dropout must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ldm: f64,
    pub mr: f64,
    pub total: f64,
    /// `|m(z0) − m(ẑ0)|` in latent space.
    pub motion_error: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.ldm += o.ldm;
        self.mr += o.mr;
        self.total += o.total;
        self.motion_error += o.motion_error;
    }

    fn scale(&mut self, k: f64) {
        self.ldm *= k;
        self.mr *= k;
        self.total *= k;
        self.motion_error *= k;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<LossParts>,
    pub motion_scale: f64,
}

/// One draw of the training objective and, optionally, its gradient.
#[allow(clippy::too_many_arguments)]
pub fn example_loss(
    net: &Denoiser,
    schedule: &NoiseSchedule,
    ex: &TrainExample,
    kind: ConditionKind,
    t: usize,
    eps: &LatentVideo,
    dropped: bool,
    omega: f64,
    grads: Option<&mut [f64]>,
) -> Result<LossParts> {
    if t == 0 {
        return Err(Error::invalid("training step must be at least 1"));
    }
    let z_t = schedule.forward_diffuse(&ex.z0, t, eps)?;
    let cond = if dropped { ConditionSignal::None } else { ex.condition(kind) };
    let motion = (!dropped).then(|| net.normalize_motion(ex.motion));
    let (eps_hat, cache) = net.forward_cached(&z_t, t, &cond, motion)?;
    let n = eps.data.len() as f64;
    let ldm = eps_hat
        .data
        .iter()
        .zip(&eps.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let z0_hat = schedule.predict_x0(&z_t, &eps_hat, t)?;
    let m_true = latent_motion_magnitude(&ex.z0, &ex.z0_static)?;
    let m_hat = latent_motion_magnitude(&z0_hat, &ex.z0_static)?;
    let mr = (m_true - m_hat).powi(2);
    let parts = LossParts {
        ldm,
        mr,
        total: ldm + omega * mr,
        motion_error: (m_true - m_hat).abs(),
    };
    if let Some(grads) = grads {
        let ab = schedule.alpha_bar(t);
        let k = -(1.0 - ab).sqrt() / ab.sqrt();
        let frames = ex.z0.shape.frames as f64;
        let mr_coef = omega * 2.0 * (m_hat - m_true) * 2.0 / frames * k;
        let g_out: Vec<f64> = (0..eps.data.len())
            .map(|i| {
                2.0 * (eps_hat.data[i] - eps.data[i]) / n
                    + mr_coef * (z0_hat.data[i] - ex.z0_static.data[i])
            })
            .collect();
        net.backward(&cache, &g_out, grads);
    }
    Ok(parts)
}

/// Nearest-rank 95th percentile of the raw magnitudes, or 1 when all are 0.
pub fn motion_percentile(data: &[TrainExample]) -> f64 {
    let mut ms: Vec<f64> = data.iter().map(|e| e.motion).collect();
    ms.sort_by(|a, b| a.total_cmp(b));
    if ms.is_empty() {
        return 1.0;
    }
    let rank = ((0.95 * ms.len() as f64).ceil() as usize).clamp(1, ms.len());
    let p = ms[rank - 1];
    if p > 0.0 {
        p
    } else {
        1.0
    }
}

struct Draw {
    index: usize,
    t: usize,
    noise_seed: u64,
    dropped: bool,
}

pub fn train(
    net: &mut Denoiser,
    schedule: &NoiseSchedule,
    data: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_progress(net, schedule, data, cfg, |_, _| {})
}

pub fn train_with_progress(
    net: &mut Denoiser,
    schedule: &NoiseSchedule,
    data: &[TrainExample],
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, &LossParts),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if net.trained_steps == 0 {
        net.motion_scale = motion_percentile(data);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(net.param_count(), cfg.adam);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let n_steps = schedule.train_steps();
    let mut ema = cfg.ema_decay.map(|d| (d, net.params.clone()));
    for it in 0..cfg.iterations {
        let draws: Vec<Draw> = (0..cfg.batch_size)
            .map(|_| Draw {
                index: rng.random_range(0..data.len()),
                t: rng.random_range(1..=n_steps),
                noise_seed: rng.random(),
                dropped: rng.random::<f64>() < cfg.cond_dropout,
            })
            .collect();
        let frozen: &Denoiser = net;
        let results: Vec<Result<(LossParts, Vec<f64>)>> = draws
            .par_iter()
            .map(|d| {
                let ex = &data[d.index];
                let eps = gaussian_latent(ex.z0.shape, d.noise_seed);
                let mut g = vec![0.0; frozen.param_count()];
                let parts = example_loss(
                    frozen, schedule, ex, cfg.condition, d.t, &eps, d.dropped, cfg.omega, Some(&mut g),
                )?;
                Ok((parts, g))
            })
            .collect();
        let mut parts = LossParts::default();
        let mut grads = vec![0.0; net.param_count()];
        for r in results {
            let (p, g) = r?;
            parts.add(&p);
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / cfg.batch_size as f64;
        parts.scale(inv);
        grads.iter_mut().for_each(|g| *g *= inv);
        if !parts.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "training diverged at iteration {it}: ldm={} mr={} total={}",
                parts.ldm, parts.mr, parts.total
            )));
        }
        opt.step(&mut net.params, &grads, cfg.learning_rate);
        if let Some((d, avg)) = ema.as_mut() {
            avg.iter_mut().zip(&net.params).for_each(|(a, p)| *a = *d * *a + (1.0 - *d) * p);
        }
        progress(it, &parts);
        curve.push(parts);
    }
    if let Some((_, avg)) = ema {
        if cfg.iterations > 0 {
            net.params = avg;
        }
    }
    net.trained_steps += cfg.iterations;
    Ok(TrainReport {
        curve,
        motion_scale: net.motion_scale,
    })
}

/// Fixed evaluation draws: every example at every listed step, with noise
/// seeded by `seed`; no condition dropout.
pub fn evaluate(
    net: &Denoiser,
    schedule: &NoiseSchedule,
    data: &[TrainExample],
    kind: ConditionKind,
    omega: f64,
    steps: &[usize],
    seed: u64,
) -> Result<LossParts> {
    if data.is_empty() || steps.is_empty() {
        return Err(Error::invalid("evaluation needs examples and steps"));
    }
    let jobs: Vec<(usize, usize, u64)> = (0..data.len())
        .flat_map(|i| steps.iter().enumerate().map(move |(k, &t)| (i, t, seed ^ ((i * 7919 + k) as u64))))
        .collect();
    let results: Vec<Result<LossParts>> = jobs
        .par_iter()
        .map(|&(i, t, s)| {
            let eps = gaussian_latent(data[i].z0.shape, s);
            example_loss(net, schedule, &data[i], kind, t, &eps, false, omega, None)
        })
        .collect();
    let mut total = LossParts::default();
    for r in results {
        total.add(&r?);
    }
    total.scale(1.0 / jobs.len() as f64);
    Ok(total)
}
