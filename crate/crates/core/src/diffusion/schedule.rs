//! Variance schedule and the closed-form forward / DDIM updates.

use serde::{Deserialize, Serialize};

use crate::diffusion::latent::LatentVideo;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            beta_start: 1e-4,
            beta_end: 0.02,
            train_steps: 1000,
        }
    }
}

/// Linear-beta schedule. Step `t` runs over `1..=train_steps`; `t = 0` is the
/// clean endpoint with `ᾱ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub config: ScheduleConfig,
    pub betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let n = config.train_steps;
        if n < 2 {
            return Err(Error::invalid("schedule needs at least 2 training steps"));
        }
        if !(0.0 < config.beta_start && config.beta_start < config.beta_end && config.beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start < beta_end < 1, got {} and {}",
                config.beta_start, config.beta_end
            )));
        }
        let betas: Vec<f64> = (0..n)
            .map(|i| config.beta_start + (config.beta_end - config.beta_start) * i as f64 / (n - 1) as f64)
            .collect();
        let mut alpha_bars = Vec::with_capacity(n);
        let mut prod = 1.0;
        for b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(Self {
            config,
            betas,
            alpha_bars,
        })
    }

    pub fn train_steps(&self) -> usize {
        self.config.train_steps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t > self.train_steps() {
            return Err(Error::invalid(format!(
                "step {t} outside [0, {}]",
                self.train_steps()
            )));
        }
        Ok(())
    }

    /// Descending DDIM steps with uniform stride, each paired with its
    /// successor; the last successor is the clean endpoint 0.
    pub fn ddim_timesteps(&self, steps: usize) -> Result<Vec<(usize, usize)>> {
        let n = self.train_steps();
        if steps == 0 || steps > n {
            return Err(Error::invalid(format!("sampling steps must be in [1, {n}]")));
        }
        let ts: Vec<usize> = (0..steps)
            .map(|k| ((n as f64) * (steps - k) as f64 / steps as f64).round() as usize)
            .collect();
        Ok(ts
            .iter()
            .enumerate()
            .map(|(k, &t)| (t, ts.get(k + 1).copied().unwrap_or(0)))
            .collect())
    }

    /// `z_t = √ᾱ_t · z0 + √(1 − ᾱ_t) · ε`.
    pub fn forward_diffuse(&self, z0: &LatentVideo, t: usize, eps: &LatentVideo) -> Result<LatentVideo> {
        self.check_step(t)?;
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        z0.map2(eps, |z, e| a * z + b * e)
    }

    /// Clean-latent estimate `(z_t − √(1 − ᾱ_t) · ε̂) / √ᾱ_t`.
    pub fn predict_x0(&self, z_t: &LatentVideo, eps_hat: &LatentVideo, t: usize) -> Result<LatentVideo> {
        self.check_step(t)?;
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        z_t.map2(eps_hat, |z, e| (z - b * e) / a)
    }

    /// Deterministic (η = 0) DDIM update from `t` to `t_prev`.
    pub fn ddim_step(
        &self,
        z_t: &LatentVideo,
        eps_hat: &LatentVideo,
        t: usize,
        t_prev: usize,
    ) -> Result<LatentVideo> {
        if t_prev >= t {
            return Err(Error::invalid(format!("ddim step needs t_prev < t, got {t_prev} >= {t}")));
        }
        self.check_step(t)?;
        let x0 = self.predict_x0(z_t, eps_hat, t)?;
        let ab = self.alpha_bar(t_prev);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        x0.map2(eps_hat, |x, e| a * x + b * e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::latent::LatentShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::new(ScheduleConfig::default()).unwrap()
    }

    fn randn(shape: LatentShape, seed: u64) -> LatentVideo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LatentVideo::from_data(shape, (0..shape.numel()).map(|_| StandardNormal.sample(&mut rng)).collect())
            .unwrap()
    }

    const SHAPE: LatentShape = LatentShape { frames: 4, height: 3, width: 3, channels: 3 };

    #[test]
    fn alpha_bar_strictly_decreasing() {
        let s = schedule();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!((s.alpha_bar(1) - (1.0 - 1e-4)).abs() < 1e-15);
        for t in 1..=1000 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!(s.betas[t - 1] > 0.0 && s.betas[t - 1] < 1.0);
        }
        assert!(s.betas.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn forward_diffuse_edge_cases() {
        let s = schedule();
        let z0 = randn(SHAPE, 1);
        let eps = randn(SHAPE, 2);
        assert_eq!(s.forward_diffuse(&z0, 0, &eps).unwrap(), z0);
        let zero = LatentVideo::zeros(SHAPE);
        let zt = s.forward_diffuse(&z0, 500, &zero).unwrap();
        let a = s.alpha_bar(500).sqrt();
        for (x, y) in zt.data.iter().zip(&z0.data) {
            assert!((x - a * y).abs() < 1e-15);
        }
        let wrong = LatentVideo::zeros(LatentShape { frames: 1, ..SHAPE });
        assert!(s.forward_diffuse(&z0, 3, &wrong).is_err());
        assert!(s.forward_diffuse(&z0, 1001, &eps).is_err());
    }

    #[test]
    fn forward_diffuse_second_moment_monte_carlo() {
        let s = schedule();
        let z0 = randn(SHAPE, 3);
        let t = 300;
        let ab = s.alpha_bar(t);
        let numel = SHAPE.numel() as f64;
        let expected = ab * z0.squared_norm() + (1.0 - ab) * numel;
        let draws: Vec<f64> = (0..1000)
            .map(|i| s.forward_diffuse(&z0, t, &randn(SHAPE, 100 + i)).unwrap().squared_norm())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let sigma_of_mean = (var / draws.len() as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma_of_mean, "{mean} vs {expected} ± {sigma_of_mean}");
    }

    #[test]
    fn predict_x0_inverts_forward() {
        let s = schedule();
        let z0 = randn(SHAPE, 4);
        let eps = randn(SHAPE, 5);
        for t in [1, 250, 999, 1000] {
            let zt = s.forward_diffuse(&z0, t, &eps).unwrap();
            let x0 = s.predict_x0(&zt, &eps, t).unwrap();
            for (a, b) in x0.data.iter().zip(&z0.data) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let zt = s.forward_diffuse(&z0, 100, &eps).unwrap();
        let zero = LatentVideo::zeros(SHAPE);
        let x0 = s.predict_x0(&zt, &zero, 100).unwrap();
        let a = s.alpha_bar(100).sqrt();
        for (x, z) in x0.data.iter().zip(&zt.data) {
            assert!((x - z / a).abs() < 1e-12);
        }
        // Linear response to a perturbation of the noise estimate.
        let delta = 0.01;
        let bumped = eps.map2(&eps, |e, _| e + delta).unwrap();
        let x1 = s.predict_x0(&zt, &bumped, 100).unwrap();
        let x2 = s.predict_x0(&zt, &eps, 100).unwrap();
        let ab = s.alpha_bar(100);
        let slope = -(1.0 - ab).sqrt() / ab.sqrt();
        for (p, q) in x1.data.iter().zip(&x2.data) {
            assert!((p - q - slope * delta).abs() < 1e-12);
        }
    }

    #[test]
    fn ddim_step_cases() {
        let s = schedule();
        let z0 = randn(SHAPE, 6);
        let eps = randn(SHAPE, 7);
        let zt = s.forward_diffuse(&z0, 40, &eps).unwrap();
        let back = s.ddim_step(&zt, &eps, 40, 0).unwrap();
        for (a, b) in back.data.iter().zip(&z0.data) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = LatentVideo::zeros(SHAPE);
        assert_eq!(s.ddim_step(&zero, &zero, 500, 480).unwrap(), zero);
        assert!(s.ddim_step(&zt, &eps, 40, 40).is_err());
    }

    #[test]
    fn ddim_timesteps_uniform() {
        let s = schedule();
        let ts = s.ddim_timesteps(50).unwrap();
        assert_eq!(ts.len(), 50);
        assert_eq!(ts[0], (1000, 980));
        assert_eq!(ts[49], (20, 0));
        assert_eq!(s.ddim_timesteps(1).unwrap(), vec![(1000, 0)]);
        assert!(s.ddim_timesteps(0).is_err());
    }
}
