//! 4D Gaussian parameters and their flat packing.

use glam::{DMat3, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of temporal basis functions per axis.
pub const BASIS_LEN: usize = 4;
/// Flat parameter count of one Gaussian.
pub const PARAMS_PER_GAUSSIAN: usize = 3 + 3 + 4 + 1 + 3 + 3 * BASIS_LEN;

/// Offsets of each parameter group inside a Gaussian's flat block.
pub mod offset {
    pub const POSITION: usize = 0;
    pub const LOG_SCALE: usize = 3;
    pub const ROTATION: usize = 6;
    pub const OPACITY: usize = 10;
    pub const COLOR: usize = 11;
    pub const MOTION: usize = 14;
}

/// Temporal basis `[τ, τ², sin 2πτ, cos 2πτ − 1]`; all terms vanish at τ = 0
/// and the harmonic pair is periodic over the unit interval.
pub fn motion_basis(tau: f64) -> [f64; BASIS_LEN] {
    let w = std::f64::consts::TAU * tau;
    [tau, tau * tau, w.sin(), w.cos() - 1.0]
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian4D {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    /// `(w, x, y, z)`; normalized on use.
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color: [f64; 3],
    /// `motion[k][axis]` multiplies basis function `k`.
    pub motion: [[f64; 3]; BASIS_LEN],
}

/// A Gaussian frozen at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub mean: DVec3,
    pub covariance: DMat3,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Gaussian4D {
    pub fn isotropic(position: [f64; 3], scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self {
            position,
            log_scale: [scale.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            color,
            motion: [[0.0; 3]; BASIS_LEN],
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn position_at(&self, tau: f64) -> DVec3 {
        let phi = motion_basis(tau);
        let mut p = DVec3::from(self.position);
        for (k, f) in phi.iter().enumerate() {
            p += *f * DVec3::from(self.motion[k]);
        }
        p
    }

    pub fn rotation_matrix(&self) -> DMat3 {
        quat_to_matrix(normalize_quat(self.rotation))
    }

    pub fn covariance(&self) -> DMat3 {
        let s = DVec3::from(self.log_scale.map(f64::exp));
        let m = self.rotation_matrix() * DMat3::from_diagonal(s);
        m * m.transpose()
    }

    /// Evaluate the trajectory at `tau`; shape, opacity and color are
    /// time-invariant.
    pub fn deform(&self, tau: f64) -> Gaussian3D {
        Gaussian3D {
            mean: self.position_at(tau),
            covariance: self.covariance(),
            opacity: self.opacity(),
            color: self.color,
        }
    }

    pub fn write_params(&self, out: &mut [f64]) {
        use offset::*;
        out[POSITION..POSITION + 3].copy_from_slice(&self.position);
        out[LOG_SCALE..LOG_SCALE + 3].copy_from_slice(&self.log_scale);
        out[ROTATION..ROTATION + 4].copy_from_slice(&self.rotation);
        out[OPACITY] = self.opacity_logit;
        out[COLOR..COLOR + 3].copy_from_slice(&self.color);
        for k in 0..BASIS_LEN {
            out[MOTION + 3 * k..MOTION + 3 * k + 3].copy_from_slice(&self.motion[k]);
        }
    }

    pub fn from_params(p: &[f64]) -> Self {
        use offset::*;
        let v3 = |o: usize| [p[o], p[o + 1], p[o + 2]];
        let mut motion = [[0.0; 3]; BASIS_LEN];
        for (k, m) in motion.iter_mut().enumerate() {
            *m = v3(MOTION + 3 * k);
        }
        Self {
            position: v3(POSITION),
            log_scale: v3(LOG_SCALE),
            rotation: [p[ROTATION], p[ROTATION + 1], p[ROTATION + 2], p[ROTATION + 3]],
            opacity_logit: p[OPACITY],
            color: v3(COLOR),
            motion,
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut buf = [0.0; PARAMS_PER_GAUSSIAN];
        self.write_params(&mut buf);
        buf.iter().all(|v| v.is_finite())
    }
}

pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    q.map(|v| v / n)
}

pub fn quat_to_matrix([w, x, y, z]: [f64; 4]) -> DMat3 {
    DMat3::from_cols(
        DVec3::new(1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y)),
        DVec3::new(2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z + w * x)),
        DVec3::new(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)),
    )
}

/// Gradient of a loss w.r.t. the raw quaternion given `g = dL/dR`, through
/// the normalization.
pub fn quat_backward(q: [f64; 4], g: &DMat3) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    // g.col(c)[r] is dL/dR[r][c].
    let gr = |r: usize, c: usize| g.col(c)[r];
    let dw = 2.0 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
    let dx = 2.0 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2.0 * x * gr(1, 1) - w * gr(1, 2)
        + z * gr(2, 0)
        + w * gr(2, 1)
        - 2.0 * x * gr(2, 2));
    let dy = 2.0 * (-2.0 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2)
        - w * gr(2, 0)
        + z * gr(2, 1)
        - 2.0 * y * gr(2, 2));
    let dz = 2.0 * (-2.0 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2.0 * z * gr(1, 1)
        + y * gr(1, 2)
        + x * gr(2, 0)
        + y * gr(2, 1));
    let gn = [dw, dx, dy, dz];
    let qn = [w, x, y, z];
    let dot: f64 = gn.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|i| (gn[i] - qn[i] * dot) / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCloud4D {
    pub gaussians: Vec<Gaussian4D>,
    pub background: [f64; 3],
}

impl GaussianCloud4D {
    pub fn new(gaussians: Vec<Gaussian4D>, background: [f64; 3]) -> Self {
        Self {
            gaussians,
            background,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * PARAMS_PER_GAUSSIAN];
        for (g, chunk) in self.gaussians.iter().zip(out.chunks_mut(PARAMS_PER_GAUSSIAN)) {
            g.write_params(chunk);
        }
        out
    }

    pub fn from_params(params: &[f64], background: [f64; 3]) -> Result<Self> {
        if !params.len().is_multiple_of(PARAMS_PER_GAUSSIAN) {
            return Err(Error::invalid(format!(
                "parameter count {} is not a multiple of {PARAMS_PER_GAUSSIAN}",
                params.len()
            )));
        }
        Ok(Self {
            gaussians: params.chunks(PARAMS_PER_GAUSSIAN).map(Gaussian4D::from_params).collect(),
            background,
        })
    }

    /// Renormalize every quaternion to unit length.
    pub fn normalize_rotations(&mut self) {
        for g in &mut self.gaussians {
            g.rotation = normalize_quat(g.rotation);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gaussians.iter().all(|g| g.is_finite()) && self.background.iter().all(|v| v.is_finite())
    }
}
