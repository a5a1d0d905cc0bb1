//! Procedural animated assets.
//!
//! Every motion channel is a deterministic function of normalized time `τ`
//! whose amplitude is the primitive's base amplitude times the asset-wide
//! `motion_scale`. All channels vanish at `τ = 0`, so the rest pose is the
//! pose at the first timestamp.

use std::f64::consts::TAU;

use glam::{DMat3, DQuat, DVec3, EulerRot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Unit sphere.
    Sphere,
    /// The cube `[-1, 1]^3`.
    Box,
    /// Radius 0.5 around the segment `y ∈ [-0.5, 0.5]`.
    Capsule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseTransform {
    pub position: [f64; 3],
    /// Intrinsic XYZ Euler angles in degrees.
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionProgram {
    /// Peak translation per axis, in scene units.
    pub translation: [f64; 3],
    /// Phase of the translation oscillation, radians.
    pub phase: f64,
    /// Turns about the world +y axis over the unit time interval.
    pub rotation_rate: f64,
    /// Log-amplitude of the size oscillation.
    pub scale_oscillation: f64,
    /// Peak hue rotation, in turns.
    pub hue_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimatedPrimitive {
    pub shape: Shape,
    pub base_transform: BaseTransform,
    pub albedo: [f64; 3],
    pub motion_program: MotionProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicAsset {
    pub primitives: Vec<AnimatedPrimitive>,
    pub seed: u64,
    pub label: u32,
    pub motion_scale: f64,
}

/// A primitive's world placement and color at one instant.
#[derive(Debug, Clone, Copy)]
pub struct PosedPrimitive {
    pub shape: Shape,
    pub rotation: DMat3,
    pub translation: DVec3,
    pub scale: DVec3,
    pub color: [f64; 3],
}

impl AnimatedPrimitive {
    pub fn pose_at(&self, tau: f64, motion_scale: f64) -> PosedPrimitive {
        let m = &self.motion_program;
        let wave = (TAU * tau).sin();

        let offset = DVec3::from(m.translation)
            * (motion_scale * ((TAU * tau + m.phase).sin() - m.phase.sin()));
        let orbit = DMat3::from_rotation_y(TAU * motion_scale * m.rotation_rate * tau);

        let b = &self.base_transform;
        let [rx, ry, rz] = b.rotation_deg.map(f64::to_radians);
        let base_rot = DMat3::from_quat(DQuat::from_euler(EulerRot::XYZ, rx, ry, rz));
        let size = (motion_scale * m.scale_oscillation * wave).exp();

        PosedPrimitive {
            shape: self.shape,
            rotation: orbit * base_rot,
            translation: orbit * (DVec3::from(b.position) + offset),
            scale: DVec3::from(b.scale) * size,
            color: rotate_hue(self.albedo, motion_scale * m.hue_drift * wave),
        }
    }
}

impl DynamicAsset {
    pub fn empty(seed: u64, label: u32) -> Self {
        Self {
            primitives: Vec::new(),
            seed,
            label,
            motion_scale: 0.0,
        }
    }

    pub fn posed(&self, tau: f64) -> Vec<PosedPrimitive> {
        self.primitives
            .iter()
            .map(|p| p.pose_at(tau, self.motion_scale))
            .collect()
    }

    pub fn with_motion_scale(&self, motion_scale: f64) -> Self {
        Self {
            motion_scale,
            ..self.clone()
        }
    }
}

/// Rotate an rgb color about the gray axis by `turns` of a full hue circle.
pub fn rotate_hue(rgb: [f64; 3], turns: f64) -> [f64; 3] {
    if turns == 0.0 {
        return rgb;
    }
    let axis = DVec3::ONE.normalize();
    let rotated = DMat3::from_axis_angle(axis, TAU * turns) * DVec3::from(rgb);
    rotated.to_array().map(|c| c.clamp(0.0, 1.0))
}

/// Draw a small procedural asset. Identical `(seed, motion_scale, label)`
/// always yields an identical asset, and motion amplitudes are proportional
/// to `motion_scale`.
pub fn sample_asset(seed: u64, motion_scale: f64, label: u32) -> DynamicAsset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(2..=4usize);
    let primitives = (0..count)
        .map(|i| {
            let shape = match rng.random_range(0..3u8) {
                0 => Shape::Sphere,
                1 => Shape::Box,
                _ => Shape::Capsule,
            };
            // The first primitive is a central body; the rest cluster around it.
            let spread = if i == 0 { 0.05 } else { 0.28 };
            let position = [
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            ];
            let size = if i == 0 { 0.2..0.32 } else { 0.1..0.2 };
            let scale = match shape {
                Shape::Sphere => [rng.random_range(size.clone()); 3],
                Shape::Box => [
                    0.8 * rng.random_range(size.clone()),
                    0.8 * rng.random_range(size.clone()),
                    0.8 * rng.random_range(size.clone()),
                ],
                Shape::Capsule => {
                    let r = rng.random_range(size.clone());
                    [r, 1.4 * r, r]
                }
            };
            let rotation_deg = [
                rng.random_range(-40.0..40.0),
                rng.random_range(0.0..360.0),
                rng.random_range(-40.0..40.0),
            ];
            let albedo = saturated_color(&mut rng);
            let motion_program = MotionProgram {
                translation: [
                    rng.random_range(-0.12..0.12),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.12..0.12),
                ],
                phase: rng.random_range(0.0..TAU),
                rotation_rate: rng.random_range(-0.08..0.08),
                scale_oscillation: rng.random_range(0.0..0.15),
                hue_drift: rng.random_range(0.0..0.06),
            };
            AnimatedPrimitive {
                shape,
                base_transform: BaseTransform {
                    position,
                    rotation_deg,
                    scale,
                },
                albedo,
                motion_program,
            }
        })
        .collect();
    DynamicAsset {
        primitives,
        seed,
        label,
        motion_scale,
    }
}

fn saturated_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let hue: f64 = rng.random_range(0.0..1.0);
    let base = rotate_hue([0.9, 0.2, 0.15], hue);
    let value: f64 = rng.random_range(0.75..1.0);
    base.map(|c| (c * value).clamp(0.0, 1.0))
}
