use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::camera::CameraPose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrajectory {
    pub poses: Vec<CameraPose>,
    /// Normalized times `i / T`, one per pose.
    pub timestamps: Vec<f64>,
    pub start_azimuth: f64,
}

impl OrbitTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn elevation(&self) -> f64 {
        self.poses[0].elevation
    }

    pub fn distance(&self) -> f64 {
        self.poses[0].distance
    }

    pub fn same_as(&self, other: &OrbitTrajectory) -> bool {
        self == other
    }
}

/// Uniform 360° azimuth sweep over `frames` timestamps at fixed elevation
/// and distance.
pub fn build_trajectory(
    frames: usize,
    elevation: f64,
    distance: f64,
    start_azimuth: f64,
) -> Result<OrbitTrajectory> {
    if frames < 2 {
        return Err(Error::invalid(format!(
            "orbit needs at least 2 frames, got {frames}"
        )));
    }
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::invalid(format!(
            "camera distance must be positive, got {distance}"
        )));
    }
    if !(elevation.abs() < 90.0) {
        return Err(Error::invalid(format!(
            "elevation must lie in (-90, 90), got {elevation}"
        )));
    }
    if !start_azimuth.is_finite() {
        return Err(Error::invalid("start azimuth must be finite"));
    }
    let step = 360.0 / frames as f64;
    let poses = (0..frames)
        .map(|i| {
            let azimuth = (start_azimuth + i as f64 * step).rem_euclid(360.0);
            CameraPose::orbit(azimuth, elevation, distance)
        })
        .collect();
    let timestamps = (0..frames).map(|i| i as f64 / frames as f64).collect();
    Ok(OrbitTrajectory {
        poses,
        timestamps,
        start_azimuth,
    })
}
