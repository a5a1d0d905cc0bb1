use glam::{DMat3, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Viewpoint on an orbit around `target`, parameterized by azimuth.
///
/// Azimuth 0 places the camera on the +z axis (the front view); increasing
/// azimuth rotates the camera counter-clockwise about +y seen from above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub target: [f64; 3],
}

impl CameraPose {
    pub fn orbit(azimuth: f64, elevation: f64, distance: f64) -> Self {
        Self {
            azimuth,
            elevation,
            distance,
            target: [0.0; 3],
        }
    }

    pub fn eye(&self) -> DVec3 {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        DVec3::from(self.target)
            + self.distance * DVec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }

    /// World-to-camera rotation. Camera axes: x right, y down, z forward.
    pub fn rotation(&self) -> DMat3 {
        let forward = (DVec3::from(self.target) - self.eye()).normalize();
        let right = forward.cross(DVec3::Y).normalize();
        let down = forward.cross(right);
        // Rows are the camera axes.
        DMat3::from_cols(right, down, forward).transpose()
    }

    pub fn to_camera(&self, p: DVec3) -> DVec3 {
        self.rotation() * (p - self.eye())
    }
}

/// Pinhole intrinsics in pixel units; pixel `(i, j)` has its center at
/// `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn from_fov(width: usize, height: usize, fov_y_deg: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(Error::invalid(format!("fov {fov_y_deg} out of (0, 180)")));
        }
        let focal = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Ok(Self {
            width,
            height,
            focal,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        })
    }

    pub fn project(&self, cam: DVec3) -> (f64, f64) {
        (
            self.cx + self.focal * cam.x / cam.z,
            self.cy + self.focal * cam.y / cam.z,
        )
    }

    /// Unit ray direction in camera space through image point `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> DVec3 {
        DVec3::new((u - self.cx) / self.focal, (v - self.cy) / self.focal, 1.0).normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn front_view_axes() {
        let pose = CameraPose::orbit(0.0, 0.0, 2.0);
        assert!((pose.eye() - DVec3::new(0.0, 0.0, 2.0)).length() < 1e-12);
        let r = pose.rotation();
        assert!((r * DVec3::X - DVec3::X).length() < 1e-12);
        assert!((r * DVec3::Y + DVec3::Y).length() < 1e-12);
        let origin = pose.to_camera(DVec3::ZERO);
        assert!((origin - DVec3::new(0.0, 0.0, 2.0)).length() < 1e-12);
    }

    #[test]
    fn rotation_is_orthonormal() {
        for az in [0.0, 15.0, 97.0, 270.0] {
            for el in [-30.0, 0.0, 45.0] {
                let r = CameraPose::orbit(az, el, 2.0).rotation();
                let err = (r * r.transpose() - DMat3::IDENTITY).to_cols_array();
                assert!(err.iter().all(|e| e.abs() < 1e-12));
                assert!((r.determinant() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn camera_looks_at_target() {
        let pose = CameraPose::orbit(123.0, 20.0, 3.0);
        let c = pose.to_camera(DVec3::ZERO);
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12);
        assert!((c.z - 3.0).abs() < 1e-12);
    }
}
