use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scene::camera::CameraPose;
use crate::scene::render::RenderSettings;
use crate::scene::trajectory::{build_trajectory, OrbitTrajectory};

/// Orbit geometry and image settings shared by every render of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSetup {
    pub frames: usize,
    pub elevation: f64,
    pub distance: f64,
    pub render: RenderSettings,
}

impl Default for OrbitSetup {
    fn default() -> Self {
        Self {
            frames: 24,
            elevation: 0.0,
            distance: 2.0,
            render: RenderSettings::default(),
        }
    }
}

impl OrbitSetup {
    pub fn trajectory(&self, start_azimuth: f64) -> Result<OrbitTrajectory> {
        build_trajectory(self.frames, self.elevation, self.distance, start_azimuth)
    }

    pub fn front_pose(&self) -> CameraPose {
        CameraPose::orbit(0.0, self.elevation, self.distance)
    }

    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.trajectory(0.0).map(|_| ())
    }
}
