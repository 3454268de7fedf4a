use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera and particle constants that set the two visibility thresholds
/// `z1 = 2 f a` and `z2 = R z1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityParams {
    /// Focal length, meters.
    pub focal_length: f64,
    /// Drop radius, meters.
    pub drop_radius: f64,
    /// Ratio `R = z2 / z1`.
    pub ratio: f64,
}

impl VisibilityParams {
    pub const DEFAULT_RATIO: f64 = 100.0;

    pub fn new(focal_length: f64, drop_radius: f64, ratio: f64) -> Result<Self> {
        let p = VisibilityParams {
            focal_length,
            drop_radius,
            ratio,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) || !(self.drop_radius > 0.0) {
            return Err(Error::config(
                "focal length and drop radius must be positive",
            ));
        }
        if !(self.ratio > 1.0) {
            return Err(Error::config(format!(
                "visibility ratio R must exceed 1, got {}",
                self.ratio
            )));
        }
        Ok(())
    }

    pub fn z1(&self) -> f64 {
        2.0 * self.focal_length * self.drop_radius
    }

    pub fn z2(&self) -> f64 {
        self.ratio * self.z1()
    }
}

/// How a particle at distance `z` shows up in the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityRegime {
    /// `z < z1`: visibility set by exposure time, independent of `z`.
    CameraLimited,
    /// `z1 <= z < z2`: visibility falls off as `1 / z`.
    InverseDepthDecay,
    /// `z >= z2`: individual particles vanish into fog-like scattering.
    AggregateScattering,
}

impl VisibilityRegime {
    pub fn name(&self) -> &'static str {
        match self {
            VisibilityRegime::CameraLimited => "camera_limited",
            VisibilityRegime::InverseDepthDecay => "inverse_depth_decay",
            VisibilityRegime::AggregateScattering => "aggregate_scattering",
        }
    }
}

pub fn visibility_regime(z: f64, params: &VisibilityParams) -> Result<VisibilityRegime> {
    params.validate()?;
    if !(z >= 0.0) {
        return Err(Error::config(format!("distance must be >= 0, got {z}")));
    }
    Ok(if z < params.z1() {
        VisibilityRegime::CameraLimited
    } else if z < params.z2() {
        VisibilityRegime::InverseDepthDecay
    } else {
        VisibilityRegime::AggregateScattering
    })
}
