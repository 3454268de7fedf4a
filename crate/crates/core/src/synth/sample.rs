use crate::error::{Error, Result};
use crate::imgcore::{Image, ScalarMap};
use crate::occlusion::{occlusion_composite, volumetric_alpha, OcclusionField};
use crate::scatter::{scattering_composite, transmission_from_depth, TransmissionMap};

use super::WeatherParams;

/// A synthesized sample with every intermediate the restoration side needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradedSample {
    pub degraded: Image,
    /// The scene after the low-light adjustment (the restoration target).
    pub clean: Image,
    pub transmission: TransmissionMap,
    pub alpha: ScalarMap,
    pub params: WeatherParams,
}

impl DegradedSample {
    pub fn occlusion(&self) -> OcclusionField {
        OcclusionField::new(self.alpha.clone(), self.params.occlusion_brightness)
            .expect("synthesized alpha and brightness are in range")
    }
}

/// Darkens the scene with a power curve, `out = J^gamma`.
pub fn apply_low_light(img: &Image, gamma: f32) -> Result<Image> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::config(format!("low-light gamma must be >= 1, got {gamma}")));
    }
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map_samples(|v| v.powf(gamma)))
}

/// Inverse of [`apply_low_light`], `out = J^(1/gamma)`.
pub fn undo_low_light(img: &Image, gamma: f32) -> Result<Image> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::config(format!("low-light gamma must be >= 1, got {gamma}")));
    }
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    let inv = 1.0 / gamma;
    Ok(img.map_samples(|v| v.powf(inv)))
}

/// Runs low-light, scattering and occlusion in order on one clean/depth pair.
pub fn synthesize_sample(clean: &Image, depth: &ScalarMap, params: &WeatherParams) -> Result<DegradedSample> {
    clean.ensure_matches(depth, "depth")?;
    params.atmosphere.validate()?;
    let scene = apply_low_light(clean, params.lowlight_gamma)?;
    let transmission = if params.weather_type.has_scattering() {
        transmission_from_depth(depth, params.atmosphere.beta)?
    } else {
        TransmissionMap::clear(depth.width(), depth.height())
    };
    let background = scattering_composite(&scene, &transmission, params.atmosphere.light)?;
    let alpha = if params.weather_type.has_particles() {
        volumetric_alpha(&params.volumetric, depth)?
    } else {
        ScalarMap::zeros(depth.width(), depth.height())
    };
    let occ = OcclusionField::new(alpha, params.occlusion_brightness)?;
    let degraded = occlusion_composite(&background, &occ)?;
    let (alpha, _) = occ.into_parts();
    Ok(DegradedSample {
        degraded,
        clean: scene,
        transmission,
        alpha,
        params: params.clone(),
    })
}
