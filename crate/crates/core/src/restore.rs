//! Closed-form restoration: undo occlusion, then undo scattering.

use crate::error::{Error, Result};
use crate::imgcore::{Image, ScalarMap};
use crate::occlusion::{occlusion_invert, OcclusionField, DEFAULT_ALPHA_MAX};
use crate::priors::{
    dark_channel, estimate_atmospheric_light, estimate_occlusion, estimate_transmission, DarkChannelParams,
    OcclusionParams,
};
use crate::scatter::{scattering_invert, TransmissionMap, DEFAULT_T_MIN};
use crate::synth::{undo_low_light, DegradedSample, WeatherParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    pub t_min: f32,
    pub alpha_max: f32,
    /// Also undo the recorded low-light gamma, returning the scene before adjustment.
    pub invert_gamma: Option<f32>,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            t_min: DEFAULT_T_MIN,
            alpha_max: DEFAULT_ALPHA_MAX,
            invert_gamma: None,
        }
    }
}

/// The priors recorded at synthesis time.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePriors {
    pub transmission: TransmissionMap,
    pub occlusion: OcclusionField,
    pub light: f32,
    pub lowlight_gamma: Option<f32>,
}

impl OraclePriors {
    pub fn from_sample(sample: &DegradedSample) -> Self {
        OraclePriors {
            transmission: sample.transmission.clone(),
            occlusion: sample.occlusion(),
            light: sample.params.atmosphere.light,
            lowlight_gamma: Some(sample.params.lowlight_gamma),
        }
    }

    /// Combines stored maps with the scalar priors of a parameter record.
    pub fn from_params(params: &WeatherParams, t: ScalarMap, alpha: ScalarMap) -> Result<Self> {
        Ok(OraclePriors {
            transmission: TransmissionMap::new(t)?,
            occlusion: OcclusionField::new(alpha, params.occlusion_brightness)?,
            light: params.atmosphere.light,
            lowlight_gamma: Some(params.lowlight_gamma),
        })
    }

    /// Reads `atmosphere.A` and `occlusion_O` from a sample's metadata JSON
    /// (either a bare parameter record or a sidecar with a `params` key).
    pub fn from_meta_json(meta: &serde_json::Value, t: ScalarMap, alpha: ScalarMap) -> Result<Self> {
        let params = meta.get("params").unwrap_or(meta);
        let light = params
            .get("atmosphere")
            .and_then(|a| a.get("A"))
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::config("metadata lacks atmosphere.A"))?;
        let brightness = params
            .get("occlusion_O")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::config("metadata lacks occlusion_O"))?;
        let gamma = params.get("lowlight_gamma").and_then(|v| v.as_f64()).map(|g| g as f32);
        Ok(OraclePriors {
            transmission: TransmissionMap::new(t)?,
            occlusion: OcclusionField::new(alpha, brightness as f32)?,
            light: light as f32,
            lowlight_gamma: gamma,
        })
    }
}

fn invert_chain(
    observed: &Image,
    transmission: &TransmissionMap,
    occlusion: &OcclusionField,
    light: f32,
    opts: &InversionOptions,
) -> Result<Image> {
    let background = occlusion_invert(observed, occlusion, opts.alpha_max)?;
    let scene = scattering_invert(&background, transmission, light, opts.t_min)?;
    match opts.invert_gamma {
        Some(g) => undo_low_light(&scene, g),
        None => Ok(scene),
    }
}

/// Restores with the exact priors used at synthesis.
pub fn restore_with_oracle(observed: &Image, priors: &OraclePriors, opts: &InversionOptions) -> Result<Image> {
    invert_chain(observed, &priors.transmission, &priors.occlusion, priors.light, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateConfig {
    pub dark_channel: DarkChannelParams,
    pub occlusion: OcclusionParams,
    pub inversion: InversionOptions,
    /// Skip particle detection (haze-only input).
    pub skip_occlusion: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedPriors {
    pub transmission: TransmissionMap,
    pub occlusion: OcclusionField,
    pub light: f32,
}

/// Estimates the priors classically and runs the same inversion chain.
///
/// Particles are detected on the observed image; airlight and transmission
/// are then estimated on the particle-free background.
pub fn restore_with_estimated(observed: &Image, cfg: &EstimateConfig) -> Result<(Image, EstimatedPriors)> {
    let (w, h) = (observed.width(), observed.height());
    let occlusion = if cfg.skip_occlusion {
        OcclusionField::none(w, h)
    } else {
        estimate_occlusion(observed, &cfg.occlusion)?
    };
    let background = occlusion_invert(observed, &occlusion, cfg.inversion.alpha_max)?;
    let dcp = &cfg.dark_channel;
    let dc = dark_channel(&background, dcp.patch)?;
    let light = estimate_atmospheric_light(&background, &dc, dcp.top_frac)?;
    let (restored, transmission) = if light > 0.0 {
        let t = estimate_transmission(&background, light, dcp.omega, dcp.patch, dcp.t_min)?;
        let j = scattering_invert(&background, &t, light.min(1.0), cfg.inversion.t_min)?;
        (j, t)
    } else {
        // an all-black input carries no airlight to remove
        (background, TransmissionMap::clear(w, h))
    };
    let restored = match cfg.inversion.invert_gamma {
        Some(g) => undo_low_light(&restored, g)?,
        None => restored,
    };
    Ok((
        restored,
        EstimatedPriors {
            transmission,
            occlusion,
            light,
        },
    ))
}

/// Pixels where oracle inversion is exact (no clamp engaged).
pub fn valid_inversion_mask(priors: &OraclePriors, opts: &InversionOptions) -> Vec<bool> {
    priors
        .transmission
        .data()
        .iter()
        .zip(priors.occlusion.alpha().data())
        .map(|(&t, &a)| t >= opts.t_min && a <= opts.alpha_max)
        .collect()
}
