//! Visible-particle occlusion: procedural rain/snow layers, depth-weighted
//! volumetric alpha, the matting composite `I = O a + B (1 - a)` and its
//! inverse.

mod layers;
mod visibility;

pub use layers::{
    gaussian_blur, generate_rain_layer, generate_snow_layer, rain_streaks, snow_flakes, Flake,
    LayerSpec, ParticleKind, Streak,
};
pub use visibility::{visibility_regime, VisibilityParams, VisibilityRegime};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{clamp_unit, Image, ScalarMap, CHANNELS};

/// Default upper bound on alpha used when inverting the composite.
pub const DEFAULT_ALPHA_MAX: f32 = 0.95;

/// Occlusion transparency map plus the (image-constant) particle brightness `O`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionField {
    alpha: ScalarMap,
    brightness: f32,
}

impl OcclusionField {
    pub fn new(alpha: ScalarMap, brightness: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&brightness) {
            return Err(Error::config(format!(
                "occlusion brightness must lie in [0, 1], got {brightness}"
            )));
        }
        if let Some((index, &value)) = alpha
            .data()
            .iter()
            .enumerate()
            .find(|(_, a)| !(0.0..=1.0).contains(*a))
        {
            return Err(Error::Domain {
                index,
                value,
                reason: "alpha must lie in [0, 1]",
            });
        }
        Ok(OcclusionField { alpha, brightness })
    }

    /// No particles: `alpha ≡ 0`.
    pub fn none(width: usize, height: usize) -> Self {
        OcclusionField {
            alpha: ScalarMap::zeros(width, height),
            brightness: 1.0,
        }
    }

    pub fn alpha(&self) -> &ScalarMap {
        &self.alpha
    }

    pub fn brightness(&self) -> f32 {
        self.brightness
    }

    pub fn into_parts(self) -> (ScalarMap, f32) {
        (self.alpha, self.brightness)
    }
}

/// Near layers are added at full strength; the `N` far layers are weighted
/// by `1 - exp(-beta d)` so deeper pixels collect more particles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VolumetricConfig {
    pub near_layers: Vec<LayerSpec>,
    pub far_layers: Vec<LayerSpec>,
    pub beta: f32,
}

impl VolumetricConfig {
    pub fn is_empty(&self) -> bool {
        self.near_layers.is_empty() && self.far_layers.is_empty()
    }

    /// Renders every layer at the given size, near layers first.
    pub fn render_layers(&self, width: usize, height: usize) -> Result<(Vec<ScalarMap>, Vec<ScalarMap>)> {
        let render = |specs: &[LayerSpec]| -> Result<Vec<ScalarMap>> {
            specs.iter().map(|s| s.render(width, height)).collect()
        };
        Ok((render(&self.near_layers)?, render(&self.far_layers)?))
    }
}

/// Renders the configured layers at the depth map's size and combines them
/// with [`combine_alpha`].
pub fn volumetric_alpha(cfg: &VolumetricConfig, depth: &ScalarMap) -> Result<ScalarMap> {
    if cfg.is_empty() {
        return Ok(ScalarMap::zeros(depth.width(), depth.height()));
    }
    let (near, far) = cfg.render_layers(depth.width(), depth.height())?;
    combine_alpha(&near, &far, cfg.beta, depth)
}

/// `alpha(x) = clamp(sum(near)(x) + (1 - exp(-beta d(x))) * sum(far)(x), 0, 1)`.
pub fn combine_alpha(near: &[ScalarMap], far: &[ScalarMap], beta: f32, depth: &ScalarMap) -> Result<ScalarMap> {
    for (i, m) in near.iter().chain(far).enumerate() {
        depth.ensure_matches(m, &format!("particle layer {i}"))?;
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("beta must be >= 0, got {beta}")));
    }
    let data = (0..depth.len())
        .map(|i| {
            let near_sum: f32 = near.iter().map(|m| m.data()[i]).sum();
            let far_sum: f32 = far.iter().map(|m| m.data()[i]).sum();
            let weight = far_weight(beta, depth.data()[i]);
            (near_sum + weight * far_sum).clamp(0.0, 1.0)
        })
        .collect();
    ScalarMap::new(depth.width(), depth.height(), data)
}

/// Far-layer weight `1 - exp(-beta d)`; negative depths count as zero.
#[inline]
pub fn far_weight(beta: f32, depth: f32) -> f32 {
    (-(-(beta as f64) * depth.max(0.0) as f64).exp_m1()) as f32
}

/// `I(x) = O alpha(x) + B(x) (1 - alpha(x))` per channel.
pub fn occlusion_composite(background: &Image, occ: &OcclusionField) -> Result<Image> {
    background.ensure_matches(occ.alpha(), "alpha")?;
    let o = occ.brightness;
    let data = background
        .pixels()
        .zip(occ.alpha.data())
        .flat_map(|(px, &a)| {
            let mut out = [0.0f32; CHANNELS];
            for (v, &b) in out.iter_mut().zip(px) {
                *v = clamp_unit(o * a + b * (1.0 - a));
            }
            out
        })
        .collect();
    Ok(Image::from_raw_unchecked(background.width(), background.height(), data))
}

/// `B(x) = (I(x) - O a') / (1 - a')` with `a' = min(alpha(x), alpha_max)`, clamped to `[0, 1]`.
pub fn occlusion_invert(observed: &Image, occ: &OcclusionField, alpha_max: f32) -> Result<Image> {
    if !(0.0..1.0).contains(&alpha_max) {
        return Err(Error::config(format!(
            "alpha_max must lie in [0, 1), got {alpha_max}"
        )));
    }
    observed.ensure_matches(occ.alpha(), "alpha")?;
    let o = occ.brightness;
    let data = observed
        .pixels()
        .zip(occ.alpha.data())
        .flat_map(|(px, &a)| {
            let a = a.min(alpha_max);
            let mut out = [0.0f32; CHANNELS];
            for (v, &i) in out.iter_mut().zip(px) {
                *v = clamp_unit((i - o * a) / (1.0 - a));
            }
            out
        })
        .collect();
    Ok(Image::from_raw_unchecked(observed.width(), observed.height(), data))
}
