//! Haze scattering: transmission from depth, the airlight composite
//! `B = J t + A (1 - t)` and its inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{clamp_unit, Image, ScalarMap, CHANNELS};

/// Default lower bound on transmission used when inverting the composite.
pub const DEFAULT_T_MIN: f32 = 0.05;

/// Per-pixel transmission, every sample in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap(ScalarMap);

impl TransmissionMap {
    pub fn new(map: ScalarMap) -> Result<Self> {
        if let Some((index, &value)) = map
            .data()
            .iter()
            .enumerate()
            .find(|(_, t)| !(**t > 0.0 && **t <= 1.0))
        {
            return Err(Error::Domain {
                index,
                value,
                reason: "transmission must lie in (0, 1]",
            });
        }
        Ok(TransmissionMap(map))
    }

    /// `t ≡ 1`: no scattering anywhere.
    pub fn clear(width: usize, height: usize) -> Self {
        TransmissionMap(ScalarMap::filled(width, height, 1.0))
    }

    pub fn map(&self) -> &ScalarMap {
        &self.0
    }

    pub fn into_map(self) -> ScalarMap {
        self.0
    }

    pub fn data(&self) -> &[f32] {
        self.0.data()
    }
}

/// Global airlight brightness and scattering coefficient (per meter).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atmosphere {
    #[serde(rename = "A")]
    pub light: f32,
    pub beta: f32,
}

impl Atmosphere {
    pub fn new(light: f32, beta: f32) -> Result<Self> {
        let atm = Atmosphere { light, beta };
        atm.validate()?;
        Ok(atm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.light) {
            return Err(Error::config(format!(
                "atmospheric light must lie in [0, 1], got {}",
                self.light
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!(
                "scattering coefficient must be finite and >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// `t(x) = exp(-beta d(x))`. Depth is in meters.
pub fn transmission_from_depth(depth: &ScalarMap, beta: f32) -> Result<TransmissionMap> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::config(format!(
            "scattering coefficient must be finite and >= 0, got {beta}"
        )));
    }
    if let Some((index, &value)) = depth
        .data()
        .iter()
        .enumerate()
        .find(|(_, d)| !(**d >= 0.0))
    {
        return Err(Error::Domain {
            index,
            value,
            reason: "depth must be >= 0",
        });
    }
    let t = depth.map(|d| {
        // f32 underflow at extreme depths would break t > 0
        ((-(beta as f64) * d as f64).exp() as f32).max(f32::MIN_POSITIVE)
    });
    Ok(TransmissionMap(t))
}

/// `B(x) = J(x) t(x) + A (1 - t(x))` per channel.
pub fn scattering_composite(clean: &Image, t: &TransmissionMap, light: f32) -> Result<Image> {
    clean.ensure_matches(t.map(), "transmission")?;
    check_light(light)?;
    let data = clean
        .pixels()
        .zip(t.data())
        .flat_map(|(px, &t)| {
            let mut out = [0.0f32; CHANNELS];
            for (o, &j) in out.iter_mut().zip(px) {
                *o = clamp_unit(j * t + light * (1.0 - t));
            }
            out
        })
        .collect();
    Ok(Image::from_raw_unchecked(clean.width(), clean.height(), data))
}

/// `J(x) = (B(x) - A (1 - t')) / t'` with `t' = max(t(x), t_min)`, clamped to `[0, 1]`.
pub fn scattering_invert(hazy: &Image, t: &TransmissionMap, light: f32, t_min: f32) -> Result<Image> {
    if !(t_min > 0.0 && t_min <= 1.0) {
        return Err(Error::config(format!("t_min must lie in (0, 1], got {t_min}")));
    }
    hazy.ensure_matches(t.map(), "transmission")?;
    check_light(light)?;
    let data = hazy
        .pixels()
        .zip(t.data())
        .flat_map(|(px, &t)| {
            let t = t.max(t_min);
            let mut out = [0.0f32; CHANNELS];
            for (o, &b) in out.iter_mut().zip(px) {
                *o = clamp_unit((b - light * (1.0 - t)) / t);
            }
            out
        })
        .collect();
    Ok(Image::from_raw_unchecked(hazy.width(), hazy.height(), data))
}

fn check_light(light: f32) -> Result<()> {
    if (0.0..=1.0).contains(&light) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "atmospheric light must lie in [0, 1], got {light}"
        )))
    }
}
