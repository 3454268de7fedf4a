use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::occlusion::{LayerSpec, ParticleKind, VolumetricConfig};
use crate::rng::{layer_seed, rng_from_seed, sample_seed, WeatherRng};
use crate::scatter::Atmosphere;

/// The weather family requested for a sample. Rain and snow samples pick up
/// scattering with probability [`SamplingRanges::scatter_fraction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherKind {
    Haze,
    Rain,
    Snow,
}

/// The realized degradation of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherType {
    Haze,
    Rain,
    RainHaze,
    Snow,
    SnowHaze,
}

impl WeatherType {
    /// Whether the scattering stage is applied (`t < 1`).
    pub fn has_scattering(self) -> bool {
        matches!(
            self,
            WeatherType::Haze | WeatherType::RainHaze | WeatherType::SnowHaze
        )
    }

    /// Whether particle occlusions are present.
    pub fn has_particles(self) -> bool {
        !matches!(self, WeatherType::Haze)
    }

    pub fn kind(self) -> WeatherKind {
        match self {
            WeatherType::Haze => WeatherKind::Haze,
            WeatherType::Rain | WeatherType::RainHaze => WeatherKind::Rain,
            WeatherType::Snow | WeatherType::SnowHaze => WeatherKind::Snow,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeatherType::Haze => "haze",
            WeatherType::Rain => "rain",
            WeatherType::RainHaze => "rain_haze",
            WeatherType::Snow => "snow",
            WeatherType::SnowHaze => "snow_haze",
        }
    }
}

/// Everything needed to reproduce one degraded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherParams {
    pub weather_type: WeatherType,
    pub atmosphere: Atmosphere,
    /// Empty for haze. Its `beta` equals `atmosphere.beta` and weights the far
    /// layers even when the scattering stage is skipped.
    pub volumetric: VolumetricConfig,
    #[serde(rename = "occlusion_O")]
    pub occlusion_brightness: f32,
    pub lowlight_gamma: f32,
    pub seed: u64,
}

pub type Interval = [f32; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainRanges {
    pub density: Interval,
    pub angle: Interval,
    pub length: Interval,
    pub width: Interval,
    pub blur_sigma: Interval,
    pub peak_alpha: Interval,
}

impl Default for RainRanges {
    fn default() -> Self {
        RainRanges {
            density: [1500.0, 4000.0],
            angle: [-20.0, 20.0],
            length: [16.0, 36.0],
            width: [1.0, 2.0],
            blur_sigma: [0.4, 1.0],
            peak_alpha: [0.45, 0.85],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnowRanges {
    pub density: Interval,
    pub radius: Interval,
    pub blur_sigma: Interval,
    pub peak_alpha: Interval,
}

impl Default for SnowRanges {
    fn default() -> Self {
        SnowRanges {
            density: [600.0, 2000.0],
            radius: [1.5, 4.5],
            blur_sigma: [0.3, 0.8],
            peak_alpha: [0.55, 0.9],
        }
    }
}

/// Sampling ranges for [`sample_weather_params`]. Every field can be
/// overridden from a dataset config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingRanges {
    pub beta: Interval,
    pub atmospheric_light: Interval,
    pub occlusion_brightness: Interval,
    pub lowlight_gamma: Interval,
    /// Fraction of rain/snow samples that also receive scattering.
    pub scatter_fraction: f64,
    pub near_layers: usize,
    pub far_layers: usize,
    pub rain: RainRanges,
    pub snow: SnowRanges,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        SamplingRanges {
            beta: [0.005, 0.03],
            atmospheric_light: [0.75, 1.0],
            occlusion_brightness: [0.8, 1.0],
            lowlight_gamma: [1.0, 2.2],
            scatter_fraction: 0.5,
            near_layers: 1,
            far_layers: 4,
            rain: RainRanges::default(),
            snow: SnowRanges::default(),
        }
    }
}

impl SamplingRanges {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        let check = |name: &str, r: Interval, lo: f32, hi: f32| -> crate::Result<()> {
            if !(r[0] <= r[1] && r[0] >= lo && r[1] <= hi) {
                return Err(Error::config(format!(
                    "range {name} = [{}, {}] must be ordered and within [{lo}, {hi}]",
                    r[0], r[1]
                )));
            }
            Ok(())
        };
        check("beta", self.beta, 0.0, f32::INFINITY)?;
        check("atmospheric_light", self.atmospheric_light, 0.0, 1.0)?;
        check("occlusion_brightness", self.occlusion_brightness, 0.0, 1.0)?;
        check("lowlight_gamma", self.lowlight_gamma, 1.0, f32::INFINITY)?;
        check("rain.density", self.rain.density, 0.0, f32::INFINITY)?;
        check("rain.angle", self.rain.angle, -90.0, 90.0)?;
        check("rain.width", self.rain.width, 1.0, f32::INFINITY)?;
        check("rain.length", self.rain.length, self.rain.width[1], f32::INFINITY)?;
        check("rain.blur_sigma", self.rain.blur_sigma, 0.0, f32::INFINITY)?;
        check("rain.peak_alpha", self.rain.peak_alpha, 0.0, 1.0)?;
        check("snow.density", self.snow.density, 0.0, f32::INFINITY)?;
        check("snow.radius", self.snow.radius, f32::MIN_POSITIVE, f32::INFINITY)?;
        check("snow.blur_sigma", self.snow.blur_sigma, 0.0, f32::INFINITY)?;
        check("snow.peak_alpha", self.snow.peak_alpha, 0.0, 1.0)?;
        if !(0.0..=1.0).contains(&self.scatter_fraction) {
            return Err(Error::config("scatter_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[inline]
fn uniform(rng: &mut WeatherRng, r: Interval) -> f32 {
    let u: f32 = rng.random();
    r[0] + (r[1] - r[0]) * u
}

/// Far layer `l` (1-based) is denser, smaller and fainter than the near layer.
fn far_scale(l: usize) -> (f32, f32, f32) {
    let l = l as f32;
    let density = 1.0 + 0.5 * l;
    let size = 1.0 / (1.0 + 0.5 * l);
    let peak = 0.85f32.powf(l);
    (density, size, peak)
}

/// Draws the degradation recipe of sample `index`.
///
/// Draw order from the sample stream: beta, A, O, gamma, scattering coin,
/// then (rain) a shared streak angle, then per layer the layer's own draws.
/// Layer `k` gets its particle seed from `(master_seed, index, k)`.
pub fn sample_weather_params(master_seed: u64, index: u64, kind: WeatherKind, ranges: &SamplingRanges) -> WeatherParams {
    let mut rng = rng_from_seed(sample_seed(master_seed, index));
    let beta = uniform(&mut rng, ranges.beta);
    let light = uniform(&mut rng, ranges.atmospheric_light);
    let brightness = uniform(&mut rng, ranges.occlusion_brightness);
    let gamma = uniform(&mut rng, ranges.lowlight_gamma);
    let coin = rng.random::<f64>() < ranges.scatter_fraction;

    let weather_type = match (kind, coin) {
        (WeatherKind::Haze, _) => WeatherType::Haze,
        (WeatherKind::Rain, false) => WeatherType::Rain,
        (WeatherKind::Rain, true) => WeatherType::RainHaze,
        (WeatherKind::Snow, false) => WeatherType::Snow,
        (WeatherKind::Snow, true) => WeatherType::SnowHaze,
    };

    let volumetric = match kind {
        WeatherKind::Haze => VolumetricConfig::default(),
        WeatherKind::Rain => {
            let r = &ranges.rain;
            let angle = uniform(&mut rng, r.angle);
            let mut layer = |k: usize, far: usize, rng: &mut WeatherRng| {
                let (ds, ss, ps) = far_scale(far);
                let density = uniform(rng, r.density) * ds;
                let width = (uniform(rng, r.width) * ss.sqrt()).max(1.0);
                let length = (uniform(rng, r.length) * ss).max(width);
                let blur = uniform(rng, r.blur_sigma);
                let peak = uniform(rng, r.peak_alpha) * ps;
                LayerSpec::rain(density, angle, length, width, peak, layer_seed(master_seed, index, k as u64))
                    .with_blur(blur)
            };
            build_layers(ranges, &mut rng, &mut layer, beta)
        }
        WeatherKind::Snow => {
            let s = &ranges.snow;
            let mut layer = |k: usize, far: usize, rng: &mut WeatherRng| {
                let (ds, ss, ps) = far_scale(far);
                let density = uniform(rng, s.density) * ds;
                let lo = (s.radius[0] * ss).max(0.5);
                let hi = (s.radius[1] * ss).max(lo);
                let blur = uniform(rng, s.blur_sigma);
                let peak = uniform(rng, s.peak_alpha) * ps;
                LayerSpec::snow(density, [lo, hi], peak, layer_seed(master_seed, index, k as u64)).with_blur(blur)
            };
            build_layers(ranges, &mut rng, &mut layer, beta)
        }
    };

    WeatherParams {
        weather_type,
        atmosphere: Atmosphere { light, beta },
        volumetric,
        occlusion_brightness: brightness,
        lowlight_gamma: gamma,
        seed: sample_seed(master_seed, index),
    }
}

fn build_layers(
    ranges: &SamplingRanges,
    rng: &mut WeatherRng,
    layer: &mut impl FnMut(usize, usize, &mut WeatherRng) -> LayerSpec,
    beta: f32,
) -> VolumetricConfig {
    let near = (0..ranges.near_layers).map(|k| layer(k, 0, rng)).collect();
    let far = (1..=ranges.far_layers)
        .map(|l| layer(ranges.near_layers + l - 1, l, rng))
        .collect();
    VolumetricConfig {
        near_layers: near,
        far_layers: far,
        beta,
    }
}

impl WeatherParams {
    pub fn particle_kind(&self) -> Option<ParticleKind> {
        match self.weather_type.kind() {
            WeatherKind::Haze => None,
            WeatherKind::Rain => Some(ParticleKind::Rain),
            WeatherKind::Snow => Some(ParticleKind::Snow),
        }
    }
}
