//! Procedural particle layers.
//!
//! Every layer is a pure function of `(shape, spec)`. The draw order from the
//! layer's ChaCha8 stream (all draws `f64` in `[0, 1)`) is:
//!
//! 1. one Bernoulli draw rounding the fractional part of the expected
//!    particle count `density * w * h / 1e6`;
//! 2. per rain streak: `cx`, `cy`, length factor in `[0.5, 1]`, intensity
//!    factor in `[0.6, 1]`;
//! 3. per snowflake: `cx`, `cy`, radius in `radius_range`, eccentricity in
//!    `[0.6, 1]`, rotation in `[0, pi)`, intensity factor in `[0.7, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::ScalarMap;
use crate::rng::{rng_from_seed, WeatherRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleKind {
    Rain,
    Snow,
}

/// Recipe for one thin particle layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: ParticleKind,
    /// Particles per megapixel.
    pub density: f32,
    /// Streak direction, degrees from vertical.
    #[serde(default)]
    pub angle: f32,
    /// Streak length in pixels.
    #[serde(default = "one")]
    pub length: f32,
    /// Streak width in pixels.
    #[serde(default = "one")]
    pub width: f32,
    /// Flake radius bounds in pixels.
    #[serde(default = "unit_range")]
    pub radius_range: [f32; 2],
    #[serde(default)]
    pub blur_sigma: f32,
    pub peak_alpha: f32,
    pub seed: u64,
}

fn one() -> f32 {
    1.0
}

fn unit_range() -> [f32; 2] {
    [1.0, 1.0]
}

impl LayerSpec {
    pub fn rain(density: f32, angle: f32, length: f32, width: f32, peak_alpha: f32, seed: u64) -> Self {
        LayerSpec {
            kind: ParticleKind::Rain,
            density,
            angle,
            length,
            width,
            radius_range: unit_range(),
            blur_sigma: 0.0,
            peak_alpha,
            seed,
        }
    }

    pub fn snow(density: f32, radius_range: [f32; 2], peak_alpha: f32, seed: u64) -> Self {
        LayerSpec {
            kind: ParticleKind::Snow,
            density,
            angle: 0.0,
            length: 1.0,
            width: 1.0,
            radius_range,
            blur_sigma: 0.0,
            peak_alpha,
            seed,
        }
    }

    pub fn with_blur(mut self, sigma: f32) -> Self {
        self.blur_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(Error::config(format!("layer density must be >= 0, got {}", self.density)));
        }
        if !(0.0..=1.0).contains(&self.peak_alpha) {
            return Err(Error::config(format!(
                "peak alpha must lie in [0, 1], got {}",
                self.peak_alpha
            )));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::config("blur sigma must be >= 0"));
        }
        match self.kind {
            ParticleKind::Rain => {
                if !(self.width >= 1.0 && self.length >= self.width) {
                    return Err(Error::config(format!(
                        "rain streaks need length >= width >= 1, got length {} width {}",
                        self.length, self.width
                    )));
                }
            }
            ParticleKind::Snow => {
                let [lo, hi] = self.radius_range;
                if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(Error::config(format!(
                        "snow radius range must satisfy 0 < min <= max, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Renders the layer at `width x height`.
    pub fn render(&self, width: usize, height: usize) -> Result<ScalarMap> {
        match self.kind {
            ParticleKind::Rain => generate_rain_layer((height, width), self),
            ParticleKind::Snow => generate_snow_layer((height, width), self),
        }
    }
}

/// One straight rain streak, in pixel coordinates (pixel centers at `+0.5`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Streak {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub half_width: f64,
    pub intensity: f64,
}

/// One elliptical snowflake with Gaussian falloff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flake {
    pub cx: f64,
    pub cy: f64,
    /// Semi-major axis, pixels; the falloff reaches `exp(-2)` there.
    pub radius: f64,
    /// Minor / major axis ratio.
    pub eccentricity: f64,
    pub rotation: f64,
    pub intensity: f64,
}

fn check_shape(shape: (usize, usize)) -> Result<()> {
    if shape.0 == 0 || shape.1 == 0 {
        Err(Error::shape(format!(
            "particle layers need a non-empty raster, got {}x{}",
            shape.1, shape.0
        )))
    } else {
        Ok(())
    }
}

fn particle_count(rng: &mut WeatherRng, density: f32, shape: (usize, usize)) -> usize {
    let expected = density as f64 * (shape.0 * shape.1) as f64 / 1e6;
    let whole = expected.floor();
    let frac = expected - whole;
    let bump = rng.random::<f64>() < frac;
    whole as usize + bump as usize
}

#[inline]
fn lerp(lo: f64, hi: f64, u: f64) -> f64 {
    lo + (hi - lo) * u
}

/// Samples the streak geometry of a rain layer.
pub fn rain_streaks(shape: (usize, usize), spec: &LayerSpec) -> Result<Vec<Streak>> {
    check_shape(shape)?;
    if spec.kind != ParticleKind::Rain {
        return Err(Error::config("expected a rain layer spec"));
    }
    spec.validate()?;
    let (h, w) = (shape.0 as f64, shape.1 as f64);
    let mut rng = rng_from_seed(spec.seed);
    let n = particle_count(&mut rng, spec.density, shape);
    let theta = (spec.angle as f64).to_radians();
    let (dx, dy) = (theta.sin(), theta.cos());
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let cx = rng.random::<f64>() * w;
        let cy = rng.random::<f64>() * h;
        let len = spec.length as f64 * lerp(0.5, 1.0, rng.random());
        let intensity = spec.peak_alpha as f64 * lerp(0.6, 1.0, rng.random());
        let half = 0.5 * len;
        out.push(Streak {
            x0: cx - half * dx,
            y0: cy - half * dy,
            x1: cx + half * dx,
            y1: cy + half * dy,
            half_width: 0.5 * spec.width as f64,
            intensity,
        });
    }
    Ok(out)
}

/// Samples the flake geometry of a snow layer.
pub fn snow_flakes(shape: (usize, usize), spec: &LayerSpec) -> Result<Vec<Flake>> {
    check_shape(shape)?;
    if spec.kind != ParticleKind::Snow {
        return Err(Error::config("expected a snow layer spec"));
    }
    spec.validate()?;
    let (h, w) = (shape.0 as f64, shape.1 as f64);
    let [rlo, rhi] = spec.radius_range;
    let mut rng = rng_from_seed(spec.seed);
    let n = particle_count(&mut rng, spec.density, shape);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let cx = rng.random::<f64>() * w;
        let cy = rng.random::<f64>() * h;
        let radius = lerp(rlo as f64, rhi as f64, rng.random());
        let eccentricity = lerp(0.6, 1.0, rng.random());
        let rotation = std::f64::consts::PI * rng.random::<f64>();
        let intensity = spec.peak_alpha as f64 * lerp(0.7, 1.0, rng.random());
        out.push(Flake {
            cx,
            cy,
            radius,
            eccentricity,
            rotation,
            intensity,
        });
    }
    Ok(out)
}

/// Oriented anti-aliased streaks, Gaussian-blurred by `blur_sigma`.
/// Values lie in `[0, peak_alpha]`; overlapping streaks combine by maximum.
pub fn generate_rain_layer(shape: (usize, usize), spec: &LayerSpec) -> Result<ScalarMap> {
    let streaks = rain_streaks(shape, spec)?;
    let (h, w) = shape;
    let mut map = ScalarMap::zeros(w, h);
    for s in &streaks {
        draw_streak(&mut map, s);
    }
    Ok(finish_layer(map, spec))
}

/// Gaussian-falloff ellipses, blurred by `blur_sigma`. Values lie in `[0, peak_alpha]`.
pub fn generate_snow_layer(shape: (usize, usize), spec: &LayerSpec) -> Result<ScalarMap> {
    let flakes = snow_flakes(shape, spec)?;
    let (h, w) = shape;
    let mut map = ScalarMap::zeros(w, h);
    for f in &flakes {
        draw_flake(&mut map, f);
    }
    Ok(finish_layer(map, spec))
}

fn finish_layer(map: ScalarMap, spec: &LayerSpec) -> ScalarMap {
    let peak = spec.peak_alpha;
    let mut map = if spec.blur_sigma > 0.0 {
        gaussian_blur(&map, spec.blur_sigma)
    } else {
        map
    };
    for v in map.data_mut() {
        *v = v.clamp(0.0, peak);
    }
    map
}

/// Pixel coverage from the distance between the pixel center and the
/// streak axis: 1 inside the body, a one-pixel linear ramp at the rim.
fn draw_streak(map: &mut ScalarMap, s: &Streak) {
    let reach = s.half_width + 0.5;
    let (w, h) = (map.width(), map.height());
    let xmin = (s.x0.min(s.x1) - reach).floor().max(0.0) as usize;
    let ymin = (s.y0.min(s.y1) - reach).floor().max(0.0) as usize;
    let xmax = ((s.x0.max(s.x1) + reach).ceil().max(0.0) as usize).min(w);
    let ymax = ((s.y0.max(s.y1) + reach).ceil().max(0.0) as usize).min(h);
    let (ex, ey) = (s.x1 - s.x0, s.y1 - s.y0);
    let len2 = ex * ex + ey * ey;
    let data = map.data_mut();
    for y in ymin..ymax {
        let py = y as f64 + 0.5;
        for x in xmin..xmax {
            let px = x as f64 + 0.5;
            let u = if len2 > 0.0 {
                (((px - s.x0) * ex + (py - s.y0) * ey) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (s.x0 + u * ex - px, s.y0 + u * ey - py);
            let dist = (qx * qx + qy * qy).sqrt();
            let coverage = (reach - dist).clamp(0.0, 1.0);
            if coverage > 0.0 {
                let v = (s.intensity * coverage) as f32;
                let cell = &mut data[y * w + x];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
}

fn draw_flake(map: &mut ScalarMap, f: &Flake) {
    // truncate at 1.5 radii (3 sigma)
    let reach = 1.5 * f.radius;
    let (w, h) = (map.width(), map.height());
    let xmin = (f.cx - reach).floor().max(0.0) as usize;
    let ymin = (f.cy - reach).floor().max(0.0) as usize;
    let xmax = ((f.cx + reach).ceil().max(0.0) as usize).min(w);
    let ymax = ((f.cy + reach).ceil().max(0.0) as usize).min(h);
    let (sin, cos) = f.rotation.sin_cos();
    let sigma_major = 0.5 * f.radius;
    let sigma_minor = sigma_major * f.eccentricity;
    let data = map.data_mut();
    for y in ymin..ymax {
        let dy = y as f64 + 0.5 - f.cy;
        for x in xmin..xmax {
            let dx = x as f64 + 0.5 - f.cx;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            let q = (u / sigma_major).powi(2) + (v / sigma_minor).powi(2);
            if q > 9.0 {
                continue;
            }
            let val = (f.intensity * (-0.5 * q).exp()) as f32;
            let cell = &mut data[y * w + x];
            if val > *cell {
                *cell = val;
            }
        }
    }
}

/// Separable Gaussian blur with a `ceil(3 sigma)` radius; pixels outside the
/// raster count as zero.
pub fn gaussian_blur(map: &ScalarMap, sigma: f32) -> ScalarMap {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let kernel: Vec<f32> = {
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-(d * d) / (2.0 * (sigma as f64).powi(2))).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|k| (k / sum) as f32).collect()
    };
    let (w, h) = (map.width(), map.height());
    let src = map.data();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            let mut acc = 0.0;
            for (xx, v) in row.iter().enumerate().take(hi + 1).skip(lo) {
                acc += v * kernel[xx + radius - x];
            }
            *o = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        let dst = &mut out[y * w..(y + 1) * w];
        for yy in lo..=hi {
            let k = kernel[yy + radius - y];
            let row = &tmp[yy * w..(yy + 1) * w];
            for (d, v) in dst.iter_mut().zip(row) {
                *d += k * v;
            }
        }
    }
    ScalarMap::new(w, h, out).expect("blur preserves shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn empty_layers() {
        let rain = LayerSpec::rain(0.0, 10.0, 20.0, 1.0, 0.8, 1).with_blur(1.0);
        assert!(generate_rain_layer((32, 32), &rain).unwrap().data().iter().all(|&v| v == 0.0));
        let snow = LayerSpec::snow(0.0, [1.0, 3.0], 0.8, 1);
        assert!(generate_snow_layer((32, 32), &snow).unwrap().data().iter().all(|&v| v == 0.0));
        let snow = LayerSpec::snow(20_000.0, [1.0, 3.0], 0.0, 1);
        assert!(generate_snow_layer((32, 32), &snow).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layers_are_deterministic() {
        let rain = LayerSpec::rain(3000.0, -15.0, 25.0, 2.0, 0.7, 99).with_blur(0.8);
        let a = generate_rain_layer((80, 60), &rain).unwrap();
        let b = generate_rain_layer((80, 60), &rain).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let mut other = rain.clone();
        other.seed = 100;
        assert_ne!(generate_rain_layer((80, 60), &other).unwrap(), a);
    }

    #[test]
    fn rejects_bad_specs() {
        let rain = LayerSpec::rain(10.0, 0.0, 20.0, 1.0, 0.8, 1);
        assert!(matches!(generate_rain_layer((0, 10), &rain), Err(Error::Shape(_))));
        assert!(matches!(generate_snow_layer((10, 10), &rain), Err(Error::Config(_))));
        let snow = LayerSpec::snow(10.0, [3.0, 1.0], 0.8, 1);
        assert!(matches!(generate_snow_layer((10, 10), &snow), Err(Error::Config(_))));
        let thin = LayerSpec::rain(10.0, 0.0, 0.5, 1.0, 0.8, 1);
        assert!(thin.validate().is_err());
    }

    /// Marks every pixel touched by a dense point sampling of the streak body
    /// (a capsule of radius `half_width` around the segment).
    fn supersampled_footprint(streaks: &[Streak], w: usize, h: usize) -> usize {
        let mut hit = HashSet::new();
        for s in streaks {
            let (ex, ey) = (s.x1 - s.x0, s.y1 - s.y0);
            let len = (ex * ex + ey * ey).sqrt();
            let (ux, uy) = (ex / len, ey / len);
            let (nx, ny) = (-uy, ux);
            let r = s.half_width;
            let step = 0.05;
            let mut a = -r;
            while a <= len + r {
                let mut b = -r;
                while b <= r {
                    // capsule test
                    let along = a.clamp(0.0, len);
                    let d2 = (a - along).powi(2) + b * b;
                    if d2 <= r * r {
                        let px = s.x0 + a * ux + b * nx;
                        let py = s.y0 + a * uy + b * ny;
                        if px >= 0.0 && py >= 0.0 && (px as usize) < w && (py as usize) < h {
                            hit.insert((px as usize, py as usize));
                        }
                    }
                    b += step;
                }
                a += step;
            }
        }
        hit.len()
    }

    #[test]
    fn rain_coverage_matches_rasterization_count() {
        for (seed, density) in [(7u64, 500.0f32), (8, 2000.0), (9, 6000.0)] {
            let spec = LayerSpec::rain(density, 12.0, 18.0, 2.0, 0.9, seed);
            let map = generate_rain_layer((64, 64), &spec).unwrap();
            let streaks = rain_streaks((64, 64), &spec).unwrap();
            let rendered = map.data().iter().filter(|&&v| v > 0.0).count();
            let expected = supersampled_footprint(&streaks, 64, 64);
            if expected == 0 {
                assert_eq!(rendered, 0);
                continue;
            }
            let ratio = rendered as f64 / expected as f64;
            assert!((0.8..=1.2).contains(&ratio), "seed {seed}: {rendered} vs {expected}");
        }
    }

    #[test]
    fn blur_preserves_mass_away_from_borders() {
        let mut m = ScalarMap::zeros(21, 21);
        m.data_mut()[10 * 21 + 10] = 1.0;
        let b = gaussian_blur(&m, 1.5);
        let total: f32 = b.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
        assert!(b.data().iter().all(|&v| v <= 1.0));
    }
}
