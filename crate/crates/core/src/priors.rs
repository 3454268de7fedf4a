//! Classical, training-free estimates of the weather priors: dark-channel
//! transmission and airlight, and a top-hat detector for thin bright
//! particles.

use crate::error::{Error, Result};
use crate::imgcore::{Image, ScalarMap, CHANNELS};
use crate::occlusion::OcclusionField;
use crate::scatter::{TransmissionMap, DEFAULT_T_MIN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkChannelParams {
    pub patch: usize,
    pub omega: f32,
    pub top_frac: f32,
    pub t_min: f32,
}

impl Default for DarkChannelParams {
    fn default() -> Self {
        DarkChannelParams {
            patch: 15,
            omega: 0.95,
            top_frac: 0.001,
            t_min: DEFAULT_T_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionParams {
    /// Minimum white top-hat response (gray levels) for a particle pixel.
    pub bright_thresh: f32,
    /// Connected components with this many pixels or more are scene structure.
    pub size_max: usize,
    /// Side of the square structuring element; wider structures are background.
    pub window: usize,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        OcclusionParams {
            bright_thresh: 0.05,
            size_max: 400,
            window: 9,
        }
    }
}

fn check_patch(patch: usize) -> Result<()> {
    if patch == 0 || patch.is_multiple_of(2) {
        return Err(Error::config(format!("patch size must be odd and >= 1, got {patch}")));
    }
    Ok(())
}

/// Sliding minimum along rows then columns over a `patch x patch` window,
/// clipped at the borders.
fn min_filter(src: &[f32], w: usize, h: usize, patch: usize) -> Vec<f32> {
    window_filter(src, w, h, patch, f32::min, f32::INFINITY)
}

fn max_filter(src: &[f32], w: usize, h: usize, patch: usize) -> Vec<f32> {
    window_filter(src, w, h, patch, f32::max, f32::NEG_INFINITY)
}

fn window_filter(src: &[f32], w: usize, h: usize, patch: usize, op: fn(f32, f32) -> f32, init: f32) -> Vec<f32> {
    let r = patch / 2;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = row[lo..=hi].iter().copied().fold(init, op);
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| tmp[yy * w + x]).fold(init, op);
        }
    }
    out
}

fn dark_channel_of(samples: &[f32], w: usize, h: usize, patch: usize, scale: f32) -> Vec<f32> {
    let per_pixel: Vec<f32> = samples
        .chunks_exact(CHANNELS)
        .map(|p| p.iter().fold(f32::INFINITY, |m, &v| m.min(v / scale)))
        .collect();
    min_filter(&per_pixel, w, h, patch)
}

/// Minimum over the channels and a `patch x patch` neighbourhood.
pub fn dark_channel(img: &Image, patch: usize) -> Result<ScalarMap> {
    check_patch(patch)?;
    let dc = dark_channel_of(img.data(), img.width(), img.height(), patch, 1.0);
    ScalarMap::new(img.width(), img.height(), dc)
}

/// Mean gray level over the `top_frac` brightest dark-channel pixels
/// (at least one pixel; ties go to the lower pixel index).
pub fn estimate_atmospheric_light(img: &Image, dc: &ScalarMap, top_frac: f32) -> Result<f32> {
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::config(format!("top_frac must lie in (0, 1], got {top_frac}")));
    }
    img.ensure_matches(dc, "dark channel")?;
    let n = img.pixel_count();
    if n == 0 {
        return Err(Error::shape("empty image"));
    }
    let take = ((top_frac as f64 * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among equal dark-channel values
    order.sort_by(|&a, &b| dc.data()[b].total_cmp(&dc.data()[a]));
    let gray = img.gray();
    let sum: f64 = order[..take].iter().map(|&i| gray.data()[i] as f64).sum();
    Ok((sum / take as f64) as f32)
}

/// `t(x) = clamp(1 - omega * dark_channel(I / A)(x), t_min, 1)`.
pub fn estimate_transmission(img: &Image, light: f32, omega: f32, patch: usize, t_min: f32) -> Result<TransmissionMap> {
    if !(light > 0.0) {
        return Err(Error::config(format!("atmospheric light must be > 0, got {light}")));
    }
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::config(format!("omega must lie in (0, 1], got {omega}")));
    }
    if !(t_min > 0.0 && t_min <= 1.0) {
        return Err(Error::config(format!("t_min must lie in (0, 1], got {t_min}")));
    }
    check_patch(patch)?;
    let dc = dark_channel_of(img.data(), img.width(), img.height(), patch, light);
    let t = dc.iter().map(|&d| (1.0 - omega * d).clamp(t_min, 1.0)).collect();
    TransmissionMap::new(ScalarMap::new(img.width(), img.height(), t)?)
}

/// Detects small bright structures (rain streaks, flakes).
///
/// The background is the grayscale opening (min then max filter) with a
/// `window`-sized square; pixels whose top-hat response exceeds
/// `bright_thresh` both in gray and in the per-pixel minimum channel (so that
/// only near-achromatic brightening counts) are grouped into 8-connected components and components of
/// `size_max` pixels or more are discarded. `O` is the mean gray level of the
/// kept pixels and `alpha = (I - background) / (O - background)`, clamped.
pub fn estimate_occlusion(img: &Image, params: &OcclusionParams) -> Result<OcclusionField> {
    if !(params.bright_thresh > 0.0) || params.size_max == 0 {
        return Err(Error::config("bright_thresh must be > 0 and size_max >= 1"));
    }
    check_patch(params.window)?;
    let (w, h) = (img.width(), img.height());
    let gray = img.gray();
    let g = gray.data();
    let opened = max_filter(&min_filter(g, w, h, params.window), w, h, params.window);
    let darkest: Vec<f32> = img.pixels().map(|p| p[0].min(p[1]).min(p[2])).collect();
    let darkest_opened = max_filter(&min_filter(&darkest, w, h, params.window), w, h, params.window);
    let candidate: Vec<bool> = (0..w * h)
        .map(|i| g[i] - opened[i] > params.bright_thresh && darkest[i] - darkest_opened[i] > params.bright_thresh)
        .collect();

    let mut kept = vec![false; w * h];
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if !candidate[start] || seen[start] {
            continue;
        }
        component.clear();
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            component.push(p);
            let (px, py) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (px + dx, py + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if candidate[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if component.len() < params.size_max {
            for &p in &component {
                kept[p] = true;
            }
        }
    }

    let detected: Vec<usize> = (0..w * h).filter(|&i| kept[i]).collect();
    if detected.is_empty() {
        return Ok(OcclusionField::none(w, h));
    }
    let brightness = (detected.iter().map(|&i| g[i] as f64).sum::<f64>() / detected.len() as f64) as f32;
    let mut alpha = vec![0.0f32; w * h];
    for &i in &detected {
        let contrast = brightness - opened[i];
        alpha[i] = if contrast > 1e-6 {
            ((g[i] - opened[i]) / contrast).clamp(0.0, 1.0)
        } else {
            1.0
        };
    }
    OcclusionField::new(ScalarMap::new(w, h, alpha)?, brightness.clamp(0.0, 1.0))
}
