//! Full-reference quality metrics: PSNR (peak 1.0) and Gaussian-window SSIM,
//! on RGB or on BT.601 luma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{rgb_to_y, Image, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Rgb,
    Y,
}

impl std::str::FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(ColorMode::Rgb),
            "y" => Ok(ColorMode::Y),
            other => Err(Error::config(format!("unknown color mode {other:?} (expected rgb or y)"))),
        }
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Planes compared by a metric: three for RGB, one for Y.
fn planes(img: &Image, mode: ColorMode) -> Vec<Vec<f64>> {
    match mode {
        ColorMode::Rgb => (0..CHANNELS)
            .map(|c| img.data().iter().skip(c).step_by(CHANNELS).map(|&v| v as f64).collect())
            .collect(),
        ColorMode::Y => vec![rgb_to_y(img).data().iter().map(|&v| v as f64).collect()],
    }
}

pub fn mse(a: &Image, b: &Image, mode: ColorMode) -> Result<f64> {
    masked_mse(a, b, mode, None)
}

fn masked_mse(a: &Image, b: &Image, mode: ColorMode, mask: Option<&[bool]>) -> Result<f64> {
    a.ensure_same_size(b)?;
    if let Some(m) = mask {
        if m.len() != a.pixel_count() {
            return Err(Error::shape(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                a.pixel_count()
            )));
        }
    }
    let (pa, pb) = (planes(a, mode), planes(b, mode));
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in pa.iter().zip(&pb) {
        for (i, (u, v)) in x.iter().zip(y).enumerate() {
            if mask.is_none_or(|m| m[i]) {
                sum += (u - v) * (u - v);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::config("no pixels selected for comparison"));
    }
    Ok(sum / n as f64)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// `10 log10(1 / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, mode: ColorMode) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b, mode)?))
}

/// PSNR over the pixels where `mask` is true.
pub fn psnr_masked(a: &Image, b: &Image, mode: ColorMode, mask: &[bool]) -> Result<f64> {
    Ok(psnr_from_mse(masked_mse(a, b, mode, Some(mask))?))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable 'valid' filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, kv) in k.iter().enumerate() {
            let row = &tmp[(y + j) * ow..(y + j + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(row) {
                *o += kv * v;
            }
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, &k);
    let my = filter_valid(y, w, h, &k);
    let sxx = filter_valid(&xx, w, h, &k);
    let syy = filter_valid(&yy, w, h, &k);
    let sxy = filter_valid(&xy, w, h, &k);
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mx[i], my[i]);
        let va = sxx[i] - ma * ma;
        let vb = syy[i] - mb * mb;
        let cov = sxy[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    total / n as f64
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1. RGB mode averages the per-channel scores.
pub fn ssim(a: &Image, b: &Image, mode: ColorMode) -> Result<f64> {
    a.ensure_same_size(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::config(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let (pa, pb) = (planes(a, mode), planes(b, mode));
    let scores: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| ssim_plane(x, y, w, h)).collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
