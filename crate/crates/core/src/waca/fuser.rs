use serde::{Deserialize, Serialize};

use super::tensor::{FeatureMap, Matrix};
use crate::error::{Error, Result};
use crate::imgcore::ScalarMap;
use crate::rng::rng_from_seed;

/// Weather-aware fuser weights for `channels`-wide branch features.
///
/// The gate input is `concat(Xt, Xo, t, alpha)`, `2 * channels + 2` wide.
/// Depthwise `kernel x kernel` with zero padding, then two pointwise stages
/// (the first keeps the width, the second maps to the two gates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuserParams {
    pub kernel: usize,
    /// `in_width x kernel^2`, row-major taps per channel.
    pub depthwise: Matrix,
    pub depthwise_bias: Vec<f64>,
    /// `in_width x in_width`.
    pub pointwise1: Matrix,
    pub bias1: Vec<f64>,
    /// `in_width x 2`, columns are (a_t, a_o).
    pub pointwise2: Matrix,
    pub bias2: [f64; 2],
}

impl FuserParams {
    pub fn input_width(channels: usize) -> usize {
        2 * channels + 2
    }

    pub fn seeded(channels: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let n = Self::input_width(channels);
        let kernel = 3;
        let dw_scale = 1.0 / kernel as f64;
        let pw_scale = 1.0 / (n as f64).sqrt();
        FuserParams {
            kernel,
            depthwise: Matrix::random(n, kernel * kernel, dw_scale, &mut rng),
            depthwise_bias: Matrix::random(1, n, 0.1, &mut rng).data,
            pointwise1: Matrix::random(n, n, pw_scale, &mut rng),
            bias1: Matrix::random(1, n, 0.1, &mut rng).data,
            pointwise2: Matrix::random(n, 2, pw_scale, &mut rng),
            bias2: [0.0, 0.0],
        }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let n = Self::input_width(channels);
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::config(format!("fuser kernel must be odd, got {}", self.kernel)));
        }
        let checks = [
            ("depthwise", &self.depthwise, n, self.kernel * self.kernel),
            ("pointwise1", &self.pointwise1, n, n),
            ("pointwise2", &self.pointwise2, n, 2),
        ];
        for (name, m, rows, cols) in checks {
            if m.rows != rows || m.cols != cols || m.data.len() != rows * cols {
                return Err(Error::shape(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows, m.cols
                )));
            }
        }
        if self.depthwise_bias.len() != n || self.bias1.len() != n {
            return Err(Error::shape(format!("fuser biases must have {n} entries")));
        }
        Ok(())
    }
}

/// Per-pixel gates from the fuser.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGates {
    pub a_t: Vec<f64>,
    pub a_o: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_shapes(xt: &FeatureMap, xo: &FeatureMap, t: &ScalarMap, alpha: &ScalarMap) -> Result<()> {
    if !xt.same_shape(xo) {
        return Err(Error::shape(format!(
            "branch features differ: {}x{}x{} vs {}x{}x{}",
            xt.height, xt.width, xt.channels, xo.height, xo.width, xo.channels
        )));
    }
    for (name, m) in [("transmission", t), ("alpha", alpha)] {
        if m.width() != xt.width || m.height() != xt.height {
            return Err(Error::shape(format!(
                "{name} map is {}x{}, features are {}x{}",
                m.width(),
                m.height(),
                xt.width,
                xt.height
            )));
        }
    }
    Ok(())
}

pub fn waf_gates(xt: &FeatureMap, xo: &FeatureMap, t: &ScalarMap, alpha: &ScalarMap, p: &FuserParams) -> Result<FusionGates> {
    check_shapes(xt, xo, t, alpha)?;
    p.validate(xt.channels)?;
    let (h, w, c) = (xt.height, xt.width, xt.channels);
    let n = FuserParams::input_width(c);
    let mut input = Vec::with_capacity(h * w * n);
    for i in 0..h * w {
        input.extend_from_slice(&xt.data[i * c..(i + 1) * c]);
        input.extend_from_slice(&xo.data[i * c..(i + 1) * c]);
        input.push(t.data()[i] as f64);
        input.push(alpha.data()[i] as f64);
    }

    let k = p.kernel;
    let half = (k / 2) as isize;
    let mut dw = vec![0.0; h * w * n];
    for y in 0..h {
        for x in 0..w {
            let dst = &mut dw[(y * w + x) * n..][..n];
            dst.copy_from_slice(&p.depthwise_bias);
            for ky in 0..k {
                let sy = y as isize + ky as isize - half;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = x as isize + kx as isize - half;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = &input[(sy as usize * w + sx as usize) * n..][..n];
                    for (ch, d) in dst.iter_mut().enumerate() {
                        *d += p.depthwise.get(ch, ky * k + kx) * src[ch];
                    }
                }
            }
        }
    }

    let dw = Matrix::new(h * w, n, dw)?;
    let mut hidden = dw.matmul(&p.pointwise1)?;
    for row in hidden.data.chunks_exact_mut(n) {
        for (v, b) in row.iter_mut().zip(&p.bias1) {
            *v += b;
        }
    }
    let logits = hidden.matmul(&p.pointwise2)?;
    let mut gates = FusionGates {
        a_t: Vec::with_capacity(h * w),
        a_o: Vec::with_capacity(h * w),
    };
    for i in 0..h * w {
        gates.a_t.push(sigmoid(logits.get(i, 0) + p.bias2[0]));
        gates.a_o.push(sigmoid(logits.get(i, 1) + p.bias2[1]));
    }
    Ok(gates)
}

/// `X' = a_t * Xt + a_o * Xo` with per-pixel gates broadcast over channels.
pub fn waf_fuse(xt: &FeatureMap, xo: &FeatureMap, t: &ScalarMap, alpha: &ScalarMap, p: &FuserParams) -> Result<FeatureMap> {
    let gates = waf_gates(xt, xo, t, alpha, p)?;
    let c = xt.channels;
    let data = (0..xt.data.len())
        .map(|k| {
            let i = k / c;
            gates.a_t[i] * xt.data[k] + gates.a_o[i] * xo.data[k]
        })
        .collect();
    FeatureMap::new(xt.height, xt.width, c, data)
}
