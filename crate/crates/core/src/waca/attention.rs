use serde::{Deserialize, Serialize};

use super::tensor::{AvgPool, FeatureMap, Matrix};
use crate::error::{Error, Result};
use crate::imgcore::ScalarMap;
use crate::rng::{rng_from_seed, WeatherRng};

/// Projection weights and guidance scalars shared by both attentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub head_count: usize,
    pub head_dim: usize,
    /// Key/value pooling ratio for the global attention.
    pub downsample_ratio: usize,
    /// Window side for the local attention.
    pub window_size: usize,
    pub beta_t: f64,
    pub beta_o: f64,
    /// `channels x (head_count * head_dim)`.
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl AttentionParams {
    /// Seeded random projections, entries in `[-1/sqrt(c), 1/sqrt(c))`.
    pub fn seeded(channels: usize, head_count: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        Self::random_with(channels, head_count, &mut rng)
    }

    pub(crate) fn random_with(channels: usize, head_count: usize, rng: &mut WeatherRng) -> Self {
        let head_dim = (channels / head_count.max(1)).max(1);
        let inner = head_count * head_dim;
        let scale = 1.0 / (channels as f64).sqrt();
        AttentionParams {
            head_count,
            head_dim,
            downsample_ratio: 4,
            window_size: 4,
            beta_t: 1.0,
            beta_o: 1.0,
            w_q: Matrix::random(channels, inner, scale, rng),
            w_k: Matrix::random(channels, inner, scale, rng),
            w_v: Matrix::random(channels, inner, scale, rng),
        }
    }

    pub fn inner_dim(&self) -> usize {
        self.head_count * self.head_dim
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.head_count == 0 || self.head_dim == 0 || self.downsample_ratio == 0 || self.window_size == 0 {
            return Err(Error::config("head count, head dim, ratio and window must be >= 1"));
        }
        if !self.beta_t.is_finite() || !self.beta_o.is_finite() {
            return Err(Error::config("guidance scalars must be finite"));
        }
        let inner = self.inner_dim();
        if inner != channels {
            return Err(Error::shape(format!(
                "head_count * head_dim = {inner} must equal the feature channels ({channels})"
            )));
        }
        for (name, w) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            if w.rows != channels || w.cols != inner || w.data.len() != w.rows * w.cols {
                return Err(Error::shape(format!(
                    "{name} is {}x{}, expected {channels}x{inner}",
                    w.rows, w.cols
                )));
            }
        }
        Ok(())
    }
}

/// Pairwise `1 - |t_i - t_j|^2` between full-resolution queries and pooled keys.
pub fn transmission_similarity(t_q: &ScalarMap, t_k: &ScalarMap) -> Matrix {
    let (n, m) = (t_q.len(), t_k.len());
    let mut data = Vec::with_capacity(n * m);
    for &ti in t_q.data() {
        for &tj in t_k.data() {
            let d = ti as f64 - tj as f64;
            data.push(1.0 - d * d);
        }
    }
    Matrix { rows: n, cols: m, data }
}

/// Softmax attention of every query row over `keys`, with an additive bias
/// per (query, key) pair. Heads are contiguous column blocks of width
/// `head_dim`. Returns the concatenated head outputs and, per head, the
/// row-stochastic weight matrix.
pub(crate) fn biased_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    head_count: usize,
    head_dim: usize,
    bias: &dyn Fn(usize, usize) -> f64,
    keep_weights: bool,
) -> (Matrix, Vec<Matrix>) {
    let (n, m) = (q.rows, k.rows);
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut out = Matrix::zeros(n, head_count * head_dim);
    let mut weights = if keep_weights {
        vec![Matrix::zeros(n, m); head_count]
    } else {
        Vec::new()
    };
    let mut scores = vec![0.0f64; m];
    for h in 0..head_count {
        let cols = h * head_dim..(h + 1) * head_dim;
        for i in 0..n {
            let qi = &q.row(i)[cols.clone()];
            let mut max = f64::NEG_INFINITY;
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &k.row(j)[cols.clone()];
                let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                *s = dot * scale + bias(i, j);
                max = max.max(*s);
            }
            let mut total = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            let dst = &mut out.data[i * head_count * head_dim + h * head_dim..][..head_dim];
            for (j, s) in scores.iter_mut().enumerate() {
                *s /= total;
                for (d, vv) in dst.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *d += *s * vv;
                }
            }
            if keep_weights {
                weights[h].data[i * m..(i + 1) * m].copy_from_slice(&scores);
            }
        }
    }
    (out, weights)
}

fn check_inputs(xr: &FeatureMap, xe: &FeatureMap, guide: &ScalarMap, what: &str) -> Result<()> {
    if !xr.same_shape(xe) {
        return Err(Error::shape(format!(
            "refinement features are {}x{}x{} but estimation features are {}x{}x{}",
            xr.height, xr.width, xr.channels, xe.height, xe.width, xe.channels
        )));
    }
    if guide.width() != xr.width || guide.height() != xr.height {
        return Err(Error::shape(format!(
            "{what} map is {}x{}, features are {}x{}",
            guide.width(),
            guide.height(),
            xr.width,
            xr.height
        )));
    }
    Ok(())
}

/// Output of an attention pass, with the per-head weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub output: FeatureMap,
    /// Global attention: one `(h w) x (h w / r^2)` matrix per head.
    /// Local attention: one `w^2 x w^2` matrix per (window, head), windows in
    /// row-major order, heads innermost.
    pub weights: Vec<Matrix>,
}

/// Transmission-guided global attention.
///
/// Queries come from `xr`; keys and values from `xe` mean-pooled by the
/// downsample ratio. Similarity is `q k^T / sqrt(d) + beta_t (1 - |t_i - t_j|^2)`
/// with `t_i` the full-resolution transmission at the query and `t_j` the
/// pooled transmission at the key.
pub fn tgga_forward(xr: &FeatureMap, xe: &FeatureMap, t: &ScalarMap, p: &AttentionParams) -> Result<FeatureMap> {
    Ok(tgga_trace(xr, xe, t, p, false)?.output)
}

pub fn tgga_trace(
    xr: &FeatureMap,
    xe: &FeatureMap,
    t: &ScalarMap,
    p: &AttentionParams,
    keep_weights: bool,
) -> Result<AttentionTrace> {
    check_inputs(xr, xe, t, "transmission")?;
    p.validate(xr.channels)?;
    let r = p.downsample_ratio;
    let xe_ds = xe.downsample_avg(r)?;
    let t_ds = FeatureMap::from_scalar_map(t).downsample_avg(r)?;
    let q = xr.tokens().matmul(&p.w_q)?;
    let k = xe_ds.tokens().matmul(&p.w_k)?;
    let v = xe_ds.tokens().matmul(&p.w_v)?;
    let t_full: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
    let beta = p.beta_t;
    let bias = |i: usize, j: usize| {
        let d = t_full[i] - t_ds.data[j];
        beta * (1.0 - d * d)
    };
    let (out, weights) = biased_attention(&q, &k, &v, p.head_count, p.head_dim, &bias, keep_weights);
    Ok(AttentionTrace {
        output: FeatureMap::new(xr.height, xr.width, p.inner_dim(), out.data)?,
        weights,
    })
}

/// Occlusion-guided local attention inside non-overlapping windows, with
/// similarity `q k^T / sqrt(d) + beta_o (1 - alpha_j)` for key position `j`.
pub fn ogla_forward(xr: &FeatureMap, xe: &FeatureMap, alpha: &ScalarMap, p: &AttentionParams) -> Result<FeatureMap> {
    Ok(ogla_trace(xr, xe, alpha, p, false)?.output)
}

pub fn ogla_trace(
    xr: &FeatureMap,
    xe: &FeatureMap,
    alpha: &ScalarMap,
    p: &AttentionParams,
    keep_weights: bool,
) -> Result<AttentionTrace> {
    check_inputs(xr, xe, alpha, "alpha")?;
    p.validate(xr.channels)?;
    let ws = p.window_size;
    if !xr.height.is_multiple_of(ws) || !xr.width.is_multiple_of(ws) {
        return Err(Error::shape(format!(
            "{}x{} is not divisible into {ws}x{ws} windows",
            xr.height, xr.width
        )));
    }
    let q_all = xr.tokens().matmul(&p.w_q)?;
    let k_all = xe.tokens().matmul(&p.w_k)?;
    let v_all = xe.tokens().matmul(&p.w_v)?;
    let inner = p.inner_dim();
    let mut out = vec![0.0; xr.pixel_count() * inner];
    let mut weights = Vec::new();
    let gather = |src: &Matrix, idx: &[usize]| -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * src.cols);
        for &i in idx {
            data.extend_from_slice(src.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: src.cols,
            data,
        }
    };
    for wy in 0..xr.height / ws {
        for wx in 0..xr.width / ws {
            let idx: Vec<usize> = (0..ws * ws)
                .map(|l| (wy * ws + l / ws) * xr.width + wx * ws + l % ws)
                .collect();
            let (q, k, v) = (gather(&q_all, &idx), gather(&k_all, &idx), gather(&v_all, &idx));
            let bias_vals: Vec<f64> = idx.iter().map(|&i| p.beta_o * (1.0 - alpha.data()[i] as f64)).collect();
            let bias = |_: usize, j: usize| bias_vals[j];
            let (o, w) = biased_attention(&q, &k, &v, p.head_count, p.head_dim, &bias, keep_weights);
            for (row, &i) in idx.iter().enumerate() {
                out[i * inner..(i + 1) * inner].copy_from_slice(o.row(row));
            }
            weights.extend(w);
        }
    }
    Ok(AttentionTrace {
        output: FeatureMap::new(xr.height, xr.width, inner, out)?,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_values() {
        let tq = ScalarMap::new(3, 1, vec![0.8, 0.5, 0.0]).unwrap();
        let tk = ScalarMap::new(2, 1, vec![0.5, 1.0]).unwrap();
        let s = transmission_similarity(&tq, &tk);
        assert!((s.get(0, 0) - 0.91).abs() < 1e-6);
        assert!((s.get(1, 0) - 1.0).abs() < 1e-12);
        assert!(s.get(2, 1).abs() < 1e-12);
        let swapped = transmission_similarity(&tk, &tq);
        assert!((swapped.get(0, 0) - s.get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn single_key_returns_the_value() {
        let xr = FeatureMap::new(1, 1, 2, vec![0.3, -0.7]).unwrap();
        let xe = FeatureMap::new(1, 1, 2, vec![0.9, 0.1]).unwrap();
        let t = ScalarMap::filled(1, 1, 0.4);
        for beta in [0.0, 3.0, -10.0] {
            let p = AttentionParams {
                head_count: 1,
                head_dim: 2,
                downsample_ratio: 1,
                window_size: 1,
                beta_t: beta,
                beta_o: beta,
                w_q: Matrix::identity(2),
                w_k: Matrix::identity(2),
                w_v: Matrix::identity(2),
            };
            let out = tgga_forward(&xr, &xe, &t, &p).unwrap();
            assert!(out.max_abs_diff(&xe) < 1e-12);
        }
    }

    #[test]
    fn shapes_are_validated() {
        let mut p = AttentionParams::seeded(4, 1, 3);
        let xr = FeatureMap::zeros(6, 6, 4);
        let t = ScalarMap::filled(6, 6, 0.5);
        assert!(matches!(tgga_forward(&xr, &xr, &t, &p), Err(Error::Shape(_))));
        p.downsample_ratio = 3;
        assert!(tgga_forward(&xr, &xr, &t, &p).is_ok());
        assert!(matches!(ogla_forward(&xr, &xr, &t, &p), Err(Error::Shape(_))));
        p.window_size = 2;
        assert!(ogla_forward(&xr, &xr, &t, &p).is_ok());
        let other = FeatureMap::zeros(6, 6, 3);
        assert!(tgga_forward(&xr, &other, &t, &p).is_err());
        let p3 = AttentionParams::seeded(3, 1, 3);
        assert!(tgga_forward(&xr, &xr, &t, &p3).is_err());
    }
}
