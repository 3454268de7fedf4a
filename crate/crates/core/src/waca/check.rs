//! Invariance suite behind `attn-check`. Reference values come from plain
//! nested loops that share no code with the vectorised paths.

use super::{
    ogla_forward, ogla_trace, tgga_forward, tgga_trace, waf_fuse, waf_gates, AttentionParams, FeatureMap, FuserParams,
    Matrix,
};
use crate::error::Result;
use crate::imgcore::ScalarMap;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error <= self.tolerance
    }
}

fn project(x: &FeatureMap, y: usize, xx: usize, w: &Matrix, col: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..x.channels {
        s += x.data[(y * x.width + xx) * x.channels + c] * w.data[c * w.cols + col];
    }
    s
}

/// Dense reference for the global attention; pools by explicit block sums.
pub fn tgga_reference(xr: &FeatureMap, xe: &FeatureMap, t: &ScalarMap, p: &AttentionParams) -> Vec<f64> {
    let r = p.downsample_ratio;
    let (h, w, c) = (xe.height, xe.width, xe.channels);
    let (kh, kw) = (h / r, w / r);
    let mut pooled = vec![0.0; kh * kw * c];
    let mut t_pooled = vec![0.0; kh * kw];
    for by in 0..kh {
        for bx in 0..kw {
            for dy in 0..r {
                for dx in 0..r {
                    let (y, x) = (by * r + dy, bx * r + dx);
                    for ch in 0..c {
                        pooled[(by * kw + bx) * c + ch] += xe.data[(y * w + x) * c + ch];
                    }
                    t_pooled[by * kw + bx] += t.get(x, y) as f64;
                }
            }
            for ch in 0..c {
                pooled[(by * kw + bx) * c + ch] /= (r * r) as f64;
            }
            t_pooled[by * kw + bx] /= (r * r) as f64;
        }
    }
    let pooled = FeatureMap {
        height: kh,
        width: kw,
        channels: c,
        data: pooled,
    };
    let d = p.head_dim;
    let mut out = vec![0.0; xr.height * xr.width * p.head_count * d];
    for qy in 0..xr.height {
        for qx in 0..xr.width {
            let ti = t.get(qx, qy) as f64;
            for hd in 0..p.head_count {
                let mut logits = Vec::new();
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut dot = 0.0;
                        for e in 0..d {
                            dot += project(xr, qy, qx, &p.w_q, hd * d + e) * project(&pooled, ky, kx, &p.w_k, hd * d + e);
                        }
                        let diff = ti - t_pooled[ky * kw + kx];
                        logits.push(dot / (d as f64).sqrt() + p.beta_t * (1.0 - diff.abs().powi(2)));
                    }
                }
                let weights = softmax_plain(&logits);
                for e in 0..d {
                    let mut acc = 0.0;
                    for (j, wj) in weights.iter().enumerate() {
                        acc += wj * project(&pooled, j / kw, j % kw, &p.w_v, hd * d + e);
                    }
                    out[(qy * xr.width + qx) * p.head_count * d + hd * d + e] = acc;
                }
            }
        }
    }
    out
}

/// Dense reference for the windowed attention. `drop_key` removes one key
/// position (global index) from its window entirely.
pub fn ogla_reference(
    xr: &FeatureMap,
    xe: &FeatureMap,
    alpha: &ScalarMap,
    p: &AttentionParams,
    drop_key: Option<(usize, usize)>,
) -> Vec<f64> {
    let ws = p.window_size;
    let d = p.head_dim;
    let mut out = vec![0.0; xr.height * xr.width * p.head_count * d];
    for qy in 0..xr.height {
        for qx in 0..xr.width {
            let (oy, ox) = (qy / ws * ws, qx / ws * ws);
            for hd in 0..p.head_count {
                let mut keys = Vec::new();
                let mut logits = Vec::new();
                for ky in oy..oy + ws {
                    for kx in ox..ox + ws {
                        if drop_key == Some((kx, ky)) {
                            continue;
                        }
                        let mut dot = 0.0;
                        for e in 0..d {
                            dot += project(xr, qy, qx, &p.w_q, hd * d + e) * project(xe, ky, kx, &p.w_k, hd * d + e);
                        }
                        logits.push(dot / (d as f64).sqrt() + p.beta_o * (1.0 - alpha.get(kx, ky) as f64));
                        keys.push((ky, kx));
                    }
                }
                let weights = softmax_plain(&logits);
                for e in 0..d {
                    let mut acc = 0.0;
                    for (wj, &(ky, kx)) in weights.iter().zip(&keys) {
                        acc += wj * project(xe, ky, kx, &p.w_v, hd * d + e);
                    }
                    out[(qy * xr.width + qx) * p.head_count * d + hd * d + e] = acc;
                }
            }
        }
    }
    out
}

/// Dense reference for the fuser: direct zero-padded convolution, two
/// pointwise sums and the logistic, per pixel.
pub fn waf_reference(xt: &FeatureMap, xo: &FeatureMap, t: &ScalarMap, alpha: &ScalarMap, p: &FuserParams) -> Vec<f64> {
    let (h, w, c) = (xt.height, xt.width, xt.channels);
    let n = 2 * c + 2;
    let input = |y: usize, x: usize, ch: usize| -> f64 {
        if ch < c {
            xt.data[(y * w + x) * c + ch]
        } else if ch < 2 * c {
            xo.data[(y * w + x) * c + ch - c]
        } else if ch == 2 * c {
            t.get(x, y) as f64
        } else {
            alpha.get(x, y) as f64
        }
    };
    let k = p.kernel as isize;
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let mut conv = vec![0.0; n];
            for (ch, v) in conv.iter_mut().enumerate() {
                *v = p.depthwise_bias[ch];
                for ky in 0..k {
                    for kx in 0..k {
                        let sy = y as isize + ky - k / 2;
                        let sx = x as isize + kx - k / 2;
                        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            *v += p.depthwise.data[ch * (k * k) as usize + (ky * k + kx) as usize]
                                * input(sy as usize, sx as usize, ch);
                        }
                    }
                }
            }
            let hidden: Vec<f64> = (0..n)
                .map(|o| p.bias1[o] + (0..n).map(|i| conv[i] * p.pointwise1.data[i * n + o]).sum::<f64>())
                .collect();
            let gate = |o: usize| {
                let z = p.bias2[o] + (0..n).map(|i| hidden[i] * p.pointwise2.data[i * 2 + o]).sum::<f64>();
                1.0 / (1.0 + (-z).exp())
            };
            let (a_t, a_o) = (gate(0), gate(1));
            for ch in 0..c {
                let i = (y * w + x) * c + ch;
                out[i] = a_t * xt.data[i] + a_o * xo.data[i];
            }
        }
    }
    out
}

fn softmax_plain(logits: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn row_sum_error(weights: &[Matrix]) -> f64 {
    let mut worst = 0.0f64;
    for m in weights {
        for r in 0..m.rows {
            let s: f64 = m.row(r).iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

/// Swaps the two leftmost windows of the top window row.
fn swap_windows(data: &[f64], h: usize, w: usize, c: usize, ws: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    for y in 0..ws.min(h) {
        for x in 0..ws {
            for ch in 0..c {
                let a = (y * w + x) * c + ch;
                let b = (y * w + x + ws) * c + ch;
                out[a] = data[b];
                out[b] = data[a];
            }
        }
    }
    out
}

struct Fixture {
    xr: FeatureMap,
    xe: FeatureMap,
    t: ScalarMap,
    alpha: ScalarMap,
    attn: AttentionParams,
    fuser: FuserParams,
}

fn fixture(seed: u64, size: usize, channels: usize, heads: usize) -> Fixture {
    let mut rng = rng_from_seed(seed);
    let xr = FeatureMap::random(size, size, channels, &mut rng);
    let xe = FeatureMap::random(size, size, channels, &mut rng);
    let t = ScalarMap::from_fn(size, size, |x, y| 0.15 + 0.8 * ((x * 7 + y * 3) % 11) as f32 / 10.0);
    let alpha = ScalarMap::from_fn(size, size, |x, y| if (x + 2 * y) % 5 == 0 { 0.9 } else { 0.05 * x as f32 / size as f32 });
    let mut attn = AttentionParams::seeded(channels, heads, seed + 1);
    attn.downsample_ratio = 2;
    attn.window_size = 2;
    attn.beta_t = 1.7;
    attn.beta_o = 2.3;
    let fuser = FuserParams::seeded(channels, seed + 2);
    Fixture {
        xr,
        xe,
        t,
        alpha,
        attn,
        fuser,
    }
}

/// Runs every check on fixed seeded fixtures.
pub fn run_invariance_suite() -> Result<Vec<CheckResult>> {
    let f = fixture(2024, 4, 4, 2);
    let mut results = Vec::new();
    let mut push = |name, error, tolerance| results.push(CheckResult { name, error, tolerance });

    let tg = tgga_trace(&f.xr, &f.xe, &f.t, &f.attn, true)?;
    let og = ogla_trace(&f.xr, &f.xe, &f.alpha, &f.attn, true)?;
    push("tgga softmax rows sum to 1", row_sum_error(&tg.weights), 1e-6);
    push("ogla softmax rows sum to 1", row_sum_error(&og.weights), 1e-6);

    let uniform_t = ScalarMap::filled(4, 4, 0.37);
    let mut zero_bt = f.attn.clone();
    zero_bt.beta_t = 0.0;
    let a = tgga_forward(&f.xr, &f.xe, &uniform_t, &f.attn)?;
    let b = tgga_forward(&f.xr, &f.xe, &uniform_t, &zero_bt)?;
    push("tgga uniform t equals beta_t = 0", a.max_abs_diff(&b), 1e-6);

    let mut zero_bo = f.attn.clone();
    zero_bo.beta_o = 0.0;
    let mut unbiased = 0.0f64;
    for level in [0.0, 0.6] {
        let uniform_a = ScalarMap::filled(4, 4, level);
        let a = ogla_forward(&f.xr, &f.xe, &uniform_a, &f.attn)?;
        let b = ogla_forward(&f.xr, &f.xe, &uniform_a, &zero_bo)?;
        unbiased = unbiased.max(a.max_abs_diff(&b));
    }
    push("ogla uniform alpha equals beta_o = 0", unbiased, 1e-6);

    push(
        "tgga matches dense oracle",
        max_diff(&tg.output.data, &tgga_reference(&f.xr, &f.xe, &f.t, &f.attn)),
        1e-5,
    );
    let mut full_res = f.attn.clone();
    full_res.downsample_ratio = 1;
    push(
        "tgga r = 1 matches dense oracle",
        max_diff(
            &tgga_forward(&f.xr, &f.xe, &f.t, &full_res)?.data,
            &tgga_reference(&f.xr, &f.xe, &f.t, &full_res),
        ),
        1e-5,
    );
    push(
        "ogla matches dense oracle",
        max_diff(&og.output.data, &ogla_reference(&f.xr, &f.xe, &f.alpha, &f.attn, None)),
        1e-5,
    );
    push(
        "waf matches dense oracle",
        max_diff(
            &waf_fuse(&f.xr, &f.xe, &f.t, &f.alpha, &f.fuser)?.data,
            &waf_reference(&f.xr, &f.xe, &f.t, &f.alpha, &f.fuser),
        ),
        1e-5,
    );

    let one = FeatureMap::new(1, 1, 4, vec![0.2, -0.4, 0.9, 0.1])?;
    let other = FeatureMap::new(1, 1, 4, vec![-0.3, 0.5, 0.05, 0.7])?;
    let mut single = AttentionParams::seeded(4, 1, 9);
    single.downsample_ratio = 1;
    single.beta_t = 25.0;
    let single_out = tgga_forward(&one, &other, &ScalarMap::filled(1, 1, 0.3), &single)?;
    let expected = other.tokens().matmul(&single.w_v)?;
    push("tgga single key returns its value", max_diff(&single_out.data, &expected.data), 1e-12);

    let mut occluded = f.alpha.clone();
    let mut strong = f.attn.clone();
    strong.beta_o = 50.0;
    for v in occluded.data_mut() {
        *v = 0.0;
    }
    occluded.data_mut()[4 + 1] = 1.0;
    let masked = ogla_forward(&f.xr, &f.xe, &occluded, &strong)?;
    push(
        "ogla strongly occluded key is ignored",
        max_diff(&masked.data, &ogla_reference(&f.xr, &f.xe, &occluded, &strong, Some((1, 1)))),
        1e-3,
    );

    let ws = f.attn.window_size;
    let c = f.xr.channels;
    let sw = |m: &FeatureMap| FeatureMap::new(4, 4, c, swap_windows(&m.data, 4, 4, c, ws));
    let sw_scalar = |m: &ScalarMap| -> Result<ScalarMap> {
        let d: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
        ScalarMap::new(4, 4, swap_windows(&d, 4, 4, 1, ws).into_iter().map(|v| v as f32).collect())
    };
    let permuted = ogla_forward(&sw(&f.xr)?, &sw(&f.xe)?, &sw_scalar(&f.alpha)?, &f.attn)?;
    push("ogla window permutation is equivariant", permuted.max_abs_diff(&sw(&og.output)?), 1e-12);

    let mut saturated = f.fuser.clone();
    saturated.bias2 = [1e3, -1e3];
    let fused = waf_fuse(&f.xr, &f.xe, &f.t, &f.alpha, &saturated)?;
    push("waf saturated gates select Xt", fused.max_abs_diff(&f.xr), 1e-12);

    let gates = waf_gates(&f.xr, &f.xr, &f.t, &f.alpha, &f.fuser)?;
    let same = waf_fuse(&f.xr, &f.xr, &f.t, &f.alpha, &f.fuser)?;
    let scaled: Vec<f64> = f
        .xr
        .data
        .iter()
        .enumerate()
        .map(|(k, v)| (gates.a_t[k / c] + gates.a_o[k / c]) * v)
        .collect();
    push("waf equal branches scale by gate sum", max_diff(&same.data, &scaled), 1e-12);

    Ok(results)
}
