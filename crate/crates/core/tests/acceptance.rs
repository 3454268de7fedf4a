//! Acceptance gate. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. Criteria run sequentially so timings are not skewed.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use weatherforge::imgcore::ScalarMap;
use weatherforge::metrics::{psnr, psnr_masked, ssim, ColorMode};
use weatherforge::occlusion::{volumetric_alpha, LayerSpec, VolumetricConfig};
use weatherforge::rng::rng_from_seed;
use weatherforge::restore::{restore_with_estimated, restore_with_oracle, EstimateConfig, InversionOptions, OraclePriors};
use weatherforge::scene::{procedural_scene, SceneOptions};
use weatherforge::synth::{
    generate_dataset, sample_weather_params, synthesize_sample, DatasetConfig, ImageFormat, Manifest, SamplingRanges,
    WeatherCounts, WeatherKind,
};
use weatherforge::waca::{
    ogla_forward, ogla_trace, tgga_forward, tgga_trace, waf_fuse, AttentionParams, FeatureMap, FuserParams, Matrix,
};
use weatherforge::{read_image, read_scalar_map, Image};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pfm_dataset(dir: &Path) -> (DatasetConfig, Manifest) {
    let inputs = common::write_inputs(&dir.join("in"), 5, 128);
    let cfg = DatasetConfig {
        inputs,
        counts: WeatherCounts {
            haze: 20,
            rain: 20,
            snow: 20,
        },
        seed: 20_240_601,
        out_dir: dir.join("ds"),
        image_format: ImageFormat::Pfm,
        ranges: SamplingRanges::default(),
    };
    let manifest = generate_dataset(&cfg, Some(1)).expect("dataset");
    (cfg, manifest)
}

fn round_trip_identity(cfg: &DatasetConfig, manifest: &Manifest, synth_secs: f64) -> Outcome {
    let start = Instant::now();
    let opts = InversionOptions::default();
    let mut worst = f64::INFINITY;
    for e in &manifest.samples {
        let path = |k: &str| cfg.out_dir.join(&e.files[k]);
        let observed = read_image(path("lq")).unwrap();
        let clean = read_image(path("gt")).unwrap();
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(path("meta")).unwrap()).unwrap();
        let t = read_scalar_map(path("t")).unwrap();
        let alpha = read_scalar_map(path("alpha")).unwrap();
        let mask: Vec<bool> = t
            .data()
            .iter()
            .zip(alpha.data())
            .map(|(&t, &a)| t >= 0.05 && a <= 0.95)
            .collect();
        let priors = OraclePriors::from_meta_json(&meta, t, alpha).unwrap();
        let restored = restore_with_oracle(&observed, &priors, &opts).unwrap();
        let p = psnr_masked(&restored, &clean, ColorMode::Rgb, &mask).unwrap();
        worst = worst.min(p);
    }
    let secs = synth_secs + start.elapsed().as_secs_f64();
    check(
        manifest.samples.len() >= 50 && worst >= 50.0 && secs < 30.0,
        format!("{} samples, worst masked PSNR {worst:.2} dB, {secs:.1} s", manifest.samples.len()),
    )
}

fn special_cases(cfg: &DatasetConfig, manifest: &Manifest) -> Outcome {
    let (mut haze, mut light) = (0, 0);
    let mut worst = 0.0f64;
    for e in &manifest.samples {
        let path = |k: &str| cfg.out_dir.join(&e.files[k]);
        let wt = e.params.weather_type;
        if wt.has_scattering() && wt.has_particles() {
            continue;
        }
        let observed = read_image(path("lq")).unwrap();
        let clean = read_image(path("gt")).unwrap();
        let t = read_scalar_map(path("t")).unwrap();
        let alpha = read_scalar_map(path("alpha")).unwrap();
        let a = e.params.atmosphere.light as f64;
        let o = e.params.occlusion_brightness as f64;
        if !wt.has_particles() {
            haze += 1;
            if alpha.data().iter().any(|&v| v != 0.0) {
                return Err(format!("{}: haze sample with nonzero alpha", e.id));
            }
        } else {
            light += 1;
            if t.data().iter().any(|&v| v != 1.0) {
                return Err(format!("{}: light sample with t != 1", e.id));
            }
        }
        for (k, (&i, &j)) in observed.data().iter().zip(clean.data()).enumerate() {
            let px = k / 3;
            let expect = if !wt.has_particles() {
                let t = t.data()[px] as f64;
                j as f64 * t + a * (1.0 - t)
            } else {
                let al = alpha.data()[px] as f64;
                o * al + j as f64 * (1.0 - al)
            };
            worst = worst.max((i as f64 - expect).abs());
        }
    }
    check(
        haze > 0 && light > 0 && worst <= 1e-6,
        format!("{haze} haze and {light} light samples, max abs error {worst:.2e}"),
    )
}

fn volumetric_correctness() -> Outcome {
    let (w, h) = (96, 64);
    let cfg = VolumetricConfig {
        near_layers: vec![LayerSpec::rain(3000.0, 10.0, 20.0, 1.5, 0.2, 11).with_blur(0.6)],
        far_layers: vec![
            LayerSpec::rain(5000.0, 10.0, 12.0, 1.0, 0.15, 12).with_blur(0.5),
            LayerSpec::snow(4000.0, [1.0, 3.0], 0.15, 13),
            LayerSpec::rain(8000.0, 10.0, 8.0, 1.0, 0.12, 14),
        ],
        beta: 0.02,
    };
    let depth = ScalarMap::from_fn(w, h, |x, y| (x * 3 + y * 5) as f32 * 0.7);
    let alpha = volumetric_alpha(&cfg, &depth).map_err(|e| e.to_string())?;
    let near: Vec<ScalarMap> = cfg.near_layers.iter().map(|l| l.render(w, h).unwrap()).collect();
    let far: Vec<ScalarMap> = cfg.far_layers.iter().map(|l| l.render(w, h).unwrap()).collect();
    let mut worst = 0.0f64;
    let mut presum_max = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let n: f64 = near.iter().map(|m| m.get(x, y) as f64).sum();
            let f: f64 = far.iter().map(|m| m.get(x, y) as f64).sum();
            let weight = 1.0 - (-(cfg.beta as f64) * depth.get(x, y) as f64).exp();
            let expect = n + weight * f;
            presum_max = presum_max.max(expect);
            worst = worst.max((alpha.get(x, y) as f64 - expect).abs());
        }
    }
    let mut monotone = true;
    let mut prev = ScalarMap::zeros(w, h);
    for step in 0..40 {
        let d = ScalarMap::filled(w, h, step as f32 * 5.0);
        let a = volumetric_alpha(&cfg, &d).unwrap();
        monotone &= a.data().iter().zip(prev.data()).all(|(n, p)| n >= p);
        prev = a;
    }
    check(
        presum_max < 1.0 && worst <= 1e-6 && monotone,
        format!("max pre-clamp sum {presum_max:.3}, max abs error {worst:.2e}, monotone in depth: {monotone}"),
    )
}

// Direct formula evaluation, written without reference to the library's loops.
fn dense_attention(
    q_feat: &[Vec<f64>],
    kv_feat: &[Vec<f64>],
    p: &AttentionParams,
    bias: impl Fn(usize, usize) -> f64,
) -> Vec<Vec<f64>> {
    let proj = |x: &[f64], m: &Matrix, col: usize| (0..x.len()).map(|c| x[c] * m.get(c, col)).sum::<f64>();
    let d = p.head_dim;
    q_feat
        .iter()
        .enumerate()
        .map(|(i, xq)| {
            let mut out = vec![0.0; p.head_count * d];
            for hd in 0..p.head_count {
                let cols: Vec<usize> = (hd * d..(hd + 1) * d).collect();
                let q: Vec<f64> = cols.iter().map(|&c| proj(xq, &p.w_q, c)).collect();
                let logits: Vec<f64> = kv_feat
                    .iter()
                    .enumerate()
                    .map(|(j, xk)| {
                        let dot: f64 = cols.iter().zip(&q).map(|(&c, qv)| qv * proj(xk, &p.w_k, c)).sum();
                        dot / (d as f64).sqrt() + bias(i, j)
                    })
                    .collect();
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                for (e, &c) in cols.iter().enumerate() {
                    out[hd * d + e] = kv_feat
                        .iter()
                        .zip(&logits)
                        .map(|(xk, l)| l.exp() / z * proj(xk, &p.w_v, c))
                        .sum();
                }
            }
            out
        })
        .collect()
}

fn pixels(f: &FeatureMap) -> Vec<Vec<f64>> {
    f.data.chunks(f.channels).map(|c| c.to_vec()).collect()
}

fn max_err(a: &[f64], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn attention_invariances() -> Outcome {
    let mut rng = rng_from_seed(404);
    let (hgt, wid, c) = (4, 4, 4);
    let xr = FeatureMap::random(hgt, wid, c, &mut rng);
    let xe = FeatureMap::random(hgt, wid, c, &mut rng);
    let t = ScalarMap::from_fn(wid, hgt, |x, y| 0.1 + 0.2 * x as f32 + 0.03 * y as f32);
    let alpha = ScalarMap::from_fn(wid, hgt, |x, y| ((x * 5 + y * 3) % 7) as f32 / 7.0);
    let mut p = AttentionParams::seeded(c, 2, 405);
    p.downsample_ratio = 2;
    p.window_size = 2;
    p.beta_t = 1.3;
    p.beta_o = 0.8;

    let tg = tgga_trace(&xr, &xe, &t, &p, true).unwrap();
    let og = ogla_trace(&xr, &xe, &alpha, &p, true).unwrap();
    let rows = tg
        .weights
        .iter()
        .chain(&og.weights)
        .flat_map(|m| (0..m.rows).map(move |r| (m.row(r).iter().sum::<f64>() - 1.0).abs()))
        .fold(0.0f64, f64::max);

    let mut flat = p.clone();
    flat.beta_t = 0.0;
    flat.beta_o = 0.0;
    let uniform_t = ScalarMap::filled(wid, hgt, 0.42);
    let b = tgga_forward(&xr, &xe, &uniform_t, &p)
        .unwrap()
        .max_abs_diff(&tgga_forward(&xr, &xe, &uniform_t, &flat).unwrap());
    let uniform_a = ScalarMap::filled(wid, hgt, 0.3);
    let cdiff = ogla_forward(&xr, &xe, &uniform_a, &p)
        .unwrap()
        .max_abs_diff(&ogla_forward(&xr, &xe, &uniform_a, &flat).unwrap());

    // global oracle: pooled keys and pooled t built by hand
    let r = p.downsample_ratio;
    let mut pooled = Vec::new();
    let mut t_pool = Vec::new();
    for by in 0..hgt / r {
        for bx in 0..wid / r {
            let mut acc = vec![0.0; c];
            let mut tacc = 0.0;
            for y in by * r..(by + 1) * r {
                for x in bx * r..(bx + 1) * r {
                    for (k, a) in acc.iter_mut().enumerate() {
                        *a += xe.pixel(y, x)[k] / (r * r) as f64;
                    }
                    tacc += t.get(x, y) as f64 / (r * r) as f64;
                }
            }
            pooled.push(acc);
            t_pool.push(tacc);
        }
    }
    let t_full: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
    let g_ref = dense_attention(&pixels(&xr), &pooled, &p, |i, j| p.beta_t * (1.0 - (t_full[i] - t_pool[j]).powi(2)));
    let d_tgga = max_err(&tg.output.data, &g_ref);

    // local oracle: every query sees exactly the keys of its own window
    let ws = p.window_size;
    let xr_px = pixels(&xr);
    let xe_px = pixels(&xe);
    let mut d_ogla = 0.0f64;
    for i in 0..hgt * wid {
        let (qy, qx) = (i / wid, i % wid);
        let keys: Vec<usize> = (0..hgt * wid)
            .filter(|&j| (j / wid) / ws == qy / ws && (j % wid) / ws == qx / ws)
            .collect();
        let kv: Vec<Vec<f64>> = keys.iter().map(|&j| xe_px[j].clone()).collect();
        let out = dense_attention(&xr_px[i..=i], &kv, &p, |_, j| p.beta_o * (1.0 - alpha.data()[keys[j]] as f64));
        d_ogla = d_ogla.max(max_err(&og.output.data[i * c..(i + 1) * c], &out));
    }

    // fuser oracle
    let fp = FuserParams::seeded(c, 406);
    let fused = waf_fuse(&xr, &xe, &t, &alpha, &fp).unwrap();
    let n = 2 * c + 2;
    let input = |y: i64, x: i64, ch: usize| -> f64 {
        if y < 0 || x < 0 || y >= hgt as i64 || x >= wid as i64 {
            return 0.0;
        }
        let (y, x) = (y as usize, x as usize);
        match ch {
            _ if ch < c => xr.pixel(y, x)[ch],
            _ if ch < 2 * c => xe.pixel(y, x)[ch - c],
            _ if ch == 2 * c => t.get(x, y) as f64,
            _ => alpha.get(x, y) as f64,
        }
    };
    let mut d_waf = 0.0f64;
    for y in 0..hgt {
        for x in 0..wid {
            let conv: Vec<f64> = (0..n)
                .map(|ch| {
                    let mut s = fp.depthwise_bias[ch];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            s += fp.depthwise.get(ch, ky * 3 + kx) * input(y as i64 + ky as i64 - 1, x as i64 + kx as i64 - 1, ch);
                        }
                    }
                    s
                })
                .collect();
            let hidden: Vec<f64> = (0..n)
                .map(|o| fp.bias1[o] + (0..n).map(|i| conv[i] * fp.pointwise1.get(i, o)).sum::<f64>())
                .collect();
            let gate = |o: usize| {
                let z = fp.bias2[o] + (0..n).map(|i| hidden[i] * fp.pointwise2.get(i, o)).sum::<f64>();
                1.0 / (1.0 + (-z).exp())
            };
            let (at, ao) = (gate(0), gate(1));
            for k in 0..c {
                let expect = at * xr.pixel(y, x)[k] + ao * xe.pixel(y, x)[k];
                d_waf = d_waf.max((fused.pixel(y, x)[k] - expect).abs());
            }
        }
    }

    check(
        rows <= 1e-6 && b <= 1e-6 && cdiff <= 1e-6 && d_tgga <= 1e-5 && d_ogla <= 1e-5 && d_waf <= 1e-5,
        format!(
            "rows {rows:.1e}, uniform t {b:.1e}, uniform alpha {cdiff:.1e}, oracles tgga {d_tgga:.1e} ogla {d_ogla:.1e} waf {d_waf:.1e}"
        ),
    )
}

fn metrics_oracle() -> Outcome {
    let a = Image::filled(32, 32, 0.5);
    let b = Image::filled(32, 32, 0.6);
    let p = psnr(&a, &b, ColorMode::Rgb).unwrap();
    let mut rng = rng_from_seed(5);
    let x = Image::new(48, 40, FeatureMap::random(40, 48, 3, &mut rng).data.iter().map(|v| (0.5 + 0.5 * v) as f32).collect()).unwrap();
    let y = Image::new(48, 40, FeatureMap::random(40, 48, 3, &mut rng).data.iter().map(|v| (0.5 + 0.4 * v) as f32).collect()).unwrap();
    let mut worst_self = 0.0f64;
    let mut worst_sym = 0.0f64;
    for mode in [ColorMode::Rgb, ColorMode::Y] {
        worst_self = worst_self.max((ssim(&x, &x, mode).unwrap() - 1.0).abs());
        worst_sym = worst_sym.max((ssim(&x, &y, mode).unwrap() - ssim(&y, &x, mode).unwrap()).abs());
        worst_sym = worst_sym.max((psnr(&x, &y, mode).unwrap() - psnr(&y, &x, mode).unwrap()).abs());
    }
    check(
        (p - 20.0).abs() <= 1e-4 && worst_self <= 1e-9 && worst_sym <= 1e-9,
        format!("psnr {p:.6} dB, |ssim(x,x)-1| {worst_self:.1e}, symmetry {worst_sym:.1e}"),
    )
}

fn synth_cli(dir: &Path, config: &Path, out: &str, jobs: usize) -> Result<f64, String> {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_weatherforge"))
        .args(["synth", "--config"])
        .arg(config)
        .args(["--out-dir", out, "--jobs", &jobs.to_string()])
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    Ok(start.elapsed().as_secs_f64())
}

fn write_synth_config(dir: &Path, scenes: usize, size: usize, each: usize, format: &str) -> std::path::PathBuf {
    let inputs = common::write_inputs(&dir.join("in"), scenes, size);
    let path = dir.join("cfg.json");
    let cfg = serde_json::json!({
        "inputs": inputs,
        "counts": {"haze": each, "rain": each, "snow": each},
        "seed": 1234,
        "out_dir": "unused",
        "image_format": format,
    });
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synth_config(dir.path(), 3, 64, 6, "png+pfm");
    synth_cli(dir.path(), &cfg, "a", 4)?;
    synth_cli(dir.path(), &cfg, "b", 4)?;
    synth_cli(dir.path(), &cfg, "c", 1)?;
    let (a, b, c) = (
        common::hash_tree(&dir.path().join("a")),
        common::hash_tree(&dir.path().join("b")),
        common::hash_tree(&dir.path().join("c")),
    );
    check(
        a.len() == 18 * 7 + 1 && a == b && a == c,
        format!("{} files, jobs 4 vs 4 identical: {}, jobs 4 vs 1 identical: {}", a.len(), a == b, a == c),
    )
}

fn estimated_improvement() -> Outcome {
    let ranges = SamplingRanges::default();
    let mut improved = 0;
    let total = 100;
    for i in 0..total {
        let (clean, depth) = procedural_scene(128, 128, 500 + i, &SceneOptions::default());
        let params = sample_weather_params(99, i, WeatherKind::Haze, &ranges);
        let s = synthesize_sample(&clean, &depth, &params).unwrap();
        let (restored, _) = restore_with_estimated(&s.degraded, &EstimateConfig::default()).unwrap();
        let before = psnr(&s.degraded, &s.clean, ColorMode::Rgb).unwrap();
        let after = psnr(&restored, &s.clean, ColorMode::Rgb).unwrap();
        improved += (after > before) as usize;
    }
    let frac = improved as f64 / total as f64;
    check(frac >= 0.9, format!("{improved} of {total} haze fixtures improved"))
}

fn throughput() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synth_config(dir.path(), 4, 256, 200, "png");
    let secs = synth_cli(dir.path(), &cfg, "tp", 8)?;
    let rate = 600.0 / secs * 60.0;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    check(
        rate >= 1000.0,
        format!("600 samples at 256x256 in {secs:.2} s = {rate:.0} samples/min ({cores} cores available)"),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (cfg, manifest) = pfm_dataset(dir.path());
    let synth_secs = start.elapsed().as_secs_f64();

    let results: Vec<(&str, Outcome)> = vec![
        ("1 oracle round trip", round_trip_identity(&cfg, &manifest, synth_secs)),
        ("2 special-case reductions", special_cases(&cfg, &manifest)),
        ("3 volumetric alpha", volumetric_correctness()),
        ("4 attention invariances", attention_invariances()),
        ("5 metrics oracle", metrics_oracle()),
        ("6 synth determinism", determinism()),
        ("7 estimated-prior restoration", estimated_improvement()),
        ("8 synthesis throughput", throughput()),
    ];
    let mut failed = Vec::new();
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {name}: FAIL ({detail})");
                failed.push(*name);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
