use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use weatherforge::metrics::{psnr, ssim, ColorMode};
use weatherforge::occlusion::{visibility_regime, VisibilityParams};
use weatherforge::priors::{DarkChannelParams, OcclusionParams};
use weatherforge::restore::{restore_with_estimated, restore_with_oracle, EstimateConfig, InversionOptions, OraclePriors};
use weatherforge::scene::{procedural_scene, SceneOptions};
use weatherforge::synth::{
    generate_dataset, sample_weather_params, synthesize_sample, DatasetConfig, SamplingRanges, WeatherKind,
    WeatherParams, WeatherType,
};
use weatherforge::waca::check::run_invariance_suite;
use weatherforge::{read_image, read_scalar_map, write_image, write_scalar_map};

#[derive(Parser, Debug)]
#[command(name = "weatherforge", version, about = "Haze, rain and snow synthesis, restoration and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset from a JSON config.
    Synth(SynthArgs),
    /// Degrade one image with explicit weather parameters.
    Degrade(DegradeArgs),
    /// Restore an image with oracle or estimated priors.
    Restore(RestoreArgs),
    /// Compare predictions against references (CSV on stdout).
    Eval(EvalArgs),
    /// Run the attention invariance suite.
    AttnCheck,
    /// Print the particle visibility regime for each depth.
    Visibility(VisibilityArgs),
    /// Write a procedural clean image and depth map.
    Scene(SceneArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Weather {
    Haze,
    Rain,
    Snow,
}

#[derive(Args, Debug)]
struct DegradeArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Degraded output.
    #[arg(long)]
    out: PathBuf,
    /// Full parameter set as JSON: either bare parameters or a sample sidecar.
    #[arg(long, conflicts_with_all = ["weather", "beta", "light", "brightness", "gamma", "scatter"])]
    params: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "params")]
    weather: Option<Weather>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long)]
    beta: Option<f32>,
    /// Atmospheric light A.
    #[arg(long)]
    light: Option<f32>,
    /// Particle brightness O.
    #[arg(long)]
    brightness: Option<f32>,
    #[arg(long)]
    gamma: Option<f32>,
    /// Force scattering on or off for rain and snow.
    #[arg(long)]
    scatter: Option<bool>,
    #[arg(long)]
    gt_out: Option<PathBuf>,
    #[arg(long)]
    t_out: Option<PathBuf>,
    #[arg(long)]
    alpha_out: Option<PathBuf>,
    #[arg(long)]
    meta_out: Option<PathBuf>,
    #[arg(long, default_value_t = 8, value_parser = parse_bit_depth)]
    bit_depth: u8,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("method").required(true).args(["oracle", "estimate"])))]
struct RestoreArgs {
    /// Invert with the priors recorded at synthesis (needs --meta, --t, --alpha).
    #[arg(long)]
    oracle: bool,
    /// Invert with classically estimated priors.
    #[arg(long)]
    estimate: bool,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_if_eq("oracle", "true"))]
    meta: Option<PathBuf>,
    #[arg(long, required_if_eq("oracle", "true"))]
    t: Option<PathBuf>,
    #[arg(long, required_if_eq("oracle", "true"))]
    alpha: Option<PathBuf>,
    #[arg(long, default_value_t = weatherforge::scatter::DEFAULT_T_MIN)]
    t_min: f32,
    #[arg(long, default_value_t = weatherforge::occlusion::DEFAULT_ALPHA_MAX)]
    alpha_max: f32,
    /// Undo a low-light gamma after inversion. Without a value, oracle mode
    /// uses the gamma recorded in the sidecar.
    #[arg(long, num_args = 0..=1)]
    invert_gamma: Option<Option<f32>>,
    #[arg(long, default_value_t = DarkChannelParams::default().patch)]
    patch: usize,
    #[arg(long, default_value_t = DarkChannelParams::default().omega)]
    omega: f32,
    #[arg(long, default_value_t = DarkChannelParams::default().top_frac)]
    top_frac: f32,
    #[arg(long, default_value_t = OcclusionParams::default().bright_thresh)]
    bright_thresh: f32,
    #[arg(long, default_value_t = OcclusionParams::default().size_max)]
    size_max: usize,
    #[arg(long, default_value_t = OcclusionParams::default().window)]
    window: usize,
    /// Skip particle detection.
    #[arg(long)]
    no_occlusion: bool,
    /// Write the estimated transmission (estimate mode).
    #[arg(long)]
    t_out: Option<PathBuf>,
    /// Write the estimated alpha (estimate mode).
    #[arg(long)]
    alpha_out: Option<PathBuf>,
    #[arg(long, default_value_t = 8, value_parser = parse_bit_depth)]
    bit_depth: u8,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    Psnr,
    Ssim,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Rgb,
    Y,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory (or single image) of predictions.
    #[arg(long)]
    pred: PathBuf,
    /// Directory (or single image) of references, matched by file stem.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Psnr)]
    metric: Metric,
    #[arg(long, value_enum, default_value_t = Mode::Rgb)]
    mode: Mode,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct VisibilityArgs {
    #[arg(long)]
    focal_length: f64,
    #[arg(long)]
    drop_radius: f64,
    #[arg(long, default_value_t = VisibilityParams::DEFAULT_RATIO)]
    ratio: f64,
    /// Depths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    z: Vec<f64>,
}

#[derive(Args, Debug)]
struct SceneArgs {
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    depth_out: PathBuf,
    #[arg(long)]
    no_sky: bool,
    #[arg(long, default_value_t = 8, value_parser = parse_bit_depth)]
    bit_depth: u8,
}

fn parse_bit_depth(s: &str) -> std::result::Result<u8, String> {
    match s {
        "8" => Ok(8),
        "16" => Ok(16),
        _ => Err(format!("bit depth must be 8 or 16, got {s}")),
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Degrade(a) => degrade(a),
        Command::Restore(a) => restore(a),
        Command::Eval(a) => eval(a),
        Command::AttnCheck => attn_check(),
        Command::Visibility(a) => visibility(a),
        Command::Scene(a) => scene(a),
    }
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let mut config = DatasetConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(dir) = a.out_dir {
        config.out_dir = dir;
    }
    let manifest = generate_dataset(&config, a.jobs)?;
    eprintln!("wrote {} samples to {}", manifest.count, config.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_params(path: &Path) -> Result<WeatherParams> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let inner = value.get("params").cloned().unwrap_or(value);
    serde_json::from_value(inner).with_context(|| format!("{} does not hold weather parameters", path.display()))
}

fn degrade(a: DegradeArgs) -> Result<ExitCode> {
    let params = match &a.params {
        Some(path) => load_params(path)?,
        None => {
            let kind = match a.weather.expect("enforced by clap") {
                Weather::Haze => WeatherKind::Haze,
                Weather::Rain => WeatherKind::Rain,
                Weather::Snow => WeatherKind::Snow,
            };
            let mut p = sample_weather_params(a.seed, a.index, kind, &SamplingRanges::default());
            if let Some(beta) = a.beta {
                p.atmosphere.beta = beta;
                p.volumetric.beta = beta;
            }
            if let Some(light) = a.light {
                p.atmosphere.light = light;
            }
            if let Some(o) = a.brightness {
                p.occlusion_brightness = o;
            }
            if let Some(g) = a.gamma {
                p.lowlight_gamma = g;
            }
            if let Some(scatter) = a.scatter {
                p.weather_type = match (kind, scatter) {
                    (WeatherKind::Haze, false) => bail!("haze without scattering is not a degradation"),
                    (WeatherKind::Haze, true) => WeatherType::Haze,
                    (WeatherKind::Rain, false) => WeatherType::Rain,
                    (WeatherKind::Rain, true) => WeatherType::RainHaze,
                    (WeatherKind::Snow, false) => WeatherType::Snow,
                    (WeatherKind::Snow, true) => WeatherType::SnowHaze,
                };
            }
            p
        }
    };
    let clean = read_image(&a.clean)?;
    let depth = read_scalar_map(&a.depth)?;
    let sample = synthesize_sample(&clean, &depth, &params)?;
    write_image(&sample.degraded, &a.out, a.bit_depth)?;
    if let Some(p) = &a.gt_out {
        write_image(&sample.clean, p, a.bit_depth)?;
    }
    if let Some(p) = &a.t_out {
        write_scalar_map(sample.transmission.map(), p)?;
    }
    if let Some(p) = &a.alpha_out {
        write_scalar_map(&sample.alpha, p)?;
    }
    if let Some(p) = &a.meta_out {
        write_json(p, &serde_json::json!({ "params": params }))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn restore(a: RestoreArgs) -> Result<ExitCode> {
    let observed = read_image(&a.input)?;
    let mut inversion = InversionOptions {
        t_min: a.t_min,
        alpha_max: a.alpha_max,
        invert_gamma: a.invert_gamma.flatten(),
    };
    if a.estimate && a.invert_gamma == Some(None) {
        bail!("--invert-gamma needs a value with --estimate");
    }
    let restored = if a.oracle {
        let meta_path = a.meta.as_ref().expect("enforced by clap");
        let text = fs::read_to_string(meta_path).with_context(|| format!("cannot read {}", meta_path.display()))?;
        let meta: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not JSON", meta_path.display()))?;
        let t = read_scalar_map(a.t.as_ref().expect("enforced by clap"))?;
        let alpha = read_scalar_map(a.alpha.as_ref().expect("enforced by clap"))?;
        let priors = OraclePriors::from_meta_json(&meta, t, alpha)?;
        if a.invert_gamma == Some(None) {
            inversion.invert_gamma =
                Some(priors.lowlight_gamma.context("sidecar records no lowlight_gamma")?);
        }
        restore_with_oracle(&observed, &priors, &inversion)?
    } else {
        let cfg = EstimateConfig {
            dark_channel: DarkChannelParams {
                patch: a.patch,
                omega: a.omega,
                top_frac: a.top_frac,
                t_min: a.t_min,
            },
            occlusion: OcclusionParams {
                bright_thresh: a.bright_thresh,
                size_max: a.size_max,
                window: a.window,
            },
            inversion,
            skip_occlusion: a.no_occlusion,
        };
        let (restored, priors) = restore_with_estimated(&observed, &cfg)?;
        log::info!(
            "estimated A = {:.4}, O = {:.4}",
            priors.light,
            priors.occlusion.brightness()
        );
        if let Some(p) = &a.t_out {
            write_scalar_map(priors.transmission.map(), p)?;
        }
        if let Some(p) = &a.alpha_out {
            write_scalar_map(priors.occlusion.alpha(), p)?;
        }
        restored
    };
    write_image(&restored, &a.out, a.bit_depth)?;
    Ok(ExitCode::SUCCESS)
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pfm")
    )
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn eval_pairs(pred: &Path, reference: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if pred.is_file() && reference.is_file() {
        return Ok(vec![(stem(pred), pred.to_path_buf(), reference.to_path_buf())]);
    }
    if !pred.is_dir() || !reference.is_dir() {
        bail!("--pred and --ref must both be directories or both be image files");
    }
    let refs = list_images(reference)?;
    let mut pairs = Vec::new();
    for p in list_images(pred)? {
        let name = stem(&p);
        let matches: Vec<&PathBuf> = refs.iter().filter(|r| stem(r) == name).collect();
        match matches.as_slice() {
            [r] => pairs.push((name, p.clone(), (*r).clone())),
            [] => bail!("no reference for {} in {}", p.display(), reference.display()),
            _ => bail!("several references named {name} in {}", reference.display()),
        }
    }
    if pairs.is_empty() {
        bail!("no images found in {}", pred.display());
    }
    Ok(pairs)
}

fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let pairs = eval_pairs(&a.pred, &a.reference)?;
    let mode = match a.mode {
        Mode::Rgb => ColorMode::Rgb,
        Mode::Y => ColorMode::Y,
    };
    let metric_name = match a.metric {
        Metric::Psnr => "psnr",
        Metric::Ssim => "ssim",
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .context("cannot start worker pool")?;
    let values: Vec<f64> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(name, p, r)| -> Result<f64> {
                let pred = read_image(p)?;
                let reference = read_image(r)?;
                let v = match a.metric {
                    Metric::Psnr => psnr(&pred, &reference, mode),
                    Metric::Ssim => ssim(&pred, &reference, mode),
                };
                v.with_context(|| format!("evaluating {name}"))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "name,metric,value")?;
    for ((name, _, _), v) in pairs.iter().zip(&values) {
        writeln!(out, "{name},{metric_name},{}", format_value(*v))?;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    writeln!(out, "mean,{metric_name},{}", format_value(mean))?;
    Ok(ExitCode::SUCCESS)
}

fn attn_check() -> Result<ExitCode> {
    let results = run_invariance_suite()?;
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    println!("{:<width$}  {:>11}  {:>9}  result", "check", "error", "tolerance");
    let mut failed = 0;
    for r in &results {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        if !r.passed() {
            failed += 1;
        }
        println!("{:<width$}  {:>11.3e}  {:>9.1e}  {verdict}", r.name, r.error, r.tolerance);
    }
    println!("{} of {} checks passed", results.len() - failed, results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn visibility(a: VisibilityArgs) -> Result<ExitCode> {
    let params = VisibilityParams::new(a.focal_length, a.drop_radius, a.ratio)?;
    println!("z1 = {} (2 f a), z2 = {} (R z1)", params.z1(), params.z2());
    println!("z,regime");
    for z in a.z {
        println!("{z},{}", visibility_regime(z, &params)?.name());
    }
    Ok(ExitCode::SUCCESS)
}

fn scene(a: SceneArgs) -> Result<ExitCode> {
    if a.width == 0 || a.height == 0 {
        bail!("scene dimensions must be positive");
    }
    let opts = SceneOptions {
        sky: !a.no_sky,
        ..SceneOptions::default()
    };
    let (img, depth) = procedural_scene(a.width, a.height, a.seed, &opts);
    write_image(&img, &a.out, a.bit_depth)?;
    write_scalar_map(&depth, &a.depth_out)?;
    Ok(ExitCode::SUCCESS)
}
