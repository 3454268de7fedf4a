//! Dataset generation: per-sample files plus a JSON manifest.
//!
//! Sample `i` takes input pair `i % inputs.len()`; haze samples come first,
//! then rain, then snow. Every sample draws from streams derived from
//! `(seed, i)`, so output bytes do not depend on worker count or order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{read_image, read_scalar_map, write_image, write_scalar_map};

use super::{sample_weather_params, synthesize_sample, SamplingRanges, WeatherKind, WeatherParams};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPair {
    pub clean: PathBuf,
    pub depth: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherCounts {
    pub haze: usize,
    pub rain: usize,
    pub snow: usize,
}

impl WeatherCounts {
    pub fn total(&self) -> usize {
        self.haze + self.rain + self.snow
    }

    /// Weather family of global sample index `i`.
    pub fn kind_of(&self, i: usize) -> WeatherKind {
        if i < self.haze {
            WeatherKind::Haze
        } else if i < self.haze + self.rain {
            WeatherKind::Rain
        } else {
            WeatherKind::Snow
        }
    }
}

/// How degraded/clean rasters are written. Transmission and alpha are always PFM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ImageFormat {
    /// 8-bit PNG.
    #[default]
    #[serde(rename = "png")]
    Png,
    #[serde(rename = "png16")]
    Png16,
    /// 3-channel PFM only, lossless.
    #[serde(rename = "pfm")]
    Pfm,
    /// 8-bit PNG plus lossless PFM sidecars.
    #[serde(rename = "png+pfm")]
    PngWithPfm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub inputs: Vec<InputPair>,
    pub counts: WeatherCounts,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub image_format: ImageFormat,
    #[serde(default)]
    pub ranges: SamplingRanges,
}

impl DatasetConfig {
    /// Loads a JSON config; relative paths are taken relative to the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: DatasetConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for pair in &mut self.inputs {
            fix(&mut pair.clean);
            fix(&mut pair.depth);
        }
        fix(&mut self.out_dir);
    }
}

/// Per-sample sidecar `NNNNN_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub schema_version: u32,
    pub id: String,
    pub index: u64,
    pub source: InputPair,
    pub params: WeatherParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub index: u64,
    pub weather_type: super::WeatherType,
    pub source: InputPair,
    pub files: BTreeMap<String, String>,
    pub params: WeatherParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub count: usize,
    pub samples: Vec<ManifestEntry>,
}

pub fn sample_id(index: usize) -> String {
    format!("{index:05}")
}

/// Generates the dataset with `jobs` workers (`None` = available parallelism)
/// and writes `manifest.json` last. On failure the failing sample's files are
/// removed and no manifest is written.
pub fn generate_dataset(config: &DatasetConfig, jobs: Option<usize>) -> Result<Manifest> {
    config.ranges.validate()?;
    let total = config.counts.total();
    if total > 0 && config.inputs.is_empty() {
        return Err(Error::config("dataset config lists samples but no inputs"));
    }
    for (index, pair) in config.inputs.iter().enumerate() {
        for p in [&pair.clean, &pair.depth] {
            if let Err(e) = fs::metadata(p) {
                return Err(input_error(index, pair, Error::io(p, e)));
            }
        }
    }
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let manifest_path = config.out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }

    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    info!("generating {total} samples with {jobs} workers into {}", config.out_dir.display());

    let entries: Vec<ManifestEntry> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| generate_one(config, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: config.seed,
        count: entries.len(),
        samples: entries,
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

fn input_error(index: usize, pair: &InputPair, source: Error) -> Error {
    Error::Input {
        index,
        clean: pair.clean.clone(),
        depth: pair.depth.clone(),
        source: Box::new(source),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn generate_one(config: &DatasetConfig, i: usize) -> Result<ManifestEntry> {
    let pair_index = i % config.inputs.len();
    let pair = &config.inputs[pair_index];
    let kind = config.counts.kind_of(i);
    let params = sample_weather_params(config.seed, i as u64, kind, &config.ranges);
    let id = sample_id(i);

    let load = || -> Result<_> {
        let clean = read_image(&pair.clean)?;
        let depth = read_scalar_map(&pair.depth)?;
        synthesize_sample(&clean, &depth, &params)
    };
    let sample = load().map_err(|e| input_error(pair_index, pair, e))?;

    let mut files = BTreeMap::new();
    match config.image_format {
        ImageFormat::Png | ImageFormat::Png16 | ImageFormat::PngWithPfm => {
            files.insert("lq".to_string(), format!("{id}_lq.png"));
            files.insert("gt".to_string(), format!("{id}_gt.png"));
        }
        ImageFormat::Pfm => {
            files.insert("lq".to_string(), format!("{id}_lq.pfm"));
            files.insert("gt".to_string(), format!("{id}_gt.pfm"));
        }
    }
    if config.image_format == ImageFormat::PngWithPfm {
        files.insert("lq_pfm".to_string(), format!("{id}_lq.pfm"));
        files.insert("gt_pfm".to_string(), format!("{id}_gt.pfm"));
    }
    files.insert("t".to_string(), format!("{id}_t.pfm"));
    files.insert("alpha".to_string(), format!("{id}_alpha.pfm"));
    files.insert("meta".to_string(), format!("{id}_meta.json"));

    let bits = if config.image_format == ImageFormat::Png16 { 16 } else { 8 };
    let out = |name: &str| config.out_dir.join(&files[name]);
    let write_all = || -> Result<()> {
        write_image(&sample.degraded, out("lq"), bits)?;
        write_image(&sample.clean, out("gt"), bits)?;
        if config.image_format == ImageFormat::PngWithPfm {
            write_image(&sample.degraded, out("lq_pfm"), bits)?;
            write_image(&sample.clean, out("gt_pfm"), bits)?;
        }
        write_scalar_map(sample.transmission.map(), out("t"))?;
        write_scalar_map(&sample.alpha, out("alpha"))?;
        let meta = SampleMeta {
            schema_version: MANIFEST_SCHEMA_VERSION,
            id: id.clone(),
            index: i as u64,
            source: pair.clone(),
            params: params.clone(),
        };
        write_json(&out("meta"), &meta)
    };
    if let Err(e) = write_all() {
        for name in files.values() {
            let _ = fs::remove_file(config.out_dir.join(name));
        }
        return Err(e);
    }
    debug!("sample {id}: {}", params.weather_type.name());

    Ok(ManifestEntry {
        id,
        index: i as u64,
        weather_type: params.weather_type,
        source: pair.clone(),
        files,
        params,
    })
}
