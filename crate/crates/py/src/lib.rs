//! Python bindings: rasters, the forward model, restoration, metrics,
//! dataset generation and the attention checks.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use wf::metrics::ColorMode;
use wf::occlusion::{OcclusionField, VisibilityParams};
use wf::restore::{EstimateConfig, InversionOptions, OraclePriors};
use wf::scatter::TransmissionMap;
use wf::synth::{SamplingRanges, WeatherKind, WeatherParams};

fn err(e: wf::Error) -> PyErr {
    match e {
        wf::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn mode(s: &str) -> PyResult<ColorMode> {
    s.parse().map_err(|e: wf::Error| PyValueError::new_err(e.to_string()))
}

/// RGB image, row-major interleaved samples in [0, 1].
#[pyclass(name = "Image", module = "weatherforge", frozen)]
struct PyImage(wf::Image);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f32>) -> PyResult<Self> {
        wf::Image::new(width, height, data).map(PyImage).map_err(err)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: f32) -> Self {
        PyImage(wf::Image::filled(width, height, value))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        wf::read_image(&path).map(PyImage).map_err(err)
    }

    #[pyo3(signature = (path, bit_depth = 8))]
    fn write(&self, path: PathBuf, bit_depth: u8) -> PyResult<()> {
        wf::write_image(&self.0, &path, bit_depth).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<(f32, f32, f32)> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        let [r, g, b] = self.0.pixel(x, y);
        Ok((r, g, b))
    }

    fn to_list(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Single-channel float raster (depth, transmission, alpha).
#[pyclass(name = "ScalarMap", module = "weatherforge", frozen)]
struct PyScalarMap(wf::ScalarMap);

#[pymethods]
impl PyScalarMap {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f32>) -> PyResult<Self> {
        wf::ScalarMap::new(width, height, data).map(PyScalarMap).map_err(err)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: f32) -> Self {
        PyScalarMap(wf::ScalarMap::filled(width, height, value))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        wf::read_scalar_map(&path).map(PyScalarMap).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        wf::write_scalar_map(&self.0, &path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f32> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        Ok(self.0.get(x, y))
    }

    fn to_list(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("ScalarMap({}x{})", self.0.width(), self.0.height())
    }
}

fn parse_params(json: &str) -> PyResult<WeatherParams> {
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let inner = value.get("params").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| PyValueError::new_err(format!("not a weather parameter record: {e}")))
}

/// `t = exp(-beta d)`.
#[pyfunction]
fn transmission_from_depth(depth: &PyScalarMap, beta: f32) -> PyResult<PyScalarMap> {
    wf::scatter::transmission_from_depth(&depth.0, beta)
        .map(|t| PyScalarMap(t.into_map()))
        .map_err(err)
}

/// `B = J t + A (1 - t)`.
#[pyfunction]
fn scattering_composite(clean: &PyImage, t: &PyScalarMap, light: f32) -> PyResult<PyImage> {
    let t = TransmissionMap::new(t.0.clone()).map_err(err)?;
    wf::scatter::scattering_composite(&clean.0, &t, light).map(PyImage).map_err(err)
}

/// `I = O alpha + B (1 - alpha)`.
#[pyfunction]
fn occlusion_composite(background: &PyImage, alpha: &PyScalarMap, brightness: f32) -> PyResult<PyImage> {
    let occ = OcclusionField::new(alpha.0.clone(), brightness).map_err(err)?;
    wf::occlusion::occlusion_composite(&background.0, &occ).map(PyImage).map_err(err)
}

/// Regime name for depth `z` given focal length, drop radius and ratio.
#[pyfunction]
#[pyo3(signature = (z, focal_length, drop_radius, ratio = VisibilityParams::DEFAULT_RATIO))]
fn visibility_regime(z: f64, focal_length: f64, drop_radius: f64, ratio: f64) -> PyResult<&'static str> {
    let p = VisibilityParams::new(focal_length, drop_radius, ratio).map_err(err)?;
    wf::occlusion::visibility_regime(z, &p).map(|r| r.name()).map_err(err)
}

/// Clean image and depth map of a seeded procedural scene.
#[pyfunction]
#[pyo3(signature = (width, height, seed, sky = true))]
fn procedural_scene(width: usize, height: usize, seed: u64, sky: bool) -> (PyImage, PyScalarMap) {
    let opts = wf::scene::SceneOptions {
        sky,
        ..Default::default()
    };
    let (img, depth) = wf::scene::procedural_scene(width, height, seed, &opts);
    (PyImage(img), PyScalarMap(depth))
}

/// Samples weather parameters; returns them as a JSON string.
#[pyfunction]
fn sample_weather_params(master_seed: u64, index: u64, kind: &str) -> PyResult<String> {
    let kind = match kind {
        "haze" => WeatherKind::Haze,
        "rain" => WeatherKind::Rain,
        "snow" => WeatherKind::Snow,
        other => return Err(PyValueError::new_err(format!("unknown weather kind {other:?}"))),
    };
    let p = wf::synth::sample_weather_params(master_seed, index, kind, &SamplingRanges::default());
    Ok(serde_json::to_string(&p).expect("params serialize"))
}

/// Applies the full forward model. Returns `(degraded, clean, t, alpha)`,
/// where `clean` is the low-light adjusted ground truth.
#[pyfunction]
fn synthesize(clean: &PyImage, depth: &PyScalarMap, params_json: &str) -> PyResult<(PyImage, PyImage, PyScalarMap, PyScalarMap)> {
    let params = parse_params(params_json)?;
    let s = wf::synth::synthesize_sample(&clean.0, &depth.0, &params).map_err(err)?;
    Ok((
        PyImage(s.degraded),
        PyImage(s.clean),
        PyScalarMap(s.transmission.into_map()),
        PyScalarMap(s.alpha),
    ))
}

/// Closed-form restoration with the recorded priors.
#[pyfunction]
#[pyo3(signature = (observed, params_json, t, alpha, invert_gamma = false))]
fn restore_with_oracle(
    observed: &PyImage,
    params_json: &str,
    t: &PyScalarMap,
    alpha: &PyScalarMap,
    invert_gamma: bool,
) -> PyResult<PyImage> {
    let params = parse_params(params_json)?;
    let priors = OraclePriors::from_params(&params, t.0.clone(), alpha.0.clone()).map_err(err)?;
    let opts = InversionOptions {
        invert_gamma: if invert_gamma { priors.lowlight_gamma } else { None },
        ..Default::default()
    };
    wf::restore::restore_with_oracle(&observed.0, &priors, &opts)
        .map(PyImage)
        .map_err(err)
}

/// Restoration with classically estimated priors. Returns
/// `(restored, t, alpha, light, brightness)`.
#[pyfunction]
#[pyo3(signature = (observed, skip_occlusion = false))]
fn restore_with_estimated(observed: &PyImage, skip_occlusion: bool) -> PyResult<(PyImage, PyScalarMap, PyScalarMap, f32, f32)> {
    let cfg = EstimateConfig {
        skip_occlusion,
        ..Default::default()
    };
    let (img, p) = wf::restore::restore_with_estimated(&observed.0, &cfg).map_err(err)?;
    let brightness = p.occlusion.brightness();
    let (alpha, _) = p.occlusion.into_parts();
    Ok((PyImage(img), PyScalarMap(p.transmission.into_map()), PyScalarMap(alpha), p.light, brightness))
}

#[pyfunction]
#[pyo3(signature = (a, b, mode = "rgb"))]
fn psnr(a: &PyImage, b: &PyImage, mode: &str) -> PyResult<f64> {
    wf::metrics::psnr(&a.0, &b.0, self::mode(mode)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a, b, mode = "rgb"))]
fn ssim(a: &PyImage, b: &PyImage, mode: &str) -> PyResult<f64> {
    wf::metrics::ssim(&a.0, &b.0, self::mode(mode)?).map_err(err)
}

/// Generates a dataset from a JSON config file; returns the sample count.
#[pyfunction]
#[pyo3(signature = (config_path, jobs = None, seed = None))]
fn generate_dataset(py: Python<'_>, config_path: PathBuf, jobs: Option<usize>, seed: Option<u64>) -> PyResult<usize> {
    let mut cfg = wf::synth::DatasetConfig::from_file(&config_path).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    py.detach(|| wf::synth::generate_dataset(&cfg, jobs))
        .map(|m| m.count)
        .map_err(err)
}

/// Runs the attention invariance suite: `[(name, error, tolerance, passed)]`.
#[pyfunction]
fn attn_check() -> PyResult<Vec<(&'static str, f64, f64, bool)>> {
    let results = wf::waca::check::run_invariance_suite().map_err(err)?;
    Ok(results.iter().map(|r| (r.name, r.error, r.tolerance, r.passed())).collect())
}

#[pymodule]
fn weatherforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyScalarMap>()?;
    m.add_function(wrap_pyfunction!(transmission_from_depth, m)?)?;
    m.add_function(wrap_pyfunction!(scattering_composite, m)?)?;
    m.add_function(wrap_pyfunction!(occlusion_composite, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_regime, m)?)?;
    m.add_function(wrap_pyfunction!(procedural_scene, m)?)?;
    m.add_function(wrap_pyfunction!(sample_weather_params, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(restore_with_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(restore_with_estimated, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(attn_check, m)?)?;
    Ok(())
}
