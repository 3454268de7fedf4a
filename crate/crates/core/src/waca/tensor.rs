use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::ScalarMap;
use crate::rng::WeatherRng;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Entries uniform in `[-scale, scale)`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut WeatherRng) -> Self {
        let data = (0..rows * cols).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// `height x width x channels` activations, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}x{width}x{channels} feature map needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("feature maps must be finite"));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn random(height: usize, width: usize, channels: usize, rng: &mut WeatherRng) -> Self {
        let data = (0..height * width * channels).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        FeatureMap {
            height,
            width,
            channels,
            data,
        }
    }

    /// A one-channel feature map holding a scalar raster.
    pub fn from_scalar_map(map: &ScalarMap) -> Self {
        FeatureMap {
            height: map.height(),
            width: map.width(),
            channels: 1,
            data: map.data().iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// The flattened `(h w) x c` token matrix.
    pub fn tokens(&self) -> Matrix {
        Matrix {
            rows: self.pixel_count(),
            cols: self.channels,
            data: self.data.clone(),
        }
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Non-overlapping `r x r` mean pooling.
pub trait AvgPool: Sized {
    fn downsample_avg(&self, r: usize) -> Result<Self>;
}

fn check_ratio(h: usize, w: usize, r: usize) -> Result<()> {
    if r == 0 || !h.is_multiple_of(r) || !w.is_multiple_of(r) {
        return Err(Error::shape(format!(
            "{h}x{w} is not divisible into {r}x{r} blocks"
        )));
    }
    Ok(())
}

fn pool(data: &[f64], h: usize, w: usize, c: usize, r: usize) -> Vec<f64> {
    let (oh, ow) = (h / r, w / r);
    let mut out = vec![0.0; oh * ow * c];
    let norm = 1.0 / (r * r) as f64;
    for y in 0..h {
        for x in 0..w {
            let dst = ((y / r) * ow + x / r) * c;
            let src = (y * w + x) * c;
            for k in 0..c {
                out[dst + k] += data[src + k] * norm;
            }
        }
    }
    out
}

impl AvgPool for FeatureMap {
    fn downsample_avg(&self, r: usize) -> Result<Self> {
        check_ratio(self.height, self.width, r)?;
        if r == 1 {
            return Ok(self.clone());
        }
        Ok(FeatureMap {
            height: self.height / r,
            width: self.width / r,
            channels: self.channels,
            data: pool(&self.data, self.height, self.width, self.channels, r),
        })
    }
}

impl AvgPool for ScalarMap {
    fn downsample_avg(&self, r: usize) -> Result<Self> {
        check_ratio(self.height(), self.width(), r)?;
        if r == 1 {
            return Ok(self.clone());
        }
        let src: Vec<f64> = self.data().iter().map(|&v| v as f64).collect();
        let out = pool(&src, self.height(), self.width(), 1, r);
        ScalarMap::new(self.width() / r, self.height() / r, out.into_iter().map(|v| v as f32).collect())
    }
}
