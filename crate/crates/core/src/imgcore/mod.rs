//! Raster containers shared by every stage of the pipeline.
//!
//! [`Image`] holds interleaved RGB samples in `[0, 1]`; [`ScalarMap`] holds a
//! single channel (depth, transmission, alpha) with no range restriction of
//! its own. Both are row-major with the origin at the top-left pixel.
//! All physics operates on linear intensities; PNG data is not gamma-decoded.

mod pfm;
mod png_io;

pub use pfm::{read_pfm, write_pfm, PfmData};
pub use png_io::{read_png, write_png};

use std::path::Path;

use crate::error::{Error, Result};

/// Number of interleaved samples per [`Image`] pixel.
pub const CHANNELS: usize = 3;

/// An RGB raster with every sample in the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    /// Wraps `data` after checking its length and that every sample lies in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(Error::shape(format!(
                "{}x{} RGB image needs {} samples, got {}",
                width,
                height,
                width * height * CHANNELS,
                data.len()
            )));
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain {
                index: index / CHANNELS,
                value,
                reason: "image samples must lie in [0, 1]",
            });
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image from arbitrary samples, clamping each one into `[0, 1]`.
    /// NaN samples become 0.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Image::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        let value = clamp_unit(value);
        Image {
            width,
            height,
            data: vec![value; width * height * CHANNELS],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| clamp_unit(*v)));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(CHANNELS)
    }

    /// Per-pixel mean of the three channels.
    pub fn gray(&self) -> ScalarMap {
        let data = self
            .pixels()
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect();
        ScalarMap {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Applies `f` to every sample and clamps the result into `[0, 1]`.
    pub fn map_samples(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    pub fn same_shape(&self, map: &ScalarMap) -> bool {
        self.width == map.width && self.height == map.height
    }

    pub(crate) fn ensure_matches(&self, map: &ScalarMap, what: &str) -> Result<()> {
        if self.same_shape(map) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "image is {}x{} but {} is {}x{}",
                self.width, self.height, what, map.width, map.height
            )))
        }
    }

    pub(crate) fn ensure_same_size(&self, other: &Image) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "images are {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * CHANNELS);
        Image {
            width,
            height,
            data,
        }
    }
}

/// A single-channel raster. Range constraints belong to whoever owns the
/// map (depth ≥ 0, transmission in (0, 1], alpha in [0, 1]).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "{}x{} map needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(ScalarMap {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        ScalarMap {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ScalarMap {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &ScalarMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_matches(&self, other: &ScalarMap, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "expected {}x{} for {}, got {}x{}",
                self.width, self.height, what, other.width, other.height
            )))
        }
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// BT.601 luma with studio-swing offsets: `(65.481 R + 128.553 G + 24.966 B + 16) / 255`.
/// Output lies in `[16/255, 235/255]`.
pub fn rgb_to_y(img: &Image) -> ScalarMap {
    let data = img
        .pixels()
        .map(|p| {
            let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
            ((65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0) as f32
        })
        .collect();
    ScalarMap {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Reads an 8/16-bit RGB PNG or a PFM file, picked by extension (`.pfm`) and
/// falling back to the file signature.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if is_pfm_path(path) {
        let pfm = read_pfm(path)?;
        if pfm.channels != CHANNELS {
            return Err(Error::format(path, "expected a 3-channel PF file"));
        }
        return Image::from_clamped(pfm.width, pfm.height, pfm.data);
    }
    read_png(path)
}

/// Writes `img` as PNG at the given bit depth, or as a 3-channel PFM when the
/// path ends in `.pfm` (the bit depth is ignored then).
pub fn write_image(img: &Image, path: impl AsRef<Path>, bit_depth: u8) -> Result<()> {
    let path = path.as_ref();
    if is_pfm_path(path) {
        return write_pfm(path, img.width, img.height, CHANNELS, &img.data);
    }
    write_png(img, path, bit_depth)
}

pub fn read_scalar_map(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let pfm = read_pfm(path)?;
    if pfm.channels != 1 {
        return Err(Error::format(path, "expected a single-channel Pf file"));
    }
    ScalarMap::new(pfm.width, pfm.height, pfm.data)
}

pub fn write_scalar_map(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(path.as_ref(), map.width, map.height, 1, &map.data)
}

fn is_pfm_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("pfm"))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn y_of_white_black_and_gray() {
        let y = |v: f32| rgb_to_y(&Image::filled(1, 1, v)).data()[0];
        assert!((y(1.0) - 235.0 / 255.0).abs() < 1e-6);
        assert!((y(0.0) - 16.0 / 255.0).abs() < 1e-7);
        let mid = (0.5 * (65.481 + 128.553 + 24.966) + 16.0) / 255.0;
        assert!((y(0.5) as f64 - mid).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_and_bad_length() {
        assert!(matches!(
            Image::new(1, 1, vec![0.0, 1.5, 0.0]),
            Err(Error::Domain { index: 0, .. })
        ));
        assert!(matches!(Image::new(2, 1, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(ScalarMap::new(2, 2, vec![0.0; 3]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn y_is_the_affine_formula(r in 0.0f32..=1.0, g in 0.0f32..=1.0, b in 0.0f32..=1.0, s in 0.0f32..=1.0) {
            let (r, g, b) = (r * s, g * s, b * s);
            let img = Image::new(1, 1, vec![r, g, b]).unwrap();
            let direct = (65.481 * r as f64 + 128.553 * g as f64 + 24.966 * b as f64 + 16.0) / 255.0;
            let y = rgb_to_y(&img).data()[0] as f64;
            prop_assert!((y - direct).abs() < 1e-6);
            prop_assert!((16.0 / 255.0 - 1e-6..=235.0 / 255.0 + 1e-6).contains(&y));
        }
    }
}
