use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, DecodingError, EncodingError};

use super::{Image, CHANNELS};
use crate::error::{Error, Result};

/// Decodes an RGB PNG with 8 or 16 bits per sample into unit-interval floats
/// (`v / 255` or `v / 65535`). No gamma decoding is applied.
pub fn read_png(path: &Path) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    let (color, depth) = reader.output_color_type();
    if color != ColorType::Rgb {
        return Err(Error::format(
            path,
            format!("expected 3-channel RGB, found {color:?}"),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let bytes = &buf[..frame.buffer_size()];
    let data: Vec<f32> = match depth {
        BitDepth::Eight => bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        BitDepth::Sixteen => bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        other => {
            return Err(Error::format(
                path,
                format!("unsupported bit depth {other:?}"),
            ))
        }
    };
    if data.len() != width * height * CHANNELS {
        return Err(Error::format(path, "pixel data does not match header"));
    }
    Ok(Image::from_raw_unchecked(width, height, data))
}

/// Encodes `img` as an RGB PNG, quantizing with round-half-to-even.
pub fn write_png(img: &Image, path: &Path, bit_depth: u8) -> Result<()> {
    let bytes: Vec<u8> = match bit_depth {
        8 => img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect(),
        16 => img
            .data()
            .iter()
            .flat_map(|&v| (quantize(v, 65535.0) as u16).to_be_bytes())
            .collect(),
        other => {
            return Err(Error::config(format!(
                "PNG bit depth must be 8 or 16, got {other}"
            )))
        }
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(ColorType::Rgb);
    encoder.set_depth(if bit_depth == 8 {
        BitDepth::Eight
    } else {
        BitDepth::Sixteen
    });
    encoder.set_compression(png::Compression::Fast);
    let mut writer = encoder.write_header().map_err(|e| encode_err(path, e))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| encode_err(path, e))?;
    writer.finish().map_err(|e| encode_err(path, e))
}

#[inline]
fn quantize(v: f32, max: f32) -> f32 {
    (v.clamp(0.0, 1.0) * max).round_ties_even()
}

fn decode_err(path: &Path, e: DecodingError) -> Error {
    match e {
        DecodingError::IoError(io) => Error::io(path, io),
        // the decoder reports a short stream as a format error on some inputs
        DecodingError::Format(f) if f.to_string().contains("EOF") => {
            Error::io(path, io::Error::new(io::ErrorKind::UnexpectedEof, f.to_string()))
        }
        other => Error::format(path, other.to_string()),
    }
}

fn encode_err(path: &Path, e: EncodingError) -> Error {
    match e {
        EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{read_image, write_image};
    use proptest::prelude::*;

    fn write_raw_png(path: &Path, depth: BitDepth, color: ColorType, bytes: &[u8], w: u32, h: u32) {
        let file = File::create(path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut wr = enc.write_header().unwrap();
        wr.write_image_data(bytes).unwrap();
        wr.finish().unwrap();
    }

    #[test]
    fn reads_8_bit_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("px.png");
        write_raw_png(&p, BitDepth::Eight, ColorType::Rgb, &[255, 0, 128], 1, 1);
        let img = read_image(&p).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn reads_16_bit_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("px16.png");
        write_raw_png(&p, BitDepth::Sixteen, ColorType::Rgb, &[0xff, 0xff, 0, 0, 0x80, 0], 1, 1);
        let img = read_image(&p).unwrap();
        assert_eq!(img.data()[0], 1.0);
        assert_eq!(img.data()[1], 0.0);
        assert_eq!(img.data()[2], 32768.0 / 65535.0);
    }

    #[test]
    fn quantization_rounds_half_to_even() {
        assert_eq!(quantize(0.5, 255.0), 128.0);
        assert_eq!(quantize(1.0, 255.0), 255.0);
        assert_eq!(quantize(0.0, 255.0), 0.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("half.png");
        write_image(&Image::new(1, 1, vec![0.5, 1.0, 0.0]).unwrap(), &p, 8).unwrap();
        let back = read_image(&p).unwrap();
        assert_eq!(back.data(), &[128.0 / 255.0, 1.0, 0.0]);
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        let img = Image::from_fn(32, 32, |x, y| [x as f32 / 32.0, y as f32 / 32.0, 0.3]);
        write_image(&img, &p, 8).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_image(&p), Err(Error::Io { .. })), "{:?}", read_image(&p));
        let missing = dir.path().join("missing.png");
        match read_image(&missing) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grayscale_and_rgba_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        write_raw_png(&p, BitDepth::Eight, ColorType::Grayscale, &[7], 1, 1);
        assert!(matches!(read_image(&p), Err(Error::Format { .. })));
        write_raw_png(&p, BitDepth::Eight, ColorType::Rgba, &[7, 7, 7, 7], 1, 1);
        assert!(matches!(read_image(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let img = Image::filled(1, 1, 0.2);
        let r = write_image(&img, "/nonexistent-dir/x.png", 8);
        assert!(matches!(r, Err(Error::Io { .. })));
        assert!(matches!(write_image(&img, "/tmp/x.png", 12), Err(Error::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn png_round_trip_within_half_step(data in proptest::collection::vec(0.0f32..=1.0, 4 * 3 * 3), sixteen in any::<bool>()) {
            let img = Image::new(4, 3, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.png");
            let (bits, max) = if sixteen { (16, 65535.0) } else { (8, 255.0) };
            write_image(&img, &p, bits).unwrap();
            let back = read_image(&p).unwrap();
            let tol = 1.0 / (2.0 * max) + 1e-7;
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= tol);
            }
        }
    }
}
