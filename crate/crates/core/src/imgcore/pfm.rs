//! Portable float map I/O.
//!
//! Header: `PF` (3 channels) or `Pf` (1 channel), then `width height`, then a
//! scale whose sign selects the byte order (negative = little-endian). Rows
//! are stored bottom-to-top; this module flips them so callers always see
//! top-to-bottom data. Files are written little-endian with scale `-1.0`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

pub fn read_pfm(path: &Path) -> Result<PfmData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes).map_err(|reason| Error::format(path, reason))
}

pub fn write_pfm(path: &Path, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    let bytes = encode_pfm(width, height, channels, data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f32]) -> Result<Vec<u8>> {
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        n => return Err(Error::config(format!("PFM supports 1 or 3 channels, got {n}"))),
    };
    if data.len() != width * height * channels {
        return Err(Error::shape(format!(
            "PFM payload of {} samples does not match {width}x{height}x{channels}",
            data.len()
        )));
    }
    let header = format!("{magic}\n{width} {height}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn parse_pfm(bytes: &[u8]) -> std::result::Result<PfmData, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("missing header token".to_string());
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| "header is not ASCII".to_string())?
            .to_string();
        Ok(tok)
    };

    let channels = match token()?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format!("bad magic {other:?}")),
    };
    let width: usize = token()?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token()?.parse().map_err(|_| "bad height".to_string())?;
    let scale: f32 = token()?.parse().map_err(|_| "bad scale".to_string())?;
    if scale == 0.0 || !scale.is_finite() {
        return Err("scale must be finite and nonzero".to_string());
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing raster data".to_string());
    }
    pos += 1;

    let little_endian = scale < 0.0;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or("dimensions overflow")?;
    let payload = &bytes[pos..];
    if payload.len() < count * 4 {
        return Err(format!(
            "raster truncated: need {} bytes, found {}",
            count * 4,
            payload.len()
        ));
    }
    let row = width * channels;
    let mut data = vec![0.0f32; count];
    for (i, chunk) in payload[..count * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmData {
        width,
        height,
        channels,
        data,
    })
}
