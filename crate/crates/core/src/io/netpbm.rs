//! Binary graymap (P5), pixmap (P6) and float map (Pf) codecs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{DisparityImage, Grid};

/// Scale of 16-bit disparity graymaps: stored value = disparity * 256.
pub const DISPARITY_SCALE: f64 = 256.0;

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Minimal header tokenizer over the raw file bytes.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: bool,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if self.comments && b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()
    }

    /// Consumes the single whitespace byte that separates header and raster.
    fn end(&mut self) -> Option<usize> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            Some(self.pos + 1)
        } else {
            None
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn magic(bytes: &[u8]) -> &[u8] {
    &bytes[..bytes.len().min(2)]
}

struct Pnm<'a> {
    width: usize,
    height: usize,
    maxval: u32,
    raster: &'a [u8],
}

fn parse_pnm<'a>(path: &Path, bytes: &'a [u8], expect: &[u8; 2], channels: usize) -> Result<Pnm<'a>> {
    let mut h = Header {
        bytes,
        pos: 2,
        comments: true,
    };
    if magic(bytes) != expect {
        return Err(unsupported(path, format!("expected {} magic", String::from_utf8_lossy(expect))));
    }
    let mut num = |what: &str| -> Result<usize> {
        h.token()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| corrupt(path, format!("missing or malformed {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if width == 0 || height == 0 {
        return Err(corrupt(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(corrupt(path, format!("maxval {maxval} out of range")));
    }
    let start = h.end().ok_or_else(|| corrupt(path, "header not terminated"))?;
    let sample = if maxval > 255 { 2 } else { 1 };
    let need = width * height * channels * sample;
    let raster = &bytes[start..];
    if raster.len() < need {
        return Err(corrupt(path, format!("raster truncated: {} of {need} bytes", raster.len())));
    }
    Ok(Pnm {
        width,
        height,
        maxval: maxval as u32,
        raster: &raster[..need],
    })
}

/// Reads an 8-bit binary graymap.
pub fn read_gray8(path: &Path) -> Result<Grid<u8>> {
    let bytes = read_bytes(path)?;
    let p = parse_pnm(path, &bytes, b"P5", 1)?;
    if p.maxval > 255 {
        return Err(unsupported(path, "expected an 8-bit graymap"));
    }
    Grid::new(p.width, p.height, p.raster.to_vec())
}

/// Reads a 16-bit binary graymap (big-endian samples).
pub fn read_gray16(path: &Path) -> Result<Grid<u16>> {
    let bytes = read_bytes(path)?;
    let p = parse_pnm(path, &bytes, b"P5", 1)?;
    if p.maxval <= 255 {
        return Err(unsupported(path, "expected a 16-bit graymap (maxval > 255)"));
    }
    let data = p.raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Grid::new(p.width, p.height, data)
}

pub fn write_gray8(path: &Path, img: &Grid<u8>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_gray16(path: &Path, img: &Grid<u16>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for v in img.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes an RGB pixmap.
pub fn write_rgb(path: &Path, img: &Grid<[u8; 3]>) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for px in img.data() {
        out.extend_from_slice(px);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_rgb(path: &Path) -> Result<Grid<[u8; 3]>> {
    let bytes = read_bytes(path)?;
    let p = parse_pnm(path, &bytes, b"P6", 3)?;
    if p.maxval > 255 {
        return Err(unsupported(path, "expected an 8-bit pixmap"));
    }
    let data = p.raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Grid::new(p.width, p.height, data)
}

/// Reads a single-channel float map. Rows are stored bottom-to-top; the
/// returned grid is top-down. A negative scale marks little-endian data.
pub fn read_pfm(path: &Path) -> Result<Grid<f32>> {
    let bytes = read_bytes(path)?;
    match magic(&bytes) {
        b"Pf" => {}
        b"PF" => return Err(unsupported(path, "colour float maps are not supported")),
        _ => return Err(unsupported(path, "expected Pf magic")),
    }
    let mut h = Header {
        bytes: &bytes,
        pos: 2,
        comments: false,
    };
    let width: usize = h.token().and_then(|t| t.parse().ok()).ok_or_else(|| corrupt(path, "missing width"))?;
    let height: usize = h.token().and_then(|t| t.parse().ok()).ok_or_else(|| corrupt(path, "missing height"))?;
    let scale: f64 = h.token().and_then(|t| t.parse().ok()).ok_or_else(|| corrupt(path, "missing scale"))?;
    if width == 0 || height == 0 || scale == 0.0 || !scale.is_finite() {
        return Err(corrupt(path, "bad dimensions or scale"));
    }
    let start = h.end().ok_or_else(|| corrupt(path, "header not terminated"))?;
    let need = width * height * 4;
    let raster = &bytes[start..];
    if raster.len() < need {
        return Err(corrupt(path, format!("raster truncated: {} of {need} bytes", raster.len())));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f32; width * height];
    for (i, b) in raster[..need].chunks_exact(4).enumerate() {
        let b = [b[0], b[1], b[2], b[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row) = (i % width, i / width);
        data[(height - 1 - row) * width + x] = v;
    }
    Grid::new(width, height, data)
}

/// Writes a little-endian single-channel float map.
pub fn write_pfm(path: &Path, img: &Grid<f32>) -> Result<()> {
    let (w, h) = img.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for v in img.row(y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Reads a disparity map from a 16-bit graymap (`value / 256`, 0 invalid) or a
/// float map (negative or non-finite invalid). Invalid pixels become NaN.
pub fn read_disparity(path: &Path) -> Result<DisparityImage> {
    let bytes = read_bytes(path)?;
    match magic(&bytes) {
        b"P5" => {
            let g = read_gray16(path)?;
            let data = g
                .data()
                .iter()
                .map(|&v| if v == 0 { f32::NAN } else { (v as f64 / DISPARITY_SCALE) as f32 })
                .collect();
            Grid::new(g.width(), g.height(), data)
        }
        b"Pf" | b"PF" => {
            let g = read_pfm(path)?;
            let data = g
                .data()
                .iter()
                .map(|&v| if v.is_finite() && v >= 0.0 { v } else { f32::NAN })
                .collect();
            Grid::new(g.width(), g.height(), data)
        }
        _ => Err(unsupported(path, "expected a 16-bit P5 graymap or a Pf float map")),
    }
}

/// Writes a disparity map as a float map; invalid pixels are stored as NaN.
pub fn write_disparity_pfm(path: &Path, img: &DisparityImage) -> Result<()> {
    write_pfm(path, img)
}

/// Writes a disparity map as a 16-bit graymap; values are rounded to 1/256 px
/// and invalid pixels stored as 0.
pub fn write_disparity_pgm(path: &Path, img: &DisparityImage) -> Result<()> {
    let data = img
        .data()
        .iter()
        .map(|&d| {
            if d.is_finite() && d >= 0.0 {
                (d as f64 * DISPARITY_SCALE).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    write_gray16(path, &Grid::new(img.width(), img.height(), data)?)
}

/// Reads a confidence map from a float map or a graymap (scaled by maxval).
pub fn read_confidence(path: &Path) -> Result<Grid<f32>> {
    let bytes = read_bytes(path)?;
    let g = match magic(&bytes) {
        b"Pf" | b"PF" => read_pfm(path)?,
        b"P5" => {
            let p = parse_pnm(path, &bytes, b"P5", 1)?;
            let max = p.maxval as f32;
            let data = if p.maxval > 255 {
                p.raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / max).collect()
            } else {
                p.raster.iter().map(|&b| b as f32 / max).collect()
            };
            Grid::new(p.width, p.height, data)?
        }
        _ => return Err(unsupported(path, "expected a Pf float map or P5 graymap")),
    };
    if let Some(bad) = g.data().iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidInput(format!("{}: confidence {bad} outside [0, 1]", path.display())));
    }
    Ok(g)
}
