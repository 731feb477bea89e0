//! Simulated sensor mosaics: 16-bit binary PGM plus a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pfm::header_tokens;
use crate::error::{Error, Result};
use crate::photometry::{BayerImage, BayerPattern, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMeta {
    pub pattern: BayerPattern,
    pub black_level: u16,
    pub white_level: u16,
}

impl Default for RawMeta {
    fn default() -> Self {
        Self {
            pattern: BayerPattern::Bggr,
            black_level: 512,
            white_level: 16383,
        }
    }
}

impl RawMeta {
    pub fn validate(&self) -> Result<()> {
        if self.white_level <= self.black_level {
            return Err(Error::config(format!(
                "white level {} must exceed black level {}",
                self.white_level, self.black_level
            )));
        }
        Ok(())
    }

    fn range(&self) -> f64 {
        f64::from(self.white_level - self.black_level)
    }

    /// Sensor code to normalized value, clamped at zero.
    pub fn linearize(&self, code: u16) -> f64 {
        ((f64::from(code) - f64::from(self.black_level)) / self.range()).max(0.0)
    }

    /// Normalized value to the nearest sensor code.
    pub fn quantize(&self, v: f64) -> u16 {
        (f64::from(self.black_level) + v * self.range()).round().clamp(0.0, 65535.0) as u16
    }
}

/// `<dir>/<stem>.json` next to a mosaic file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn decode_pgm16(bytes: &[u8], origin: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let fail = |msg: String| Error::format(origin, msg);
    let (tokens, body) = header_tokens(bytes, 4).ok_or_else(|| fail("truncated PGM header".into()))?;
    if tokens[0] != "P5" {
        return Err(fail(format!("bad magic `{}`", tokens[0])));
    }
    let parse = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (w, h, maxval) = match (parse(&tokens[1]), parse(&tokens[2]), parse(&tokens[3])) {
        (Some(w), Some(h), Some(m)) if m <= 65535 => (w, h, m),
        _ => return Err(fail(format!("bad header `{} {} {}`", tokens[1], tokens[2], tokens[3]))),
    };
    let n = w.checked_mul(h).ok_or_else(|| fail("dimensions overflow".into()))?;
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let data = &bytes[body.min(bytes.len())..];
    if Some(data.len()) != n.checked_mul(bytes_per) {
        return Err(fail(format!("expected {} bytes of samples, found {}", n * bytes_per, data.len())));
    }
    let values: Vec<u16> = if bytes_per == 2 {
        data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        data.iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(i) = values.iter().position(|&v| usize::from(v) > maxval) {
        return Err(fail(format!("sample {i} exceeds maxval {maxval}")));
    }
    Ok((w, h, values))
}

pub fn encode_pgm16(width: usize, height: usize, codes: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for c in codes {
        out.extend_from_slice(&c.to_be_bytes());
    }
    out
}

pub fn read_raw_meta(path: &Path) -> Result<RawMeta> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RawMeta = serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
    meta.validate().map_err(|e| Error::format(&side, e.to_string()))?;
    Ok(meta)
}

/// Reads a mosaic and linearizes it with its sidecar levels.
pub fn read_raw_image(path: &Path) -> Result<BayerImage> {
    let meta = read_raw_meta(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, codes) = decode_pgm16(&bytes, path)?;
    let plane = Plane::new(w, h, codes.iter().map(|&c| meta.linearize(c)).collect())?;
    BayerImage::new(plane, meta.pattern).map_err(|e| Error::format(path, e.to_string()))
}

/// Quantizes a normalized mosaic and writes it with its sidecar.
pub fn write_raw_image(bayer: &BayerImage, meta: &RawMeta, path: &Path) -> Result<()> {
    meta.validate()?;
    if meta.pattern != bayer.pattern {
        return Err(Error::config(format!(
            "sidecar pattern {} does not match mosaic pattern {}",
            meta.pattern, bayer.pattern
        )));
    }
    let codes: Vec<u16> = bayer.plane.data.iter().map(|&v| meta.quantize(v)).collect();
    std::fs::write(path, encode_pgm16(bayer.width(), bayer.height(), &codes)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("sidecar serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}
