//! Portable float map (3-channel `PF`) reading and writing.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::photometry::HdrImage;

/// Splits off `count` whitespace-separated header tokens, returning them and
/// the byte offset just past the single whitespace byte ending the last one.
pub(crate) fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        // comments run to end of line
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i || i >= bytes.len() {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Some((tokens, i + 1))
}

pub fn decode_pfm(bytes: &[u8], origin: &Path) -> Result<HdrImage> {
    let fail = |msg: String| Error::format(origin, msg);
    let (tokens, body) = header_tokens(bytes, 4).ok_or_else(|| fail("truncated PFM header".into()))?;
    match tokens[0].as_str() {
        "PF" => {}
        "Pf" => return Err(fail("single-channel PFM is not supported".into())),
        other => return Err(fail(format!("bad magic `{other}`"))),
    }
    let dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (w, h) = match (dim(&tokens[1]), dim(&tokens[2])) {
        (Some(w), Some(h)) => (w, h),
        _ => return Err(fail(format!("bad dimensions `{} {}`", tokens[1], tokens[2]))),
    };
    let scale: f64 = tokens[3]
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| fail(format!("bad scale `{}`", tokens[3])))?;
    let little = scale < 0.0;
    let n = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| fail("dimensions overflow".into()))?;
    let need = n.checked_mul(4).ok_or_else(|| fail("dimensions overflow".into()))?;
    let data = &bytes[body.min(bytes.len())..];
    if data.len() != need {
        return Err(fail(format!("expected {need} bytes of pixels, found {}", data.len())));
    }
    let mut out = vec![0.0; n];
    for (row, chunk) in data.chunks_exact(w * 12).enumerate() {
        // rows are stored bottom to top
        let y = h - 1 - row;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let raw: [u8; 4] = b.try_into().unwrap();
            let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            let index = y * w * 3 + k;
            if !v.is_finite() {
                return Err(fail(format!("non-finite value at element {index}")));
            }
            if v < 0.0 {
                return Err(fail(format!("negative radiance {v} at element {index}")));
            }
            out[index] = v as f64;
        }
    }
    Ok(HdrImage::from_raw(w, h, out))
}

/// Little-endian PFM bytes; values are stored as `f32`.
pub fn encode_pfm(img: &HdrImage) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for y in (0..h).rev() {
        for v in &img.data()[y * w * 3..(y + 1) * w * 3] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_hdr_image(path: &Path) -> Result<HdrImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn write_hdr_image(img: &HdrImage, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pfm(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..5 * 3 * 3).map(|_| rng.random_range(0.0f32..1e4) as f64).collect();
        let img = HdrImage::new(5, 3, data).unwrap();
        let back = decode_pfm(&encode_pfm(&img), Path::new("mem")).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn big_endian_fixture() {
        // 2x2, big-endian; bottom row stored first
        let mut bytes = b"PF\n2 2\n1.0\n".to_vec();
        let bottom = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0];
        let top = [0.5f32, 0.25, 0.125, 8.0, 16.0, 32.0];
        for v in bottom.iter().chain(&top) {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = decode_pfm(&bytes, Path::new("fixture")).unwrap();
        assert_eq!(img.pixel(0, 0), [0.5, 0.25, 0.125]);
        assert_eq!(img.pixel(1, 0), [8.0, 16.0, 32.0]);
        assert_eq!(img.pixel(0, 1), [1.0, 2.0, 3.0]);
        assert_eq!(img.pixel(1, 1), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let good = encode_pfm(&HdrImage::filled(2, 1, [1.0, 2.0, 3.0]));
        let neg = {
            let mut b = good.clone();
            let n = b.len();
            b[n - 4..].copy_from_slice(&(-0.5f32).to_le_bytes());
            b
        };
        assert!(decode_pfm(&neg, Path::new("m")).is_err());
        let nan = {
            let mut b = good.clone();
            let n = b.len();
            b[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
            b
        };
        assert!(decode_pfm(&nan, Path::new("m")).is_err());
        let mut magic = good.clone();
        magic[1] = b'X';
        assert!(decode_pfm(&magic, Path::new("m")).is_err());
        assert!(decode_pfm(&good[..good.len() - 1], Path::new("m")).is_err());
        assert!(decode_pfm(b"PF\n99999999999 99999999999\n-1\n", Path::new("m")).is_err());
    }
}
