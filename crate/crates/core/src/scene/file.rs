//! Binary cloud file.
//!
//! Layout: `b"NHGC"`, `u32` version, `u32` header length, a UTF-8 JSON
//! header, then one packed little-endian `f32` record per Gaussian:
//!
//! ```text
//! position[3] log_scale[3] rotation[4] (w x y z) opacity_logit
//! entangled:  sh[(L+1)^2][3]
//! decomposed: luminance_raw  sh[(L+1)^2][3]
//! ```
//!
//! SH triples are stored basis-major (all three channels of basis 0 first).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aabb, Gaussian, GaussianCloud};
use crate::error::{Error, Result};
use crate::math::quat_norm;
use crate::sh::{num_coeffs, ColorModel, ColorOptions, ColorParams, LuminanceParam, LuminanceSpace, ShCoeffs};

pub const CLOUD_MAGIC: &[u8; 4] = b"NHGC";
pub const CLOUD_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    count: usize,
    color_model: ColorModel,
    sh_degree: usize,
    bounds: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    luminance_space: Option<LuminanceSpace>,
    baseline_offset: bool,
    floats_per_record: usize,
}

fn floats_per_record(model: ColorModel, degree: usize) -> usize {
    11 + usize::from(model == ColorModel::Decomposed) + 3 * num_coeffs(degree)
}

pub fn write_cloud(cloud: &GaussianCloud, out: &mut impl Write) -> std::io::Result<()> {
    let header = Header {
        count: cloud.len(),
        color_model: cloud.color_model,
        sh_degree: cloud.sh_degree,
        bounds: cloud.bounds,
        luminance_space: match cloud.color_model {
            ColorModel::Decomposed => Some(cloud.luminance_space().unwrap_or(LuminanceSpace::Log)),
            ColorModel::Entangled => None,
        },
        baseline_offset: cloud.color_options.baseline_offset,
        floats_per_record: floats_per_record(cloud.color_model, cloud.sh_degree),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    out.write_all(CLOUD_MAGIC)?;
    out.write_all(&CLOUD_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;

    let mut buf = Vec::with_capacity(cloud.len() * header.floats_per_record * 4);
    let mut push = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    for g in &cloud.gaussians {
        g.position.iter().for_each(|&v| push(v));
        g.log_scale.iter().for_each(|&v| push(v));
        g.rotation.iter().for_each(|&v| push(v));
        push(g.opacity_logit);
        if let ColorParams::Decomposed { lum, .. } = &g.color {
            push(lum.raw);
        }
        g.color.sh().coeffs().iter().flatten().for_each(|&v| push(v));
    }
    out.write_all(&buf)
}

/// Parses a cloud; `origin` names the source in error messages.
pub fn read_cloud(input: &mut impl Read, origin: &Path) -> Result<GaussianCloud> {
    let fail = |msg: String| Error::format(origin, msg);
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io(origin, e))?;
    if bytes.len() < 12 {
        return Err(fail("truncated cloud file".into()));
    }
    if &bytes[..4] != CLOUD_MAGIC {
        return Err(fail(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CLOUD_VERSION {
        return Err(fail(format!("unsupported cloud version {version}, expected {CLOUD_VERSION}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body_start = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fail("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[12..body_start]).map_err(|e| fail(format!("bad header: {e}")))?;
    if header.sh_degree > crate::sh::MAX_SH_DEGREE {
        return Err(fail(format!("SH degree {} out of range", header.sh_degree)));
    }
    let per = floats_per_record(header.color_model, header.sh_degree);
    if header.floats_per_record != per {
        return Err(fail(format!(
            "header declares {} floats per record, layout needs {per}",
            header.floats_per_record
        )));
    }
    let body = &bytes[body_start..];
    let expected = header
        .count
        .checked_mul(per * 4)
        .ok_or_else(|| fail("record count overflows".into()))?;
    if body.len() != expected {
        return Err(fail(format!(
            "expected {expected} bytes of records for {} gaussians, found {}",
            header.count,
            body.len()
        )));
    }
    let space = header.luminance_space.unwrap_or(LuminanceSpace::Log);
    let n_sh = num_coeffs(header.sh_degree);
    let mut gaussians = Vec::with_capacity(header.count);
    for (index, rec) in body.chunks_exact(per * 4).enumerate() {
        let vals: Vec<f64> = rec
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(fail(format!("non-finite parameter in gaussian {index}")));
        }
        let rotation = [vals[6], vals[7], vals[8], vals[9]];
        if (quat_norm(rotation) - 1.0).abs() > 1e-4 {
            return Err(fail(format!(
                "gaussian {index} has a non-unit rotation (norm {})",
                quat_norm(rotation)
            )));
        }
        let mut cursor = 11;
        let lum = (header.color_model == ColorModel::Decomposed).then(|| {
            cursor += 1;
            LuminanceParam {
                raw: vals[11],
                space,
            }
        });
        let coeffs: Vec<[f64; 3]> = (0..n_sh)
            .map(|i| [vals[cursor + 3 * i], vals[cursor + 3 * i + 1], vals[cursor + 3 * i + 2]])
            .collect();
        let sh = ShCoeffs::new(header.sh_degree, coeffs)?;
        let color = match lum {
            Some(lum) => ColorParams::Decomposed { lum, chroma: sh },
            None => ColorParams::Entangled(sh),
        };
        gaussians.push(Gaussian {
            position: [vals[0], vals[1], vals[2]],
            log_scale: [vals[3], vals[4], vals[5]],
            rotation,
            opacity_logit: vals[10],
            color,
        });
    }
    let cloud = GaussianCloud {
        gaussians,
        color_model: header.color_model,
        sh_degree: header.sh_degree,
        bounds: header.bounds,
        color_options: ColorOptions {
            baseline_offset: header.baseline_offset,
        },
    };
    cloud.bounds.validate().map_err(|e| fail(e.to_string()))?;
    Ok(cloud)
}

pub fn save_cloud(cloud: &GaussianCloud, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_cloud(cloud, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a cloud, optionally insisting on a color model.
pub fn load_cloud(path: &Path, expected: Option<ColorModel>) -> Result<GaussianCloud> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let cloud = read_cloud(&mut std::io::BufReader::new(file), path)?;
    if let Some(model) = expected {
        if model != cloud.color_model {
            return Err(Error::ModelMismatch {
                expected: model.to_string(),
                found: cloud.color_model.to_string(),
            });
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{init_cloud, InitConfig};
    use proptest::prelude::*;

    fn sample(model: ColorModel, degree: usize, n: usize, seed: u64) -> GaussianCloud {
        init_cloud(&InitConfig {
            count: n,
            bounds: Aabb::new([-1.0, -2.0, -0.5], [1.0, 2.0, 0.5]).unwrap(),
            seed,
            color_model: model,
            sh_degree: degree,
            init_luminance: 3.0,
            luminance_space: LuminanceSpace::Linear,
            color_options: ColorOptions::default(),
            points: None,
        })
        .unwrap()
    }

    fn round_trip(cloud: &GaussianCloud) -> GaussianCloud {
        let mut buf = Vec::new();
        write_cloud(cloud, &mut buf).unwrap();
        read_cloud(&mut buf.as_slice(), Path::new("mem")).unwrap()
    }

    proptest! {
        #[test]
        fn save_load_is_identity(seed in 0u64..1000, degree in 0usize..=5, n in 1usize..20, decomposed: bool) {
            let model = if decomposed { ColorModel::Decomposed } else { ColorModel::Entangled };
            let mut c = sample(model, degree, n, seed);
            // perturb to f32-representable, non-trivial values
            for (i, g) in c.gaussians.iter_mut().enumerate() {
                for (j, k) in g.color.sh_mut().coeffs_mut().iter_mut().enumerate() {
                    *k = [(i as f32 * 0.37 - j as f32) as f64, 0.125, -(j as f32 / 7.0) as f64];
                }
            }
            prop_assert_eq!(round_trip(&c), c);
        }
    }

    #[test]
    fn file_round_trip_and_model_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.nhgc");
        let c = sample(ColorModel::Entangled, 3, 5, 2);
        save_cloud(&c, &path).unwrap();
        assert_eq!(load_cloud(&path, None).unwrap(), c);
        assert!(matches!(
            load_cloud(&path, Some(ColorModel::Decomposed)),
            Err(Error::ModelMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let c = sample(ColorModel::Decomposed, 1, 3, 4);
        let mut buf = Vec::new();
        write_cloud(&c, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_cloud(&mut bad_magic.as_slice(), Path::new("m")), Err(Error::Format { .. })));

        let mut bad_version = buf.clone();
        bad_version[4] = 9;
        assert!(read_cloud(&mut bad_version.as_slice(), Path::new("m")).is_err());

        let truncated = &buf[..buf.len() - 3];
        assert!(read_cloud(&mut &truncated[..], Path::new("m")).is_err());

        // zero quaternion in the first record
        let header_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let mut bad_quat = buf.clone();
        let start = 12 + header_len + 6 * 4;
        bad_quat[start..start + 16].fill(0);
        assert!(read_cloud(&mut bad_quat.as_slice(), Path::new("m")).is_err());
    }
}
