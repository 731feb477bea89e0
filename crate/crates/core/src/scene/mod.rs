//! The Gaussian cloud: parameter storage, initialization, adaptive density
//! control and the binary cloud file.

mod adc;
mod file;

pub use adc::{densify_and_prune, DensifyConfig, GradStats};
pub use file::{load_cloud, read_cloud, save_cloud, write_cloud, CLOUD_MAGIC, CLOUD_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};
use crate::sh::{
    num_coeffs, ColorModel, ColorOptions, ColorParams, LuminanceParam, LuminanceSpace, ShCoeffs, SH_C0,
};

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a]) {
                return Err(Error::config(format!("degenerate bounds {:?}..{:?}", self.min, self.max)));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Vec3 {
        math::sub(self.max, self.min)
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        math::norm(self.extent())
    }

    pub fn center(&self) -> Vec3 {
        math::scale(math::add(self.min, self.max), 0.5)
    }
}

/// One anisotropic 3D Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub position: Vec3,
    /// Log of the per-axis standard deviation.
    pub log_scale: Vec3,
    /// Quaternion `[w, x, y, z]`; unit length after every optimizer step.
    pub rotation: [f64; 4],
    /// Opacity is `sigmoid(opacity_logit)`.
    pub opacity_logit: f64,
    pub color: ColorParams,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        math::sigmoid(self.opacity_logit)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        math::quat_to_mat(math::normalize_quat(self.rotation))
    }

    /// `R diag(exp(log_scale))^2 R^T`.
    pub fn covariance(&self) -> Mat3 {
        let r = self.rotation_matrix();
        let s2 = self.log_scale.map(|s| (2.0 * s).exp());
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
            }
        }
        out
    }

    /// Index of the first non-finite parameter group, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        if self.position.iter().any(|v| !v.is_finite()) {
            return Some("position");
        }
        if self.log_scale.iter().any(|v| !v.is_finite()) {
            return Some("log_scale");
        }
        if self.rotation.iter().any(|v| !v.is_finite()) || math::quat_norm(self.rotation) == 0.0 {
            return Some("rotation");
        }
        if !self.opacity_logit.is_finite() {
            return Some("opacity");
        }
        if self.color.sh().coeffs().iter().flatten().any(|v| !v.is_finite()) {
            return Some("sh");
        }
        if let ColorParams::Decomposed { lum, .. } = &self.color {
            if !lum.raw.is_finite() {
                return Some("luminance");
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub color_model: ColorModel,
    pub sh_degree: usize,
    pub bounds: Aabb,
    pub color_options: ColorOptions,
}

impl GaussianCloud {
    pub fn empty(color_model: ColorModel, sh_degree: usize, bounds: Aabb) -> Self {
        Self {
            gaussians: Vec::new(),
            color_model,
            sh_degree,
            bounds,
            color_options: ColorOptions::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Luminance space of a decomposed cloud (`None` when entangled or empty).
    pub fn luminance_space(&self) -> Option<LuminanceSpace> {
        self.gaussians.iter().find_map(|g| match &g.color {
            ColorParams::Decomposed { lum, .. } => Some(lum.space),
            _ => None,
        })
    }

    /// Checks the shared-model, shared-degree and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let space = self.luminance_space();
        for (index, g) in self.gaussians.iter().enumerate() {
            if g.color.model() != self.color_model {
                return Err(Error::ModelMismatch {
                    expected: self.color_model.to_string(),
                    found: g.color.model().to_string(),
                });
            }
            if g.color.sh().degree() != self.sh_degree {
                return Err(Error::config(format!(
                    "gaussian {index} has SH degree {}, cloud has {}",
                    g.color.sh().degree(),
                    self.sh_degree
                )));
            }
            if let ColorParams::Decomposed { lum, .. } = &g.color {
                if Some(lum.space) != space {
                    return Err(Error::config(format!("gaussian {index} has a different luminance space")));
                }
            }
            if let Some(what) = g.non_finite_field() {
                return Err(Error::NonFiniteGaussian { index, what });
            }
        }
        Ok(())
    }
}

/// Settings for [`init_cloud`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub count: usize,
    pub bounds: Aabb,
    pub seed: u64,
    pub color_model: ColorModel,
    pub sh_degree: usize,
    /// Effective luminance of a fresh decomposed Gaussian. Entangled
    /// Gaussians start at the same rendered color, `0.5 * init_luminance`.
    pub init_luminance: f64,
    pub luminance_space: LuminanceSpace,
    pub color_options: ColorOptions,
    /// Optional sparse points; positions are drawn from them cyclically instead of uniformly.
    #[serde(default)]
    pub points: Option<Vec<Vec3>>,
}

pub const INIT_OPACITY: f64 = 0.1;

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Seeded initialization. Every value is rounded to `f32` so the cloud
/// survives a save/load round trip bit-for-bit.
pub fn init_cloud(cfg: &InitConfig) -> Result<GaussianCloud> {
    if cfg.count == 0 {
        return Err(Error::config("cannot initialize an empty cloud"));
    }
    cfg.bounds.validate()?;
    if cfg.sh_degree > crate::sh::MAX_SH_DEGREE {
        return Err(Error::config(format!("SH degree {} exceeds 5", cfg.sh_degree)));
    }
    if !(cfg.init_luminance > 0.0 && cfg.init_luminance.is_finite()) {
        return Err(Error::config("init luminance must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positions: Vec<Vec3> = match &cfg.points {
        Some(points) if !points.is_empty() => (0..cfg.count).map(|i| points[i % points.len()]).collect(),
        _ => (0..cfg.count)
            .map(|_| std::array::from_fn(|a| rng.random_range(cfg.bounds.min[a]..cfg.bounds.max[a])))
            .collect(),
    };
    let sigmas = nearest_neighbor_scales(&positions, &cfg.bounds);

    let target = 0.5 * cfg.init_luminance;
    let offset = if cfg.color_options.baseline_offset { 0.5 } else { 0.0 };
    let gaussians = positions
        .iter()
        .zip(&sigmas)
        .map(|(p, &sigma)| {
            let mut coeffs = vec![[0.0; 3]; num_coeffs(cfg.sh_degree)];
            let color = match cfg.color_model {
                ColorModel::Entangled => {
                    coeffs[0] = [round_f32((target - offset) / SH_C0); 3];
                    ColorParams::Entangled(ShCoeffs::new(cfg.sh_degree, coeffs)?)
                }
                ColorModel::Decomposed => {
                    let mut lum = LuminanceParam::from_effective(cfg.init_luminance, cfg.luminance_space);
                    lum.raw = round_f32(lum.raw);
                    ColorParams::Decomposed {
                        lum,
                        chroma: ShCoeffs::new(cfg.sh_degree, coeffs)?,
                    }
                }
            };
            Ok(Gaussian {
                position: p.map(round_f32),
                log_scale: [round_f32(sigma.ln()); 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: round_f32(math::logit(INIT_OPACITY)),
                color,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianCloud {
        gaussians,
        color_model: cfg.color_model,
        sh_degree: cfg.sh_degree,
        bounds: cfg.bounds,
        color_options: cfg.color_options,
    })
}

/// Mean distance to the three nearest neighbours of each point.
fn nearest_neighbor_scales(points: &[Vec3], bounds: &Aabb) -> Vec<f64> {
    let fallback = bounds.diagonal() / 10.0;
    if points.len() < 2 {
        return vec![fallback; points.len()];
    }
    let k = 3.min(points.len() - 1);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = [f64::INFINITY; 3];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = math::norm(math::sub(*p, *q));
                if d < best[k - 1] {
                    best[k - 1] = d;
                    best[..k].sort_by(f64::total_cmp);
                }
            }
            let mean = best[..k].iter().sum::<f64>() / k as f64;
            if mean > 0.0 {
                mean
            } else {
                fallback
            }
        })
        .collect()
}
