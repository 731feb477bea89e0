//! Procedural multi-view HDR scenes rendered with the reference renderer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Supervision, View, ViewImage};
use super::raw::RawMeta;
use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::photometry::{bayer_mask, BayerImage, HdrImage, Plane};
use crate::raster::{render_reference, Camera, RenderOptions};
use crate::scene::{Aabb, Gaussian, GaussianCloud};
use crate::sh::{num_coeffs, ColorModel, ColorOptions, ColorParams, LuminanceParam, LuminanceSpace, ShCoeffs};

/// The bundled desk-scale scene: 20 training and 5 test views at 64x64.
pub const TOY_SCENE_JSON: &str = include_str!("../../scenes/toy_hdr.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    /// Mean elevation above the ring plane, degrees.
    pub elevation_deg: f64,
    /// Alternating elevation offset between neighbouring cameras, degrees.
    #[serde(default)]
    pub elevation_jitter_deg: f64,
    /// Horizontal field of view, degrees.
    pub fov_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    /// Number of emissive ground-truth Gaussians.
    pub gaussian_count: usize,
    /// Gaussians are placed uniformly in a ball of this radius.
    pub extent: f64,
    /// Per-axis standard deviation range, world units (log-uniform).
    pub scale_range: [f64; 2],
    pub opacity_range: [f64; 2],
    /// Luminance range, linear units (log-uniform).
    pub radiance_range: [f64; 2],
    /// SH degree of the ground-truth chromaticity.
    pub sh_degree: usize,
    /// Standard deviation of the view-dependent chromaticity coefficients.
    pub view_dependence: f64,
    pub cameras: CameraRing,
    pub width: usize,
    pub height: usize,
    /// Every `test_every`-th camera goes to the test split.
    pub test_every: usize,
}

impl SceneSpec {
    pub fn toy() -> Self {
        serde_json::from_str(TOY_SCENE_JSON).expect("bundled scene parses")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.gaussian_count == 0 {
            return bad("gaussian_count must be positive");
        }
        if !(self.extent > 0.0) {
            return bad("extent must be positive");
        }
        let [s0, s1] = self.scale_range;
        if !(s0 > 0.0 && s1 >= s0) {
            return bad("scale_range must be positive and ordered");
        }
        let [o0, o1] = self.opacity_range;
        if !(o0 > 0.0 && o1 >= o0 && o1 < 1.0) {
            return bad("opacity_range must lie in (0, 1) and be ordered");
        }
        let [r0, r1] = self.radiance_range;
        if !(r0 > 0.0 && r1 >= r0 && r1.is_finite()) {
            return bad("radiance_range must be positive and ordered");
        }
        if self.sh_degree > crate::sh::MAX_SH_DEGREE {
            return bad("sh_degree exceeds 5");
        }
        let ring = &self.cameras;
        if ring.count < 2 || !(ring.radius > self.extent) || !(ring.fov_deg > 0.0 && ring.fov_deg < 180.0) {
            return bad("degenerate camera ring: need at least 2 cameras outside the scene and a valid field of view");
        }
        if (ring.elevation_deg.abs() + ring.elevation_jitter_deg.abs()) >= 89.0 {
            return bad("degenerate camera ring: elevation must stay below 89 degrees");
        }
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be positive");
        }
        if self.test_every < 2 {
            return bad("test_every must be at least 2");
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        let r = self.extent + 3.0 * self.scale_range[1];
        Aabb {
            min: [-r; 3],
            max: [r; 3],
        }
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let ring = &self.cameras;
        let f = 0.5 * self.width as f64 / (0.5 * ring.fov_deg.to_radians()).tan();
        (0..ring.count)
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / ring.count as f64;
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let elev = (ring.elevation_deg + sign * ring.elevation_jitter_deg).to_radians();
                let eye = [
                    ring.radius * elev.cos() * theta.cos(),
                    ring.radius * elev.sin(),
                    ring.radius * elev.cos() * theta.sin(),
                ];
                Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], f, f, self.width, self.height)
            })
            .collect()
    }

    /// The emissive ground-truth cloud, in un-normalized radiance.
    pub fn ground_truth(&self) -> Result<GaussianCloud> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let log_uniform = |rng: &mut ChaCha8Rng, [a, b]: [f64; 2]| -> f64 {
            if a == b {
                a
            } else {
                rng.random_range(a.ln()..b.ln()).exp()
            }
        };
        let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        let gaussians = (0..self.gaussian_count)
            .map(|_| {
                // uniform in the ball
                let position: Vec3 = loop {
                    let p: Vec3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                    if math::dot(p, p) <= 1.0 {
                        break math::scale(p, self.extent);
                    }
                };
                let log_scale = std::array::from_fn(|_| log_uniform(&mut rng, self.scale_range).ln());
                let q: [f64; 4] = std::array::from_fn(|_| normal(&mut rng));
                let rotation = math::normalize_quat(q);
                let opacity = rng.random_range(self.opacity_range[0]..=self.opacity_range[1]);
                let lum = log_uniform(&mut rng, self.radiance_range);
                // a saturated base hue plus mild view-dependent tint
                let mut coeffs = vec![[0.0; 3]; num_coeffs(self.sh_degree)];
                for (i, c) in coeffs.iter_mut().enumerate() {
                    for ch in c.iter_mut() {
                        *ch = if i == 0 {
                            rng.random_range(-2.5..2.5)
                        } else {
                            self.view_dependence * normal(&mut rng)
                        };
                    }
                }
                Ok(Gaussian {
                    position,
                    log_scale,
                    rotation,
                    opacity_logit: math::logit(opacity),
                    color: ColorParams::Decomposed {
                        lum: LuminanceParam::from_effective(lum, LuminanceSpace::Log),
                        chroma: ShCoeffs::new(self.sh_degree, coeffs)?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianCloud {
            gaussians,
            color_model: ColorModel::Decomposed,
            sh_degree: self.sh_degree,
            bounds: self.bounds(),
            color_options: ColorOptions::default(),
        })
    }
}

/// Renders every ring camera with the reference renderer, normalizes the
/// whole scene by one white level and splits train/test by interleaving.
///
/// Returns the dataset and the ground-truth cloud rescaled to the
/// normalized radiance.
pub fn synthesize_dataset(spec: &SceneSpec, supervision: Supervision, raw: RawMeta) -> Result<(Dataset, GaussianCloud)> {
    spec.validate()?;
    raw.validate()?;
    if supervision == Supervision::BayerRaw && (spec.width % 2 != 0 || spec.height % 2 != 0) {
        return Err(Error::config("mosaic datasets need even image dimensions"));
    }
    let mut cloud = spec.ground_truth()?;
    let cameras = spec.cameras()?;
    let opts = RenderOptions::default();
    let renders: Vec<HdrImage> = cameras
        .par_iter()
        .map(|cam| render_reference(&cloud, cam, &opts).image)
        .collect();
    let white_level = renders.iter().map(HdrImage::max_value).fold(0.0, f64::max);
    if !(white_level > 0.0) {
        return Err(Error::config("scene renders to black; no camera sees the ground truth"));
    }
    for g in &mut cloud.gaussians {
        if let ColorParams::Decomposed { lum, .. } = &mut g.color {
            *lum = LuminanceParam::from_effective(lum.effective() / white_level, lum.space);
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, (cam, img)) in cameras.into_iter().zip(renders).enumerate() {
        // stored precision
        let data: Vec<f64> = img.data().iter().map(|v| (v / white_level) as f32 as f64).collect();
        let rgb = HdrImage::new(spec.width, spec.height, data)?;
        let image = match supervision {
            Supervision::HdrRgb => ViewImage::Rgb(rgb),
            Supervision::BayerRaw => {
                let mosaic = bayer_mask(&rgb, raw.pattern)?;
                let quantized = mosaic.plane.data.iter().map(|&v| raw.linearize(raw.quantize(v))).collect();
                ViewImage::Bayer(BayerImage::new(Plane::new(spec.width, spec.height, quantized)?, raw.pattern)?)
            }
        };
        let view = View {
            name: format!("r_{i:03}"),
            camera: cam,
            image,
        };
        if (i + 1) % spec.test_every == 0 {
            test.push(view);
        } else {
            train.push(view);
        }
    }
    let dataset = Dataset {
        train,
        test,
        white_level,
        supervision,
        bounds: spec.bounds(),
        raw: (supervision == Supervision::BayerRaw).then_some(raw),
        synthetic: true,
    };
    dataset.validate()?;
    Ok((dataset, cloud))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneSpec {
        SceneSpec {
            gaussian_count: 60,
            width: 24,
            height: 24,
            cameras: CameraRing {
                count: 10,
                ..SceneSpec::toy().cameras
            },
            ..SceneSpec::toy()
        }
    }

    #[test]
    fn toy_scene_has_twenty_five_views() {
        let spec = SceneSpec::toy();
        spec.validate().unwrap();
        assert_eq!((spec.width, spec.height), (64, 64));
        let n_test = (1..=spec.cameras.count).filter(|i| i % spec.test_every == 0).count();
        assert_eq!(spec.cameras.count - n_test, 20);
        assert_eq!(n_test, 5);
    }

    #[test]
    fn degenerate_ring_is_a_config_error() {
        let mut spec = small();
        spec.cameras.radius = 0.1;
        assert!(matches!(synthesize_dataset(&spec, Supervision::HdrRgb, RawMeta::default()), Err(Error::Config(_))));
        let mut spec = small();
        spec.cameras.count = 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn normalized_to_unit_white_and_deterministic() {
        let spec = small();
        let (a, gt_a) = synthesize_dataset(&spec, Supervision::HdrRgb, RawMeta::default()).unwrap();
        let (b, gt_b) = synthesize_dataset(&spec, Supervision::HdrRgb, RawMeta::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(gt_a, gt_b);
        let max = a
            .train
            .iter()
            .chain(&a.test)
            .map(|v| match &v.image {
                ViewImage::Rgb(i) => i.max_value(),
                ViewImage::Bayer(_) => unreachable!(),
            })
            .fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-7);
        assert_eq!(a.train.len(), 8);
        assert_eq!(a.test.len(), 2);
    }
}
