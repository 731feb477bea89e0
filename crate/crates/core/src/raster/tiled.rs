//! Tile-binned front-to-back compositing.

use num_traits::Float;
use rayon::prelude::*;

use super::camera::Camera;
use super::project::{kernel_weight, project_full, Projected};
use crate::error::{Error, Result};
use crate::photometry::HdrImage;
use crate::scene::GaussianCloud;
use crate::math::Vec3;

pub const TILE_SIZE: usize = 16;
/// Compositing stops once transmittance falls below this.
pub const EARLY_OUT_T: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub background: Vec3,
    /// Highest SH band used for color; `None` uses every band of the cloud.
    pub sh_degree: Option<usize>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            sh_degree: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: HdrImage,
    /// Final transmittance per pixel, row-major.
    pub transmittance: Vec<f64>,
    /// Number of splats composited into each pixel.
    pub contributors: Vec<u32>,
}

/// Projected splats and their tile bins for one camera.
pub(crate) struct Frame<'a> {
    pub cloud: &'a GaussianCloud,
    pub cam: &'a Camera,
    pub background: Vec3,
    /// Per Gaussian, `None` when culled.
    pub projected: Vec<Option<Projected>>,
    pub tiles_x: usize,
    /// Per tile, Gaussian indices sorted front to back.
    pub bins: Vec<Vec<u32>>,
    /// Screen-space parameters of each bin entry, laid out contiguously.
    pub packed: Vec<Vec<Packed<f64>>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Packed<F> {
    pub mean: [F; 2],
    pub conic: [F; 3],
    pub rgb: [F; 3],
    pub alpha: F,
}

impl Packed<f64> {
    fn cast<F: Float>(&self) -> Packed<F> {
        let cv = |v: f64| F::from(v).unwrap();
        Packed {
            mean: self.mean.map(cv),
            conic: self.conic.map(cv),
            rgb: self.rgb.map(cv),
            alpha: cv(self.alpha),
        }
    }
}

/// Inclusive pixel range touched by a splat along one axis, if any.
fn pixel_span(center: f64, extent: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (center - extent - 0.5).ceil().max(0.0);
    let hi = (center + extent - 0.5).floor().min(n as f64 - 1.0);
    (lo <= hi).then(|| (lo as usize, hi as usize))
}

impl<'a> Frame<'a> {
    pub fn new(cloud: &'a GaussianCloud, cam: &'a Camera, opts: &RenderOptions) -> Result<Self> {
        cam.validate()?;
        for (index, g) in cloud.gaussians.iter().enumerate() {
            if let Some(what) = g.non_finite_field() {
                return Err(Error::NonFiniteGaussian { index, what });
            }
        }
        let degree = opts.sh_degree.unwrap_or(cloud.sh_degree);
        let projected: Vec<Option<Projected>> = cloud
            .gaussians
            .par_iter()
            .map(|g| project_full(g, cam, cloud.color_options, degree))
            .collect();

        let tiles_x = cam.width.div_ceil(TILE_SIZE);
        let tiles_y = cam.height.div_ceil(TILE_SIZE);
        let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
        let mut order: Vec<(f64, u32)> = projected
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|p| (p.splat.depth, i as u32)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &order {
            let p = projected[i as usize].as_ref().unwrap();
            let [ex, ey] = p.splat.extent();
            let (Some((x0, x1)), Some((y0, y1))) = (
                pixel_span(p.splat.mean2d[0], ex, cam.width),
                pixel_span(p.splat.mean2d[1], ey, cam.height),
            ) else {
                continue;
            };
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    bins[ty * tiles_x + tx].push(i);
                }
            }
        }
        let packed = bins
            .iter()
            .map(|bin| {
                bin.iter()
                    .map(|&i| {
                        let p = projected[i as usize].as_ref().unwrap();
                        Packed {
                            mean: p.splat.mean2d,
                            conic: p.conic,
                            rgb: p.splat.rgb,
                            alpha: p.splat.alpha,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            cloud,
            cam,
            background: opts.background,
            projected,
            tiles_x,
            bins,
            packed,
        })
    }

    /// Pixel bounds `(x0, x1, y0, y1)` (exclusive ends) of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        (x0, (x0 + TILE_SIZE).min(self.cam.width), y0, (y0 + TILE_SIZE).min(self.cam.height))
    }

    /// Composites every tile with arithmetic in `F`.
    pub fn forward<F: Float + Send + Sync>(&self) -> RenderOutput {
        let cv = |v: f64| F::from(v).unwrap();
        let early = cv(EARLY_OUT_T);
        let half = cv(0.5);
        let two = cv(2.0);

        let tiles: Vec<(Vec<[F; 3]>, Vec<F>, Vec<u32>)> = (0..self.bins.len())
            .into_par_iter()
            .map(|tile| {
                let (x0, x1, y0, y1) = self.tile_rect(tile);
                let n = (x1 - x0) * (y1 - y0);
                let splats: Vec<Packed<F>> = self.packed[tile].iter().map(Packed::cast).collect();
                let mut color = Vec::with_capacity(n);
                let mut trans = Vec::with_capacity(n);
                let mut count = Vec::with_capacity(n);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let px = cv(x as f64) + half;
                        let py = cv(y as f64) + half;
                        let mut t = F::one();
                        let mut c = [F::zero(); 3];
                        let mut k = 0u32;
                        for s in &splats {
                            let dx = px - s.mean[0];
                            let dy = py - s.mean[1];
                            let m = s.conic[0] * dx * dx + two * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                            let w = kernel_weight(m);
                            if w <= F::zero() {
                                continue;
                            }
                            let a = s.alpha * w;
                            for ch in 0..3 {
                                c[ch] = c[ch] + s.rgb[ch] * a * t;
                            }
                            t = t * (F::one() - a);
                            k += 1;
                            if t < early {
                                break;
                            }
                        }
                        color.push(c);
                        trans.push(t);
                        count.push(k);
                    }
                }
                (color, trans, count)
            })
            .collect();

        let bg = self.background;
        let (w, h) = (self.cam.width, self.cam.height);
        let mut data = vec![0.0; w * h * 3];
        let mut transmittance = vec![0.0; w * h];
        let mut contributors = vec![0; w * h];
        for (tile, (color, trans, count)) in tiles.into_iter().enumerate() {
            let (x0, x1, y0, y1) = self.tile_rect(tile);
            let mut j = 0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * w + x;
                    let t = trans[j].to_f64().unwrap();
                    for ch in 0..3 {
                        data[3 * p + ch] = color[j][ch].to_f64().unwrap() + t * bg[ch];
                    }
                    transmittance[p] = t;
                    contributors[p] = count[j];
                    j += 1;
                }
            }
        }
        RenderOutput {
            image: HdrImage::from_raw(w, h, data),
            transmittance,
            contributors,
        }
    }
}

/// Tiled renderer in single precision.
pub fn render(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> Result<RenderOutput> {
    Ok(Frame::new(cloud, cam, opts)?.forward::<f32>())
}

/// Tiled renderer in double precision; this is the forward pass used for training.
pub fn render_f64(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> Result<RenderOutput> {
    Ok(Frame::new(cloud, cam, opts)?.forward::<f64>())
}
