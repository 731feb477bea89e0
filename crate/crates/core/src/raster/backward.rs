//! Analytic gradients of the tiled renderer.

use rayon::prelude::*;

use super::camera::Camera;
use super::project::{kernel_weight_and_derivative, project_backward, GaussianGrad, SplatGrad};
use super::tiled::{Frame, RenderOptions, EARLY_OUT_T};
use crate::error::{Error, Result};
use crate::photometry::HdrImage;
use crate::scene::GaussianCloud;
use crate::sh::num_coeffs;

/// Per-Gaussian gradients of a scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudGrad {
    pub gaussians: Vec<GaussianGrad>,
    /// Gradient with respect to the projected mean, in pixels.
    pub mean2d: Vec<[f64; 2]>,
}

impl CloudGrad {
    pub fn zeros(cloud: &GaussianCloud) -> Self {
        let n_sh = num_coeffs(cloud.sh_degree);
        Self {
            gaussians: vec![GaussianGrad::zeros(n_sh); cloud.len()],
            mean2d: vec![[0.0; 2]; cloud.len()],
        }
    }
}

struct Hit {
    slot: usize,
    /// Transmittance in front of this splat.
    t: f64,
    alpha: f64,
    weight: f64,
    dweight: f64,
    dx: f64,
    dy: f64,
}

impl Frame<'_> {
    /// Backpropagates `upstream = dL/d(image)` to every Gaussian parameter.
    pub fn backward(&self, upstream: &HdrImage) -> Result<CloudGrad> {
        let (w, h) = (self.cam.width, self.cam.height);
        if upstream.width() != w || upstream.height() != h {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient is {}x{}, camera is {w}x{h}",
                upstream.width(),
                upstream.height()
            )));
        }
        let up = upstream.data();
        let bg = self.background;

        let per_tile: Vec<Vec<SplatGrad>> = (0..self.bins.len())
            .into_par_iter()
            .map(|tile| {
                let splats = &self.packed[tile];
                let mut acc = vec![SplatGrad::default(); splats.len()];
                if splats.is_empty() {
                    return acc;
                }
                let (x0, x1, y0, y1) = self.tile_rect(tile);
                let mut hits: Vec<Hit> = Vec::with_capacity(splats.len());
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = y * w + x;
                        let g = [up[3 * p], up[3 * p + 1], up[3 * p + 2]];
                        if g == [0.0; 3] {
                            continue;
                        }
                        let px = x as f64 + 0.5;
                        let py = y as f64 + 0.5;
                        // replay the forward pass
                        hits.clear();
                        let mut t = 1.0;
                        for (slot, pr) in splats.iter().enumerate() {
                            let [a, b, c] = pr.conic;
                            let dx = px - pr.mean[0];
                            let dy = py - pr.mean[1];
                            let m = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
                            let (weight, dweight) = kernel_weight_and_derivative(m);
                            if weight <= 0.0 {
                                continue;
                            }
                            let alpha = pr.alpha * weight;
                            hits.push(Hit {
                                slot,
                                t,
                                alpha,
                                weight,
                                dweight,
                                dx,
                                dy,
                            });
                            t *= 1.0 - alpha;
                            if t < EARLY_OUT_T {
                                break;
                            }
                        }
                        // back to front; `behind` is the radiance seen through the current splat
                        let mut behind = bg;
                        for hit in hits.iter().rev() {
                            let (a, t) = (hit.alpha, hit.t);
                            let pr = &splats[hit.slot];
                            let rgb = pr.rgb;
                            let s = &mut acc[hit.slot];
                            let mut dalpha = 0.0;
                            for ch in 0..3 {
                                s.rgb[ch] += g[ch] * a * t;
                                dalpha += g[ch] * t * (rgb[ch] - behind[ch]);
                            }
                            for ch in 0..3 {
                                behind[ch] = a * rgb[ch] + (1.0 - a) * behind[ch];
                            }
                            s.alpha += dalpha * hit.weight;
                            let dm = dalpha * pr.alpha * hit.dweight;
                            let [ca, cb, cc] = pr.conic;
                            let (dx, dy) = (hit.dx, hit.dy);
                            s.mean2d[0] -= dm * 2.0 * (ca * dx + cb * dy);
                            s.mean2d[1] -= dm * 2.0 * (cb * dx + cc * dy);
                            s.conic[0] += dm * dx * dx;
                            s.conic[1] += dm * 2.0 * dx * dy;
                            s.conic[2] += dm * dy * dy;
                        }
                    }
                }
                acc
            })
            .collect();

        // merge in fixed tile order
        let n = self.cloud.len();
        let mut splat_grads = vec![SplatGrad::default(); n];
        for (tile, acc) in per_tile.iter().enumerate() {
            for (slot, sg) in acc.iter().enumerate() {
                splat_grads[self.bins[tile][slot] as usize].add(sg);
            }
        }

        let n_sh = num_coeffs(self.cloud.sh_degree);
        let gaussians: Vec<GaussianGrad> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut out = GaussianGrad::zeros(n_sh);
                if let Some(pr) = &self.projected[i] {
                    project_backward(&self.cloud.gaussians[i], self.cam, pr, &splat_grads[i], &mut out);
                }
                out
            })
            .collect();
        Ok(CloudGrad {
            gaussians,
            mean2d: splat_grads.iter().map(|s| s.mean2d).collect(),
        })
    }
}

/// Gradients of `sum(upstream * render(cloud))` with respect to every parameter.
pub fn render_backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    opts: &RenderOptions,
    upstream: &HdrImage,
) -> Result<CloudGrad> {
    Frame::new(cloud, cam, opts)?.backward(upstream)
}
