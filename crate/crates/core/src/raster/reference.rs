//! Brute-force double-precision renderer used as a correctness oracle.
//!
//! Every pixel sorts every splat by depth and composites all of them: no
//! tiles, no early termination.

use super::camera::Camera;
use super::project::{kernel_weight, project_full};
use super::tiled::{RenderOptions, RenderOutput};
use crate::photometry::HdrImage;
use crate::scene::GaussianCloud;

pub fn render_reference(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> RenderOutput {
    let degree = opts.sh_degree.unwrap_or(cloud.sh_degree);
    let splats: Vec<(usize, super::Splat2D, [f64; 3])> = cloud
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_full(g, cam, cloud.color_options, degree).map(|p| (i, p.splat, p.conic)))
        .collect();

    let (w, h) = (cam.width, cam.height);
    let mut data = vec![0.0; w * h * 3];
    let mut transmittance = vec![1.0; w * h];
    let mut contributors = vec![0u32; w * h];
    let mut hits: Vec<(f64, usize, usize, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            hits.clear();
            for (j, (i, s, [a, b, c])) in splats.iter().enumerate() {
                let dx = px - s.mean2d[0];
                let dy = py - s.mean2d[1];
                let wgt = kernel_weight(a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
                if wgt > 0.0 {
                    hits.push((s.depth, *i, j, wgt));
                }
            }
            hits.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            let mut t = 1.0;
            let mut color = [0.0; 3];
            for &(_, _, j, wgt) in &hits {
                let s = &splats[j].1;
                let a = s.alpha * wgt;
                for ch in 0..3 {
                    color[ch] += s.rgb[ch] * a * t;
                }
                t *= 1.0 - a;
            }
            let p = y * w + x;
            for ch in 0..3 {
                data[3 * p + ch] = color[ch] + t * opts.background[ch];
            }
            transmittance[p] = t;
            contributors[p] = hits.len() as u32;
        }
    }
    RenderOutput {
        image: HdrImage::from_raw(w, h, data),
        transmittance,
        contributors,
    }
}
