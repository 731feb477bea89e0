//! Gaussian-window SSIM with an analytic gradient.
//!
//! Local statistics come from a separable Gaussian filter with mirror
//! (edge-exclusive) padding. The gradient applies the adjoint of that
//! filter, so it is exact at the borders too.

use serde::{Deserialize, Serialize};

use super::image::{HdrImage, Plane};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

/// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

fn filter_rows(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                acc += wt * row[reflect(x as isize + k as isize - r, w)];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn filter_cols(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &wt) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + k as isize - r, h);
            let src_row = &src[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wt * s;
            }
        }
    }
    out
}

fn filter_rows_adjoint(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = src[y * w + x];
            for (k, &wt) in kernel.iter().enumerate() {
                out[y * w + reflect(x as isize + k as isize - r, w)] += wt * g;
            }
        }
    }
    out
}

fn filter_cols_adjoint(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let src_row = &src[y * w..(y + 1) * w];
        for (k, &wt) in kernel.iter().enumerate() {
            let dy = reflect(y as isize + k as isize - r, h);
            let dst = &mut out[dy * w..(dy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wt * s;
            }
        }
    }
    out
}

fn blur(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    filter_cols(&filter_rows(src, w, h, kernel), w, h, kernel)
}

fn blur_adjoint(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    filter_rows_adjoint(&filter_cols_adjoint(src, w, h, kernel), w, h, kernel)
}

fn check_planes(a: &Plane, b: &Plane, cfg: &SsimConfig) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width < cfg.window || a.height < cfg.window {
        return Err(Error::ImageTooSmall {
            width: a.width,
            height: a.height,
            window: cfg.window,
        });
    }
    Ok(())
}

/// Mean SSIM of two single-channel planes and, on request, its gradient w.r.t. `a`.
pub fn ssim_plane(a: &Plane, b: &Plane, cfg: &SsimConfig, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    check_planes(a, b, cfg)?;
    let (w, h) = (a.width, a.height);
    let n = (w * h) as f64;
    let kernel = cfg.kernel();
    let (c1, c2) = (cfg.c1(), cfg.c2());

    let aa: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.data.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let mu_a = blur(&a.data, w, h, &kernel);
    let mu_b = blur(&b.data, w, h, &kernel);
    let e_aa = blur(&aa, w, h, &kernel);
    let e_bb = blur(&bb, w, h, &kernel);
    let e_ab = blur(&ab, w, h, &kernel);

    let mut total = 0.0;
    let (mut d_mu, mut d_eaa, mut d_eab) = if want_grad {
        (vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..w * h {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let a1 = 2.0 * ma * mb + c1;
        let a2 = 2.0 * cov + c2;
        let b1 = ma * ma + mb * mb + c1;
        let b2 = var_a + var_b + c2;
        let den = b1 * b2;
        total += a1 * a2 / den;
        if want_grad {
            let s = a1 * a2;
            d_eab[i] = 2.0 * a1 / den;
            d_eaa[i] = -s / (den * b2);
            d_mu[i] = (2.0 * mb * a2 - 2.0 * mb * a1) / den - s * 2.0 * ma / (b1 * den) + s * 2.0 * ma / (den * b2);
        }
    }
    let value = total / n;
    if !want_grad {
        return Ok((value, None));
    }
    let g_mu = blur_adjoint(&d_mu, w, h, &kernel);
    let g_eaa = blur_adjoint(&d_eaa, w, h, &kernel);
    let g_eab = blur_adjoint(&d_eab, w, h, &kernel);
    let grad = (0..w * h)
        .map(|i| (g_mu[i] + 2.0 * a.data[i] * g_eaa[i] + b.data[i] * g_eab[i]) / n)
        .collect();
    Ok((value, Some(grad)))
}

/// Mean SSIM over the three channels of two RGB images.
pub fn ssim(a: &HdrImage, b: &HdrImage, cfg: &SsimConfig) -> Result<f64> {
    Ok(ssim_rgb(a.data(), b.data(), a.width(), a.height(), cfg, false)?.0)
}

pub fn ssim_loss(a: &HdrImage, b: &HdrImage, cfg: &SsimConfig) -> Result<f64> {
    Ok(1.0 - ssim(a, b, cfg)?)
}

/// SSIM over interleaved RGB buffers, with optional gradient w.r.t. `a` (interleaved).
pub(crate) fn ssim_rgb(
    a: &[f64],
    b: &[f64],
    w: usize,
    h: usize,
    cfg: &SsimConfig,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let split = |buf: &[f64], c: usize| Plane {
        width: w,
        height: h,
        data: buf.chunks_exact(3).map(|p| p[c]).collect(),
    };
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; w * h * 3]);
    for c in 0..3 {
        let (v, g) = ssim_plane(&split(a, c), &split(b, c), cfg, want_grad)?;
        total += v;
        if let (Some(out), Some(g)) = (grad.as_mut(), g) {
            for (i, gv) in g.into_iter().enumerate() {
                out[i * 3 + c] = gv / 3.0;
            }
        }
    }
    Ok((total / 3.0, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng, w: usize, h: usize) -> Plane {
        Plane::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Direct per-window evaluation with an explicit 2-D weight table.
    fn brute_force_ssim(a: &Plane, b: &Plane, cfg: &SsimConfig) -> f64 {
        let r = (cfg.window / 2) as isize;
        let sig2 = cfg.sigma * cfg.sigma;
        let mut weights = vec![0.0; cfg.window * cfg.window];
        let mut wsum = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sig2)).exp();
                weights[((dy + r) as usize) * cfg.window + (dx + r) as usize] = v;
                wsum += v;
            }
        }
        let (c1, c2) = (cfg.c1(), cfg.c2());
        let mut total = 0.0;
        for y in 0..a.height {
            for x in 0..a.width {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let wt = weights[((dy + r) as usize) * cfg.window + (dx + r) as usize] / wsum;
                        let sx = reflect(x as isize + dx, a.width);
                        let sy = reflect(y as isize + dy, a.height);
                        let (va, vb) = (a.at(sx, sy), b.at(sx, sy));
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        total / (a.width * a.height) as f64
    }

    #[test]
    fn identical_planes_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_plane(&mut rng, 16, 13);
        let (v, g) = ssim_plane(&a, &a, &SsimConfig::default(), true).unwrap();
        assert_eq!(v, 1.0);
        assert!(g.unwrap().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn constant_planes_closed_form() {
        let cfg = SsimConfig::default();
        let a = Plane::new(12, 12, vec![0.4; 144]).unwrap();
        let b = Plane::new(12, 12, vec![0.6; 144]).unwrap();
        let want = (2.0 * 0.4 * 0.6 + cfg.c1()) / (0.4f64.powi(2) + 0.6f64.powi(2) + cfg.c1());
        let (v, _) = ssim_plane(&a, &b, &cfg, false).unwrap();
        assert!((v - want).abs() < 1e-9, "{v} vs {want}");
    }

    #[test]
    fn matches_brute_force_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SsimConfig::default();
        for _ in 0..3 {
            let a = random_plane(&mut rng, 19, 14);
            let b = random_plane(&mut rng, 19, 14);
            let (v, _) = ssim_plane(&a, &b, &cfg, false).unwrap();
            let want = brute_force_ssim(&a, &b, &cfg);
            assert!((v - want).abs() < 1e-6, "{v} vs {want}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SsimConfig::default();
        let a = random_plane(&mut rng, 13, 12);
        let b = random_plane(&mut rng, 13, 12);
        let (_, g) = ssim_plane(&a, &b, &cfg, true).unwrap();
        let g = g.unwrap();
        let h = 1e-6;
        for &i in &[0usize, 5, 12, 13, 77, 150, 155] {
            let mut ap = a.clone();
            ap.data[i] += h;
            let mut am = a.clone();
            am.data[i] -= h;
            let fd = (ssim_plane(&ap, &b, &cfg, false).unwrap().0 - ssim_plane(&am, &b, &cfg, false).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "i={i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SsimConfig::default();
        let a = random_plane(&mut rng, 20, 20);
        let b = random_plane(&mut rng, 20, 20);
        let ab = ssim_plane(&a, &b, &cfg, false).unwrap().0;
        let ba = ssim_plane(&b, &a, &cfg, false).unwrap().0;
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_or_mismatched() {
        let cfg = SsimConfig::default();
        let a = Plane::zeros(10, 20);
        assert!(matches!(ssim_plane(&a, &a, &cfg, false), Err(Error::ImageTooSmall { .. })));
        let b = Plane::zeros(20, 10);
        assert!(matches!(ssim_plane(&a, &b, &cfg, false), Err(Error::ShapeMismatch(_))));
    }
}
