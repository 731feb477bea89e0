//! Training objectives in the mu-law compressed domain.

use serde::{Deserialize, Serialize};

use super::bayer::{bayer_mask, bayer_ssim_loss_with_grad};
use super::image::{compensated_sum, BayerImage, BayerPattern, HdrImage, Plane};
use super::mulaw::{check_mu, mu_law_derivative, mu_law_value};
use super::ssim::{ssim_rgb, SsimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the L1 term; the SSIM term gets `1 - lambda`.
    pub lambda: f64,
    pub mu: f64,
    pub ssim: SsimConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            mu: 5000.0,
            ssim: SsimConfig::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        check_mu(self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l1: f64,
    pub ssim_loss: f64,
}

/// Mean absolute difference.
pub fn l1_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} elements", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs())) / a.len() as f64)
}

fn compress(values: &[f64], mu: f64) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v < 0.0 || !v.is_finite() {
                Err(Error::NegativeRadiance { index, value: v })
            } else {
                Ok(mu_law_value(v, mu))
            }
        })
        .collect()
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `lambda * L1 + (1 - lambda) * (1 - SSIM)` on mu-law compressed images,
/// plus the gradient with respect to the uncompressed prediction.
pub fn combined_loss(pred: &HdrImage, gt: &HdrImage, cfg: &LossConfig) -> Result<(LossBreakdown, HdrImage)> {
    pred.same_shape(gt)?;
    cfg.validate()?;
    let (w, h) = (pred.width(), pred.height());
    let p = compress(pred.data(), cfg.mu)?;
    let g = compress(gt.data(), cfg.mu)?;
    let l1 = l1_loss(&p, &g)?;
    let (ssim, ssim_grad) = ssim_rgb(&p, &g, w, h, &cfg.ssim, true)?;
    let ssim_grad = ssim_grad.expect("gradient requested");
    let n = p.len() as f64;
    let grad = pred
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let d_compressed = cfg.lambda * sign(p[i] - g[i]) / n - (1.0 - cfg.lambda) * ssim_grad[i];
            d_compressed * mu_law_derivative(x, cfg.mu)
        })
        .collect();
    let ssim_loss = 1.0 - ssim;
    Ok((
        LossBreakdown {
            total: cfg.lambda * l1 + (1.0 - cfg.lambda) * ssim_loss,
            l1,
            ssim_loss,
        },
        HdrImage::from_raw(w, h, grad),
    ))
}

/// Loss between a full RGB render and a sensor mosaic, computed on the
/// mosaic after masking the render with the same layout.
pub fn bayer_combined_loss(
    pred: &HdrImage,
    gt: &BayerImage,
    expected_pattern: BayerPattern,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, HdrImage)> {
    if gt.pattern != expected_pattern {
        return Err(Error::config(format!(
            "ground truth pattern {} does not match configured {}",
            gt.pattern, expected_pattern
        )));
    }
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} render vs {}x{} mosaic",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    cfg.validate()?;
    let (w, h) = (pred.width(), pred.height());
    let mosaic = bayer_mask(pred, gt.pattern)?;
    let p = Plane::new(w, h, compress(&mosaic.plane.data, cfg.mu)?)?;
    let g = Plane::new(w, h, compress(&gt.plane.data, cfg.mu)?)?;
    let l1 = l1_loss(&p.data, &g.data)?;
    let (ssim_loss, ssim_grad) = bayer_ssim_loss_with_grad(&p, &g, &cfg.ssim, true)?;
    let ssim_grad = ssim_grad.expect("gradient requested");
    let n = (w * h) as f64;
    let mut grad = HdrImage::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = cfg.lambda * sign(p.data[i] - g.data[i]) / n + (1.0 - cfg.lambda) * ssim_grad[i];
            let mut px = [0.0; 3];
            px[gt.pattern.channel_at(x, y)] = d * mu_law_derivative(mosaic.plane.data[i], cfg.mu);
            grad.set_pixel(x, y, px);
        }
    }
    Ok((
        LossBreakdown {
            total: cfg.lambda * l1 + (1.0 - cfg.lambda) * ssim_loss,
            l1,
            ssim_loss,
        },
        grad,
    ))
}
