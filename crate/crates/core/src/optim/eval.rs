//! Held-out view metrics at full resolution and full precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{View, ViewImage};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::photometry::{bayer_mask, demosaic_bilinear, mu_law, psnr, psnr_values, ssim, HdrImage, PsnrDomain, SsimConfig};
use crate::raster::{render_f64, RenderOptions};
use crate::scene::GaussianCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mu: f64,
    pub ssim: SsimConfig,
    pub background: Vec3,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mu: 5000.0,
            ssim: SsimConfig::default(),
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub name: String,
    pub mu_psnr: f64,
    pub linear_psnr: f64,
    /// SSIM of the mu-law compressed images.
    pub ssim: f64,
    /// Linear PSNR of the masked render against the sensor mosaic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean: ViewMetrics,
}

fn compressed(img: &HdrImage, mu: f64) -> Result<HdrImage> {
    HdrImage::new(img.width(), img.height(), mu_law(img.data(), mu)?)
}

/// Metrics of one rendered view against its ground truth.
pub fn view_metrics(name: &str, render: &HdrImage, gt: &ViewImage, opts: &EvalOptions) -> Result<ViewMetrics> {
    let (rgb_gt, raw_psnr) = match gt {
        ViewImage::Rgb(img) => (img.clone(), None),
        ViewImage::Bayer(b) => {
            let mosaic = bayer_mask(render, b.pattern)?;
            let raw = psnr_values(&mosaic.plane.data, &b.plane.data, PsnrDomain::Linear, opts.mu)?;
            (demosaic_bilinear(b), Some(raw))
        }
    };
    Ok(ViewMetrics {
        name: name.to_string(),
        mu_psnr: psnr(render, &rgb_gt, PsnrDomain::MuLaw, opts.mu)?,
        linear_psnr: psnr(render, &rgb_gt, PsnrDomain::Linear, opts.mu)?,
        ssim: ssim(&compressed(render, opts.mu)?, &compressed(&rgb_gt, opts.mu)?, &opts.ssim)?,
        raw_psnr,
    })
}

/// Renders every view of a split and reports per-view and mean metrics.
pub fn evaluate(cloud: &GaussianCloud, views: &[View], opts: &EvalOptions) -> Result<EvalReport> {
    if views.is_empty() {
        return Err(Error::config("cannot evaluate an empty split"));
    }
    let render_opts = RenderOptions {
        background: opts.background,
        sh_degree: None,
    };
    let per_view = views
        .par_iter()
        .map(|v| {
            let render = render_f64(cloud, &v.camera, &render_opts)?.image;
            view_metrics(&v.name, &render, &v.image, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_view.len() as f64;
    let mean_of = |f: &dyn Fn(&ViewMetrics) -> f64| per_view.iter().map(f).sum::<f64>() / n;
    let raw = per_view
        .iter()
        .map(|m| m.raw_psnr)
        .collect::<Option<Vec<f64>>>()
        .map(|r| r.iter().sum::<f64>() / n);
    let mean = ViewMetrics {
        name: "mean".to_string(),
        mu_psnr: mean_of(&|m| m.mu_psnr),
        linear_psnr: mean_of(&|m| m.linear_psnr),
        ssim: mean_of(&|m| m.ssim),
        raw_psnr: raw,
    };
    Ok(EvalReport { views: per_view, mean })
}
