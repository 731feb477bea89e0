use serde::{Deserialize, Serialize};

use super::image::HdrImage;
use super::mulaw::mu_law_value;
use crate::error::{Error, Result};

/// Reported for a zero mean-squared error.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrDomain {
    /// Both inputs mu-law compressed, peak 1.
    MuLaw,
    /// Raw values, peak = max(gt).
    Linear,
}

/// PSNR over flat buffers.
pub fn psnr_values(pred: &[f64], gt: &[f64], domain: PsnrDomain, mu: f64) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} vs {} elements", pred.len(), gt.len())));
    }
    let (mse, peak) = match domain {
        PsnrDomain::MuLaw => {
            let sq = pred
                .iter()
                .zip(gt)
                .map(|(&p, &g)| (mu_law_value(p.max(0.0), mu) - mu_law_value(g.max(0.0), mu)).powi(2));
            (sq.sum::<f64>() / pred.len() as f64, 1.0)
        }
        PsnrDomain::Linear => {
            let sq = pred.iter().zip(gt).map(|(p, g)| (p - g).powi(2));
            (sq.sum::<f64>() / pred.len() as f64, gt.iter().copied().fold(0.0, f64::max))
        }
    };
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

pub fn psnr(pred: &HdrImage, gt: &HdrImage, domain: PsnrDomain, mu: f64) -> Result<f64> {
    pred.same_shape(gt)?;
    psnr_values(pred.data(), gt.data(), domain, mu)
}

/// 8-bit preview raster: mu-law (mu = 5000), gamma 1/2.2, round to 0..=255.
pub fn tonemap_preview(hdr: &HdrImage) -> Vec<u8> {
    hdr.data()
        .iter()
        .map(|&v| {
            let c = mu_law_value(v.max(0.0), 5000.0).powf(1.0 / 2.2);
            (255.0 * c).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}
