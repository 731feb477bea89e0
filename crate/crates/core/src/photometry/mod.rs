//! Losses and radiometric transforms: mu-law compression, L1, SSIM, the
//! combined objective, Bayer masking and Bayer SSIM, bilinear demosaicing,
//! PSNR and a preview tone map.

pub mod bayer;
pub mod demosaic;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod mulaw;
pub mod ssim;

pub use bayer::{bayer_mask, bayer_masks, bayer_ssim_loss, bayer_subimages};
pub use demosaic::demosaic_bilinear;
pub use image::{BayerImage, BayerPattern, HdrImage, Plane};
pub use loss::{bayer_combined_loss, combined_loss, l1_loss, LossBreakdown, LossConfig};
pub use metrics::{psnr, psnr_values, tonemap_preview, PsnrDomain, PSNR_CAP_DB};
pub use mulaw::{mu_law, mu_law_derivative, mu_law_value};
pub use ssim::{ssim, ssim_loss, ssim_plane, SsimConfig};
