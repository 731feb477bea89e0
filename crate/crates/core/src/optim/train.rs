//! The optimization loop for RGB and mosaic supervision.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState, GroupRates};
use crate::data_io::{Dataset, Supervision, ViewImage};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::photometry::{bayer_combined_loss, bayer_mask, combined_loss, psnr, psnr_values, LossConfig, PsnrDomain};
use crate::raster::{Frame, RenderOptions};
use crate::scene::{densify_and_prune, init_cloud, DensifyConfig, GaussianCloud, GradStats, InitConfig};
use crate::sh::{ColorModel, ColorOptions, LuminanceSpace};

/// Per-group learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position_init: f64,
    pub position_final: f64,
    /// Multiplies both position rates; `None` uses half the scene diagonal.
    pub position_scale: Option<f64>,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    /// Band-0 SH coefficients; higher bands use `sh / sh_rest_divisor`.
    pub sh: f64,
    pub sh_rest_divisor: f64,
    pub luminance: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            position_scale: None,
            log_scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
            sh_rest_divisor: 20.0,
            luminance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub seed: u64,
    pub color_model: ColorModel,
    pub sh_degree: usize,
    /// Grow the active SH degree by one every `sh_warmup_interval` iterations.
    pub sh_warmup: bool,
    pub sh_warmup_interval: usize,
    /// `None` picks log space for synthetic or RGB data and linear space for captured mosaics.
    pub luminance_space: Option<LuminanceSpace>,
    pub lr: LearningRates,
    pub loss: LossConfig,
    pub densify: DensifyConfig,
    pub init_count: usize,
    /// Effective luminance of fresh Gaussians; `None` uses twice the mean training pixel.
    pub init_luminance: Option<f64>,
    pub color_options: ColorOptions,
    pub background: Vec3,
    pub log_every: usize,
    /// Zero disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 7000,
            seed: 0,
            color_model: ColorModel::Decomposed,
            sh_degree: 3,
            sh_warmup: false,
            sh_warmup_interval: 1000,
            luminance_space: None,
            lr: LearningRates::default(),
            loss: LossConfig::default(),
            densify: DensifyConfig::default(),
            init_count: 1000,
            init_luminance: None,
            color_options: ColorOptions::default(),
            background: [0.0; 3],
            log_every: 10,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.sh_degree > crate::sh::MAX_SH_DEGREE {
            return Err(Error::config(format!("SH degree {} exceeds 5", self.sh_degree)));
        }
        if self.init_count == 0 {
            return Err(Error::config("init_count must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be positive"));
        }
        if self.sh_warmup && self.sh_warmup_interval == 0 {
            return Err(Error::config("sh_warmup_interval must be positive"));
        }
        let lr = &self.lr;
        let rates = [
            ("position_init", lr.position_init),
            ("position_final", lr.position_final),
            ("log_scale", lr.log_scale),
            ("rotation", lr.rotation),
            ("opacity", lr.opacity),
            ("sh", lr.sh),
            ("sh_rest_divisor", lr.sh_rest_divisor),
            ("luminance", lr.luminance),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("learning rate {name} must be finite and non-negative, got {v}")));
            }
        }
        if lr.position_init > 0.0 && !(lr.position_final > 0.0) {
            return Err(Error::config("position_final must be positive when position_init is"));
        }
        if lr.sh_rest_divisor == 0.0 {
            return Err(Error::config("sh_rest_divisor must be positive"));
        }
        if let Some(s) = lr.position_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("position_scale must be positive"));
            }
        }
        if self.background.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("background must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn resolved_luminance_space(&self, supervision: Supervision, synthetic: bool) -> LuminanceSpace {
        self.luminance_space.unwrap_or(match (supervision, synthetic) {
            (Supervision::BayerRaw, false) => LuminanceSpace::Linear,
            _ => LuminanceSpace::Log,
        })
    }

    /// Group rates at iteration `iter`; the position rate decays exponentially.
    pub fn rates_at(&self, iter: usize, position_scale: f64) -> GroupRates {
        let lr = &self.lr;
        let position = if lr.position_init == 0.0 {
            0.0
        } else {
            let t = if self.iterations <= 1 {
                0.0
            } else {
                (iter as f64 / (self.iterations - 1) as f64).min(1.0)
            };
            (lr.position_init.ln() * (1.0 - t) + lr.position_final.ln() * t).exp() * position_scale
        };
        GroupRates {
            position,
            log_scale: lr.log_scale,
            rotation: lr.rotation,
            opacity: lr.opacity,
            luminance: lr.luminance,
            sh_dc: lr.sh,
            sh_rest: lr.sh / lr.sh_rest_divisor,
        }
    }

    fn active_degree(&self, iter: usize) -> usize {
        if self.sh_warmup {
            (iter / self.sh_warmup_interval).min(self.sh_degree)
        } else {
            self.sh_degree
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Iterations completed.
    pub iter: usize,
    pub loss: f64,
    pub l1: f64,
    pub ssim_loss: f64,
    /// Of the view trained on at this iteration; mosaic values for mosaic supervision.
    pub mu_psnr: f64,
    pub n_gaussians: usize,
    pub wall_ms: u64,
}

/// Receives log records and checkpoints while training runs.
pub trait TrainObserver {
    fn record(&mut self, _record: &MetricRecord) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _iter: usize, _cloud: &GaussianCloud) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub cloud: GaussianCloud,
    pub records: Vec<MetricRecord>,
    /// Total loss of every iteration.
    pub losses: Vec<f64>,
}

/// The cloud training starts from.
pub fn initial_cloud(dataset: &Dataset, cfg: &TrainConfig) -> Result<GaussianCloud> {
    let init_luminance = match cfg.init_luminance {
        Some(v) => v,
        None => {
            let (sum, n) = dataset.train.iter().fold((0.0, 0usize), |(s, n), v| {
                let data: &[f64] = match &v.image {
                    ViewImage::Rgb(i) => i.data(),
                    ViewImage::Bayer(b) => &b.plane.data,
                };
                (s + data.iter().sum::<f64>(), n + data.len())
            });
            let mean = if n == 0 { 0.0 } else { sum / n as f64 };
            if mean > 0.0 {
                2.0 * mean
            } else {
                1e-3
            }
        }
    };
    init_cloud(&InitConfig {
        count: cfg.init_count,
        bounds: dataset.bounds,
        seed: cfg.seed,
        color_model: cfg.color_model,
        sh_degree: cfg.sh_degree,
        init_luminance,
        luminance_space: cfg.resolved_luminance_space(dataset.supervision, dataset.synthetic),
        color_options: cfg.color_options,
        points: None,
    })
}

/// Trains a cloud on the training split.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    cfg.validate()?;
    dataset.validate()?;
    if dataset.train.len() < 2 {
        return Err(Error::config("training needs at least two posed views"));
    }
    let pattern = dataset.pattern();
    let mut cloud = initial_cloud(dataset, cfg)?;
    let position_scale = cfg.lr.position_scale.unwrap_or(0.5 * dataset.bounds.diagonal());
    let mut state = AdamState::new(&cloud);
    let mut stats = GradStats::new(cloud.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1e);
    let mut order: Vec<usize> = Vec::new();
    let mut records = Vec::new();
    let mut losses = Vec::with_capacity(cfg.iterations);
    let start = Instant::now();
    let densify_stop = (cfg.densify.stop_fraction * cfg.iterations as f64) as usize;

    for iter in 0..cfg.iterations {
        if order.is_empty() {
            order = (0..dataset.train.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let vi = order.pop().expect("refilled above");
        let view = &dataset.train[vi];
        let opts = RenderOptions {
            background: cfg.background,
            sh_degree: Some(cfg.active_degree(iter)),
        };

        let frame = Frame::new(&cloud, &view.camera, &opts)?;
        let render = frame.forward::<f64>().image;
        if render.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: iter, view: vi });
        }
        let (loss, upstream) = match &view.image {
            ViewImage::Rgb(gt) => combined_loss(&render, gt, &cfg.loss)?,
            ViewImage::Bayer(gt) => {
                let expected = pattern.ok_or_else(|| Error::config("mosaic view in an RGB dataset"))?;
                bayer_combined_loss(&render, gt, expected, &cfg.loss)?
            }
        };
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter, view: vi });
        }
        let grad = frame.backward(&upstream)?;
        let (w, h) = (view.camera.width as f64, view.camera.height as f64);
        if cfg.densify.enabled {
            for (i, p) in frame.projected.iter().enumerate() {
                if p.is_some() {
                    // screen-space gradient in normalized device units
                    let [gx, gy] = grad.mean2d[i];
                    stats.record(i, (gx * 0.5 * w).hypot(gy * 0.5 * h));
                }
            }
        }
        drop(frame);

        adam_step(&mut cloud, &grad, &mut state, &cfg.rates_at(iter, position_scale))?;
        losses.push(loss.total);

        let done = iter + 1;
        if cfg.densify.enabled && done >= cfg.densify.start_iter && done <= densify_stop && done % cfg.densify.interval.max(1) == 0 {
            let (next, origin) = densify_and_prune(&cloud, &stats, &cfg.densify, &mut rng);
            state.remap(&origin);
            cloud = next;
            stats = GradStats::new(cloud.len());
        }

        if done % cfg.log_every == 0 || done == cfg.iterations {
            let mu_psnr = match &view.image {
                ViewImage::Rgb(gt) => psnr(&render, gt, PsnrDomain::MuLaw, cfg.loss.mu)?,
                ViewImage::Bayer(gt) => {
                    let mosaic = bayer_mask(&render, gt.pattern)?;
                    psnr_values(&mosaic.plane.data, &gt.plane.data, PsnrDomain::MuLaw, cfg.loss.mu)?
                }
            };
            let record = MetricRecord {
                iter: done,
                loss: loss.total,
                l1: loss.l1,
                ssim_loss: loss.ssim_loss,
                mu_psnr,
                n_gaussians: cloud.len(),
                wall_ms: start.elapsed().as_millis() as u64,
            };
            observer.record(&record)?;
            records.push(record);
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.iterations {
            observer.checkpoint(done, &cloud)?;
        }
    }
    Ok(TrainOutcome { cloud, records, losses })
}

/// Median of a slice of finite values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Whether the median loss over the second half of the run is strictly
/// below the median over the first tenth.
pub fn loss_decreased(losses: &[f64]) -> bool {
    let n = losses.len();
    let head = &losses[..(n / 10).max(1).min(n)];
    let tail = &losses[n / 2..];
    match (median(head), median(tail)) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    }
}
