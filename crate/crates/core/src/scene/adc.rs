use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Gaussian, GaussianCloud};
use crate::math;

/// Adaptive density control settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// Mean screen-space positional gradient norm above which a Gaussian is densified.
    pub grad_threshold: f64,
    pub min_opacity: f64,
    pub interval: usize,
    /// Densification starts after this many iterations.
    pub start_iter: usize,
    /// Fraction of the run after which densification stops.
    pub stop_fraction: f64,
    pub max_gaussians: usize,
    /// Gaussians larger than this fraction of the scene diagonal are split, smaller ones cloned.
    pub percent_dense: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            grad_threshold: 2e-4,
            min_opacity: 0.005,
            interval: 100,
            start_iter: 500,
            stop_fraction: 0.6,
            max_gaussians: 200_000,
            percent_dense: 0.01,
        }
    }
}

/// Accumulated screen-space positional gradient norms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStats {
    pub accum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self {
            accum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn record(&mut self, index: usize, norm: f64) {
        self.accum[index] += norm;
        self.count[index] += 1;
    }

    pub fn mean(&self, index: usize) -> f64 {
        match self.count.get(index) {
            Some(&c) if c > 0 => self.accum[index] / c as f64,
            _ => 0.0,
        }
    }
}

const SPLIT_SHRINK: f64 = 1.6;

/// Clones, splits and prunes Gaussians.
///
/// Returns the new cloud and, per output Gaussian, the index of the input
/// Gaussian whose optimizer state it inherits (`None` for new Gaussians).
pub fn densify_and_prune(
    cloud: &GaussianCloud,
    stats: &GradStats,
    cfg: &DensifyConfig,
    rng: &mut impl Rng,
) -> (GaussianCloud, Vec<Option<usize>>) {
    let mut kept: Vec<(Gaussian, Option<usize>)> = Vec::with_capacity(cloud.len());
    let mut added: Vec<Gaussian> = Vec::new();
    if !cfg.enabled {
        return (cloud.clone(), (0..cloud.len()).map(Some).collect());
    }
    let split_size = cfg.percent_dense * cloud.bounds.diagonal();
    for (i, g) in cloud.gaussians.iter().enumerate() {
        let hot = stats.mean(i) > cfg.grad_threshold;
        let max_sigma = g.log_scale.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
        if hot && max_sigma > split_size {
            let r = g.rotation_matrix();
            let sigma = g.log_scale.map(f64::exp);
            for _ in 0..2 {
                let z: [f64; 3] = std::array::from_fn(|a| {
                    let n: f64 = StandardNormal.sample(rng);
                    n * sigma[a]
                });
                let mut child = g.clone();
                child.position = math::add(g.position, math::mat_vec(&r, z));
                child.log_scale = g.log_scale.map(|s| s - SPLIT_SHRINK.ln());
                added.push(child);
            }
        } else {
            kept.push((g.clone(), Some(i)));
            if hot {
                added.push(g.clone());
            }
        }
    }

    let mut gaussians = Vec::with_capacity(kept.len() + added.len());
    let mut origin = Vec::with_capacity(kept.len() + added.len());
    for (g, o) in kept {
        if g.opacity() >= cfg.min_opacity {
            gaussians.push(g);
            origin.push(o);
        }
    }
    for g in added {
        if gaussians.len() >= cfg.max_gaussians {
            break;
        }
        if g.opacity() >= cfg.min_opacity {
            gaussians.push(g);
            origin.push(None);
        }
    }
    (
        GaussianCloud {
            gaussians,
            ..cloud.clone_header()
        },
        origin,
    )
}

impl GaussianCloud {
    fn clone_header(&self) -> GaussianCloud {
        GaussianCloud {
            gaussians: Vec::new(),
            color_model: self.color_model,
            sh_degree: self.sh_degree,
            bounds: self.bounds,
            color_options: self.color_options,
        }
    }
}
