//! Adam with one learning rate per parameter group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::raster::{CloudGrad, GaussianGrad};
use crate::scene::{Gaussian, GaussianCloud};
use crate::sh::{num_coeffs, ColorModel, ColorParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    LogScale,
    Rotation,
    Opacity,
    Luminance,
    /// Band-0 SH coefficients.
    ShDc,
    /// Higher SH bands.
    ShRest,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::LogScale => "log_scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Opacity => "opacity",
            ParamGroup::Luminance => "luminance",
            ParamGroup::ShDc => "sh_dc",
            ParamGroup::ShRest => "sh_rest",
        }
    }
}

/// Learning rate of every group at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub luminance: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

impl GroupRates {
    pub fn get(&self, g: ParamGroup) -> f64 {
        match g {
            ParamGroup::Position => self.position,
            ParamGroup::LogScale => self.log_scale,
            ParamGroup::Rotation => self.rotation,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::Luminance => self.luminance,
            ParamGroup::ShDc => self.sh_dc,
            ParamGroup::ShRest => self.sh_rest,
        }
    }
}

/// Scalars per Gaussian for a color model and SH degree.
pub fn params_per_gaussian(model: ColorModel, degree: usize) -> usize {
    11 + usize::from(model == ColorModel::Decomposed) + 3 * num_coeffs(degree)
}

/// Visits every scalar parameter of `g` with its gradient, in a fixed order.
fn for_each_param(g: &mut Gaussian, grad: &GaussianGrad, mut f: impl FnMut(ParamGroup, &mut f64, f64)) {
    for a in 0..3 {
        f(ParamGroup::Position, &mut g.position[a], grad.position[a]);
    }
    for a in 0..3 {
        f(ParamGroup::LogScale, &mut g.log_scale[a], grad.log_scale[a]);
    }
    for a in 0..4 {
        f(ParamGroup::Rotation, &mut g.rotation[a], grad.rotation[a]);
    }
    f(ParamGroup::Opacity, &mut g.opacity_logit, grad.opacity_logit);
    let sh = match &mut g.color {
        ColorParams::Entangled(sh) => sh,
        ColorParams::Decomposed { lum, chroma } => {
            f(ParamGroup::Luminance, &mut lum.raw, grad.lum_raw);
            chroma
        }
    };
    for (i, (k, gk)) in sh.coeffs_mut().iter_mut().zip(&grad.sh).enumerate() {
        let group = if i == 0 { ParamGroup::ShDc } else { ParamGroup::ShRest };
        for c in 0..3 {
            f(group, &mut k[c], gk[c]);
        }
    }
}

/// First and second moments, one row of [`params_per_gaussian`] scalars per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub per_gaussian: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(cloud: &GaussianCloud) -> Self {
        let per = params_per_gaussian(cloud.color_model, cloud.sh_degree);
        Self {
            step: 0,
            per_gaussian: per,
            m: vec![0.0; per * cloud.len()],
            v: vec![0.0; per * cloud.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len() / self.per_gaussian.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Re-indexes rows after densification; `None` rows start from zero moments.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let per = self.per_gaussian;
        let mut m = vec![0.0; per * origin.len()];
        let mut v = vec![0.0; per * origin.len()];
        for (new, old) in origin.iter().enumerate() {
            if let Some(old) = *old {
                m[new * per..(new + 1) * per].copy_from_slice(&self.m[old * per..(old + 1) * per]);
                v[new * per..(new + 1) * per].copy_from_slice(&self.v[old * per..(old + 1) * per]);
            }
        }
        self.m = m;
        self.v = v;
    }
}

/// One bias-corrected Adam update of every parameter, then quaternion renormalization.
///
/// Gradients are checked for finiteness before anything is modified.
pub fn adam_step(cloud: &mut GaussianCloud, grad: &CloudGrad, state: &mut AdamState, rates: &GroupRates) -> Result<()> {
    if grad.gaussians.len() != cloud.len() || state.len() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gaussians, {} gradients, {} optimizer rows",
            cloud.len(),
            grad.gaussians.len(),
            state.len()
        )));
    }
    for (g, gg) in cloud.gaussians.iter_mut().zip(&grad.gaussians) {
        let mut bad = None;
        for_each_param(g, gg, |group, _, d| {
            if bad.is_none() && !d.is_finite() {
                bad = Some(group.name());
            }
        });
        if let Some(group) = bad {
            return Err(Error::NonFiniteGradient { group });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let per = state.per_gaussian;
    for (i, (g, gg)) in cloud.gaussians.iter_mut().zip(&grad.gaussians).enumerate() {
        let m = &mut state.m[i * per..(i + 1) * per];
        let v = &mut state.v[i * per..(i + 1) * per];
        let mut k = 0;
        for_each_param(g, gg, |group, p, d| {
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * d;
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * d * d;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *p -= rates.get(group) * m_hat / (v_hat.sqrt() + EPSILON);
            k += 1;
        });
        g.rotation = math::normalize_quat(g.rotation);
    }
    Ok(())
}
