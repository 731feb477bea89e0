//! Real spherical harmonics and the two per-Gaussian color models.
//!
//! Basis functions are stored in flat band order: index `l*l + l + m` for
//! band `l` and order `m` in `-l..=l`. The convention carries no
//! Condon-Shortley phase, so `Y_1^{-1}`, `Y_1^0` and `Y_1^1` are positive
//! multiples of `y`, `z` and `x` respectively.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, Vec3};

pub const MAX_SH_DEGREE: usize = 5;
pub const MAX_SH_COEFFS: usize = (MAX_SH_DEGREE + 1) * (MAX_SH_DEGREE + 1);

/// `1 / (2 sqrt(pi))`, the band-0 basis value.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
/// `sqrt(3 / (4 pi))`, the band-1 scale.
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

/// Floor applied to a linear-space luminance so the effective value stays positive.
pub const LUMINANCE_EPS: f64 = 1e-8;

pub const fn num_coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

#[inline]
const fn index(l: usize, m: isize) -> usize {
    ((l * l + l) as isize + m) as usize
}

// sqrt((2l+1)/(4pi) * (l-m)!/(l+m)!), with the sqrt(2) of the real basis folded in for m > 0.
static NORMALIZATION: LazyLock<[[f64; MAX_SH_DEGREE + 1]; MAX_SH_DEGREE + 1]> =
    LazyLock::new(|| {
        let mut k = [[0.0; MAX_SH_DEGREE + 1]; MAX_SH_DEGREE + 1];
        for (l, row) in k.iter_mut().enumerate() {
            for (m, v) in row.iter_mut().enumerate().take(l + 1) {
                let ratio: f64 = ((l - m + 1)..=(l + m)).map(|i| 1.0 / i as f64).product();
                let base = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * ratio).sqrt();
                *v = if m == 0 {
                    base
                } else {
                    std::f64::consts::SQRT_2 * base
                };
            }
        }
        k
    });

/// Per-basis SH coefficients, one RGB triple per basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShCoeffs {
    degree: usize,
    coeffs: Vec<[f64; 3]>,
}

impl ShCoeffs {
    pub fn zeros(degree: usize) -> Result<Self> {
        Self::new(degree, vec![[0.0; 3]; num_coeffs(degree.min(MAX_SH_DEGREE))])
    }

    pub fn new(degree: usize, coeffs: Vec<[f64; 3]>) -> Result<Self> {
        if degree > MAX_SH_DEGREE {
            return Err(Error::config(format!(
                "SH degree {degree} exceeds the maximum of {MAX_SH_DEGREE}"
            )));
        }
        if coeffs.len() != num_coeffs(degree) {
            return Err(Error::config(format!(
                "degree {degree} needs {} coefficient triples, got {}",
                num_coeffs(degree),
                coeffs.len()
            )));
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite SH coefficient"));
        }
        Ok(Self { degree, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    /// Mutable view for optimizers; callers keep values finite.
    pub fn coeffs_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.coeffs
    }
}

/// A unit-length viewing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewDirection(Vec3);

impl ViewDirection {
    /// Accepts only vectors whose norm is 1 within `1e-9`.
    pub fn new(d: Vec3) -> Result<Self> {
        let norm = crate::math::norm(d);
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDirection { norm });
        }
        Ok(Self(d))
    }

    pub fn normalized(d: Vec3) -> Result<Self> {
        let norm = crate::math::norm(d);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidDirection { norm });
        }
        Ok(Self([d[0] / norm, d[1] / norm, d[2] / norm]))
    }

    /// Direction from polar angle `theta` (from +z) and azimuth `phi` (from +x).
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let s = theta.sin();
        Self([s * phi.cos(), s * phi.sin(), theta.cos()])
    }

    pub fn as_array(&self) -> Vec3 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LuminanceSpace {
    Log,
    Linear,
}

/// Stored luminance parameter; the effective luminance is always positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminanceParam {
    pub raw: f64,
    pub space: LuminanceSpace,
}

impl LuminanceParam {
    pub fn from_effective(lum: f64, space: LuminanceSpace) -> Self {
        let raw = match space {
            LuminanceSpace::Log => lum.max(LUMINANCE_EPS).ln(),
            LuminanceSpace::Linear => lum.max(LUMINANCE_EPS),
        };
        Self { raw, space }
    }

    pub fn effective(&self) -> f64 {
        match self.space {
            LuminanceSpace::Log => self.raw.exp(),
            LuminanceSpace::Linear => self.raw.max(LUMINANCE_EPS),
        }
    }

    /// d(effective)/d(raw).
    pub fn derivative(&self) -> f64 {
        match self.space {
            LuminanceSpace::Log => self.raw.exp(),
            LuminanceSpace::Linear => {
                if self.raw > LUMINANCE_EPS {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorModel {
    Entangled,
    Decomposed,
}

impl std::fmt::Display for ColorModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColorModel::Entangled => f.write_str("entangled"),
            ColorModel::Decomposed => f.write_str("decomposed"),
        }
    }
}

impl std::str::FromStr for ColorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entangled" => Ok(ColorModel::Entangled),
            "decomposed" => Ok(ColorModel::Decomposed),
            other => Err(Error::config(format!("unknown color model `{other}`"))),
        }
    }
}

/// Color parameters of one Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColorParams {
    /// RGB radiance is the SH expansion itself.
    Entangled(ShCoeffs),
    /// RGB radiance is a scalar luminance times a sigmoid-bounded SH chromaticity.
    Decomposed {
        lum: LuminanceParam,
        chroma: ShCoeffs,
    },
}

impl ColorParams {
    pub fn model(&self) -> ColorModel {
        match self {
            ColorParams::Entangled(_) => ColorModel::Entangled,
            ColorParams::Decomposed { .. } => ColorModel::Decomposed,
        }
    }

    pub fn sh(&self) -> &ShCoeffs {
        match self {
            ColorParams::Entangled(k) => k,
            ColorParams::Decomposed { chroma, .. } => chroma,
        }
    }

    pub fn sh_mut(&mut self) -> &mut ShCoeffs {
        match self {
            ColorParams::Entangled(k) => k,
            ColorParams::Decomposed { chroma, .. } => chroma,
        }
    }
}

/// Basis values and their gradient with respect to the (unit) direction components.
///
/// The gradient is that of the polynomial extension off the sphere; callers
/// chaining into an unnormalized vector must project out the radial part.
pub fn sh_basis_with_grad(
    d: Vec3,
    degree: usize,
    values: &mut [f64],
    mut grad: Option<&mut [Vec3]>,
) {
    debug_assert!(degree <= MAX_SH_DEGREE);
    let [x, y, z] = d;
    let k = &*NORMALIZATION;

    // (x + iy)^m split into real and imaginary parts, with partials in x and y.
    let mut re = [0.0; MAX_SH_DEGREE + 1];
    let mut im = [0.0; MAX_SH_DEGREE + 1];
    let mut dre = [[0.0; 2]; MAX_SH_DEGREE + 1];
    let mut dim = [[0.0; 2]; MAX_SH_DEGREE + 1];
    re[0] = 1.0;
    for m in 1..=degree {
        re[m] = x * re[m - 1] - y * im[m - 1];
        im[m] = x * im[m - 1] + y * re[m - 1];
        dre[m] = [
            re[m - 1] + x * dre[m - 1][0] - y * dim[m - 1][0],
            x * dre[m - 1][1] - im[m - 1] - y * dim[m - 1][1],
        ];
        dim[m] = [
            im[m - 1] + x * dim[m - 1][0] + y * dre[m - 1][0],
            x * dim[m - 1][1] + re[m - 1] + y * dre[m - 1][1],
        ];
    }

    // Associated Legendre functions divided by sin^m(theta): polynomials in z.
    let mut q = [[0.0; MAX_SH_DEGREE + 1]; MAX_SH_DEGREE + 1];
    let mut dq = [[0.0; MAX_SH_DEGREE + 1]; MAX_SH_DEGREE + 1];
    let mut double_fact = 1.0;
    for m in 0..=degree {
        if m > 0 {
            double_fact *= (2 * m - 1) as f64;
        }
        q[m][m] = double_fact;
        if m < degree {
            let c = (2 * m + 1) as f64;
            q[m + 1][m] = c * z * q[m][m];
            dq[m + 1][m] = c * q[m][m];
        }
        for l in (m + 2)..=degree {
            let a = (2 * l - 1) as f64;
            let b = (l + m - 1) as f64;
            let inv = 1.0 / (l - m) as f64;
            q[l][m] = (a * z * q[l - 1][m] - b * q[l - 2][m]) * inv;
            dq[l][m] = (a * q[l - 1][m] + a * z * dq[l - 1][m] - b * dq[l - 2][m]) * inv;
        }
    }

    for l in 0..=degree {
        values[index(l, 0)] = k[l][0] * q[l][0];
        if let Some(g) = grad.as_deref_mut() {
            g[index(l, 0)] = [0.0, 0.0, k[l][0] * dq[l][0]];
        }
        for m in 1..=l {
            let c = k[l][m];
            let mi = m as isize;
            values[index(l, mi)] = c * q[l][m] * re[m];
            values[index(l, -mi)] = c * q[l][m] * im[m];
            if let Some(g) = grad.as_deref_mut() {
                g[index(l, mi)] = [
                    c * q[l][m] * dre[m][0],
                    c * q[l][m] * dre[m][1],
                    c * dq[l][m] * re[m],
                ];
                g[index(l, -mi)] = [
                    c * q[l][m] * dim[m][0],
                    c * q[l][m] * dim[m][1],
                    c * dq[l][m] * im[m],
                ];
            }
        }
    }
}

/// Real SH basis values up to `degree`, flat band order.
pub fn eval_sh_basis(d: &ViewDirection, degree: usize) -> Result<Vec<f64>> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::config(format!("SH degree {degree} exceeds {MAX_SH_DEGREE}")));
    }
    let mut out = vec![0.0; num_coeffs(degree)];
    sh_basis_with_grad(d.as_array(), degree, &mut out, None);
    Ok(out)
}

/// How the entangled model maps its SH sum to radiance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorOptions {
    /// Add 0.5 to the entangled SH sum and clamp at zero.
    pub baseline_offset: bool,
}

impl Default for ColorOptions {
    fn default() -> Self {
        Self {
            baseline_offset: true,
        }
    }
}

/// Intermediate values of a color evaluation, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct ColorEval {
    pub rgb: Vec3,
    basis: [f64; MAX_SH_COEFFS],
    basis_grad: [Vec3; MAX_SH_COEFFS],
    n_active: usize,
    // Entangled: per-channel active mask of the clamp. Decomposed: sigmoid output.
    aux: Vec3,
    lum: f64,
}

/// Evaluates a Gaussian's color using the first `active_degree` bands.
pub fn eval_color(d: Vec3, params: &ColorParams, active_degree: usize, opts: ColorOptions) -> ColorEval {
    let sh = params.sh();
    let degree = active_degree.min(sh.degree());
    let n = num_coeffs(degree);
    let mut basis = [0.0; MAX_SH_COEFFS];
    let mut basis_grad = [[0.0; 3]; MAX_SH_COEFFS];
    sh_basis_with_grad(d, degree, &mut basis[..n], Some(&mut basis_grad[..n]));

    let mut sum = [0.0; 3];
    for (b, k) in basis[..n].iter().zip(sh.coeffs()) {
        for c in 0..3 {
            sum[c] += k[c] * b;
        }
    }

    let (rgb, aux, lum) = match params {
        ColorParams::Entangled(_) => {
            if opts.baseline_offset {
                let mut rgb = [0.0; 3];
                let mut mask = [0.0; 3];
                for c in 0..3 {
                    let v = sum[c] + 0.5;
                    if v > 0.0 {
                        rgb[c] = v;
                        mask[c] = 1.0;
                    }
                }
                (rgb, mask, 1.0)
            } else {
                (sum, [1.0; 3], 1.0)
            }
        }
        ColorParams::Decomposed { lum, .. } => {
            let l = lum.effective();
            let f = [sigmoid(sum[0]), sigmoid(sum[1]), sigmoid(sum[2])];
            ([l * f[0], l * f[1], l * f[2]], f, l)
        }
    };

    ColorEval {
        rgb,
        basis,
        basis_grad,
        n_active: n,
        aux,
        lum,
    }
}

/// Gradients of a scalar loss with respect to one Gaussian's color parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorGrad {
    /// Same layout as the SH coefficients (entangled `k` or chromatic `b`).
    pub sh: Vec<[f64; 3]>,
    /// d/d(raw luminance); zero for the entangled model.
    pub lum_raw: f64,
    /// Gradient with respect to the unit view direction (ambient components).
    pub dir: Vec3,
}

/// Backpropagates `upstream = dL/d(rgb)` through a color evaluation.
pub fn color_backward(params: &ColorParams, eval: &ColorEval, upstream: Vec3) -> ColorGrad {
    let sh = params.sh();
    let mut grad = ColorGrad {
        sh: vec![[0.0; 3]; sh.coeffs().len()],
        lum_raw: 0.0,
        dir: [0.0; 3],
    };
    accumulate_color_backward(params, eval, upstream, 1.0, &mut grad.sh, &mut grad.lum_raw, &mut grad.dir);
    grad
}

/// Accumulating form of [`color_backward`] used by the rasterizer.
pub(crate) fn accumulate_color_backward(
    params: &ColorParams,
    eval: &ColorEval,
    upstream: Vec3,
    weight: f64,
    sh_grad: &mut [[f64; 3]],
    lum_grad: &mut f64,
    dir_grad: &mut Vec3,
) {
    // dL/d(SH sum) per channel.
    let mut dsum = [0.0; 3];
    match params {
        ColorParams::Entangled(_) => {
            for c in 0..3 {
                dsum[c] = upstream[c] * eval.aux[c];
            }
        }
        ColorParams::Decomposed { lum, .. } => {
            let f = eval.aux;
            let mut dlum = 0.0;
            for c in 0..3 {
                dlum += upstream[c] * f[c];
                dsum[c] = upstream[c] * eval.lum * f[c] * (1.0 - f[c]);
            }
            *lum_grad += weight * dlum * lum.derivative();
        }
    }
    let coeffs = params.sh().coeffs();
    for i in 0..eval.n_active {
        let b = eval.basis[i];
        let g = &mut sh_grad[i];
        let k = coeffs[i];
        let mut s = 0.0;
        for c in 0..3 {
            g[c] += weight * dsum[c] * b;
            s += dsum[c] * k[c];
        }
        let bg = eval.basis_grad[i];
        for a in 0..3 {
            dir_grad[a] += weight * s * bg[a];
        }
    }
}

/// Baseline color: the SH expansion itself, plus the optional offset.
pub fn color_entangled(d: &ViewDirection, k: &ShCoeffs, opts: ColorOptions) -> Vec3 {
    eval_color(d.as_array(), &ColorParams::Entangled(k.clone()), k.degree(), opts).rgb
}

/// Luminance times sigmoid chromaticity for a direction.
pub fn color_decomposed(d: &ViewDirection, lum: &LuminanceParam, b: &ShCoeffs) -> Vec3 {
    let params = ColorParams::Decomposed {
        lum: *lum,
        chroma: b.clone(),
    };
    eval_color(d.as_array(), &params, b.degree(), ColorOptions::default()).rgb
}

/// Gradients of `upstream . rgb` with respect to every color parameter.
pub fn color_gradients(d: &ViewDirection, params: &ColorParams, opts: ColorOptions, upstream: Vec3) -> ColorGrad {
    let eval = eval_color(d.as_array(), params, params.sh().degree(), opts);
    color_backward(params, &eval, upstream)
}
