//! EWA projection of 3D Gaussians to screen-space splats, and its adjoint.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use crate::math::{self, Mat2, Mat3, Vec3};
use crate::scene::Gaussian;
use crate::sh::{accumulate_color_backward, eval_color, ColorEval, ColorOptions};

/// Added to the screen-space covariance diagonal.
pub const LOW_PASS: f64 = 0.3;

/// Mahalanobis radius (squared) of the splat footprint: the 3-sigma ellipse.
pub const CUTOFF_M: f64 = 9.0;
/// Inside this squared radius the kernel is an untouched Gaussian.
const TAPER_START_M: f64 = 8.0;

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splat2D {
    pub mean2d: [f64; 2],
    pub cov2d: Mat2,
    pub depth: f64,
    pub rgb: Vec3,
    pub alpha: f64,
}

impl Splat2D {
    /// Inverse covariance as `(a, b, c)` with `m = a dx^2 + 2 b dx dy + c dy^2`.
    pub fn conic(&self) -> [f64; 3] {
        let [[p, q], [_, r]] = self.cov2d;
        let det = p * r - q * q;
        [r / det, -q / det, p / det]
    }

    /// Half-extents of the axis-aligned box around the 3-sigma ellipse.
    pub fn extent(&self) -> [f64; 2] {
        [3.0 * self.cov2d[0][0].sqrt(), 3.0 * self.cov2d[1][1].sqrt()]
    }
}

/// Footprint weight for a squared Mahalanobis distance `m`.
///
/// A Gaussian, smoothly tapered to zero over `8 <= m <= 9` so the truncated
/// kernel stays twice differentiable.
#[inline]
pub fn kernel_weight<F: Float>(m: F) -> F {
    let cutoff = F::from(CUTOFF_M).unwrap();
    let start = F::from(TAPER_START_M).unwrap();
    if m >= cutoff {
        return F::zero();
    }
    let half = F::from(0.5).unwrap();
    let g = (-half * m).exp();
    if m <= start {
        return g;
    }
    let t = (m - start) / (cutoff - start);
    let (six, fifteen, ten) = (F::from(6.0).unwrap(), F::from(15.0).unwrap(), F::from(10.0).unwrap());
    g * (F::one() - t * t * t * (t * (six * t - fifteen) + ten))
}

/// `(weight, d weight / d m)`.
#[inline]
pub fn kernel_weight_and_derivative(m: f64) -> (f64, f64) {
    if m >= CUTOFF_M {
        return (0.0, 0.0);
    }
    let g = (-0.5 * m).exp();
    if m <= TAPER_START_M {
        return (g, -0.5 * g);
    }
    let span = CUTOFF_M - TAPER_START_M;
    let t = (m - TAPER_START_M) / span;
    let taper = 1.0 - t * t * t * (t * (6.0 * t - 15.0) + 10.0);
    let dtaper = -30.0 * t * t * (1.0 - t) * (1.0 - t) / span;
    (g * taper, -0.5 * g * taper + g * dtaper)
}

/// Projection with the intermediates the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct Projected {
    pub splat: Splat2D,
    pub conic: [f64; 3],
    cam_pos: Vec3,
    m: [[f64; 3]; 2],
    cov3: Mat3,
    rot: Mat3,
    quat_unit: [f64; 4],
    quat_norm: f64,
    scale_sq: Vec3,
    view_dir: Vec3,
    view_dist: f64,
    color: ColorEval,
}

pub(crate) fn project_full(g: &Gaussian, cam: &Camera, opts: ColorOptions, active_degree: usize) -> Option<Projected> {
    let t = cam.world_to_camera(g.position);
    if t[2] <= cam.near {
        return None;
    }
    let (x, y, z) = (t[0], t[1], t[2]);
    let inv_z = 1.0 / z;
    let mean2d = [cam.fx * x * inv_z + cam.cx, cam.fy * y * inv_z + cam.cy];
    let jac = [
        [cam.fx * inv_z, 0.0, -cam.fx * x * inv_z * inv_z],
        [0.0, cam.fy * inv_z, -cam.fy * y * inv_z * inv_z],
    ];
    let w = &cam.rotation;
    let mut m = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| jac[i][k] * w[k][j]).sum();
        }
    }

    let quat_norm = math::quat_norm(g.rotation);
    let quat_unit = g.rotation.map(|v| v / quat_norm);
    let rot = math::quat_to_mat(quat_unit);
    let scale_sq = g.log_scale.map(|s| (2.0 * s).exp());
    let mut cov3 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov3[i][j] = (0..3).map(|k| rot[i][k] * scale_sq[k] * rot[j][k]).sum();
        }
    }
    let mut cov2d = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += m[i][a] * cov3[a][b] * m[j][b];
                }
            }
            cov2d[i][j] = acc;
        }
    }
    cov2d[0][0] += LOW_PASS;
    cov2d[1][1] += LOW_PASS;
    // exact symmetry
    let off = 0.5 * (cov2d[0][1] + cov2d[1][0]);
    cov2d[0][1] = off;
    cov2d[1][0] = off;

    let offset = math::sub(g.position, cam.center());
    let view_dist = math::norm(offset);
    let view_dir = if view_dist > 0.0 {
        math::scale(offset, 1.0 / view_dist)
    } else {
        [0.0, 0.0, 1.0]
    };
    let color = eval_color(view_dir, &g.color, active_degree, opts);
    let splat = Splat2D {
        mean2d,
        cov2d,
        depth: z,
        rgb: color.rgb,
        alpha: g.opacity(),
    };
    let conic = splat.conic();
    Some(Projected {
        splat,
        conic,
        cam_pos: t,
        m,
        cov3,
        rot,
        quat_unit,
        quat_norm,
        scale_sq,
        view_dir,
        view_dist,
        color,
    })
}

/// Projects one Gaussian; `None` when it lies at or in front of the near plane.
pub fn project_gaussian(g: &Gaussian, cam: &Camera, opts: ColorOptions) -> Option<Splat2D> {
    project_full(g, cam, opts, g.color.sh().degree()).map(|p| p.splat)
}

/// Screen-space gradients of one splat, accumulated over pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct SplatGrad {
    pub mean2d: [f64; 2],
    /// With respect to `(a, b, c)` of [`Splat2D::conic`].
    pub conic: [f64; 3],
    pub alpha: f64,
    pub rgb: Vec3,
}

impl SplatGrad {
    pub fn add(&mut self, o: &SplatGrad) {
        for i in 0..2 {
            self.mean2d[i] += o.mean2d[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.rgb[i] += o.rgb[i];
        }
        self.alpha += o.alpha;
    }
}

/// Parameter gradients of one Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub position: Vec3,
    pub log_scale: Vec3,
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub sh: Vec<[f64; 3]>,
    pub lum_raw: f64,
}

impl GaussianGrad {
    pub fn zeros(n_sh: usize) -> Self {
        Self {
            position: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [0.0; 4],
            opacity_logit: 0.0,
            sh: vec![[0.0; 3]; n_sh],
            lum_raw: 0.0,
        }
    }
}

/// Pulls screen-space gradients back onto the Gaussian's parameters.
pub(crate) fn project_backward(g: &Gaussian, cam: &Camera, p: &Projected, sg: &SplatGrad, out: &mut GaussianGrad) {
    // conic -> 2D covariance: dL/dSigma2 = -K G_K K
    let [ca, cb, cc] = p.conic;
    let k = [[ca, cb], [cb, cc]];
    let gk = [[sg.conic[0], 0.5 * sg.conic[1]], [0.5 * sg.conic[1], sg.conic[2]]];
    let mut kg = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            kg[i][j] = k[i][0] * gk[0][j] + k[i][1] * gk[1][j];
        }
    }
    let mut g2 = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g2[i][j] = -(kg[i][0] * k[0][j] + kg[i][1] * k[1][j]);
        }
    }

    // Sigma2 = M Sigma3 M^T
    let m = &p.m;
    let mut g3 = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    acc += m[i][a] * g2[i][j] * m[j][b];
                }
            }
            g3[a][b] = acc;
        }
    }
    // dL/dM = 2 G2 M Sigma3
    let mut ms = [[0.0; 3]; 2];
    for i in 0..2 {
        for b in 0..3 {
            ms[i][b] = (0..3).map(|a| m[i][a] * p.cov3[a][b]).sum();
        }
    }
    let mut gm = [[0.0; 3]; 2];
    for i in 0..2 {
        for b in 0..3 {
            gm[i][b] = 2.0 * (g2[i][0] * ms[0][b] + g2[i][1] * ms[1][b]);
        }
    }
    // M = J W  ->  dL/dJ = G_M W^T
    let w = &cam.rotation;
    let mut gj = [[0.0; 3]; 2];
    for i in 0..2 {
        for a in 0..3 {
            gj[i][a] = (0..3).map(|b| gm[i][b] * w[a][b]).sum();
        }
    }

    let [x, y, z] = p.cam_pos;
    let inv_z = 1.0 / z;
    let inv_z2 = inv_z * inv_z;
    let inv_z3 = inv_z2 * inv_z;
    let (fx, fy) = (cam.fx, cam.fy);
    let mut dt = [0.0; 3];
    // mean2d
    dt[0] += sg.mean2d[0] * fx * inv_z;
    dt[1] += sg.mean2d[1] * fy * inv_z;
    dt[2] += -sg.mean2d[0] * fx * x * inv_z2 - sg.mean2d[1] * fy * y * inv_z2;
    // Jacobian entries
    dt[0] += gj[0][2] * (-fx * inv_z2);
    dt[1] += gj[1][2] * (-fy * inv_z2);
    dt[2] += gj[0][0] * (-fx * inv_z2) + gj[0][2] * (2.0 * fx * x * inv_z3) + gj[1][1] * (-fy * inv_z2) + gj[1][2] * (2.0 * fy * y * inv_z3);
    let dpos = math::mat_t_vec(w, dt);
    out.position = math::add(out.position, dpos);

    // Sigma3 = R S^2 R^T
    let r = &p.rot;
    let mut grot = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            // 2 (G3 R)_ik s_k^2
            let gr: f64 = (0..3).map(|j| g3[i][j] * r[j][k]).sum();
            grot[i][k] = 2.0 * gr * p.scale_sq[k];
        }
    }
    for kk in 0..3 {
        let mut ds2 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                ds2 += r[i][kk] * g3[i][j] * r[j][kk];
            }
        }
        out.log_scale[kk] += ds2 * 2.0 * p.scale_sq[kk];
    }
    let dq_unit = math::quat_to_mat_vjp(p.quat_unit, &grot);
    let radial: f64 = (0..4).map(|i| dq_unit[i] * p.quat_unit[i]).sum();
    for i in 0..4 {
        out.rotation[i] += (dq_unit[i] - radial * p.quat_unit[i]) / p.quat_norm;
    }

    let alpha = p.splat.alpha;
    out.opacity_logit += sg.alpha * alpha * (1.0 - alpha);

    let mut dir_grad = [0.0; 3];
    accumulate_color_backward(&g.color, &p.color, sg.rgb, 1.0, &mut out.sh, &mut out.lum_raw, &mut dir_grad);
    if p.view_dist > 0.0 {
        let d = p.view_dir;
        let radial = math::dot(dir_grad, d);
        for a in 0..3 {
            out.position[a] += (dir_grad[a] - radial * d[a]) / p.view_dist;
        }
    }
}
