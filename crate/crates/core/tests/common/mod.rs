//! Random scenes shared by the integration tests.
#![allow(dead_code)]

use nhsplat::raster::Camera;
use nhsplat::scene::{Aabb, Gaussian, GaussianCloud};
use nhsplat::sh::{num_coeffs, ColorModel, ColorOptions, ColorParams, LuminanceParam, LuminanceSpace, ShCoeffs};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn camera(width: usize, height: usize, rng: &mut impl Rng) -> Camera {
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let elev: f64 = rng.random_range(-0.4..0.4);
    let r = 4.0;
    let eye = [r * elev.cos() * theta.cos(), r * elev.sin(), r * elev.cos() * theta.sin()];
    let f = 1.1 * width as f64;
    Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], f, f, width, height).unwrap()
}

pub fn gaussian(rng: &mut impl Rng, model: ColorModel, degree: usize, space: LuminanceSpace) -> Gaussian {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut q: [f64; 4] = std::array::from_fn(|_| n.sample(rng));
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= qn);
    let coeffs: Vec<[f64; 3]> = (0..num_coeffs(degree))
        .map(|i| {
            let s = if i == 0 { 0.6 } else { 0.25 };
            std::array::from_fn(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        })
        .collect();
    let sh = ShCoeffs::new(degree, coeffs).unwrap();
    let color = match model {
        ColorModel::Entangled => ColorParams::Entangled(sh),
        ColorModel::Decomposed => ColorParams::Decomposed {
            lum: match space {
                LuminanceSpace::Log => LuminanceParam { raw: rng.random_range(-1.5..1.5), space },
                LuminanceSpace::Linear => LuminanceParam { raw: rng.random_range(0.2..3.0), space },
            },
            chroma: sh,
        },
    };
    Gaussian {
        position: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        log_scale: std::array::from_fn(|_| rng.random_range(0.05f64..0.35).ln()),
        rotation: q,
        opacity_logit: rng.random_range(-2.0..2.0),
        color,
    }
}

pub fn cloud(
    rng: &mut impl Rng,
    n: usize,
    model: ColorModel,
    degree: usize,
    space: LuminanceSpace,
) -> GaussianCloud {
    GaussianCloud {
        gaussians: (0..n).map(|_| gaussian(rng, model, degree, space)).collect(),
        color_model: model,
        sh_degree: degree,
        bounds: Aabb::new([-1.5; 3], [1.5; 3]).unwrap(),
        color_options: ColorOptions::default(),
    }
}

/// Mutable references to every scalar parameter of a Gaussian, in a fixed order.
pub fn params_mut(g: &mut Gaussian) -> Vec<(&'static str, &mut f64)> {
    let mut out: Vec<(&'static str, &mut f64)> = Vec::new();
    out.extend(g.position.iter_mut().map(|v| ("position", v)));
    out.extend(g.log_scale.iter_mut().map(|v| ("log_scale", v)));
    out.extend(g.rotation.iter_mut().map(|v| ("rotation", v)));
    out.push(("opacity", &mut g.opacity_logit));
    match &mut g.color {
        ColorParams::Entangled(sh) => out.extend(sh.coeffs_mut().iter_mut().flatten().map(|v| ("sh", v))),
        ColorParams::Decomposed { lum, chroma } => {
            let name = match lum.space {
                LuminanceSpace::Log => "luminance_log",
                LuminanceSpace::Linear => "luminance_linear",
            };
            out.push((name, &mut lum.raw));
            out.extend(chroma.coeffs_mut().iter_mut().flatten().map(|v| ("chroma", v)));
        }
    }
    out
}

/// Analytic gradient in the order of [`params_mut`].
pub fn flatten_grad(g: &nhsplat::raster::GaussianGrad, decomposed: bool) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend(g.position);
    out.extend(g.log_scale);
    out.extend(g.rotation);
    out.push(g.opacity_logit);
    if decomposed {
        out.push(g.lum_raw);
    }
    out.extend(g.sh.iter().flatten());
    out
}

pub struct FdReport {
    pub checked: usize,
    pub kinds: std::collections::BTreeSet<&'static str>,
    pub failed: Vec<String>,
    pub worst: f64,
}

/// Compares analytic gradients of `sum(up * render)` against central differences.
pub fn finite_difference_check(
    cloud: &GaussianCloud,
    cam: &Camera,
    opts: &nhsplat::raster::RenderOptions,
    up: &nhsplat::photometry::HdrImage,
    h: f64,
    tol: f64,
    floor: f64,
) -> FdReport {
    use nhsplat::raster::{render_backward, render_f64};
    let loss = |c: &GaussianCloud| -> f64 {
        let img = render_f64(c, cam, opts).unwrap().image;
        img.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
    };
    let grad = render_backward(cloud, cam, opts, up).unwrap();
    let decomposed = cloud.color_model == ColorModel::Decomposed;
    let mut report = FdReport {
        checked: 0,
        kinds: Default::default(),
        failed: Vec::new(),
        worst: 0.0,
    };
    let mut work = cloud.clone();
    for gi in 0..cloud.len() {
        let analytic = flatten_grad(&grad.gaussians[gi], decomposed);
        let n_params = params_mut(&mut work.gaussians[gi]).len();
        for pi in 0..n_params {
            let (name, orig) = {
                let mut p = params_mut(&mut work.gaussians[gi]);
                let (name, v) = &mut p[pi];
                let orig = **v;
                **v = orig + h;
                (*name, orig)
            };
            let plus = loss(&work);
            *params_mut(&mut work.gaussians[gi])[pi].1 = orig - h;
            let minus = loss(&work);
            *params_mut(&mut work.gaussians[gi])[pi].1 = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = analytic[pi];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            report.checked += 1;
            report.kinds.insert(name);
            report.worst = report.worst.max(rel);
            if rel >= tol {
                report.failed.push(format!("gaussian {gi} {name}[{pi}]: analytic {a:e} fd {fd:e} rel {rel:e}"));
            }
        }
    }
    report
}
