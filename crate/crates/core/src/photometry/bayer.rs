use super::image::{check_even, BayerImage, BayerPattern, HdrImage, Plane};
use super::ssim::{ssim_plane, SsimConfig};
use crate::error::{Error, Result};

/// Samples one channel per pixel according to the color filter layout.
pub fn bayer_mask(rgb: &HdrImage, pattern: BayerPattern) -> Result<BayerImage> {
    let (w, h) = (rgb.width(), rgb.height());
    check_even(w, h)?;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(rgb.pixel(x, y)[pattern.channel_at(x, y)]);
        }
    }
    BayerImage::new(Plane::new(w, h, data)?, pattern)
}

/// Binary masks `[M_R, M_G, M_B]` of the layout.
pub fn bayer_masks(width: usize, height: usize, pattern: BayerPattern) -> [Plane; 3] {
    let mut masks = [Plane::zeros(width, height), Plane::zeros(width, height), Plane::zeros(width, height)];
    for y in 0..height {
        for x in 0..width {
            masks[pattern.channel_at(x, y)].data[y * width + x] = 1.0;
        }
    }
    masks
}

/// The four 2x2-phase sub-images, in phase order (0,0), (1,0), (0,1), (1,1) as (x, y).
pub fn bayer_subimages(mosaic: &Plane) -> Result<[Plane; 4]> {
    check_even(mosaic.width, mosaic.height)?;
    let (hw, hh) = (mosaic.width / 2, mosaic.height / 2);
    let sub = |ox: usize, oy: usize| {
        let mut data = Vec::with_capacity(hw * hh);
        for y in 0..hh {
            for x in 0..hw {
                data.push(mosaic.at(2 * x + ox, 2 * y + oy));
            }
        }
        Plane {
            width: hw,
            height: hh,
            data,
        }
    };
    Ok([sub(0, 0), sub(1, 0), sub(0, 1), sub(1, 1)])
}

const PHASES: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// `1 - mean SSIM` over the four sub-images, with the gradient w.r.t. `pred` on request.
pub fn bayer_ssim_loss_with_grad(
    pred: &Plane,
    gt: &Plane,
    cfg: &SsimConfig,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let ps = bayer_subimages(pred)?;
    let gs = bayer_subimages(gt)?;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; pred.width * pred.height]);
    for (i, (p, g)) in ps.iter().zip(&gs).enumerate() {
        let (v, gr) = ssim_plane(p, g, cfg, want_grad)?;
        total += v;
        if let (Some(out), Some(gr)) = (grad.as_mut(), gr) {
            let (ox, oy) = PHASES[i];
            for y in 0..p.height {
                for x in 0..p.width {
                    // d(1 - mean)/d pixel = -grad / 4
                    out[(2 * y + oy) * pred.width + 2 * x + ox] = -gr[y * p.width + x] / 4.0;
                }
            }
        }
    }
    Ok((1.0 - total / 4.0, grad))
}

pub fn bayer_ssim_loss(pred: &Plane, gt: &Plane, cfg: &SsimConfig) -> Result<f64> {
    Ok(bayer_ssim_loss_with_grad(pred, gt, cfg, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_bggr_tiling() {
        let img = HdrImage::filled(4, 4, [0.1, 0.2, 0.3]);
        let m = bayer_mask(&img, BayerPattern::Bggr).unwrap();
        assert_eq!(m.plane.at(0, 0), 0.3);
        assert_eq!(m.plane.at(1, 0), 0.2);
        assert_eq!(m.plane.at(0, 1), 0.2);
        assert_eq!(m.plane.at(1, 1), 0.1);
        assert_eq!(m.plane.at(2, 2), 0.3);
    }

    #[test]
    fn masks_partition_the_grid() {
        for p in BayerPattern::ALL {
            let [r, g, b] = bayer_masks(6, 4, p);
            for i in 0..24 {
                assert_eq!(r.data[i] + g.data[i] + b.data[i], 1.0);
                assert_eq!(r.data[i] * g.data[i], 0.0);
                assert_eq!(r.data[i] * b.data[i], 0.0);
                assert_eq!(g.data[i] * b.data[i], 0.0);
            }
        }
    }

    #[test]
    fn rggb_red_sites() {
        let mut img = HdrImage::filled(6, 4, [1.0, 0.0, 0.0]);
        img.set_pixel(0, 0, [1.0, 0.0, 0.0]);
        let m = bayer_mask(&img, BayerPattern::Rggb).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                let want = if x % 2 == 0 && y % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(m.plane.at(x, y), want);
            }
        }
    }

    #[test]
    fn odd_dimensions_rejected() {
        let img = HdrImage::filled(3, 4, [0.0; 3]);
        assert!(bayer_mask(&img, BayerPattern::Rggb).is_err());
    }

    #[test]
    fn equals_mean_of_four_ssims() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SsimConfig::default();
        let mk = |rng: &mut ChaCha8Rng| Plane::new(24, 28, (0..24 * 28).map(|_| rng.random::<f64>()).collect()).unwrap();
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let sa = bayer_subimages(&a).unwrap();
        let sb = bayer_subimages(&b).unwrap();
        for s in &sa {
            assert_eq!((s.width, s.height), (12, 14));
        }
        let mean: f64 = sa.iter().zip(&sb).map(|(x, y)| ssim_plane(x, y, &cfg, false).unwrap().0).sum::<f64>() / 4.0;
        let loss = bayer_ssim_loss(&a, &b, &cfg).unwrap();
        assert!((loss - (1.0 - mean)).abs() < 1e-12);
        assert_eq!(bayer_ssim_loss(&a, &a, &cfg).unwrap(), 0.0);
    }
}
