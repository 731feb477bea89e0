use super::image::{BayerImage, HdrImage};
use super::ssim::reflect;

// Bilinear interpolation kernels applied to each masked channel. Mirror
// padding preserves the 2x2 phase, so the same weights apply at the borders.
const KERNEL_G: [[f64; 3]; 3] = [[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]];
const KERNEL_RB: [[f64; 3]; 3] = [[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]];

/// Fills the two missing channels at every site by bilinear interpolation.
pub fn demosaic_bilinear(bayer: &BayerImage) -> HdrImage {
    let (w, h) = (bayer.width(), bayer.height());
    let pattern = bayer.pattern;
    let plane = &bayer.plane;
    let mut out = HdrImage::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let mut rgb = [0.0; 3];
            for dy in 0..3 {
                for dx in 0..3 {
                    let sx = reflect(x as isize + dx as isize - 1, w);
                    let sy = reflect(y as isize + dy as isize - 1, h);
                    let c = pattern.channel_at(sx, sy);
                    let k = if c == 1 { KERNEL_G[dy][dx] } else { KERNEL_RB[dy][dx] };
                    rgb[c] += k * plane.at(sx, sy);
                }
            }
            out.set_pixel(x, y, rgb);
        }
    }
    out
}
