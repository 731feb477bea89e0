use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};

/// Pinhole camera looking down +z in its own frame (x right, y down).
///
/// Pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Vec3,
    pub near: f64,
}

pub const DEFAULT_NEAR: f64 = 0.01;

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, rotation: Mat3, translation: Vec3) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
            near: DEFAULT_NEAR,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::config(format!("focal lengths must be positive, got {} {}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("camera resolution must be at least 1x1"));
        }
        if !(self.near > 0.0) {
            return Err(Error::config("near plane must be positive"));
        }
        if orthonormality_error(&self.rotation) > 1e-6 || math::det3(&self.rotation) < 0.0 {
            return Err(Error::config("camera rotation is not a proper rotation"));
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`; `up` is the approximate world up vector.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fx: f64, fy: f64, width: usize, height: usize) -> Result<Self> {
        let forward = normalize(math::sub(target, eye))?;
        let right = normalize(cross(forward, up))?;
        // image y points down
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = math::scale(math::mat_vec(&rotation, eye), -1.0);
        Self::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height, rotation, translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        math::scale(math::mat_t_vec(&self.rotation, self.translation), -1.0)
    }

    #[inline]
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    /// Row-major 4x4 world-to-camera matrix.
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

pub fn orthonormality_error(r: &Mat3) -> f64 {
    let rtr = math::mat_mul(&math::transpose(r), r);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((rtr[i][j] - want).abs());
        }
    }
    worst
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: Vec3) -> Result<Vec3> {
    let n = math::norm(v);
    if !(n > 1e-12) {
        return Err(Error::config("degenerate camera orientation"));
    }
    Ok(math::scale(v, 1.0 / n))
}
