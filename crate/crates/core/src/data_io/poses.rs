//! `poses.json`: shared intrinsics plus one world-to-camera matrix per frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3};
use crate::raster::camera::orthonormality_error;
use crate::raster::Camera;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFrame {
    pub file: String,
    pub world_to_camera: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub fx: f64,
    pub fy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<PoseFrame>,
}

/// Largest orthonormality defect that is silently repaired.
pub const REORTHONORMALIZE_TOL: f64 = 1e-4;

/// Nearest rotation by polar iteration, `R <- (R + R^-T) / 2`.
fn orthonormalize(r: &Mat3) -> Mat3 {
    let mut q = *r;
    for _ in 0..8 {
        let det = math::det3(&q);
        // inverse transpose = cofactor matrix / det
        let mut cof = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                cof[i][j] = q[i1][j1] * q[i2][j2] - q[i1][j2] * q[i2][j1];
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                q[i][j] = 0.5 * (q[i][j] + cof[i][j] / det);
            }
        }
    }
    q
}

impl PoseFile {
    pub fn cameras(&self) -> Result<Vec<(String, Camera)>> {
        self.frames
            .iter()
            .enumerate()
            .map(|(i, f)| Ok((f.file.clone(), self.camera(f).map_err(|e| Error::config(format!("frame {i}: {e}")))?)))
            .collect()
    }

    fn camera(&self, frame: &PoseFrame) -> Result<Camera> {
        let m = &frame.world_to_camera;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite matrix entry"));
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::config(format!("last row must be [0, 0, 0, 1], got {:?}", m[3])));
        }
        let mut r: Mat3 = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        let det = math::det3(&r);
        if det.abs() < 1e-12 {
            return Err(Error::config("rotation block is singular"));
        }
        if det < 0.0 {
            return Err(Error::config("rotation block is a reflection (determinant < 0)"));
        }
        let err = orthonormality_error(&r);
        if err > REORTHONORMALIZE_TOL {
            return Err(Error::config(format!("rotation is not orthonormal (defect {err:.2e})")));
        }
        // leave exactly representable rotations bit-for-bit intact
        if err > 1e-12 {
            r = orthonormalize(&r);
        }
        Camera::new(
            self.fx,
            self.fy,
            self.cx.unwrap_or(self.width as f64 / 2.0),
            self.cy.unwrap_or(self.height as f64 / 2.0),
            self.width,
            self.height,
            r,
            [m[0][3], m[1][3], m[2][3]],
        )
    }

    /// Builds a pose file; every camera must share intrinsics.
    pub fn from_cameras(frames: &[(String, Camera)]) -> Result<Self> {
        let first = &frames.first().ok_or_else(|| Error::config("no cameras"))?.1;
        for (name, c) in frames {
            if (c.fx, c.fy, c.cx, c.cy, c.width, c.height) != (first.fx, first.fy, first.cx, first.cy, first.width, first.height) {
                return Err(Error::config(format!("camera `{name}` has different intrinsics")));
            }
        }
        Ok(Self {
            fx: first.fx,
            fy: first.fy,
            cx: Some(first.cx),
            cy: Some(first.cy),
            width: first.width,
            height: first.height,
            frames: frames
                .iter()
                .map(|(file, c)| PoseFrame {
                    file: file.clone(),
                    world_to_camera: c.matrix(),
                })
                .collect(),
        })
    }
}

pub fn parse_pose_file(text: &str, origin: &Path) -> Result<PoseFile> {
    serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn load_pose_file(path: &Path) -> Result<Vec<(String, Camera)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_file(&text, path)?
        .cameras()
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_pose_file(frames: &[(String, Camera)], path: &Path) -> Result<()> {
    let file = PoseFile::from_cameras(frames)?;
    let json = serde_json::to_string_pretty(&file).expect("poses serialize");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: &str = r#"{"fx": 100, "fy": 100, "width": 64, "height": 64,
        "frames": [{"file": "a.pfm", "world_to_camera": [[1,0,0,0],[0,1,0,0],[0,0,1,2],[0,0,0,1]]}]}"#;

    #[test]
    fn default_principal_point_is_center() {
        let cams = parse_pose_file(IDENTITY, Path::new("p")).unwrap().cameras().unwrap();
        assert_eq!(cams[0].1.cx, 32.0);
        assert_eq!(cams[0].1.cy, 32.0);
        assert_eq!(cams[0].1.translation, [0.0, 0.0, 2.0]);
    }

    #[test]
    fn reflection_and_skew_are_rejected() {
        let flip = IDENTITY.replace("[0,0,1,2]", "[0,0,-1,2]");
        assert!(parse_pose_file(&flip, Path::new("p")).unwrap().cameras().is_err());
        let skew = IDENTITY.replace("[1,0,0,0]", "[1,0.01,0,0]");
        assert!(parse_pose_file(&skew, Path::new("p")).unwrap().cameras().is_err());
    }

    #[test]
    fn small_defects_are_repaired() {
        let nudged = IDENTITY.replace("[1,0,0,0]", "[1,0.00002,0,0]");
        let cams = parse_pose_file(&nudged, Path::new("p")).unwrap().cameras().unwrap();
        assert!(orthonormality_error(&cams[0].1.rotation) < 1e-12);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_pose_file("{\"fx\": 1,\n \"fy\": }", Path::new("p")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let missing = parse_pose_file(r#"{"fx": 1, "fy": 1, "width": 2, "height": 2}"#, Path::new("p"));
        assert!(missing.is_err());
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.json");
        let frames: Vec<(String, Camera)> = (0..4)
            .map(|i| {
                let a = i as f64 * 0.7;
                let cam = Camera::look_at([3.0 * a.cos(), 0.5, 3.0 * a.sin()], [0.0; 3], [0.0, 1.0, 0.0], 80.0, 80.0, 64, 48)
                    .unwrap();
                (format!("v{i}.pfm"), cam)
            })
            .collect();
        write_pose_file(&frames, &path).unwrap();
        let back = load_pose_file(&path).unwrap();
        assert_eq!(back.len(), 4);
        for ((n1, c1), (n2, c2)) in frames.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(c1, c2);
        }
    }
}
