//! Posed multi-view datasets and their on-disk layout.
//!
//! ```text
//! <dir>/dataset.json          supervision, white level, bounds, RAW levels
//! <dir>/train/poses.json      + one image per frame
//! <dir>/test/poses.json
//! <dir>/gt_cloud.nhgc         ground truth, when synthesized
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pfm::{read_hdr_image, write_hdr_image};
use super::poses::{load_pose_file, write_pose_file};
use super::raw::{read_raw_image, write_raw_image, RawMeta};
use crate::error::{Error, Result};
use crate::photometry::{BayerImage, BayerPattern, HdrImage};
use crate::raster::Camera;
use crate::scene::Aabb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    HdrRgb,
    BayerRaw,
}

impl std::fmt::Display for Supervision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Supervision::HdrRgb => "hdr_rgb",
            Supervision::BayerRaw => "bayer_raw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewImage {
    Rgb(HdrImage),
    Bayer(BayerImage),
}

impl ViewImage {
    pub fn width(&self) -> usize {
        match self {
            ViewImage::Rgb(i) => i.width(),
            ViewImage::Bayer(b) => b.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            ViewImage::Rgb(i) => i.height(),
            ViewImage::Bayer(b) => b.height(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    pub camera: Camera,
    pub image: ViewImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split `{other}` (expected train or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<View>,
    pub test: Vec<View>,
    /// Radiance that was mapped to 1.0 when the images were normalized.
    pub white_level: f64,
    pub supervision: Supervision,
    pub bounds: Aabb,
    /// Sensor levels of mosaic datasets.
    pub raw: Option<RawMeta>,
    /// Rendered from a known scene rather than captured.
    pub synthetic: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    supervision: Supervision,
    white_level: f64,
    bounds: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<RawMeta>,
    #[serde(default)]
    synthetic: bool,
}

pub const DATASET_FILE: &str = "dataset.json";
pub const POSES_FILE: &str = "poses.json";
pub const GT_CLOUD_FILE: &str = "gt_cloud.nhgc";

impl Dataset {
    pub fn views(&self, split: Split) -> &[View] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn pattern(&self) -> Option<BayerPattern> {
        self.raw.map(|r| r.pattern)
    }

    /// Checks the shared-resolution, shared-mode and white-level invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.white_level > 0.0 && self.white_level.is_finite()) {
            return Err(Error::config(format!("white level must be positive, got {}", self.white_level)));
        }
        self.bounds.validate()?;
        let first = self
            .train
            .first()
            .ok_or_else(|| Error::config("dataset has no training views"))?;
        let (w, h) = (first.camera.width, first.camera.height);
        for v in self.train.iter().chain(&self.test) {
            if v.camera.width != w || v.camera.height != h || v.image.width() != w || v.image.height() != h {
                return Err(Error::ShapeMismatch(format!(
                    "view `{}` is {}x{}, dataset is {w}x{h}",
                    v.name,
                    v.image.width(),
                    v.image.height()
                )));
            }
            match (&v.image, self.supervision) {
                (ViewImage::Rgb(_), Supervision::HdrRgb) => {}
                (ViewImage::Bayer(b), Supervision::BayerRaw) if Some(b.pattern) == self.pattern() => {}
                _ => {
                    return Err(Error::config(format!(
                        "view `{}` does not match {} supervision",
                        v.name, self.supervision
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let manifest = Manifest {
            supervision: self.supervision,
            white_level: self.white_level,
            bounds: self.bounds,
            raw: self.raw,
            synthetic: self.synthetic,
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(DATASET_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        for split in [Split::Train, Split::Test] {
            let sub = dir.join(split.dir_name());
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            let views = self.views(split);
            let mut frames = Vec::with_capacity(views.len());
            for v in views {
                match &v.image {
                    ViewImage::Rgb(img) => {
                        let file = format!("{}.pfm", v.name);
                        write_hdr_image(img, &sub.join(&file))?;
                        frames.push((file, v.camera.clone()));
                    }
                    ViewImage::Bayer(b) => {
                        let file = format!("{}.pgm", v.name);
                        write_raw_image(b, self.raw.as_ref().expect("validated"), &sub.join(&file))?;
                        frames.push((file, v.camera.clone()));
                    }
                }
            }
            if !frames.is_empty() {
                write_pose_file(&frames, &sub.join(POSES_FILE))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DATASET_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if manifest.supervision == Supervision::BayerRaw && manifest.raw.is_none() {
            return Err(Error::format(&path, "mosaic dataset without RAW levels"));
        }
        let load_split = |split: Split| -> Result<Vec<View>> {
            let sub = dir.join(split.dir_name());
            let poses = sub.join(POSES_FILE);
            if !poses.exists() {
                return Ok(Vec::new());
            }
            load_pose_file(&poses)?
                .into_iter()
                .map(|(file, camera)| {
                    let img_path = sub.join(&file);
                    let image = match manifest.supervision {
                        Supervision::HdrRgb => ViewImage::Rgb(read_hdr_image(&img_path)?),
                        Supervision::BayerRaw => ViewImage::Bayer(read_raw_image(&img_path)?),
                    };
                    let name = Path::new(&file)
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or(file.clone());
                    Ok(View { name, camera, image })
                })
                .collect()
        };
        let dataset = Dataset {
            train: load_split(Split::Train)?,
            test: load_split(Split::Test)?,
            white_level: manifest.white_level,
            supervision: manifest.supervision,
            bounds: manifest.bounds,
            raw: manifest.raw,
            synthetic: manifest.synthetic,
        };
        dataset.validate().map_err(|e| Error::format(dir, e.to_string()))?;
        Ok(dataset)
    }
}
