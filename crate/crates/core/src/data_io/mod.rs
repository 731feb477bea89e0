//! Dataset files (PFM radiance, 16-bit PGM mosaics, pose manifests) and the
//! procedural scene generator.

pub mod dataset;
pub mod pfm;
pub mod poses;
pub mod raw;
pub mod synth;

pub use dataset::{Dataset, Split, Supervision, View, ViewImage, DATASET_FILE, GT_CLOUD_FILE, POSES_FILE};
pub use pfm::{read_hdr_image, write_hdr_image};
pub use poses::{load_pose_file, write_pose_file, PoseFile, PoseFrame};
pub use raw::{read_raw_image, write_raw_image, RawMeta};
pub use synth::{synthesize_dataset, CameraRing, SceneSpec, TOY_SCENE_JSON};
