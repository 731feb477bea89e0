//! Differentiable splatting: projection, tiled compositing, the analytic
//! backward pass and a brute-force reference renderer.

pub mod backward;
pub mod camera;
pub mod project;
pub mod reference;
pub mod tiled;

pub use backward::{render_backward, CloudGrad};
pub use camera::Camera;
pub use project::{kernel_weight, project_gaussian, GaussianGrad, Splat2D, LOW_PASS};
pub use reference::render_reference;
pub use tiled::{render, render_f64, RenderOptions, RenderOutput, EARLY_OUT_T, TILE_SIZE};
pub(crate) use tiled::Frame;
