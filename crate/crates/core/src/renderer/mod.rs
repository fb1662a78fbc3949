//! Image formation: hard rasterization for supervision targets and a
//! differentiable soft projector for optimization.

pub mod maps;
pub mod raster;
pub mod soft;

pub use maps::{
    normals_to_rgb, read_pfm, read_ppm, scalar_to_rgb, write_pfm, write_ppm, SupervisionMaps,
};
pub use raster::{project_keypoints, rasterize};
pub use soft::{soft_project, soft_project_with_grads, ProjectorParams, SoftGrads, SoftRender};
