//! Core 3D types: similarity transforms, triangle meshes, SDF grids, and the
//! conversions between them.

pub mod marching_cubes;
pub mod mesh;
pub mod posed;
pub mod sdf;
pub mod transform;
pub mod voxelize;

pub use marching_cubes::sdf_to_mesh;
pub use mesh::TriMesh;
pub use posed::{PosedEval, PosedSdf, TransformGrad};
pub use sdf::{SdfGrid, Stencil};
pub use transform::SimilarityTransform;
pub use voxelize::{mesh_to_sdf, GridSpec};
