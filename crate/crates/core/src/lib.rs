//! Desk-scale testbench for guided 3D reconstruction of hand-object scenes.
//!
//! The pipeline generates a synthetic hand-proxy + object scene, misaligns
//! its canonical frames, registers them back with similarity-transform ICP,
//! and then runs a rectified-flow sampler over an SDF-grid latent whose
//! velocity field is steered at inference time by rendered 2D losses and 3D
//! interaction constraints, while the hand and object similarity transforms
//! are optimized in the loop.

pub mod error;
pub mod flow;
pub mod guidance;
pub mod geometry;
pub mod registration;
pub mod renderer;
pub mod scene;
pub mod spatial;

pub use error::{Error, Result};

/// 3-vector used for points, directions, and translations (scene units; 1 unit = 1 cm).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix, mostly rotations.
pub type Mat3 = nalgebra::Matrix3<f64>;
