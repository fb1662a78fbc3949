//! Similarity transforms: scale, rotation, translation (7 DoF).

use crate::{Error, Mat3, Result, Vec3};
use serde::{Deserialize, Serialize};

const ORTHO_TOL: f64 = 1e-6;

/// `p -> s * R * p + t` with `s > 0` and `R` in SO(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SimilarityTransform {
    /// Validates the invariants: positive scale, orthonormal rotation, det +1.
    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "similarity scale must be positive and finite, got {scale}"
            )));
        }
        let rtr = rotation.transpose() * rotation;
        let ortho_err = (rtr - Mat3::identity()).norm();
        if ortho_err > ORTHO_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "rotation not orthonormal (|R^T R - I| = {ortho_err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(Self { scale, rotation, translation })
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    /// Rotation from an axis-angle vector (angle = |axis_angle|, exp map).
    pub fn from_parts(scale: f64, axis_angle: Vec3, translation: Vec3) -> Result<Self> {
        let rotation = nalgebra::Rotation3::from_scaled_axis(axis_angle);
        Self::new(scale, rotation.into_inner(), translation)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// `apply(compose(A, B), p) == apply(A, apply(B, p))`.
    pub fn compose(&self, inner: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * inner.scale,
            rotation: self.rotation * inner.rotation,
            translation: self.scale * (self.rotation * inner.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.scale;
        let inv_rot = self.rotation.transpose();
        SimilarityTransform {
            scale: inv_scale,
            rotation: inv_rot,
            translation: -inv_scale * (inv_rot * self.translation),
        }
    }

    /// Additive update in the 7-parameter tangent space: scale moves by
    /// `exp(d_log_scale)`, the rotation is left-multiplied by
    /// `exp([d_rotation]x)`, and the translation shifts by `d_translation`.
    pub fn stepped(&self, d_log_scale: f64, d_rotation: Vec3, d_translation: Vec3) -> Result<Self> {
        let rot = nalgebra::Rotation3::from_scaled_axis(d_rotation).into_inner() * self.rotation;
        Self::new(
            (self.scale.ln() + d_log_scale).exp(),
            Self::orthonormalize(&rot),
            self.translation + d_translation,
        )
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &SimilarityTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }

    /// Projects a nearly-orthonormal matrix back onto SO(3) (polar factor via SVD).
    pub fn orthonormalize(m: &Mat3) -> Mat3 {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // flip the axis of least singular value
            let mut u_fixed = u;
            u_fixed.set_column(2, &(-u.column(2)));
            r = u_fixed * v_t;
        }
        r
    }
}
