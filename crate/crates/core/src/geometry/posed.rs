//! Evaluation of a canonical SDF under a similarity transform, with gradients
//! for the query point, the transform parameters, and the grid cells.
//!
//! For a canonical field `f` posed by `T = (s, R, t)`, the scene-space value
//! at `p` is `s * f(q)` with `q = T^{-1} p`. Distances scale with `s`, so the
//! posed field remains a signed distance field.

use crate::geometry::sdf::SdfGrid;
use crate::geometry::transform::SimilarityTransform;
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct PosedSdf<'a> {
    pub sdf: &'a SdfGrid,
    pub transform: SimilarityTransform,
}

/// Value and first derivatives of one posed-SDF evaluation.
///
/// `grad_rot` is taken with respect to an axis-angle increment `w` applied in
/// scene space, `R(w) = exp([w]x) * R`, evaluated at `w = 0`. `grad_cells`
/// pairs grid cell indices with `d value / d cell`.
#[derive(Debug, Clone, Copy)]
pub struct PosedEval {
    pub value: f64,
    pub grad_p: Vec3,
    pub grad_t: Vec3,
    pub grad_rot: Vec3,
    pub grad_log_s: f64,
    pub grad_cells: [(usize, f64); 8],
    pub clamped: bool,
}

/// Accumulated gradient with respect to the 7 transform parameters, in the
/// same tangent space as [`SimilarityTransform::stepped`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransformGrad {
    pub log_scale: f64,
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl TransformGrad {
    /// Adds `weight * d value / d params` from one posed evaluation.
    pub fn add_eval(&mut self, e: &PosedEval, weight: f64) {
        self.log_scale += weight * e.grad_log_s;
        self.rotation += weight * e.grad_rot;
        self.translation += weight * e.grad_t;
    }

    pub fn add(&mut self, other: &TransformGrad) {
        self.log_scale += other.log_scale;
        self.rotation += other.rotation;
        self.translation += other.translation;
    }

    pub fn scaled(&self, k: f64) -> TransformGrad {
        TransformGrad {
            log_scale: k * self.log_scale,
            rotation: k * self.rotation,
            translation: k * self.translation,
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.log_scale,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> TransformGrad {
        TransformGrad {
            log_scale: a[0],
            rotation: Vec3::new(a[1], a[2], a[3]),
            translation: Vec3::new(a[4], a[5], a[6]),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.log_scale * self.log_scale
            + self.rotation.norm_squared()
            + self.translation.norm_squared())
        .sqrt()
    }
}

impl<'a> PosedSdf<'a> {
    pub fn new(sdf: &'a SdfGrid, transform: SimilarityTransform) -> Self {
        Self { sdf, transform }
    }

    pub fn value(&self, p: Vec3) -> f64 {
        let q = self.transform.inverse().apply(p);
        self.transform.scale * self.sdf.sample(q)
    }

    /// Spatial gradient in scene coordinates: `R * grad f(q)`.
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let q = self.transform.inverse().apply(p);
        self.transform.rotation * self.sdf.gradient(q)
    }

    pub fn eval(&self, p: Vec3) -> PosedEval {
        let t = &self.transform;
        let q = t.inverse().apply(p);
        let st = self.sdf.stencil(q);
        let (f, grad_f) = self.sdf.sample_and_gradient(q);
        let rot_grad_f = t.rotation * grad_f;
        let mut grad_cells = self.sdf.stencil_weights(&st);
        for cell in &mut grad_cells {
            cell.1 *= t.scale;
        }
        PosedEval {
            value: t.scale * f,
            grad_p: rot_grad_f,
            grad_t: -rot_grad_f,
            grad_rot: -(p - t.translation).cross(&rot_grad_f),
            grad_log_s: t.scale * (f - grad_f.dot(&q)),
            grad_cells,
            clamped: st.clamped.iter().any(|&c| c),
        }
    }
}
