//! Procedural object shapes: six classes of analytic signed distance fields
//! with randomized dimensions, sized so any sampled shape fits inside a ball
//! of radius 0.37 around its own origin.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{sdf_to_mesh, SdfGrid, TriMesh};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeClass {
    Sphere,
    Box,
    Cylinder,
    Capsule,
    Torus,
    UnionTwo,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 6] = [
        ShapeClass::Sphere,
        ShapeClass::Box,
        ShapeClass::Cylinder,
        ShapeClass::Capsule,
        ShapeClass::Torus,
        ShapeClass::UnionTwo,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidShapeClass(format!("class index {i} out of range 0..6")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Box => "box",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Capsule => "capsule",
            ShapeClass::Torus => "torus",
            ShapeClass::UnionTwo => "union_two",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sphere" => Ok(ShapeClass::Sphere),
            "box" => Ok(ShapeClass::Box),
            "cylinder" => Ok(ShapeClass::Cylinder),
            "capsule" => Ok(ShapeClass::Capsule),
            "torus" => Ok(ShapeClass::Torus),
            "union_two" | "union-two" | "union" => Ok(ShapeClass::UnionTwo),
            other => Err(Error::InvalidShapeClass(format!("unknown class {other:?}"))),
        }
    }

    /// A uniformly chosen class different from `self`.
    pub fn decoy(self, rng: &mut ChaCha8Rng) -> ShapeClass {
        let others: Vec<ShapeClass> = Self::ALL.iter().copied().filter(|&c| c != self).collect();
        others[rng.gen_range(0..others.len())]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ObjectShape {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
    /// Capped cylinder along the local y axis.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    /// Capsule along the local y axis; `half_length` excludes the end caps.
    Capsule {
        radius: f64,
        half_length: f64,
    },
    /// Torus in the local xz plane.
    Torus {
        major: f64,
        minor: f64,
    },
    UnionTwo {
        first: std::boxed::Box<ObjectShape>,
        second: std::boxed::Box<ObjectShape>,
        offset: [f64; 3],
    },
}

impl ObjectShape {
    pub fn class(&self) -> ShapeClass {
        match self {
            ObjectShape::Sphere { .. } => ShapeClass::Sphere,
            ObjectShape::Box { .. } => ShapeClass::Box,
            ObjectShape::Cylinder { .. } => ShapeClass::Cylinder,
            ObjectShape::Capsule { .. } => ShapeClass::Capsule,
            ObjectShape::Torus { .. } => ShapeClass::Torus,
            ObjectShape::UnionTwo { .. } => ShapeClass::UnionTwo,
        }
    }

    /// Random dimensions for `class`, every length multiplied by `size`.
    pub fn sample_scaled(class: ShapeClass, rng: &mut ChaCha8Rng, size: f64) -> ObjectShape {
        match class {
            ShapeClass::Sphere => ObjectShape::Sphere {
                radius: size * rng.gen_range(0.24..0.32),
            },
            ShapeClass::Box => ObjectShape::Box {
                half_extents: [
                    size * rng.gen_range(0.13..0.20),
                    size * rng.gen_range(0.13..0.20),
                    size * rng.gen_range(0.13..0.20),
                ],
            },
            ShapeClass::Cylinder => ObjectShape::Cylinder {
                radius: size * rng.gen_range(0.14..0.20),
                half_height: size * rng.gen_range(0.17..0.25),
            },
            ShapeClass::Capsule => ObjectShape::Capsule {
                radius: size * rng.gen_range(0.12..0.17),
                half_length: size * rng.gen_range(0.12..0.19),
            },
            ShapeClass::Torus => ObjectShape::Torus {
                major: size * rng.gen_range(0.17..0.23),
                minor: size * rng.gen_range(0.07..0.11),
            },
            ShapeClass::UnionTwo => {
                let sub = 0.72 * size;
                let class_a = ShapeClass::ALL[rng.gen_range(0..5)];
                let class_b = ShapeClass::ALL[rng.gen_range(0..5)];
                let first = Self::sample_scaled(class_a, rng, sub);
                let second = Self::sample_scaled(class_b, rng, sub);
                let dir = random_unit(rng);
                let offset = dir * (size * rng.gen_range(0.06..0.11));
                ObjectShape::UnionTwo {
                    first: std::boxed::Box::new(first),
                    second: std::boxed::Box::new(second),
                    offset: [offset.x, offset.y, offset.z],
                }
            }
        }
    }

    pub fn sample(class: ShapeClass, rng: &mut ChaCha8Rng) -> ObjectShape {
        Self::sample_scaled(class, rng, 1.0)
    }

    /// Signed distance in the shape's own frame; exact outside the surface,
    /// negative inside.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            ObjectShape::Sphere { radius } => p.norm() - radius,
            ObjectShape::Box { half_extents } => {
                let q = Vec3::new(
                    p.x.abs() - half_extents[0],
                    p.y.abs() - half_extents[1],
                    p.z.abs() - half_extents[2],
                );
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
                outside.norm() + q.x.max(q.y).max(q.z).min(0.0)
            }
            ObjectShape::Cylinder { radius, half_height } => {
                let dr = (p.x * p.x + p.z * p.z).sqrt() - radius;
                let dy = p.y.abs() - half_height;
                let inside = dr.max(dy).min(0.0);
                let outside = (dr.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
                inside + outside
            }
            ObjectShape::Capsule { radius, half_length } => {
                let y = p.y.clamp(-half_length, *half_length);
                Vec3::new(p.x, p.y - y, p.z).norm() - radius
            }
            ObjectShape::Torus { major, minor } => {
                let ring = (p.x * p.x + p.z * p.z).sqrt() - major;
                (ring * ring + p.y * p.y).sqrt() - minor
            }
            ObjectShape::UnionTwo { first, second, offset } => {
                let shifted = p - Vec3::new(offset[0], offset[1], offset[2]);
                first.sdf(p).min(second.sdf(&shifted))
            }
        }
    }

    /// Radius of a ball around the local origin guaranteed to contain the
    /// shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ObjectShape::Sphere { radius } => *radius,
            ObjectShape::Box { half_extents } => {
                Vec3::new(half_extents[0], half_extents[1], half_extents[2]).norm()
            }
            ObjectShape::Cylinder { radius, half_height } => {
                (radius * radius + half_height * half_height).sqrt()
            }
            ObjectShape::Capsule { radius, half_length } => radius + half_length,
            ObjectShape::Torus { major, minor } => major + minor,
            ObjectShape::UnionTwo { first, second, offset } => {
                let off = Vec3::new(offset[0], offset[1], offset[2]).norm();
                first.bounding_radius().max(off + second.bounding_radius())
            }
        }
    }

    /// Closed-form volume where one exists (the two-primitive union may
    /// overlap itself).
    pub fn analytic_volume(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match self {
            ObjectShape::Sphere { radius } => Some(4.0 / 3.0 * PI * radius.powi(3)),
            ObjectShape::Box { half_extents } => {
                Some(8.0 * half_extents[0] * half_extents[1] * half_extents[2])
            }
            ObjectShape::Cylinder { radius, half_height } => {
                Some(2.0 * PI * radius * radius * half_height)
            }
            ObjectShape::Capsule { radius, half_length } => Some(
                2.0 * PI * radius * radius * half_length + 4.0 / 3.0 * PI * radius.powi(3),
            ),
            ObjectShape::Torus { major, minor } => Some(2.0 * PI * PI * major * minor * minor),
            ObjectShape::UnionTwo { .. } => None,
        }
    }

    /// Marching-cubes mesh of the zero level set in the shape's own frame.
    pub fn mesh(&self, resolution: usize) -> Result<TriMesh> {
        let b = self.bounding_radius() * 1.1 + 0.05;
        let grid = SdfGrid::sampled(
            [resolution; 3],
            Vec3::new(-b, -b, -b),
            Vec3::new(b, b, b),
            |p| self.sdf(&p),
        )?;
        sdf_to_mesh(&grid)
    }
}

pub(crate) fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
