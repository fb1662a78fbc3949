//! Articulated-pose hand proxy: a rounded palm box and five capsule-chain
//! fingers, frozen into a single watertight mesh with 21 labeled keypoints.
//!
//! Hand-local frame: palm center at the origin, fingers extending toward +z,
//! palm facing -y (the grip side), thumb on the +x side. Keypoint order is
//! wrist first, then thumb/index/middle/ring/pinky, each as four joint
//! centers from knuckle to fingertip.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{sdf_to_mesh, SdfGrid, TriMesh};
use crate::{Mat3, Result, Vec3};

pub const KEYPOINT_COUNT: usize = 21;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Capsule {
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
}

impl Capsule {
    fn sdf(&self, p: &Vec3) -> f64 {
        let axis = self.end - self.start;
        let len_sq = axis.norm_squared();
        let t = if len_sq > 0.0 {
            ((p - self.start).dot(&axis) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (self.start + axis * t)).norm() - self.radius
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandProxy {
    pub palm_half: Vec3,
    pub palm_round: f64,
    pub capsules: Vec<Capsule>,
    /// 21 joint centers in the hand-local frame.
    pub keypoints: Vec<Vec3>,
}

fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

struct FingerSpec {
    base: Vec3,
    /// Frame columns: curl axis, palm-normal-ish, pointing direction.
    frame: Mat3,
    lengths: [f64; 3],
    radius: f64,
    curl: [f64; 3],
    abduction: f64,
}

impl FingerSpec {
    /// Joint centers: base, then one per segment end.
    fn joints(&self) -> [Vec3; 4] {
        let mut joints = [self.base; 4];
        let mut bent = 0.0;
        let mut cursor = self.base;
        for k in 0..3 {
            bent += self.curl[k];
            let dir_local = rot_y(self.abduction) * rot_x(bent) * Vec3::new(0.0, 0.0, 1.0);
            let dir = self.frame * dir_local;
            cursor += dir * self.lengths[k];
            joints[k + 1] = cursor;
        }
        joints
    }
}

impl HandProxy {
    /// Randomized grasp-curled hand. The overall span stays within about
    /// 0.45 units of the palm center.
    pub fn sample(rng: &mut ChaCha8Rng) -> HandProxy {
        let palm_half = Vec3::new(
            rng.gen_range(0.145..0.165),
            rng.gen_range(0.032..0.040),
            rng.gen_range(0.120..0.140),
        );
        let palm_round = 0.025;
        let grip = rng.gen_range(0.70..1.00);

        let mut capsules = Vec::new();
        let mut keypoints = vec![Vec3::new(0.0, 0.0, -palm_half.z + 0.02)];

        let mut fingers = Vec::new();

        let thumb_dir = Vec3::new(0.72, -0.18, 0.60).normalize();
        let thumb_axis = Vec3::new(0.0, 1.0, 0.0).cross(&thumb_dir).normalize();
        let thumb_normal = thumb_dir.cross(&thumb_axis);
        fingers.push(FingerSpec {
            base: Vec3::new(palm_half.x - 0.01, -0.01, 0.02),
            frame: Mat3::from_columns(&[thumb_axis, thumb_normal, thumb_dir]),
            lengths: [0.075, 0.055, 0.045],
            radius: 0.046,
            curl: [
                grip * rng.gen_range(0.38..0.50),
                grip * rng.gen_range(0.45..0.60),
                grip * rng.gen_range(0.45..0.60),
            ],
            abduction: rng.gen_range(-0.08..0.08),
        });

        let spreads = [0.105_f64, 0.036, -0.036, -0.105];
        let len_scales = [1.00_f64, 1.07, 0.99, 0.80];
        let radii = [0.041_f64, 0.040, 0.038, 0.034];
        let abductions = [0.10_f64, 0.02, -0.06, -0.14];
        for f in 0..4 {
            fingers.push(FingerSpec {
                base: Vec3::new(spreads[f], 0.0, palm_half.z - 0.005),
                frame: Mat3::identity(),
                lengths: [
                    0.095 * len_scales[f],
                    0.062 * len_scales[f],
                    0.047 * len_scales[f],
                ],
                radius: radii[f],
                curl: [
                    grip * rng.gen_range(0.55..0.75),
                    grip * rng.gen_range(0.65..0.85),
                    grip * rng.gen_range(0.55..0.75),
                ],
                abduction: abductions[f] + rng.gen_range(-0.05..0.05),
            });
        }

        for finger in &fingers {
            let joints = finger.joints();
            for k in 0..3 {
                capsules.push(Capsule {
                    start: joints[k],
                    end: joints[k + 1],
                    radius: finger.radius,
                });
            }
            keypoints.extend_from_slice(&joints);
        }

        HandProxy { palm_half, palm_round, capsules, keypoints }
    }

    /// Union signed distance of palm and finger capsules, hand-local frame.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        let q = Vec3::new(
            p.x.abs() - (self.palm_half.x - self.palm_round),
            p.y.abs() - (self.palm_half.y - self.palm_round),
            p.z.abs() - (self.palm_half.z - self.palm_round),
        );
        let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
        let mut best = outside.norm() + q.x.max(q.y).max(q.z).min(0.0) - self.palm_round;
        for capsule in &self.capsules {
            best = best.min(capsule.sdf(p));
        }
        best
    }

    /// Axis-aligned bounds of the flesh (not just keypoints), hand-local.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = -self.palm_half;
        let mut hi = self.palm_half;
        for capsule in &self.capsules {
            for endpoint in [&capsule.start, &capsule.end] {
                for a in 0..3 {
                    lo[a] = lo[a].min(endpoint[a] - capsule.radius);
                    hi[a] = hi[a].max(endpoint[a] + capsule.radius);
                }
            }
        }
        (lo, hi)
    }

    pub fn mesh(&self, resolution: usize) -> Result<TriMesh> {
        let (lo, hi) = self.bounds();
        let pad = 3.0 * (hi - lo).max() / resolution as f64;
        let margin = Vec3::new(pad, pad, pad);
        let grid = SdfGrid::sampled(
            [resolution; 3],
            lo - margin,
            hi + margin,
            |p| self.sdf(&p),
        )?;
        sdf_to_mesh(&grid)
    }
}
