//! Procedural hand-object scenes.
//!
//! A scene holds the ground-truth geometry in the image-aligned frame I,
//! plus two deliberately misaligned copies: the hand alone in frame H (as a
//! hand estimator would report it) and the hand-object union in frame U (as
//! a shape generator would, including vertex jitter and a shape blended
//! toward the wrong class). Downstream code has to undo exactly these
//! corruptions.

mod camera;
mod hand;
mod primitives;
mod supervision;

pub use camera::CameraModel;
pub use hand::{HandProxy, KEYPOINT_COUNT};
pub use primitives::{ObjectShape, ShapeClass};
pub use supervision::{
    make_supervision, make_supervision_set, save_supervision, PartialCloud, SupervisionSet,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::geometry::{sdf_to_mesh, SdfGrid, SimilarityTransform, TriMesh};
use crate::{Error, Mat3, Result, Vec3};

/// Hand-object contact margin: a grasp is valid when the one-sided
/// hand-to-object distance is at most this and the meshes do not overlap.
pub const CONTACT_MARGIN: f64 = 0.5;

const MAX_FRAME_ROTATION: f64 = 30.0 * std::f64::consts::PI / 180.0;
const FRAME_SCALE_RANGE: (f64, f64) = (0.7, 1.4);
/// Kept below the nominal 0.3-unit cap so the object stays inside the
/// [-1,1]^3 latent grid even at the smallest frame scale.
const MAX_FRAME_TRANSLATION: f64 = 0.26;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub shape_class: ShapeClass,
    pub corruption_level: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub focal: f64,
    pub object_mesh_resolution: usize,
    pub hand_mesh_resolution: usize,
    pub coarse_mesh_resolution: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            shape_class: ShapeClass::Sphere,
            corruption_level: 0.5,
            image_width: 64,
            image_height: 64,
            focal: 52.0,
            object_mesh_resolution: 64,
            hand_mesh_resolution: 56,
            coarse_mesh_resolution: 48,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.corruption_level) {
            return Err(Error::InvalidConfig(format!(
                "corruption_level must lie in [0,1], got {}",
                self.corruption_level
            )));
        }
        if self.image_width < 8 || self.image_height < 8 {
            return Err(Error::InvalidConfig("image size must be at least 8x8".into()));
        }
        if self.object_mesh_resolution < 8
            || self.hand_mesh_resolution < 8
            || self.coarse_mesh_resolution < 8
        {
            return Err(Error::InvalidConfig("mesh resolutions must be at least 8".into()));
        }
        if !(self.focal > 0.0) {
            return Err(Error::InvalidConfig("focal length must be positive".into()));
        }
        Ok(())
    }
}

/// The true frame transforms that corruption hid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameGt {
    pub t_u_to_i: SimilarityTransform,
    pub t_h_to_i: SimilarityTransform,
}

impl FrameGt {
    pub fn identity() -> Self {
        Self {
            t_u_to_i: SimilarityTransform::identity(),
            t_h_to_i: SimilarityTransform::identity(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub seed: u64,
    pub condition_id: usize,
    pub corruption_level: f64,
    pub object_shape: ObjectShape,
    pub decoy_shape: ObjectShape,
    /// Rigid placement of the object's own frame in I (unit scale).
    pub object_pose: SimilarityTransform,
    pub hand_proxy: HandProxy,
    /// Rigid placement of the hand-local frame in I (unit scale).
    pub hand_pose: SimilarityTransform,
    pub hand_gt: TriMesh,
    pub hand_keypoints_gt: Vec<Vec3>,
    pub object_gt: TriMesh,
    pub camera: CameraModel,
    pub hand_in_h: TriMesh,
    pub hand_keypoints_in_h: Vec<Vec3>,
    pub coarse_hoi_in_u: TriMesh,
    pub frame_gt: FrameGt,
}

impl SyntheticScene {
    /// Object signed distance at a frame-I point.
    pub fn object_sdf_world(&self, p: Vec3) -> f64 {
        self.object_shape.sdf(&self.object_pose.inverse().apply(p))
    }

    /// Decoy-shape signed distance at a frame-I point (same pose as the
    /// object).
    pub fn decoy_sdf_world(&self, p: Vec3) -> f64 {
        self.decoy_shape.sdf(&self.object_pose.inverse().apply(p))
    }

    /// Hand signed distance at a frame-I point.
    pub fn hand_sdf_world(&self, p: Vec3) -> f64 {
        self.hand_proxy.sdf(&self.hand_pose.inverse().apply(p))
    }

    /// Ground-truth object resampled into frame U on the canonical
    /// [-1,1]^3 latent grid: the clean endpoint the flow should reach.
    pub fn latent_target(&self, resolution: usize) -> SdfGrid {
        let t = &self.frame_gt.t_u_to_i;
        let inv_scale = 1.0 / t.scale;
        SdfGrid::from_fn(resolution, |q| inv_scale * self.object_sdf_world(t.apply(q)))
    }

    /// Decoy shape on the same latent grid; corruption blends toward this.
    pub fn latent_decoy(&self, resolution: usize) -> SdfGrid {
        let t = &self.frame_gt.t_u_to_i;
        let inv_scale = 1.0 / t.scale;
        SdfGrid::from_fn(resolution, |q| inv_scale * self.decoy_sdf_world(t.apply(q)))
    }

    /// One-sided distance from the hand surface to the object surface
    /// (negative when a hand vertex is inside the object).
    pub fn hand_object_gap(&self) -> f64 {
        self.hand_gt
            .vertices
            .iter()
            .map(|&v| self.object_sdf_world(v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn save_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.hand_gt.save_obj(&dir.join("hand_gt.obj"))?;
        self.object_gt.save_obj(&dir.join("object_gt.obj"))?;
        self.hand_in_h.save_obj(&dir.join("hand_in_h.obj"))?;
        self.coarse_hoi_in_u.save_obj(&dir.join("coarse_hoi_in_u.obj"))?;
        self.camera.save(&dir.join("camera.json"))?;
        let meta = serde_json::json!({
            "seed": self.seed,
            "condition_id": self.condition_id,
            "shape_class": self.object_shape.class().name(),
            "decoy_class": self.decoy_shape.class().name(),
            "corruption_level": self.corruption_level,
            "object_shape": self.object_shape,
            "decoy_shape": self.decoy_shape,
            "object_pose": self.object_pose,
            "hand_pose": self.hand_pose,
            "frame_gt": self.frame_gt,
            "hand_keypoints_gt": self.hand_keypoints_gt,
            "hand_keypoints_in_h": self.hand_keypoints_in_h,
        });
        let file = std::fs::File::create(dir.join("scene.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &meta)?;
        Ok(())
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    nalgebra::UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

/// Similarity with rotation angle, scale, and translation drawn inside the
/// frame-corruption caps.
fn random_frame_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    let axis = primitives::random_unit(rng);
    let angle = rng.gen_range(0.0..MAX_FRAME_ROTATION);
    let scale = rng.gen_range(FRAME_SCALE_RANGE.0..FRAME_SCALE_RANGE.1);
    let translation = primitives::random_unit(rng) * rng.gen_range(0.0..MAX_FRAME_TRANSLATION);
    SimilarityTransform::from_parts(scale, axis * angle, translation)
        .expect("capped draws are always valid")
}

fn sample_camera(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Result<CameraModel> {
    let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
    let elevation: f64 = rng.gen_range(0.20..0.95);
    let dist = rng.gen_range(3.2..3.8);
    let eye = Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.sin(),
        elevation.cos() * azimuth.sin(),
    ) * dist;
    CameraModel::look_at(
        eye,
        Vec3::zeros(),
        Vec3::new(0.0, 1.0, 0.0),
        spec.focal,
        spec.focal,
        spec.image_width,
        spec.image_height,
    )
}

/// Finds a hand placement grasping the object at the origin: palm pocket
/// aimed at the object along a random approach direction, standoff found by
/// bisection so the nearest hand vertex ends up a small positive distance
/// outside the object.
fn place_hand(
    rng: &mut ChaCha8Rng,
    hand: &HandProxy,
    hand_mesh: &TriMesh,
    object_mesh: &TriMesh,
    object_sdf: &dyn Fn(Vec3) -> f64,
) -> Result<SimilarityTransform> {
    // The pocket sits under the palm on the grip side, between the curled
    // fingers; it is the point steered onto the object center.
    let pocket = Vec3::new(0.01, -0.085, 0.055);

    for _attempt in 0..8 {
        let approach = primitives::random_unit(rng);
        let roll = rng.gen_range(0.0..std::f64::consts::TAU);
        let palm_up = Vec3::new(0.0, 1.0, 0.0);
        let align = match nalgebra::Rotation3::rotation_between(&palm_up, &approach) {
            Some(r) => r.into_inner(),
            None => Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
        };
        let spin = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(approach),
            roll,
        )
        .into_inner();
        let rotation = spin * align;

        let rotated: Vec<Vec3> = hand_mesh.vertices.iter().map(|&v| rotation * v).collect();
        let rotated_pocket = rotation * pocket;
        let target_gap = rng.gen_range(0.015..0.05);

        // Signed clearance when the pocket sits `d` before the origin along
        // the approach direction.
        let clearance = |d: f64| -> f64 {
            let t = approach * d - rotated_pocket;
            let hand_to_obj = rotated
                .iter()
                .map(|&v| object_sdf(v + t))
                .fold(f64::INFINITY, f64::min);
            let inv_rot = rotation.transpose();
            let obj_to_hand = object_mesh
                .vertices
                .iter()
                .map(|&w| hand.sdf(&(inv_rot * (w - t))))
                .fold(f64::INFINITY, f64::min);
            hand_to_obj.min(obj_to_hand)
        };

        let (mut lo, mut hi) = (0.0, 1.1);
        if clearance(lo) > target_gap || clearance(hi) < target_gap {
            continue;
        }
        for _ in 0..45 {
            let mid = 0.5 * (lo + hi);
            if clearance(mid) < target_gap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = hi;
        let achieved = clearance(d);
        if achieved > 0.004 && achieved < CONTACT_MARGIN {
            let translation = approach * d - rotated_pocket;
            return SimilarityTransform::new(1.0, rotation, translation);
        }
    }
    Err(Error::DegenerateGeometry(
        "could not place a valid grasp after 8 approach attempts".into(),
    ))
}

pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let object_shape = ObjectShape::sample(spec.shape_class, &mut rng);
    let decoy_class = spec.shape_class.decoy(&mut rng);
    let decoy_shape = ObjectShape::sample(decoy_class, &mut rng);

    let object_rotation = random_rotation(&mut rng);
    let object_offset = primitives::random_unit(&mut rng) * rng.gen_range(0.0..0.03);
    let object_pose = SimilarityTransform::new(1.0, object_rotation, object_offset)?;
    let object_local = object_shape.mesh(spec.object_mesh_resolution)?;
    let object_gt = object_local.transformed(&object_pose);

    let hand_proxy = HandProxy::sample(&mut rng);
    let hand_local = hand_proxy.mesh(spec.hand_mesh_resolution)?;
    let pose_inv = object_pose.inverse();
    let object_sdf = |p: Vec3| object_shape.sdf(&pose_inv.apply(p));
    let hand_pose = place_hand(&mut rng, &hand_proxy, &hand_local, &object_gt, &object_sdf)?;
    let hand_gt = hand_local.transformed(&hand_pose);
    let hand_keypoints_gt: Vec<Vec3> =
        hand_proxy.keypoints.iter().map(|&k| hand_pose.apply(k)).collect();

    let camera = sample_camera(&mut rng, spec)?;

    let coarse_hoi_in_u = hand_gt.merged(&object_gt);
    Ok(SyntheticScene {
        seed,
        condition_id: spec.shape_class.index(),
        corruption_level: spec.corruption_level,
        object_shape,
        decoy_shape,
        object_pose,
        hand_proxy,
        hand_pose,
        hand_in_h: hand_gt.clone(),
        hand_keypoints_in_h: hand_keypoints_gt.clone(),
        hand_gt,
        hand_keypoints_gt,
        object_gt,
        camera,
        coarse_hoi_in_u,
        frame_gt: FrameGt::identity(),
    })
}

/// Replaces the estimator frames with corrupted versions: similarity
/// misalignments for H and U, plus vertex jitter and a blend toward the
/// decoy shape on the U union mesh, all proportional to the scene's
/// corruption level.
pub fn corrupt_frames(scene: &mut SyntheticScene, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_h_to_i = random_frame_transform(&mut rng);
    let t_u_to_i = random_frame_transform(&mut rng);
    let level = scene.corruption_level;

    let h_inv = t_h_to_i.inverse();
    scene.hand_in_h = scene.hand_gt.transformed(&h_inv);
    scene.hand_keypoints_in_h =
        scene.hand_keypoints_gt.iter().map(|&k| h_inv.apply(k)).collect();

    let object_part = if level > 0.0 {
        blended_object_mesh(scene, level)?
    } else {
        scene.object_gt.clone()
    };
    let union_i = scene.hand_gt.merged(&object_part);
    let mut coarse = union_i.transformed(&t_u_to_i.inverse());
    let sigma = 0.02 * level;
    for v in &mut coarse.vertices {
        for a in 0..3 {
            v[a] += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    scene.coarse_hoi_in_u = coarse;
    scene.frame_gt = FrameGt { t_u_to_i, t_h_to_i };
    Ok(())
}

/// Meshes the frame-I blend (1-level) * object + level * decoy.
fn blended_object_mesh(scene: &SyntheticScene, level: f64) -> Result<TriMesh> {
    let b = scene
        .object_shape
        .bounding_radius()
        .max(scene.decoy_shape.bounding_radius())
        + 0.08;
    let res = 48;
    let center = scene.object_pose.translation;
    let grid = SdfGrid::sampled(
        [res; 3],
        center - Vec3::new(b, b, b),
        center + Vec3::new(b, b, b),
        |p| (1.0 - level) * scene.object_sdf_world(p) + level * scene.decoy_sdf_world(p),
    )?;
    sdf_to_mesh(&grid)
}
