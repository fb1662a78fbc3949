//! Pinhole camera with a rigid world-to-camera extrinsic.
//!
//! Camera space follows the usual computer-vision convention: +z looks into
//! the scene, +x runs along increasing pixel column, +y along increasing
//! pixel row. Pixel (u, v) coordinates are continuous; the center of the
//! pixel at column j, row i is (j + 0.5, i + 0.5).

use serde::{Deserialize, Serialize};

use crate::geometry::SimilarityTransform;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera map; scale is fixed to 1.
    pub view: SimilarityTransform,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        view: SimilarityTransform,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "focal lengths must be positive and finite, got ({fx}, {fy})"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidConfig("principal point must be finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        if (view.scale - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "camera extrinsic must have unit scale, got {}",
                view.scale
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height, view })
    }

    /// Camera positioned at `eye` with its optical axis through `target`.
    /// Principal point lands at the image center.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry(
                "camera eye and target coincide".into(),
            ));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::DegenerateGeometry(
                "camera view direction is parallel to up".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let cam_to_world = crate::Mat3::from_columns(&[right, down, forward]);
        let rotation = cam_to_world.transpose();
        let view = SimilarityTransform::new(1.0, rotation, -(rotation * eye))?;
        Self::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            view,
        )
    }

    pub fn eye(&self) -> Vec3 {
        self.view.inverse().translation
    }

    pub fn to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.view.apply(*p_world)
    }

    /// World-space normal or direction into camera space (rotation only).
    pub fn direction_to_camera(&self, d_world: &Vec3) -> Vec3 {
        self.view.rotation * d_world
    }

    /// Pinhole projection. Errors when the point is at or behind the camera
    /// plane.
    pub fn project(&self, p_world: &Vec3) -> Result<[f64; 2]> {
        let q = self.to_camera(p_world);
        if q.z <= 1e-9 {
            return Err(Error::OutsideFrustum);
        }
        Ok([
            self.fx * q.x / q.z + self.cx,
            self.fy * q.y / q.z + self.cy,
        ])
    }

    /// World point whose camera-space depth (z, not ray length) is `depth`,
    /// seen at pixel coordinates (u, v).
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let q = Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        );
        self.view.inverse().apply(q)
    }

    /// Ray through pixel (u, v): world-space origin at the camera center and
    /// a direction scaled so that origin + t * dir has camera depth t.
    pub fn ray_through_pixel(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        let inv = self.view.inverse();
        let dir_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (inv.translation, inv.rotation * dir_cam)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let cam: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        Self::new(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, cam.view)
    }
}
