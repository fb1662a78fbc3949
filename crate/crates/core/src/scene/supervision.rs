//! Supervision targets rendered from the ground-truth scene: per-pixel maps,
//! projected hand keypoints, and the camera-visible partial point cloud.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::renderer::maps::{
    normals_to_rgb, scalar_to_rgb, write_pfm, write_ppm, SupervisionMaps,
};
use crate::renderer::raster::{project_keypoints, rasterize};
use crate::scene::SyntheticScene;
use crate::{Error, Result, Vec3};

/// Surface points seen by the camera, one per covered pixel, with outward
/// world-frame unit normals from the rasterized faces.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Source pixel (x, y) of each point.
    pub pixels: Vec<[usize; 2]>,
}

impl PartialCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point cloud with per-vertex normals as a face-free OBJ.
    pub fn save_obj(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for (p, n) in self.points.iter().zip(&self.normals) {
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
            writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
        }
        Ok(())
    }
}

/// Supervision rendered three ways: the joint hand-object view plus each
/// body alone, as an instance segmenter would split them. Keypoints ride on
/// the joint and hand maps.
#[derive(Debug, Clone)]
pub struct SupervisionSet {
    pub hoi: SupervisionMaps,
    pub hand: SupervisionMaps,
    pub object: SupervisionMaps,
}

pub fn make_supervision_set(scene: &SyntheticScene) -> Result<(SupervisionSet, PartialCloud)> {
    let (hoi, cloud) = make_supervision(scene)?;
    let mut hand = rasterize(&[&scene.hand_gt], &scene.camera);
    hand.keypoints_2d = hoi.keypoints_2d.clone();
    hand.keypoints_behind = hoi.keypoints_behind.clone();
    let object = rasterize(&[&scene.object_gt], &scene.camera);
    Ok((SupervisionSet { hoi, hand, object }, cloud))
}

/// Renders the ground-truth hand and object into supervision maps and
/// back-projects every covered pixel into a world-space partial cloud.
/// Errors when the object projects entirely outside the image.
pub fn make_supervision(scene: &SyntheticScene) -> Result<(SupervisionMaps, PartialCloud)> {
    let object_alone = rasterize(&[&scene.object_gt], &scene.camera);
    if object_alone.covered_count() == 0 {
        return Err(Error::OutsideFrustum);
    }

    let mut maps = rasterize(&[&scene.hand_gt, &scene.object_gt], &scene.camera);
    let (kp, behind) = project_keypoints(&scene.hand_keypoints_gt, &scene.camera);
    maps.keypoints_2d = kp;
    maps.keypoints_behind = behind;

    let cam_to_world = scene.camera.view.rotation.transpose();
    let mut cloud = PartialCloud {
        points: Vec::new(),
        normals: Vec::new(),
        pixels: Vec::new(),
    };
    for y in 0..maps.height {
        for x in 0..maps.width {
            let idx = maps.idx(x, y);
            if maps.silhouette[idx] <= 0.5 {
                continue;
            }
            let depth = maps.depth[idx];
            let p = scene
                .camera
                .unproject(x as f64 + 0.5, y as f64 + 0.5, depth);
            let n = maps.normal[idx];
            cloud.points.push(p);
            cloud
                .normals
                .push(cam_to_world * Vec3::new(n[0], n[1], n[2]));
            cloud.pixels.push([x, y]);
        }
    }
    Ok((maps, cloud))
}

/// Writes the maps (exact PFM floats plus PPM previews) and the cloud next
/// to a scene bundle.
pub fn save_supervision(
    dir: &Path,
    maps: &SupervisionMaps,
    cloud: &PartialCloud,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (w, h) = (maps.width, maps.height);
    write_pfm(&dir.join("disparity.pfm"), w, h, &maps.disparity)?;
    write_pfm(&dir.join("silhouette.pfm"), w, h, &maps.silhouette)?;
    let finite_depth: Vec<f64> = maps
        .depth
        .iter()
        .map(|&d| if d.is_finite() { d } else { 0.0 })
        .collect();
    write_pfm(&dir.join("depth.pfm"), w, h, &finite_depth)?;
    write_ppm(
        &dir.join("silhouette.ppm"),
        w,
        h,
        &scalar_to_rgb(&maps.silhouette, 0.0, 1.0),
    )?;
    let max_disp = maps.disparity.iter().cloned().fold(0.0, f64::max);
    write_ppm(
        &dir.join("disparity.ppm"),
        w,
        h,
        &scalar_to_rgb(&maps.disparity, 0.0, max_disp.max(1e-9)),
    )?;
    write_ppm(
        &dir.join("normal.ppm"),
        w,
        h,
        &normals_to_rgb(&maps.normal, &maps.normal_valid),
    )?;
    cloud.save_obj(&dir.join("partial_cloud.obj"))?;
    let kp = serde_json::json!({
        "keypoints_2d": maps.keypoints_2d,
        "keypoints_behind": maps.keypoints_behind,
    });
    let file = std::fs::File::create(dir.join("keypoints_2d.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &kp)?;
    Ok(())
}
