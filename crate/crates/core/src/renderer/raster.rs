//! Deterministic z-buffer rasterizer for triangle meshes.
//!
//! Produces the per-pixel channels of [`SupervisionMaps`]: depth and
//! disparity from perspective-correct 1/z interpolation, hard silhouette
//! coverage, and flat per-face normals rotated into camera space. No
//! backface culling; when two fragments land at exactly the same depth the
//! face rasterized earlier keeps the pixel, so output is independent of
//! machine and run.

use crate::geometry::TriMesh;
use crate::renderer::maps::SupervisionMaps;
use crate::scene::CameraModel;
use crate::Vec3;

const NEAR_PLANE: f64 = 1e-6;

/// Rasterizes the meshes in order into a fresh set of maps. Faces with any
/// vertex at or behind the camera plane are skipped whole (no clipping);
/// scene geometry is expected to sit well in front of the camera.
pub fn rasterize(meshes: &[&TriMesh], camera: &CameraModel) -> SupervisionMaps {
    let mut maps = SupervisionMaps::empty(camera.width, camera.height);
    let w = camera.width;
    let h = camera.height;

    for mesh in meshes {
        for fi in 0..mesh.faces.len() {
            let world = mesh.face_vertices(fi);
            let cam = [
                camera.to_camera(&world[0]),
                camera.to_camera(&world[1]),
                camera.to_camera(&world[2]),
            ];
            if cam.iter().any(|q| q.z <= NEAR_PLANE) {
                continue;
            }
            let screen = cam.map(|q| {
                [
                    camera.fx * q.x / q.z + camera.cx,
                    camera.fy * q.y / q.z + camera.cy,
                ]
            });

            let area = edge(screen[0], screen[1], screen[2]);
            if area.abs() < 1e-12 {
                continue;
            }
            let sign = if area < 0.0 { -1.0 } else { 1.0 };
            let inv_area = 1.0 / (area * sign);

            let n_world = mesh.face_normal(fi);
            let mut n_cam = camera.direction_to_camera(&n_world);
            let n_len = n_cam.norm();
            if n_len > 0.0 {
                n_cam /= n_len;
            }
            let inv_z = cam.map(|q| 1.0 / q.z);

            let min_u = screen.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min);
            let max_u = screen.iter().map(|s| s[0]).fold(f64::NEG_INFINITY, f64::max);
            let min_v = screen.iter().map(|s| s[1]).fold(f64::INFINITY, f64::min);
            let max_v = screen.iter().map(|s| s[1]).fold(f64::NEG_INFINITY, f64::max);
            let x0 = ((min_u - 0.5).ceil().max(0.0)) as usize;
            let x1 = (max_u - 0.5).floor().min(w as f64 - 1.0);
            let y0 = ((min_v - 0.5).ceil().max(0.0)) as usize;
            let y1 = (max_v - 0.5).floor().min(h as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            let (x1, y1) = (x1 as usize, y1 as usize);

            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = [x as f64 + 0.5, y as f64 + 0.5];
                    let w0 = edge(screen[1], screen[2], p) * sign;
                    let w1 = edge(screen[2], screen[0], p) * sign;
                    let w2 = edge(screen[0], screen[1], p) * sign;
                    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                        continue;
                    }
                    let disparity =
                        (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]) * inv_area;
                    let depth = 1.0 / disparity;
                    let idx = maps.idx(x, y);
                    if depth < maps.depth[idx] {
                        maps.depth[idx] = depth;
                        maps.disparity[idx] = disparity;
                        maps.silhouette[idx] = 1.0;
                        maps.normal[idx] = [n_cam.x, n_cam.y, n_cam.z];
                        maps.normal_valid[idx] = true;
                    }
                }
            }
        }
    }
    maps
}

/// Twice the signed area of triangle (a, b, p) in screen coordinates.
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Projects each point, flagging those at or behind the camera plane. A
/// flagged point gets placeholder pixel coordinates (0, 0).
pub fn project_keypoints(points: &[Vec3], camera: &CameraModel) -> (Vec<[f64; 2]>, Vec<bool>) {
    let mut pix = Vec::with_capacity(points.len());
    let mut behind = Vec::with_capacity(points.len());
    for p in points {
        match camera.project(p) {
            Ok(uv) => {
                pix.push(uv);
                behind.push(false);
            }
            Err(_) => {
                pix.push([0.0, 0.0]);
                behind.push(true);
            }
        }
    }
    (pix, behind)
}
