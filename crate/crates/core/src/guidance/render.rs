//! Adapters that turn differentiable projections into the map format the
//! losses consume, and the hand-over-object composite used when both
//! bodies render into one view.

use crate::geometry::PosedSdf;
use crate::renderer::{SoftRender, SupervisionMaps};
use crate::scene::CameraModel;

/// Expands a soft projection into full supervision maps. Disparity is the
/// reciprocal of the expected depth where it is defined, and normals come
/// from the posed field's gradient at the expected hit point, valid on
/// pixels with majority coverage.
pub fn soft_to_maps(
    render: &SoftRender,
    posed: &PosedSdf,
    camera: &CameraModel,
) -> SupervisionMaps {
    let mut maps = SupervisionMaps::empty(render.width, render.height);
    maps.silhouette.copy_from_slice(&render.silhouette);
    for y in 0..render.height {
        for x in 0..render.width {
            let i = y * render.width + x;
            let depth = render.depth[i];
            if depth <= 0.0 {
                continue;
            }
            maps.depth[i] = depth;
            maps.disparity[i] = 1.0 / depth;
            if render.silhouette[i] <= 0.5 {
                continue;
            }
            let (origin, dir) = camera.ray_through_pixel(x as f64 + 0.5, y as f64 + 0.5);
            let g_world = posed.gradient(origin + depth * dir);
            let len = g_world.norm();
            if len < 1e-9 {
                continue;
            }
            let n_cam = camera.direction_to_camera(&(g_world / len)).normalize();
            maps.normal[i] = [n_cam.x, n_cam.y, n_cam.z];
            maps.normal_valid[i] = true;
        }
    }
    maps
}

/// A joint view of a hard-rasterized hand and a softly projected object:
/// union coverage, nearer-surface depth and normals, and a per-pixel flag
/// marking where the object owns the depth so upstream gradients can be
/// routed to it.
pub struct CompositeRender {
    pub maps: SupervisionMaps,
    pub object_controls: Vec<bool>,
}

pub fn composite_maps(
    hand: &SupervisionMaps,
    object: &SoftRender,
    object_maps: &SupervisionMaps,
) -> CompositeRender {
    let n_px = hand.width * hand.height;
    let mut maps = SupervisionMaps::empty(hand.width, hand.height);
    let mut object_controls = vec![false; n_px];
    for i in 0..n_px {
        maps.silhouette[i] = 1.0 - (1.0 - hand.silhouette[i]) * (1.0 - object.silhouette[i]);
        let hand_covers = hand.silhouette[i] > 0.5;
        let object_covers = object_maps.depth[i] > 0.0;
        let object_wins = object_covers
            && (!hand_covers || object_maps.depth[i] < hand.depth[i]);
        object_controls[i] = object_wins;
        let source = if object_wins {
            object_maps
        } else if hand_covers {
            hand
        } else {
            continue;
        };
        maps.depth[i] = source.depth[i];
        maps.disparity[i] = source.disparity[i];
        maps.normal[i] = source.normal[i];
        maps.normal_valid[i] = source.normal_valid[i];
    }
    CompositeRender { maps, object_controls }
}

/// Routes composite-loss pixel gradients to the object render: coverage
/// flows through the union formula's `1 - hand` factor, depth only where
/// the object owns the pixel.
pub fn mask_object_upstream(
    hand: &SupervisionMaps,
    composite: &CompositeRender,
    d_silhouette: &[f64],
    d_depth: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n_px = d_silhouette.len();
    let mut d_sil_obj = vec![0.0; n_px];
    let mut d_depth_obj = vec![0.0; n_px];
    for i in 0..n_px {
        d_sil_obj[i] = d_silhouette[i] * (1.0 - hand.silhouette[i]);
        if composite.object_controls[i] {
            d_depth_obj[i] = d_depth[i];
        }
    }
    (d_sil_obj, d_depth_obj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SdfGrid, SimilarityTransform, TriMesh};
    use crate::renderer::{rasterize, soft_project, ProjectorParams};
    use crate::Vec3;

    fn sphere_setup() -> (SdfGrid, CameraModel, ProjectorParams) {
        let grid = SdfGrid::from_fn(40, |p| p.norm() - 0.5);
        let camera = CameraModel::look_at(
            Vec3::new(0.0, 0.7, -3.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            80.0,
            80.0,
            64,
            64,
        )
        .unwrap();
        let params = ProjectorParams::for_camera(&camera, 80.0, 64);
        (grid, camera, params)
    }

    #[test]
    fn sphere_normals_match_the_analytic_surface() {
        let (grid, camera, params) = sphere_setup();
        let pose = SimilarityTransform::identity();
        let render = soft_project(&grid, &pose, &camera, &params);
        let posed = PosedSdf::new(&grid, pose);
        let maps = soft_to_maps(&render, &posed, &camera);

        let mut checked = 0;
        for y in 0..64 {
            for x in 0..64 {
                let i = maps.idx(x, y);
                if maps.silhouette[i] < 0.95 || !maps.normal_valid[i] {
                    continue;
                }
                assert!((maps.disparity[i] - 1.0 / maps.depth[i]).abs() < 1e-12);
                let (origin, dir) = camera.ray_through_pixel(x as f64 + 0.5, y as f64 + 0.5);
                let p = origin + maps.depth[i] * dir;
                // expected depth smears the hit point along the ray, so only
                // points near the true surface are fair probes
                if (p.norm() - 0.5).abs() > 0.05 {
                    continue;
                }
                let n_true = camera.direction_to_camera(&p.normalize());
                let dot = maps.normal[i][0] * n_true.x
                    + maps.normal[i][1] * n_true.y
                    + maps.normal[i][2] * n_true.z;
                assert!(dot > 0.99, "pixel ({x},{y}) normal off: dot {dot}");
                checked += 1;
            }
        }
        assert!(checked > 100, "only {checked} interior pixels checked");
    }

    #[test]
    fn uncovered_pixels_stay_empty() {
        let (grid, camera, params) = sphere_setup();
        let pose = SimilarityTransform::identity();
        let render = soft_project(&grid, &pose, &camera, &params);
        let posed = PosedSdf::new(&grid, pose);
        let maps = soft_to_maps(&render, &posed, &camera);
        let corner = maps.idx(0, 0);
        assert!(maps.silhouette[corner] < 1e-6);
        assert!(maps.depth[corner].is_infinite());
        assert_eq!(maps.disparity[corner], 0.0);
        assert!(!maps.normal_valid[corner]);
    }

    fn facing_quad(z: f64, half: f64, camera: &CameraModel) -> TriMesh {
        let inv = camera.view.inverse();
        let v: Vec<Vec3> = [
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ]
        .iter()
        .map(|q| inv.apply(*q))
        .collect();
        TriMesh::new(v, vec![[0, 2, 1], [0, 3, 2]]).unwrap()
    }

    #[test]
    fn composite_prefers_the_nearer_surface() {
        let (grid, camera, params) = sphere_setup();
        let pose = SimilarityTransform::identity();
        let render = soft_project(&grid, &pose, &camera, &params);
        let posed = PosedSdf::new(&grid, pose);

        // a small quad halfway to the sphere occludes its center
        let eye_dist = camera.eye().norm();
        let quad = facing_quad(eye_dist * 0.5, 0.2, &camera);
        let hand = rasterize(&[&quad], &camera);
        let object_maps = soft_to_maps(&render, &posed, &camera);
        let comp = composite_maps(&hand, &render, &object_maps);

        let mut hand_pixels = 0;
        let mut object_pixels = 0;
        for i in 0..camera.pixel_count() {
            let hand_covers = hand.silhouette[i] > 0.5;
            let object_covers = render.depth[i] > 0.0;
            if hand_covers && object_covers {
                assert!(!comp.object_controls[i], "occluded pixel {i} owned by object");
                assert_eq!(comp.maps.depth[i], hand.depth[i]);
                assert_eq!(comp.maps.normal[i], hand.normal[i]);
                hand_pixels += 1;
            } else if object_covers {
                assert!(comp.object_controls[i]);
                object_pixels += 1;
            }
            let expected =
                1.0 - (1.0 - hand.silhouette[i]) * (1.0 - render.silhouette[i]);
            assert!((comp.maps.silhouette[i] - expected).abs() < 1e-12);
        }
        assert!(hand_pixels > 20, "quad never occluded the sphere");
        assert!(object_pixels > 100, "sphere never rendered alone");
    }

    #[test]
    fn upstream_masking_routes_gradients_by_ownership() {
        let (grid, camera, params) = sphere_setup();
        let pose = SimilarityTransform::identity();
        let render = soft_project(&grid, &pose, &camera, &params);
        let posed = PosedSdf::new(&grid, pose);
        let eye_dist = camera.eye().norm();
        let quad = facing_quad(eye_dist * 0.5, 0.2, &camera);
        let hand = rasterize(&[&quad], &camera);
        let object_maps = soft_to_maps(&render, &posed, &camera);
        let comp = composite_maps(&hand, &render, &object_maps);

        let ones = vec![1.0; camera.pixel_count()];
        let (d_sil, d_depth) = mask_object_upstream(&hand, &comp, &ones, &ones);
        for i in 0..camera.pixel_count() {
            if hand.silhouette[i] > 0.5 {
                assert_eq!(d_sil[i], 0.0, "coverage gradient leaked through the hand");
                assert_eq!(d_depth[i], 0.0);
            } else {
                assert_eq!(d_sil[i], 1.0);
                assert_eq!(d_depth[i], comp.object_controls[i] as u8 as f64);
            }
        }
    }
}
