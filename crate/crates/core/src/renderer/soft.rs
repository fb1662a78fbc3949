//! Differentiable silhouette and depth projection of a posed SDF grid.
//!
//! Each pixel marches a fixed window of depths along its ray. A sample at
//! camera depth t gets occupancy `o = sigmoid(-beta * phi)` from the posed
//! field value `phi`, the pixel's soft coverage is `1 - prod(1 - o_i)`, and
//! its depth is the weight-normalized expectation `sum(w_i t_i) / sum(w_i)`
//! with front-to-back weights `w_i = o_i * prod_{j<i}(1 - o_j)`. Gradients
//! flow back through the prefix products to the grid cells and the seven
//! pose parameters.

use crate::geometry::{PosedSdf, SdfGrid, SimilarityTransform, TransformGrad};
use crate::scene::CameraModel;

/// Samples whose `beta * |phi|` exceeds this contribute occupancy 0 or 1 to
/// within 1e-13; their gradient is dropped rather than computed.
const SIGMOID_CUTOFF: f64 = 30.0;

/// Below this accumulated weight a pixel's expected depth is reported as 0
/// and treated as undefined.
pub const DEPTH_WEIGHT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct ProjectorParams {
    pub beta: f64,
    pub n_samples: usize,
    pub t_near: f64,
    pub t_far: f64,
}

impl ProjectorParams {
    /// Depth window centered on the camera-to-origin distance, wide enough
    /// for any posed scene object near the origin.
    pub fn for_camera(camera: &CameraModel, beta: f64, n_samples: usize) -> Self {
        let dist = camera.eye().norm();
        Self {
            beta,
            n_samples,
            t_near: (dist - 1.8).max(0.2),
            t_far: dist + 1.8,
        }
    }

    fn step(&self) -> f64 {
        (self.t_far - self.t_near) / self.n_samples as f64
    }
}

/// Soft coverage and expected depth per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftRender {
    pub width: usize,
    pub height: usize,
    pub silhouette: Vec<f64>,
    /// Weight-normalized expected camera depth; 0 where `weight` is below
    /// [`DEPTH_WEIGHT_FLOOR`].
    pub depth: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Gradients of a scalar loss with respect to the grid cells and the pose.
#[derive(Debug, Clone)]
pub struct SoftGrads {
    pub d_cells: Vec<f64>,
    pub d_pose: TransformGrad,
}

pub fn soft_project(
    sdf: &SdfGrid,
    pose: &SimilarityTransform,
    camera: &CameraModel,
    params: &ProjectorParams,
) -> SoftRender {
    let mut render = SoftRender {
        width: camera.width,
        height: camera.height,
        silhouette: vec![0.0; camera.pixel_count()],
        depth: vec![0.0; camera.pixel_count()],
        weight: vec![0.0; camera.pixel_count()],
    };
    let inv = pose.inverse();
    let step = params.step();
    let n = params.n_samples;
    let scale = pose.scale;
    let beta = params.beta;

    for y in 0..camera.height {
        for x in 0..camera.width {
            let (origin, dir) = camera.ray_through_pixel(x as f64 + 0.5, y as f64 + 0.5);
            // The ray in canonical grid coordinates; one transform per pixel
            // instead of one per sample.
            let q0 = inv.apply(origin);
            let dq = inv.scale * (inv.rotation * dir);

            let mut transmit = 1.0;
            let mut weight_sum = 0.0;
            let mut depth_sum = 0.0;
            for i in 0..n {
                let t = params.t_near + (i as f64 + 0.5) * step;
                let phi = scale * sdf.sample(q0 + t * dq);
                let o = sigmoid(-beta * phi);
                let w = o * transmit;
                weight_sum += w;
                depth_sum += w * t;
                transmit *= 1.0 - o;
            }
            let idx = y * camera.width + x;
            render.silhouette[idx] = 1.0 - transmit;
            render.weight[idx] = weight_sum;
            if weight_sum > DEPTH_WEIGHT_FLOOR {
                render.depth[idx] = depth_sum / weight_sum;
            }
        }
    }
    render
}

/// Forward pass plus reverse-mode gradients for the scalar loss whose
/// per-pixel derivatives are `d_silhouette` and `d_depth`. Depth upstream is
/// ignored on pixels whose weight is at or below [`DEPTH_WEIGHT_FLOOR`],
/// where the reported depth is the constant 0.
pub fn soft_project_with_grads(
    sdf: &SdfGrid,
    pose: &SimilarityTransform,
    camera: &CameraModel,
    params: &ProjectorParams,
    d_silhouette: &[f64],
    d_depth: &[f64],
) -> (SoftRender, SoftGrads) {
    assert_eq!(d_silhouette.len(), camera.pixel_count());
    assert_eq!(d_depth.len(), camera.pixel_count());
    let mut render = SoftRender {
        width: camera.width,
        height: camera.height,
        silhouette: vec![0.0; camera.pixel_count()],
        depth: vec![0.0; camera.pixel_count()],
        weight: vec![0.0; camera.pixel_count()],
    };
    let mut grads = SoftGrads {
        d_cells: vec![0.0; sdf.values.len()],
        d_pose: TransformGrad::default(),
    };
    let inv = pose.inverse();
    let posed = PosedSdf::new(sdf, *pose);
    let step = params.step();
    let n = params.n_samples;
    let scale = pose.scale;
    let beta = params.beta;

    let mut occ = vec![0.0; n];
    let mut phis = vec![0.0; n];
    let mut prefix = vec![0.0; n + 1];

    for y in 0..camera.height {
        for x in 0..camera.width {
            let (origin, dir) = camera.ray_through_pixel(x as f64 + 0.5, y as f64 + 0.5);
            let q0 = inv.apply(origin);
            let dq = inv.scale * (inv.rotation * dir);

            prefix[0] = 1.0;
            let mut weight_sum = 0.0;
            let mut depth_sum = 0.0;
            for i in 0..n {
                let t = params.t_near + (i as f64 + 0.5) * step;
                let phi = scale * sdf.sample(q0 + t * dq);
                let o = sigmoid(-beta * phi);
                phis[i] = phi;
                occ[i] = o;
                let w = o * prefix[i];
                weight_sum += w;
                depth_sum += w * t;
                prefix[i + 1] = prefix[i] * (1.0 - o);
            }
            let idx = y * camera.width + x;
            render.silhouette[idx] = 1.0 - prefix[n];
            render.weight[idx] = weight_sum;
            let depth_defined = weight_sum > DEPTH_WEIGHT_FLOOR;
            let depth = if depth_defined { depth_sum / weight_sum } else { 0.0 };
            render.depth[idx] = depth;

            let g_sil = d_silhouette[idx];
            let g_depth = if depth_defined { d_depth[idx] } else { 0.0 };
            if g_sil == 0.0 && g_depth == 0.0 {
                continue;
            }

            // Reverse scan through w_i = o_i * prefix_i and
            // prefix_{i+1} = prefix_i * (1 - o_i).
            let mut g_prefix_next = -g_sil;
            for i in (0..n).rev() {
                let g_w = if g_depth != 0.0 {
                    let t = params.t_near + (i as f64 + 0.5) * step;
                    g_depth * (t - depth) / weight_sum
                } else {
                    0.0
                };
                let g_u = g_prefix_next * prefix[i];
                let g_prefix = g_prefix_next * (1.0 - occ[i]) + g_w * occ[i];
                let g_o = g_w * prefix[i] - g_u;
                g_prefix_next = g_prefix;

                if g_o == 0.0 || beta * phis[i].abs() > SIGMOID_CUTOFF {
                    continue;
                }
                let g_phi = g_o * (-beta) * occ[i] * (1.0 - occ[i]);
                if g_phi == 0.0 {
                    continue;
                }
                let t = params.t_near + (i as f64 + 0.5) * step;
                let e = posed.eval(origin + t * dir);
                grads.d_pose.add_eval(&e, g_phi);
                for &(cell, d) in &e.grad_cells {
                    grads.d_cells[cell] += g_phi * d;
                }
            }
        }
    }
    (render, grads)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renderer::raster::rasterize;
    use crate::Vec3;
    use crate::scene::ObjectShape;

    fn test_camera(width: usize, height: usize, focal: f64) -> CameraModel {
        CameraModel::look_at(
            Vec3::new(0.9, 0.7, -3.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            focal,
            focal,
            width,
            height,
        )
        .unwrap()
    }

    fn axis_camera(dist: f64, width: usize, focal: f64) -> CameraModel {
        CameraModel::look_at(
            Vec3::new(0.0, 0.0, -dist),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            focal,
            focal,
            width,
            width,
        )
        .unwrap()
    }

    fn wavy_grid(res: usize) -> SdfGrid {
        SdfGrid::from_fn(res, |p| {
            p.norm() - 0.55 + 0.08 * (3.0 * p.x).sin() * (2.0 * p.y).cos()
        })
    }

    fn test_pose() -> SimilarityTransform {
        SimilarityTransform::from_parts(
            0.93,
            Vec3::new(0.2, -0.3, 0.15),
            Vec3::new(0.08, -0.04, 0.06),
        )
        .unwrap()
    }

    /// Deterministic pseudo-random upstream gradients, decorrelated by tag.
    fn upstream(n: usize, tag: u64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let h = (i as u64).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(tag);
                let h = (h ^ (h >> 31)).wrapping_mul(0xbf58476d1ce4e5b9);
                ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn scalar_loss(render: &SoftRender, g_sil: &[f64], g_depth: &[f64]) -> f64 {
        let mut l = 0.0;
        for i in 0..render.silhouette.len() {
            l += g_sil[i] * render.silhouette[i] + g_depth[i] * render.depth[i];
        }
        l
    }

    #[test]
    fn empty_field_yields_no_coverage_and_zero_gradients() {
        let grid = SdfGrid::filled(12, 0.8);
        let cam = test_camera(32, 32, 26.0);
        let params = ProjectorParams::for_camera(&cam, 60.0, 32);
        let pose = SimilarityTransform::identity();
        let render = soft_project(&grid, &pose, &cam, &params);
        assert!(render.silhouette.iter().all(|&s| s < 1e-9));
        assert!(render.weight.iter().all(|&w| w < 1e-9));
        assert!(render.depth.iter().all(|&d| d == 0.0));

        let g_sil = upstream(cam.pixel_count(), 1);
        let g_depth = upstream(cam.pixel_count(), 2);
        let (_, grads) =
            soft_project_with_grads(&grid, &pose, &cam, &params, &g_sil, &g_depth);
        assert!(grads.d_cells.iter().all(|&g| g == 0.0));
        assert_eq!(grads.d_pose, TransformGrad::default());
    }

    #[test]
    fn sphere_depth_and_coverage_match_geometry() {
        let grid = SdfGrid::from_fn(40, |p| p.norm() - 0.55);
        let dist = 3.2;
        let cam = axis_camera(dist, 64, 52.0);
        let params = ProjectorParams::for_camera(&cam, 60.0, 64);
        let render = soft_project(&grid, &SimilarityTransform::identity(), &cam, &params);

        let center = 32 * 64 + 32;
        assert!(render.silhouette[center] > 0.99);
        let expected = dist - 0.55;
        let tol = 2.0 * params.step() + 2.0 / params.beta;
        assert!(
            (render.depth[center] - expected).abs() < tol,
            "depth {} expected {expected}",
            render.depth[center]
        );
        let corner = render.silhouette[0];
        assert!(corner < 1e-6, "corner coverage {corner}");
    }

    #[test]
    fn edge_width_shrinks_with_beta() {
        let grid = SdfGrid::from_fn(48, |p| p.norm() - 0.55);
        let dist = 3.2;
        let cam = axis_camera(dist, 256, 400.0);
        let pose = SimilarityTransform::identity();

        let edge_width = |beta: f64| -> f64 {
            let params = ProjectorParams::for_camera(&cam, beta, 96);
            let render = soft_project(&grid, &pose, &cam, &params);
            let row: Vec<f64> =
                (0..256).map(|x| render.silhouette[128 * 256 + x]).collect();
            // walk outward from the center along +x and interpolate the
            // 0.75 and 0.25 crossings of the falling profile
            let cross = |level: f64| -> f64 {
                for x in 128..255 {
                    if row[x] >= level && row[x + 1] < level {
                        let f = (row[x] - level) / (row[x] - row[x + 1]);
                        return x as f64 + f;
                    }
                }
                panic!("profile never crosses {level}");
            };
            cross(0.25) - cross(0.75)
        };

        let w60 = edge_width(60.0);
        let w120 = edge_width(120.0);
        assert!(
            w120 < w60 && (1.4..3.0).contains(&(w60 / w120)),
            "widths {w60} vs {w120}"
        );
    }

    #[test]
    fn sharp_coverage_matches_rasterized_mesh() {
        let shapes = [
            ObjectShape::Sphere { radius: 0.32 },
            ObjectShape::Box { half_extents: [0.20, 0.19, 0.18] },
            ObjectShape::Cylinder { radius: 0.20, half_height: 0.25 },
            ObjectShape::Capsule { radius: 0.17, half_length: 0.19 },
            ObjectShape::Torus { major: 0.23, minor: 0.11 },
            ObjectShape::UnionTwo {
                first: std::boxed::Box::new(ObjectShape::Sphere { radius: 0.23 }),
                second: std::boxed::Box::new(ObjectShape::Capsule {
                    radius: 0.12,
                    half_length: 0.14,
                }),
                offset: [0.11, 0.08, 0.06],
            },
        ];
        // elevated view keeps the torus hole open; high focal length keeps
        // the sigmoid transition band thin against the projected perimeter
        let cam = CameraModel::look_at(
            Vec3::new(0.7, 2.4, -2.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            320.0,
            320.0,
            256,
            256,
        )
        .unwrap();
        let params = ProjectorParams::for_camera(&cam, 200.0, 96);
        for shape in &shapes {
            let grid = SdfGrid::from_fn(64, |q| shape.sdf(&q));
            let soft = soft_project(&grid, &SimilarityTransform::identity(), &cam, &params);
            let mesh = crate::geometry::sdf_to_mesh(&grid).unwrap();
            let hard = rasterize(&[&mesh], &cam);
            let mut inter = 0usize;
            let mut union = 0usize;
            for i in 0..cam.pixel_count() {
                let a = soft.silhouette[i] > 0.5;
                let b = hard.silhouette[i] > 0.5;
                inter += (a && b) as usize;
                union += (a || b) as usize;
            }
            assert!(union > 80, "union {union} for {shape:?}");
            let iou = inter as f64 / union as f64;
            assert!(iou >= 0.95, "iou {iou} for {shape:?}");
        }
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let grid = wavy_grid(20);
        let cam = test_camera(48, 48, 40.0);
        // moderate sharpness keeps the sigmoid's third derivative from
        // polluting the eps = 1e-3 central difference
        let params = ProjectorParams::for_camera(&cam, 20.0, 48);
        let pose = test_pose();

        let g_sil = upstream(cam.pixel_count(), 3);
        let base = soft_project(&grid, &pose, &cam, &params);
        let g_depth: Vec<f64> = upstream(cam.pixel_count(), 4)
            .iter()
            .zip(&base.weight)
            .map(|(&g, &w)| if w > 0.05 { g } else { 0.0 })
            .collect();

        let (render, grads) =
            soft_project_with_grads(&grid, &pose, &cam, &params, &g_sil, &g_depth);
        assert_eq!(render.silhouette, base.silhouette);

        let spacing = grid.spacing().x;
        let near: Vec<usize> = (0..grid.values.len())
            .filter(|&i| grid.values[i].abs() < 2.0 * spacing)
            .step_by(7)
            .take(50)
            .collect();
        assert!(near.len() >= 50, "only {} near-surface probes", near.len());

        let eps = 1e-3;
        let mut meaningful = 0;
        for &cell in &near {
            let mut hi = grid.clone();
            hi.values[cell] += eps;
            let mut lo = grid.clone();
            lo.values[cell] -= eps;
            let l_hi = scalar_loss(&soft_project(&hi, &pose, &cam, &params), &g_sil, &g_depth);
            let l_lo = scalar_loss(&soft_project(&lo, &pose, &cam, &params), &g_sil, &g_depth);
            let fd = (l_hi - l_lo) / (2.0 * eps);
            let an = grads.d_cells[cell];
            let denom = fd.abs().max(an.abs());
            if denom > 1e-6 {
                meaningful += 1;
                assert!(
                    (fd - an).abs() / denom < 1e-3,
                    "cell {cell}: fd {fd} vs analytic {an}"
                );
            } else {
                assert!((fd - an).abs() < 1e-8, "cell {cell} near-zero mismatch");
            }
        }
        assert!(meaningful >= 30, "only {meaningful} probes had signal");

        // far-from-surface cells carry only tail-of-sigmoid residue
        for &cell in [0, grid.values.len() - 1].iter() {
            assert!(grads.d_cells[cell].abs() < 1e-5);
        }
    }

    /// Pose gradients are checked one pixel at a time. A pose step slides
    /// every ray sample through the canonical grid, so a dense-upstream
    /// difference quotient straddles interpolant creases somewhere in the
    /// image on almost every probe. Single-pixel probes make crossings rare,
    /// and probes whose quotients at eps and eps/2 disagree sit on a crease
    /// and are discarded rather than compared.
    #[test]
    fn pose_gradients_match_finite_differences() {
        let grid = wavy_grid(20);
        let cam = test_camera(32, 32, 26.0);
        let params = ProjectorParams::for_camera(&cam, 30.0, 48);
        let pose = test_pose();
        let base = soft_project(&grid, &pose, &cam, &params);

        let pixel_value = |t: &SimilarityTransform, idx: usize, channel: usize| -> f64 {
            let r = soft_project(&grid, t, &cam, &params);
            if channel == 0 { r.silhouette[idx] } else { r.depth[idx] }
        };

        let eps = 1e-4;
        let mut accepted = 0;
        let mut per_axis = [0usize; 7];
        for idx in 0..cam.pixel_count() {
            if accepted >= 120 {
                break;
            }
            for channel in 0..2 {
                let probe_ok = match channel {
                    0 => base.silhouette[idx] > 0.05 && base.silhouette[idx] < 0.95,
                    _ => base.weight[idx] > 0.3,
                };
                if !probe_ok {
                    continue;
                }
                let mut g_sil = vec![0.0; cam.pixel_count()];
                let mut g_depth = vec![0.0; cam.pixel_count()];
                if channel == 0 {
                    g_sil[idx] = 1.0;
                } else {
                    g_depth[idx] = 1.0;
                }
                let (_, grads) =
                    soft_project_with_grads(&grid, &pose, &cam, &params, &g_sil, &g_depth);
                let analytic = grads.d_pose.as_array();

                for axis in 0..7 {
                    let fd_at = |e: f64| -> f64 {
                        let mut d = [0.0; 7];
                        d[axis] = e;
                        let hi = pose
                            .stepped(d[0], Vec3::new(d[1], d[2], d[3]), Vec3::new(d[4], d[5], d[6]))
                            .unwrap();
                        d[axis] = -e;
                        let lo = pose
                            .stepped(d[0], Vec3::new(d[1], d[2], d[3]), Vec3::new(d[4], d[5], d[6]))
                            .unwrap();
                        (pixel_value(&hi, idx, channel) - pixel_value(&lo, idx, channel))
                            / (2.0 * e)
                    };
                    let fd = fd_at(eps);
                    let fd_half = fd_at(eps / 2.0);
                    let scale = fd.abs().max(analytic[axis].abs()).max(1e-6);
                    if (fd - fd_half).abs() > 2e-4 * scale {
                        continue;
                    }
                    accepted += 1;
                    per_axis[axis] += 1;
                    assert!(
                        (fd - analytic[axis]).abs() / scale < 1e-3,
                        "pixel {idx} channel {channel} axis {axis}: fd {fd} vs analytic {}",
                        analytic[axis]
                    );
                }
            }
        }
        assert!(accepted >= 50, "only {accepted} smooth probes");
        assert!(
            per_axis.iter().all(|&c| c >= 3),
            "axis coverage {per_axis:?}"
        );
    }

    #[test]
    fn gradient_support_hugs_the_surface() {
        let grid = wavy_grid(32);
        let cam = test_camera(48, 48, 40.0);
        let params = ProjectorParams::for_camera(&cam, 60.0, 48);
        let pose = test_pose();
        let g_sil = upstream(cam.pixel_count(), 7);
        let g_depth = vec![0.0; cam.pixel_count()];
        let (_, grads) =
            soft_project_with_grads(&grid, &pose, &cam, &params, &g_sil, &g_depth);

        let g_max = grads.d_cells.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(g_max > 0.0);
        let reach = 3.0 / (params.beta * pose.scale)
            + 2.0 * 3.0f64.sqrt() * grid.spacing().x;
        for (i, &g) in grads.d_cells.iter().enumerate() {
            if g.abs() > 1e-2 * g_max {
                assert!(
                    grid.values[i].abs() <= reach,
                    "cell {i} with |value| {} carries gradient {g}",
                    grid.values[i].abs()
                );
            }
        }
    }

    #[test]
    fn projection_is_deterministic() {
        let grid = wavy_grid(24);
        let cam = test_camera(48, 48, 40.0);
        let params = ProjectorParams::for_camera(&cam, 60.0, 48);
        let pose = test_pose();
        let g_sil = upstream(cam.pixel_count(), 8);
        let g_depth = upstream(cam.pixel_count(), 9);
        let (r1, g1) = soft_project_with_grads(&grid, &pose, &cam, &params, &g_sil, &g_depth);
        let (r2, g2) = soft_project_with_grads(&grid, &pose, &cam, &params, &g_sil, &g_depth);
        assert_eq!(r1, r2);
        assert_eq!(g1.d_cells, g2.d_cells);
        assert_eq!(g1.d_pose, g2.d_pose);
    }
}
