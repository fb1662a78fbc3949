//! The three inner optimization loops: hand pose against its own view,
//! object pose and velocity against the object view, and the joint
//! refinement of hand, object, and velocity against the full scene.
//!
//! Every loop keeps the best iterate it has seen, including the starting
//! point, so a phase never returns parameters worse than it was given.

use serde::Serialize;

use crate::flow::clean_estimate;
use crate::geometry::{PosedSdf, SdfGrid, SimilarityTransform, TransformGrad, TriMesh};
use crate::renderer::{
    rasterize, soft_project, soft_project_with_grads, ProjectorParams, SupervisionMaps,
};
use crate::scene::CameraModel;
use crate::{Result, Vec3};

use super::adam::AdamState;
use super::config::GuidanceConfig;
use super::losses::{
    loss_2d, loss_2d_with_grads, loss_intersection, loss_keypoints, loss_proximity_with_grads,
    total_variation,
};
use super::render::{composite_maps, mask_object_upstream, soft_to_maps};

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total: f64,
    pub terms: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_iteration: usize,
    pub records: Vec<IterationRecord>,
}

/// Routes a gradient taken with respect to `total = outer * inner` (inner
/// held fixed) onto the outer factor's own update coordinates. Log-scale
/// and left-rotation increments act identically on both transforms; their
/// effect on the composed translation adds lever-arm terms through
/// `u = total.translation - outer.translation`.
pub fn pullback_outer(
    g_total: &TransformGrad,
    total: &SimilarityTransform,
    outer: &SimilarityTransform,
) -> TransformGrad {
    let u = total.translation - outer.translation;
    TransformGrad {
        log_scale: g_total.log_scale + g_total.translation.dot(&u),
        rotation: g_total.rotation + u.cross(&g_total.translation),
        translation: g_total.translation,
    }
}

fn stepped_by(t: &SimilarityTransform, d: &[f64]) -> Result<SimilarityTransform> {
    t.stepped(
        d[0],
        Vec3::new(d[1], d[2], d[3]),
        Vec3::new(d[4], d[5], d[6]),
    )
}

fn axis_step(axis: usize, eps: f64) -> [f64; 7] {
    let mut d = [0.0; 7];
    d[axis] = eps;
    d
}

/// The hand's own view: its canonical mesh and keypoints plus the maps and
/// pixel keypoints it is optimized against.
pub struct HandView<'a> {
    pub mesh: &'a TriMesh,
    pub keypoints: &'a [Vec3],
    pub camera: &'a CameraModel,
    pub sup: &'a SupervisionMaps,
}

/// Weighted hand objective on an already rasterized pose.
fn hand_objective(
    t: &SimilarityTransform,
    raster: &SupervisionMaps,
    view: &HandView,
    cfg: &GuidanceConfig,
) -> Result<(f64, Vec<(String, f64)>)> {
    let l2d = loss_2d(raster, view.sup)?;
    let posed_kp: Vec<Vec3> = view.keypoints.iter().map(|&k| t.apply(k)).collect();
    let kp = loss_keypoints(&posed_kp, view.camera, &view.sup.keypoints_2d)?;
    let reg = t.translation.norm_squared();
    let [w_kp, w_n, w_d, w_s, w_reg] = cfg.lambda;
    let total = w_kp * kp.mean_sq_px
        + w_n * l2d.normal
        + w_d * l2d.disparity
        + w_s * l2d.silhouette
        + w_reg * reg;
    let terms = vec![
        ("keypoints".into(), kp.mean_sq_px),
        ("normal".into(), l2d.normal),
        ("disparity".into(), l2d.disparity),
        ("silhouette".into(), l2d.silhouette),
        ("translation_reg".into(), reg),
    ];
    Ok((total, terms))
}

fn hand_loss_at(
    t: &SimilarityTransform,
    view: &HandView,
    cfg: &GuidanceConfig,
) -> Result<f64> {
    let raster = rasterize(&[&view.mesh.transformed(t)], view.camera);
    Ok(hand_objective(t, &raster, view, cfg)?.0)
}

/// Central differences of the full hand objective over the seven pose
/// coordinates. The rasterized terms are piecewise constant in the pose, so
/// their quotients are zero until a probe straddles a pixel flip; the
/// keypoint and regularizer terms supply a smooth signal every iteration.
fn hand_grad_fd(
    t: &SimilarityTransform,
    view: &HandView,
    cfg: &GuidanceConfig,
) -> Result<[f64; 7]> {
    let eps = cfg.fd_step;
    let mut g = [0.0; 7];
    for axis in 0..7 {
        let hi = hand_loss_at(&stepped_by(t, &axis_step(axis, eps))?, view, cfg)?;
        let lo = hand_loss_at(&stepped_by(t, &axis_step(axis, -eps))?, view, cfg)?;
        g[axis] = (hi - lo) / (2.0 * eps);
    }
    Ok(g)
}

/// Fits the hand pose to its view, leaving the best iterate in `t_h`.
pub fn phase1_optimize(
    t_h: &mut SimilarityTransform,
    view: &HandView,
    cfg: &GuidanceConfig,
) -> Result<PhaseOutcome> {
    let rates = cfg.phase1_rates.as_array();
    let mut adam = AdamState::new(7);
    let mut current = *t_h;
    let mut best = (f64::INFINITY, current, 0usize);
    let mut records = Vec::with_capacity(cfg.k1 + 1);

    for iter in 0..=cfg.k1 {
        let raster = rasterize(&[&view.mesh.transformed(&current)], view.camera);
        let (total, terms) = hand_objective(&current, &raster, view, cfg)?;
        if total < best.0 {
            best = (total, current, iter);
        }
        records.push(IterationRecord { iteration: iter, total, terms });
        if iter == cfg.k1 {
            break;
        }
        let grad = hand_grad_fd(&current, view, cfg)?;
        let delta = adam.delta(&grad, &rates, &cfg.adam);
        current = stepped_by(&current, &delta)?;
    }

    *t_h = best.1;
    Ok(PhaseOutcome {
        initial_loss: records[0].total,
        final_loss: best.0,
        best_iteration: best.2,
        records,
    })
}

/// The object's own view plus the frame anchoring the latent grid in it.
pub struct ObjectView<'a> {
    pub camera: &'a CameraModel,
    pub sup: &'a SupervisionMaps,
    pub t_u_to_i: &'a SimilarityTransform,
}

struct ObjectEval {
    total: f64,
    terms: Vec<(String, f64)>,
    d_silhouette: Vec<f64>,
    d_depth: Vec<f64>,
    tv_grads: Vec<f64>,
    xhat: SdfGrid,
    total_pose: SimilarityTransform,
}

fn eval_object_view(
    t_o: &SimilarityTransform,
    velocity: &SdfGrid,
    latent: &SdfGrid,
    flow_time: f64,
    view: &ObjectView,
    cfg: &GuidanceConfig,
) -> Result<ObjectEval> {
    let xhat = clean_estimate(latent, velocity, flow_time)?;
    let total_pose = t_o.compose(view.t_u_to_i);
    let params =
        ProjectorParams::for_camera(view.camera, cfg.projector_beta, cfg.projector_samples);
    let render = soft_project(&xhat, &total_pose, view.camera, &params);
    let posed = PosedSdf::new(&xhat, total_pose);
    let pred = soft_to_maps(&render, &posed, view.camera);
    let g2d = loss_2d_with_grads(&pred, view.sup)?;
    let (tv, tv_grads) = total_variation(&xhat);
    let pose_reg = t_o.translation.norm_squared() + t_o.scale.ln().powi(2);
    let [a_n, a_d, a_s, a_reg] = cfg.alpha;
    let total = a_n * g2d.terms.normal
        + a_d * g2d.terms.disparity
        + a_s * g2d.terms.silhouette
        + a_reg * (pose_reg + tv);
    let terms = vec![
        ("normal".into(), g2d.terms.normal),
        ("disparity".into(), g2d.terms.disparity),
        ("silhouette".into(), g2d.terms.silhouette),
        ("tv".into(), tv),
        ("pose_reg".into(), pose_reg),
    ];
    Ok(ObjectEval {
        total,
        terms,
        d_silhouette: g2d.d_silhouette,
        d_depth: g2d.d_depth,
        tv_grads,
        xhat,
        total_pose,
    })
}

/// Aligns the object pose and refines the velocity against the object view.
/// The velocity gradient is the clean-estimate cell gradient scaled by the
/// guidance multiplier and the remaining flow time.
pub fn phase2_optimize(
    t_o: &mut SimilarityTransform,
    velocity: &mut SdfGrid,
    latent: &SdfGrid,
    flow_time: f64,
    view: &ObjectView,
    cfg: &GuidanceConfig,
) -> Result<PhaseOutcome> {
    let pose_rates = cfg.phase2_rates.as_array();
    let mut adam_pose = AdamState::new(7);
    let mut adam_vel = AdamState::new(velocity.values.len());
    let params =
        ProjectorParams::for_camera(view.camera, cfg.projector_beta, cfg.projector_samples);
    let [_, a_d, a_s, a_reg] = cfg.alpha;

    let mut current = *t_o;
    let mut best = (f64::INFINITY, current, velocity.values.clone(), 0usize);
    let mut records = Vec::with_capacity(cfg.k2 + 1);

    for iter in 0..=cfg.k2 {
        let eval = eval_object_view(&current, velocity, latent, flow_time, view, cfg)?;
        if eval.total < best.0 {
            best = (eval.total, current, velocity.values.clone(), iter);
        }
        records.push(IterationRecord { iteration: iter, total: eval.total, terms: eval.terms });
        if iter == cfg.k2 {
            break;
        }

        let d_sil: Vec<f64> = eval.d_silhouette.iter().map(|g| a_s * g).collect();
        let d_depth: Vec<f64> = eval.d_depth.iter().map(|g| a_d * g).collect();
        let (_, soft_grads) = soft_project_with_grads(
            &eval.xhat,
            &eval.total_pose,
            view.camera,
            &params,
            &d_sil,
            &d_depth,
        );

        let mut g_pose = pullback_outer(&soft_grads.d_pose, &eval.total_pose, &current);
        g_pose.translation += a_reg * 2.0 * current.translation;
        g_pose.log_scale += a_reg * 2.0 * current.scale.ln();

        let scale = cfg.guidance_scale * (1.0 - flow_time);
        let d_v: Vec<f64> = soft_grads
            .d_cells
            .iter()
            .zip(&eval.tv_grads)
            .map(|(&g_cell, &g_tv)| scale * (g_cell + a_reg * g_tv))
            .collect();

        let delta = adam_pose.delta(&g_pose.as_array(), &pose_rates, &cfg.adam);
        current = stepped_by(&current, &delta)?;
        adam_vel.step(&mut velocity.values, &d_v, cfg.phase2_velocity_rate, &cfg.adam);
    }

    *t_o = best.1;
    velocity.values = best.2;
    Ok(PhaseOutcome {
        initial_loss: records[0].total,
        final_loss: best.0,
        best_iteration: best.3,
        records,
    })
}

/// Everything the joint phase sees: the full-scene view, the per-body
/// views it reuses, the hand geometry, and the latent anchor frame.
pub struct JointViews<'a> {
    pub camera: &'a CameraModel,
    pub sup_hoi: &'a SupervisionMaps,
    pub sup_hand: &'a SupervisionMaps,
    pub sup_object: &'a SupervisionMaps,
    pub hand_mesh: &'a TriMesh,
    pub hand_keypoints: &'a [Vec3],
    /// Canonical-frame hand distance field, posed by the hand transform
    /// when 3D terms need it.
    pub hand_sdf: &'a SdfGrid,
    pub t_u_to_i: &'a SimilarityTransform,
}

/// The hand's distance field resampled onto the latent grid, in latent
/// units, so it can be compared cell-by-cell with the clean estimate.
fn hand_field_on_latent(
    latent: &SdfGrid,
    hand_sdf: &SdfGrid,
    t_h: &SimilarityTransform,
    total: &SimilarityTransform,
) -> SdfGrid {
    let posed_hand = PosedSdf::new(hand_sdf, *t_h);
    let inv_scale = 1.0 / total.scale;
    let mut grid = latent.clone();
    let [nx, ny, nz] = latent.resolution;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let idx = grid.index([i, j, k]);
                let p = total.apply(latent.position([i, j, k]));
                grid.values[idx] = posed_hand.value(p) * inv_scale;
            }
        }
    }
    grid
}

/// One joint refinement pass over hand pose, object pose, and velocity.
pub fn phase3_step(
    t_h: &mut SimilarityTransform,
    t_o: &mut SimilarityTransform,
    velocity: &mut SdfGrid,
    latent: &SdfGrid,
    flow_time: f64,
    views: &JointViews,
    cfg: &GuidanceConfig,
) -> Result<PhaseOutcome> {
    let hand_view = HandView {
        mesh: views.hand_mesh,
        keypoints: views.hand_keypoints,
        camera: views.camera,
        sup: views.sup_hand,
    };
    let hand_rates = cfg.phase3_hand_rates.as_array();
    let object_rates = cfg.phase3_object_rates.as_array();
    let mut adam_hand = AdamState::new(7);
    let mut adam_object = AdamState::new(7);
    let mut adam_vel = AdamState::new(velocity.values.len());
    let params =
        ProjectorParams::for_camera(views.camera, cfg.projector_beta, cfg.projector_samples);
    let [g_n, g_d, g_s, g_inter, g_prox, g_hand, g_obj] = cfg.gamma;
    let [a_n, a_d, a_s, a_reg] = cfg.alpha;

    let mut cur_h = *t_h;
    let mut cur_o = *t_o;
    let mut best = (f64::INFINITY, cur_h, cur_o, velocity.values.clone(), 0usize);
    let mut records = Vec::with_capacity(cfg.k3 + 1);

    for iter in 0..=cfg.k3 {
        let xhat = clean_estimate(latent, velocity, flow_time)?;
        let total_pose = cur_o.compose(views.t_u_to_i);
        let posed_obj = PosedSdf::new(&xhat, total_pose);

        let hand_posed = views.hand_mesh.transformed(&cur_h);
        let hand_raster = rasterize(&[&hand_posed], views.camera);
        let obj_render = soft_project(&xhat, &total_pose, views.camera, &params);
        let obj_maps = soft_to_maps(&obj_render, &posed_obj, views.camera);
        let comp = composite_maps(&hand_raster, &obj_render, &obj_maps);

        let g_hoi = loss_2d_with_grads(&comp.maps, views.sup_hoi)?;
        let g_object = loss_2d_with_grads(&obj_maps, views.sup_object)?;
        let (hand_total, _) = hand_objective(&cur_h, &hand_raster, &hand_view, cfg)?;

        let hand_latent = hand_field_on_latent(latent, views.hand_sdf, &cur_h, &total_pose);
        let inter = loss_intersection(&hand_latent, &xhat, cfg.beta_g)?;
        let prox = loss_proximity_with_grads(
            &hand_posed.vertices,
            cur_h.translation,
            &posed_obj,
            cfg.delta_contact,
        )?;
        let (tv, tv_grads) = total_variation(&xhat);
        let obj_pose_reg =
            cur_o.translation.norm_squared() + cur_o.scale.ln().powi(2);
        let object_total = a_n * g_object.terms.normal
            + a_d * g_object.terms.disparity
            + a_s * g_object.terms.silhouette
            + a_reg * (obj_pose_reg + tv);

        let total = g_n * g_hoi.terms.normal
            + g_d * g_hoi.terms.disparity
            + g_s * g_hoi.terms.silhouette
            + g_inter * inter.surrogate
            + g_prox * prox.loss
            + g_hand * hand_total
            + g_obj * object_total;
        let terms = vec![
            ("normal".into(), g_hoi.terms.normal),
            ("disparity".into(), g_hoi.terms.disparity),
            ("silhouette".into(), g_hoi.terms.silhouette),
            ("intersection".into(), inter.surrogate),
            ("intersection_hard".into(), inter.hard),
            ("proximity".into(), prox.loss),
            ("hand_reuse".into(), hand_total),
            ("object_reuse".into(), object_total),
        ];
        if total < best.0 {
            best = (total, cur_h, cur_o, velocity.values.clone(), iter);
        }
        records.push(IterationRecord { iteration: iter, total, terms });
        if iter == cfg.k3 {
            break;
        }

        // one backward pass serves both the composite terms and the
        // object-view reuse term; their pixel upstreams add
        let d_sil_comp: Vec<f64> = g_hoi.d_silhouette.iter().map(|g| g_s * g).collect();
        let d_depth_comp: Vec<f64> = g_hoi.d_depth.iter().map(|g| g_d * g).collect();
        let (mut d_sil, mut d_depth) =
            mask_object_upstream(&hand_raster, &comp, &d_sil_comp, &d_depth_comp);
        for i in 0..d_sil.len() {
            d_sil[i] += g_obj * a_s * g_object.d_silhouette[i];
            d_depth[i] += g_obj * a_d * g_object.d_depth[i];
        }
        let (_, soft_grads) = soft_project_with_grads(
            &xhat,
            &total_pose,
            views.camera,
            &params,
            &d_sil,
            &d_depth,
        );

        let mut g_total_pose = soft_grads.d_pose;
        g_total_pose.add(&prox.d_object_pose.scaled(g_prox));
        let mut g_pose_o = pullback_outer(&g_total_pose, &total_pose, &cur_o);
        g_pose_o.translation += g_obj * a_reg * 2.0 * cur_o.translation;
        g_pose_o.log_scale += g_obj * a_reg * 2.0 * cur_o.scale.ln();

        let reuse = hand_grad_fd(&cur_h, &hand_view, cfg)?;
        let mut g_pose_h = prox.d_hand_pose.scaled(g_prox);
        g_pose_h.add(&TransformGrad::from_array(reuse).scaled(g_hand));

        let scale = cfg.guidance_scale * (1.0 - flow_time);
        let d_v: Vec<f64> = (0..velocity.values.len())
            .map(|i| {
                scale
                    * (soft_grads.d_cells[i]
                        + g_inter * inter.d_other[i]
                        + g_prox * prox.d_object_cells[i]
                        + g_obj * a_reg * tv_grads[i])
            })
            .collect();

        let delta_h = adam_hand.delta(&g_pose_h.as_array(), &hand_rates, &cfg.adam);
        cur_h = stepped_by(&cur_h, &delta_h)?;
        let delta_o = adam_object.delta(&g_pose_o.as_array(), &object_rates, &cfg.adam);
        cur_o = stepped_by(&cur_o, &delta_o)?;
        adam_vel.step(&mut velocity.values, &d_v, cfg.phase3_velocity_rate, &cfg.adam);
    }

    *t_h = best.1;
    *t_o = best.2;
    velocity.values = best.3;
    Ok(PhaseOutcome {
        initial_loss: records[0].total,
        final_loss: best.0,
        best_iteration: best.4,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{mesh_to_sdf, GridSpec};
    use crate::scene::{
        corrupt_frames, generate_scene, make_supervision_set, SceneSpec, ShapeClass,
        SupervisionSet,
    };

    fn zero_like(g: &SdfGrid) -> SdfGrid {
        SdfGrid::new(g.resolution, g.min, g.max, vec![0.0; g.values.len()]).unwrap()
    }

    fn test_scene(seed: u64, class: ShapeClass) -> (crate::scene::SyntheticScene, SupervisionSet) {
        let spec = SceneSpec {
            shape_class: class,
            object_mesh_resolution: 48,
            hand_mesh_resolution: 44,
            coarse_mesh_resolution: 40,
            ..SceneSpec::default()
        };
        let mut scene = generate_scene(seed, &spec).unwrap();
        corrupt_frames(&mut scene, seed.wrapping_add(100)).unwrap();
        let (sup, _) = make_supervision_set(&scene).unwrap();
        (scene, sup)
    }

    fn fast_config() -> GuidanceConfig {
        GuidanceConfig {
            k1: 120,
            k2: 40,
            k3: 25,
            projector_samples: 48,
            ..GuidanceConfig::default()
        }
    }

    #[test]
    fn pullback_matches_finite_differences_through_a_composed_pose() {
        let grid = SdfGrid::from_fn(20, |p| {
            p.norm() - 0.5 + 0.05 * (4.0 * p.x).sin() * (3.0 * p.y).cos()
        });
        let inner = SimilarityTransform::from_parts(
            1.2,
            Vec3::new(0.3, -0.2, 0.1),
            Vec3::new(0.1, 0.05, -0.08),
        )
        .unwrap();
        let outer = SimilarityTransform::from_parts(
            0.9,
            Vec3::new(-0.1, 0.25, 0.2),
            Vec3::new(-0.06, 0.12, 0.04),
        )
        .unwrap();
        let verts: Vec<Vec3> = (0..50)
            .map(|i| {
                let a = i as f64 * 0.61;
                Vec3::new(a.sin() * 0.7, (1.7 * a).cos() * 0.7, (0.9 * a).sin() * 0.7)
            })
            .collect();
        let delta = 0.05;

        let total = outer.compose(&inner);
        let posed = PosedSdf::new(&grid, total);
        let g = loss_proximity_with_grads(&verts, Vec3::zeros(), &posed, delta).unwrap();
        assert!(g.loss > 0.0);
        let g_outer = pullback_outer(&g.d_object_pose, &total, &outer).as_array();

        let eps = 1e-6;
        for axis in 0..7 {
            let hi = stepped_by(&outer, &axis_step(axis, eps)).unwrap().compose(&inner);
            let lo = stepped_by(&outer, &axis_step(axis, -eps)).unwrap().compose(&inner);
            let f_hi = super::super::losses::loss_proximity(
                &verts,
                &PosedSdf::new(&grid, hi),
                delta,
            )
            .unwrap();
            let f_lo = super::super::losses::loss_proximity(
                &verts,
                &PosedSdf::new(&grid, lo),
                delta,
            )
            .unwrap();
            let fd = (f_hi - f_lo) / (2.0 * eps);
            let rel = (g_outer[axis] - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-3, "axis {axis}: pullback {} vs fd {fd}", g_outer[axis]);
        }
    }

    #[test]
    fn displaced_hand_recovers() {
        let (scene, sup) = test_scene(31, ShapeClass::Cylinder);
        let cfg = fast_config();
        let view = HandView {
            mesh: &scene.hand_in_h,
            keypoints: &scene.hand_keypoints_in_h,
            camera: &scene.camera,
            sup: &sup.hand,
        };
        let gt = scene.frame_gt.t_h_to_i;
        let mut t_h = gt
            .stepped(0.0, Vec3::new(0.05, 0.0, -0.05), Vec3::new(0.12, -0.1, 0.1))
            .unwrap();
        let before = (t_h.translation - gt.translation).norm();
        assert!(before > 0.15);

        let outcome = phase1_optimize(&mut t_h, &view, &cfg).unwrap();
        // the heavily weighted raster terms quantize the objective at pixel
        // granularity, so the best iterate lands within a few pixels' worth
        // of translation of the truth rather than at the keypoint optimum
        let after = (t_h.translation - gt.translation).norm();
        let angle = t_h.rotation_angle_to(&gt);
        assert!(
            after < 0.06 && after < before / 3.0,
            "translation error {before} -> {after} (best at {})",
            outcome.best_iteration
        );
        assert!(angle < 0.05, "rotation error {angle}");
        assert!(outcome.final_loss <= outcome.initial_loss);
        assert_eq!(outcome.records.len(), cfg.k1 + 1);
    }

    #[test]
    #[ignore]
    fn dump_phase1_trajectory() {
        let (scene, sup) = test_scene(31, ShapeClass::Cylinder);
        let cfg = fast_config();
        let view = HandView {
            mesh: &scene.hand_in_h,
            keypoints: &scene.hand_keypoints_in_h,
            camera: &scene.camera,
            sup: &sup.hand,
        };
        let gt = scene.frame_gt.t_h_to_i;
        let init = gt
            .stepped(0.0, Vec3::new(0.05, 0.0, -0.05), Vec3::new(0.12, -0.1, 0.1))
            .unwrap();

        let rates = cfg.phase1_rates.as_array();
        let mut adam = AdamState::new(7);
        let mut current = init;
        for iter in 0..=cfg.k1 {
            let raster = rasterize(&[&view.mesh.transformed(&current)], view.camera);
            let (total, terms) = hand_objective(&current, &raster, &view, &cfg).unwrap();
            if iter % 10 == 0 {
                let te = (current.translation - gt.translation).norm();
                let re = current.rotation_angle_to(&gt);
                println!(
                    "iter {iter:3} total {total:10.4} terr {te:.4} rerr {re:.4} terms {:?}",
                    terms
                        .iter()
                        .map(|(k, v)| format!("{k}={v:.4}"))
                        .collect::<Vec<_>>()
                );
            }
            if iter == cfg.k1 {
                break;
            }
            let grad = hand_grad_fd(&current, &view, &cfg).unwrap();
            if iter % 10 == 0 {
                println!("    grad {:?}", grad.map(|g| format!("{g:.3}")));
            }
            let delta = adam.delta(&grad, &rates, &cfg.adam);
            if iter % 10 == 0 {
                println!("    delta {:?}", delta.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>());
            }
            current = stepped_by(&current, &delta).unwrap();
        }
    }

    #[test]
    fn perfectly_supervised_identity_pose_stays_put() {
        let (scene, _) = test_scene(30, ShapeClass::Box);
        let mut cfg = fast_config();
        cfg.k1 = 40;
        let mut sup = rasterize(&[&scene.hand_in_h], &scene.camera);
        let (kp2d, behind) =
            crate::renderer::project_keypoints(&scene.hand_keypoints_in_h, &scene.camera);
        sup.keypoints_2d = kp2d;
        sup.keypoints_behind = behind;
        let view = HandView {
            mesh: &scene.hand_in_h,
            keypoints: &scene.hand_keypoints_in_h,
            camera: &scene.camera,
            sup: &sup,
        };
        let mut t_h = SimilarityTransform::identity();
        let outcome = phase1_optimize(&mut t_h, &view, &cfg).unwrap();
        assert_eq!(outcome.best_iteration, 0);
        assert!((t_h.scale - 1.0).abs() < 1e-3);
        assert!(t_h.translation.norm() < 1e-3);
        assert!(t_h.rotation_angle_to(&SimilarityTransform::identity()) < 1e-3);
    }

    #[test]
    fn ruinous_step_sizes_cannot_make_the_result_worse() {
        let (scene, sup) = test_scene(32, ShapeClass::Sphere);
        let mut cfg = fast_config();
        cfg.k1 = 3;
        cfg.phase1_rates =
            super::super::config::GroupRates { scale: 5.0, rotation: 5.0, translation: 5.0 };
        let view = HandView {
            mesh: &scene.hand_in_h,
            keypoints: &scene.hand_keypoints_in_h,
            camera: &scene.camera,
            sup: &sup.hand,
        };
        let init = scene.frame_gt.t_h_to_i;
        let mut t_h = init;
        let outcome = phase1_optimize(&mut t_h, &view, &cfg).unwrap();
        assert!(outcome.final_loss <= outcome.initial_loss);
        if outcome.best_iteration == 0 {
            assert_eq!(t_h, init);
        }
    }

    #[test]
    fn object_view_gradients_match_finite_differences() {
        let (scene, sup) = test_scene(33, ShapeClass::Box);
        let mut cfg = fast_config();
        cfg.projector_samples = 40;
        let resolution = 24;
        let latent = scene.latent_target(resolution);
        let velocity = zero_like(&latent);
        let flow_time = 0.6;
        let t_o = SimilarityTransform::from_parts(
            1.05,
            Vec3::new(0.05, -0.04, 0.06),
            Vec3::new(0.06, -0.05, 0.04),
        )
        .unwrap();
        let view = ObjectView {
            camera: &scene.camera,
            sup: &sup.object,
            t_u_to_i: &scene.frame_gt.t_u_to_i,
        };
        let [_, a_d, a_s, a_reg] = cfg.alpha;

        // analytic pose gradient along the phase-2 path
        let eval = eval_object_view(&t_o, &velocity, &latent, flow_time, &view, &cfg).unwrap();
        let params = ProjectorParams::for_camera(
            view.camera,
            cfg.projector_beta,
            cfg.projector_samples,
        );
        let d_sil: Vec<f64> = eval.d_silhouette.iter().map(|g| a_s * g).collect();
        let d_depth: Vec<f64> = eval.d_depth.iter().map(|g| a_d * g).collect();
        let (_, soft_grads) = soft_project_with_grads(
            &eval.xhat,
            &eval.total_pose,
            view.camera,
            &params,
            &d_sil,
            &d_depth,
        );
        let mut g_pose = pullback_outer(&soft_grads.d_pose, &eval.total_pose, &t_o);
        g_pose.translation += a_reg * 2.0 * t_o.translation;
        g_pose.log_scale += a_reg * 2.0 * t_o.scale.ln();
        let analytic = g_pose.as_array();

        // the probe loss leaves the normal term out: it is traced but
        // carries no gradient
        let probe = |t: &SimilarityTransform| -> f64 {
            let e = eval_object_view(t, &velocity, &latent, flow_time, &view, &cfg).unwrap();
            let by_name: std::collections::HashMap<_, _> =
                e.terms.iter().map(|(k, v)| (k.clone(), *v)).collect();
            a_d * by_name["disparity"]
                + a_s * by_name["silhouette"]
                + a_reg * (by_name["pose_reg"] + by_name["tv"])
        };

        let mut accepted = 0;
        for axis in 0..7 {
            let fd_at = |e: f64| -> f64 {
                let hi = stepped_by(&t_o, &axis_step(axis, e)).unwrap();
                let lo = stepped_by(&t_o, &axis_step(axis, -e)).unwrap();
                (probe(&hi) - probe(&lo)) / (2.0 * e)
            };
            let fd = fd_at(1e-4);
            let fd_half = fd_at(5e-5);
            let scale = fd.abs().max(analytic[axis].abs()).max(1e-6);
            // quotients that disagree with their half-step sit on an
            // interpolant crease and prove nothing either way
            if (fd - fd_half).abs() > 1e-3 * scale {
                continue;
            }
            accepted += 1;
            assert!(
                (fd - analytic[axis]).abs() / scale < 5e-3,
                "axis {axis}: fd {fd} vs analytic {}",
                analytic[axis]
            );
        }
        assert!(accepted >= 4, "only {accepted} smooth axes");

        // velocity gradient at a handful of cells with live signal
        let scale_v = cfg.guidance_scale * (1.0 - flow_time);
        let d_v: Vec<f64> = soft_grads
            .d_cells
            .iter()
            .zip(&eval.tv_grads)
            .map(|(&g_cell, &g_tv)| scale_v * (g_cell + a_reg * g_tv))
            .collect();
        let probe_v = |v: &SdfGrid| -> f64 {
            let e = eval_object_view(&t_o, v, &latent, flow_time, &view, &cfg).unwrap();
            let by_name: std::collections::HashMap<_, _> =
                e.terms.iter().map(|(k, v)| (k.clone(), *v)).collect();
            cfg.guidance_scale
                * (a_d * by_name["disparity"]
                    + a_s * by_name["silhouette"]
                    + a_reg * (by_name["pose_reg"] + by_name["tv"]))
        };
        let live: Vec<usize> = (0..d_v.len())
            .filter(|&i| d_v[i].abs() > 1e-4)
            .step_by(37)
            .take(10)
            .collect();
        assert!(live.len() >= 6, "only {} live velocity cells", live.len());
        let mut accepted_v = 0;
        for &i in &live {
            let fd_at = |e: f64| -> f64 {
                let mut hi = velocity.clone();
                hi.values[i] += e;
                let mut lo = velocity.clone();
                lo.values[i] -= e;
                (probe_v(&hi) - probe_v(&lo)) / (2.0 * e)
            };
            let fd = fd_at(1e-4);
            let fd_half = fd_at(5e-5);
            let scale = fd.abs().max(d_v[i].abs());
            if (fd - fd_half).abs() > 1e-3 * scale {
                continue;
            }
            accepted_v += 1;
            let rel = (d_v[i] - fd).abs() / scale;
            assert!(rel < 5e-3, "cell {i}: {} vs fd {fd}", d_v[i]);
        }
        assert!(accepted_v >= 4, "only {accepted_v} smooth velocity cells");
    }

    #[test]
    fn displaced_object_realigns() {
        let (scene, sup) = test_scene(34, ShapeClass::Capsule);
        let cfg = fast_config();
        let resolution = 28;
        let latent = scene.latent_target(resolution);
        let mut velocity = zero_like(&latent);
        let flow_time = 0.6;
        let view = ObjectView {
            camera: &scene.camera,
            sup: &sup.object,
            t_u_to_i: &scene.frame_gt.t_u_to_i,
        };
        let mut t_o = SimilarityTransform::from_parts(
            (0.12f64).exp(),
            Vec3::zeros(),
            Vec3::new(0.12, -0.08, 0.1),
        )
        .unwrap();
        let before_t = t_o.translation.norm();
        let before_s = t_o.scale.ln().abs();

        let outcome =
            phase2_optimize(&mut t_o, &mut velocity, &latent, flow_time, &view, &cfg).unwrap();
        assert!(outcome.final_loss < outcome.initial_loss);
        let after_t = t_o.translation.norm();
        let after_s = t_o.scale.ln().abs();
        assert!(
            after_t < 0.5 * before_t,
            "translation misalignment {before_t} only fell to {after_t}"
        );
        assert!(
            after_s < 0.5 * before_s,
            "log-scale misalignment {before_s} only fell to {after_s}"
        );
    }

    fn hand_cache(scene: &crate::scene::SyntheticScene, cfg: &GuidanceConfig) -> SdfGrid {
        let (lo, hi) = scene.hand_in_h.bounds().unwrap();
        let pad = Vec3::new(cfg.hand_sdf_padding, cfg.hand_sdf_padding, cfg.hand_sdf_padding);
        let spec = GridSpec {
            resolution: [cfg.hand_sdf_resolution; 3],
            min: lo - pad,
            max: hi + pad,
        };
        mesh_to_sdf(&scene.hand_in_h, &spec).unwrap()
    }

    #[test]
    fn joint_phase_descends_and_reports_every_term() {
        let (scene, sup) = test_scene(35, ShapeClass::Torus);
        let mut cfg = fast_config();
        cfg.k3 = 15;
        let latent = scene.latent_target(24);
        let mut velocity = zero_like(&latent);
        let hand_sdf = hand_cache(&scene, &cfg);
        let views = JointViews {
            camera: &scene.camera,
            sup_hoi: &sup.hoi,
            sup_hand: &sup.hand,
            sup_object: &sup.object,
            hand_mesh: &scene.hand_in_h,
            hand_keypoints: &scene.hand_keypoints_in_h,
            hand_sdf: &hand_sdf,
            t_u_to_i: &scene.frame_gt.t_u_to_i,
        };
        let mut t_h = scene
            .frame_gt
            .t_h_to_i
            .stepped(0.0, Vec3::new(0.02, 0.0, 0.0), Vec3::new(0.03, -0.02, 0.02))
            .unwrap();
        let mut t_o = SimilarityTransform::from_parts(
            1.03,
            Vec3::zeros(),
            Vec3::new(0.04, 0.03, -0.03),
        )
        .unwrap();

        let outcome = phase3_step(
            &mut t_h,
            &mut t_o,
            &mut velocity,
            &latent,
            0.65,
            &views,
            &cfg,
        )
        .unwrap();
        assert!(outcome.final_loss <= outcome.initial_loss);
        assert_eq!(outcome.records.len(), cfg.k3 + 1);
        let names: Vec<&str> =
            outcome.records[0].terms.iter().map(|(k, _)| k.as_str()).collect();
        for required in [
            "normal",
            "disparity",
            "silhouette",
            "intersection",
            "intersection_hard",
            "proximity",
            "hand_reuse",
            "object_reuse",
        ] {
            assert!(names.contains(&required), "missing term {required}");
        }
    }

    #[test]
    fn interpenetration_term_falls_when_bodies_overlap() {
        let (scene, sup) = test_scene(36, ShapeClass::Sphere);
        let mut cfg = fast_config();
        cfg.k3 = 20;
        let latent = scene.latent_target(24);
        let mut velocity = zero_like(&latent);
        let hand_sdf = hand_cache(&scene, &cfg);
        let views = JointViews {
            camera: &scene.camera,
            sup_hoi: &sup.hoi,
            sup_hand: &sup.hand,
            sup_object: &sup.object,
            hand_mesh: &scene.hand_in_h,
            hand_keypoints: &scene.hand_keypoints_in_h,
            hand_sdf: &hand_sdf,
            t_u_to_i: &scene.frame_gt.t_u_to_i,
        };
        // push the object through its contact point: move it along the
        // outward object normal at the deepest hand vertex by the gap plus
        // a few latent cells of penetration
        let gap = scene.hand_object_gap();
        assert!(gap > 0.0);
        let contact = scene
            .hand_gt
            .vertices
            .iter()
            .copied()
            .min_by(|a, b| scene.object_sdf_world(*a).total_cmp(&scene.object_sdf_world(*b)))
            .unwrap();
        let eps = 1e-4;
        let mut normal = Vec3::zeros();
        for axis in 0..3 {
            let mut hi = contact;
            hi[axis] += eps;
            let mut lo = contact;
            lo[axis] -= eps;
            normal[axis] =
                (scene.object_sdf_world(hi) - scene.object_sdf_world(lo)) / (2.0 * eps);
        }
        let pen = 3.0 * latent.spacing().x * scene.frame_gt.t_u_to_i.scale;
        let shove = (gap + pen) * normal.normalize();
        let mut t_h = scene.frame_gt.t_h_to_i;
        let mut t_o = SimilarityTransform::new(1.0, crate::Mat3::identity(), shove).unwrap();
        let outcome = phase3_step(
            &mut t_h,
            &mut t_o,
            &mut velocity,
            &latent,
            0.65,
            &views,
            &cfg,
        )
        .unwrap();

        let surrogate_of = |r: &IterationRecord| -> f64 {
            r.terms.iter().find(|(k, _)| k == "intersection").unwrap().1
        };
        let first = surrogate_of(&outcome.records[0]);
        let best = surrogate_of(&outcome.records[outcome.best_iteration]);
        assert!(first > 5e-4, "bodies never overlapped ({first})");
        assert!(best < first, "surrogate {first} did not fall (best {best})");
    }
}
