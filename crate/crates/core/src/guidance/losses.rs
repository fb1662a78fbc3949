//! Loss terms shared by the guidance phases: rendered-map comparison,
//! keypoint reprojection, interpenetration, contact proximity, and the
//! total-variation regularizer.

use crate::geometry::{PosedSdf, SdfGrid, TransformGrad};
use crate::renderer::{project_keypoints, SupervisionMaps};
use crate::scene::CameraModel;
use crate::{Error, Result, Vec3};

const BCE_CLAMP: f64 = 1e-6;
const TV_SMOOTHING: f64 = 1e-3;

/// The three rendered-map terms, unweighted.
#[derive(Debug, Clone, Copy, Default)]
pub struct Loss2d {
    pub normal: f64,
    pub disparity: f64,
    pub silhouette: f64,
}

/// Map terms plus their per-pixel derivatives with respect to the predicted
/// soft silhouette and depth. The normal term is evaluated for the record
/// but carries no gradient.
#[derive(Debug, Clone)]
pub struct Loss2dGrads {
    pub terms: Loss2d,
    pub d_silhouette: Vec<f64>,
    pub d_depth: Vec<f64>,
}

fn check_same_size(pred: &SupervisionMaps, sup: &SupervisionMaps) -> Result<()> {
    if pred.width != sup.width || pred.height != sup.height {
        return Err(Error::MapSizeMismatch(format!(
            "predicted {}x{} vs supervision {}x{}",
            pred.width, pred.height, sup.width, sup.height
        )));
    }
    Ok(())
}

/// Supervision disparity range used to normalize both maps before the L1
/// term; a degenerate range falls back to the raw scale.
fn disparity_range(sup: &SupervisionMaps) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &d in &sup.disparity {
        if d > 0.0 {
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    if !(hi - lo).is_finite() || hi - lo < 1e-6 {
        (if lo.is_finite() { lo } else { 0.0 }, 1.0)
    } else {
        (lo, hi - lo)
    }
}

/// Normal alignment (1 - cosine over jointly valid pixels), L1 of jointly
/// normalized disparities, and binary cross-entropy of the silhouettes.
pub fn loss_2d(pred: &SupervisionMaps, sup: &SupervisionMaps) -> Result<Loss2d> {
    Ok(loss_2d_with_grads(pred, sup)?.terms)
}

pub fn loss_2d_with_grads(pred: &SupervisionMaps, sup: &SupervisionMaps) -> Result<Loss2dGrads> {
    check_same_size(pred, sup)?;
    let n_px = pred.width * pred.height;
    let mut d_silhouette = vec![0.0; n_px];
    let mut d_depth = vec![0.0; n_px];

    let mut normal_sum = 0.0;
    let mut normal_count = 0usize;
    for i in 0..n_px {
        if pred.normal_valid[i] && sup.normal_valid[i] {
            let a = pred.normal[i];
            let b = sup.normal[i];
            normal_sum += 1.0 - (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
            normal_count += 1;
        }
    }
    let normal = if normal_count > 0 { normal_sum / normal_count as f64 } else { 0.0 };

    let (lo, span) = disparity_range(sup);
    let joint: Vec<usize> =
        (0..n_px).filter(|&i| pred.disparity[i] > 0.0 && sup.disparity[i] > 0.0).collect();
    let mut disparity = 0.0;
    if !joint.is_empty() {
        let inv_n = 1.0 / joint.len() as f64;
        for &i in &joint {
            let dp = (pred.disparity[i] - lo) / span;
            let ds = (sup.disparity[i] - lo) / span;
            disparity += (dp - ds).abs() * inv_n;
            let sign = (dp - ds).signum();
            // disparity = 1/depth, so d(dp)/d(depth) = -disparity^2
            d_depth[i] = -sign * inv_n / span * pred.disparity[i] * pred.disparity[i];
        }
    }

    let mut silhouette = 0.0;
    let inv_px = 1.0 / n_px as f64;
    for i in 0..n_px {
        let y = sup.silhouette[i];
        let p = pred.silhouette[i];
        let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        silhouette -= (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()) * inv_px;
        if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
            d_silhouette[i] = (pc - y) / (pc * (1.0 - pc)) * inv_px;
        }
    }

    Ok(Loss2dGrads {
        terms: Loss2d { normal, disparity, silhouette },
        d_silhouette,
        d_depth,
    })
}

/// Mean squared pixel distance between projected keypoints and their
/// supervision, excluding points that project behind the camera.
#[derive(Debug, Clone, Copy)]
pub struct KeypointLoss {
    pub mean_sq_px: f64,
    pub excluded: usize,
}

pub fn loss_keypoints(
    points: &[Vec3],
    camera: &CameraModel,
    sup: &[[f64; 2]],
) -> Result<KeypointLoss> {
    if points.is_empty() {
        return Err(Error::EmptyInput("keypoint loss needs points"));
    }
    if points.len() != sup.len() {
        return Err(Error::MapSizeMismatch(format!(
            "{} predicted keypoints vs {} supervised",
            points.len(),
            sup.len()
        )));
    }
    let (projected, behind) = project_keypoints(points, camera);
    let mut sum = 0.0;
    let mut used = 0usize;
    for i in 0..points.len() {
        if behind[i] {
            continue;
        }
        let dx = projected[i][0] - sup[i][0];
        let dy = projected[i][1] - sup[i][1];
        sum += dx * dx + dy * dy;
        used += 1;
    }
    let mean_sq_px = if used > 0 { sum / used as f64 } else { 0.0 };
    Ok(KeypointLoss { mean_sq_px, excluded: points.len() - used })
}

/// Interpenetration on a shared grid: the exact fraction of cells inside
/// both fields, and a smoothed product-of-sigmoids surrogate whose gradient
/// with respect to the second field drives guidance.
#[derive(Debug, Clone)]
pub struct IntersectionLoss {
    pub hard: f64,
    pub surrogate: f64,
    pub d_other: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn loss_intersection(
    sdf_h: &SdfGrid,
    sdf_o: &SdfGrid,
    beta_g: f64,
) -> Result<IntersectionLoss> {
    sdf_h.same_shape(sdf_o)?;
    let k = sdf_h.values.len();
    let inv_k = 1.0 / k as f64;
    let mut hard_count = 0usize;
    let mut surrogate = 0.0;
    let mut d_other = vec![0.0; k];
    for i in 0..k {
        let h = sdf_h.values[i];
        let o = sdf_o.values[i];
        if h < 0.0 && o < 0.0 {
            hard_count += 1;
        }
        let sh = sigmoid(-beta_g * h);
        let so = sigmoid(-beta_g * o);
        surrogate += sh * so * inv_k;
        d_other[i] = -beta_g * inv_k * sh * so * (1.0 - so);
    }
    Ok(IntersectionLoss { hard: hard_count as f64 * inv_k, surrogate, d_other })
}

/// One-sided contact term: mean over hand vertices of how far each sits
/// beyond the contact margin from the object surface, with distance read
/// from the posed object SDF.
pub fn loss_proximity(vertices: &[Vec3], object: &PosedSdf, delta: f64) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::EmptyInput("proximity loss needs hand vertices"));
    }
    let inv_n = 1.0 / vertices.len() as f64;
    let mut sum = 0.0;
    for &v in vertices {
        sum += (object.value(v).abs() - delta).max(0.0) * inv_n;
    }
    Ok(sum)
}

/// Proximity value plus gradients for the object grid cells, the object
/// pose, and the pose of the hand the vertices ride on.
#[derive(Debug, Clone)]
pub struct ProximityGrads {
    pub loss: f64,
    pub d_object_cells: Vec<f64>,
    pub d_object_pose: TransformGrad,
    pub d_hand_pose: TransformGrad,
}

pub fn loss_proximity_with_grads(
    vertices: &[Vec3],
    hand_translation: Vec3,
    object: &PosedSdf,
    delta: f64,
) -> Result<ProximityGrads> {
    if vertices.is_empty() {
        return Err(Error::EmptyInput("proximity loss needs hand vertices"));
    }
    let inv_n = 1.0 / vertices.len() as f64;
    let mut loss = 0.0;
    let mut d_object_cells = vec![0.0; object.sdf.values.len()];
    let mut d_object_pose = TransformGrad::default();
    let mut d_hand_pose = TransformGrad::default();
    for &v in vertices {
        let e = object.eval(v);
        let excess = e.value.abs() - delta;
        if excess <= 0.0 {
            continue;
        }
        loss += excess * inv_n;
        let w = e.value.signum() * inv_n;
        for &(idx, g) in &e.grad_cells {
            d_object_cells[idx] += w * g;
        }
        d_object_pose.add_eval(&e, w);
        let arm = v - hand_translation;
        d_hand_pose.translation += w * e.grad_p;
        d_hand_pose.log_scale += w * e.grad_p.dot(&arm);
        d_hand_pose.rotation += w * arm.cross(&e.grad_p);
    }
    Ok(ProximityGrads { loss, d_object_cells, d_object_pose, d_hand_pose })
}

/// Smoothed total variation: mean over cells of the forward-difference
/// gradient magnitude, with its gradient scattered back to the cells.
pub fn total_variation(grid: &SdfGrid) -> (f64, Vec<f64>) {
    let [nx, ny, nz] = grid.resolution;
    let inv_k = 1.0 / grid.values.len() as f64;
    let mut sum = 0.0;
    let mut d_cells = vec![0.0; grid.values.len()];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let idx = grid.index([i, j, k]);
                let center = grid.values[idx];
                let mut diffs = [0.0; 3];
                let mut neighbors = [usize::MAX; 3];
                if i + 1 < nx {
                    neighbors[0] = grid.index([i + 1, j, k]);
                    diffs[0] = grid.values[neighbors[0]] - center;
                }
                if j + 1 < ny {
                    neighbors[1] = grid.index([i, j + 1, k]);
                    diffs[1] = grid.values[neighbors[1]] - center;
                }
                if k + 1 < nz {
                    neighbors[2] = grid.index([i, j, k + 1]);
                    diffs[2] = grid.values[neighbors[2]] - center;
                }
                let r = (diffs.iter().map(|d| d * d).sum::<f64>()
                    + TV_SMOOTHING * TV_SMOOTHING)
                    .sqrt();
                sum += (r - TV_SMOOTHING) * inv_k;
                for a in 0..3 {
                    if neighbors[a] != usize::MAX {
                        let g = diffs[a] / r * inv_k;
                        d_cells[neighbors[a]] += g;
                        d_cells[idx] -= g;
                    }
                }
            }
        }
    }
    (sum, d_cells)
}
