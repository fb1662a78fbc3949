//! Similarity-transform ICP and the two-step canonical-frame registration
//! chain: coarse combined mesh onto the partial cloud, then the hand mesh
//! onto the combined mesh it appears in.

use crate::geometry::{SimilarityTransform, TriMesh};
use crate::spatial::KdTree;
use crate::{Error, Mat3, Result, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct IcpParams {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// fraction of worst correspondences dropped each iteration
    pub trim_fraction: f64,
    /// surface samples drawn per mesh in `register_chain`
    pub sample_count: usize,
    pub sample_seed: u64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            trim_fraction: 0.10,
            sample_count: 2048,
            sample_seed: 0x1c9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: SimilarityTransform,
    pub rms_error: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Registration chain output: `hand_to_image = image_from_union * hand_to_union`.
#[derive(Debug, Clone)]
pub struct RegistrationChain {
    pub union_to_image: IcpResult,
    pub hand_to_union: IcpResult,
    pub hand_to_image: SimilarityTransform,
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

/// Centroid-and-scale alignment: identity rotation, RMS-radius scale ratio.
pub fn init_centroid_scale(src: &[Vec3], dst: &[Vec3]) -> Result<SimilarityTransform> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyInput("init_centroid_scale needs non-empty sets"));
    }
    let c_src = centroid(src);
    let c_dst = centroid(dst);
    let rms = |points: &[Vec3], c: Vec3| {
        (points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / points.len() as f64).sqrt()
    };
    let r_src = rms(src, c_src);
    let r_dst = rms(dst, c_dst);
    if r_src < 1e-12 {
        return Err(Error::DegenerateGeometry(
            "source points coincide; scale undefined".into(),
        ));
    }
    let scale = if r_dst < 1e-12 { 1.0 } else { r_dst / r_src };
    SimilarityTransform::new(scale, Mat3::identity(), c_dst - scale * c_src)
}

/// Closed-form similarity fit minimizing `sum |dst_i - (s R src_i + t)|^2`.
fn umeyama(src: &[Vec3], dst: &[Vec3]) -> Result<SimilarityTransform> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(Error::EmptyInput("similarity fit needs 3+ paired points"));
    }
    let c_src = centroid(src);
    let c_dst = centroid(dst);
    let mut cov = Mat3::zeros();
    let mut var_src = 0.0;
    for i in 0..n {
        let x = src[i] - c_src;
        let y = dst[i] - c_dst;
        cov += y * x.transpose();
        var_src += x.norm_squared();
    }
    cov /= n as f64;
    var_src /= n as f64;
    if var_src < 1e-12 {
        return Err(Error::DegenerateGeometry(
            "source points coincide; similarity fit undefined".into(),
        ));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::DegenerateGeometry("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateGeometry("svd failed".into()))?;
    let d = svd.singular_values;
    if d[1] < 1e-12 * d[0].max(1e-300) {
        return Err(Error::DegenerateGeometry(
            "cross-covariance is rank-deficient; rotation not unique".into(),
        ));
    }
    let mut sign = Mat3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = u * sign * v_t;
    let scale = (d[0] + d[1] + sign[(2, 2)] * d[2]) / var_src;
    if !(scale > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "similarity fit produced non-positive scale {scale}"
        )));
    }
    let rotation = SimilarityTransform::orthonormalize(&rotation);
    SimilarityTransform::new(scale, rotation, c_dst - scale * (rotation * c_src))
}

/// Correspondences under `t`, worst `trim_fraction` dropped, with their RMS.
fn trimmed_matches(
    src: &[Vec3],
    tree: &KdTree,
    dst: &[Vec3],
    t: &SimilarityTransform,
    trim_fraction: f64,
) -> (Vec<(usize, usize)>, f64) {
    let mut pairs: Vec<(usize, usize, f64)> = src
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (j, d) = tree.nearest(t.apply(p));
            (i, j, d)
        })
        .collect();
    pairs.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)));
    let keep = ((src.len() as f64 * (1.0 - trim_fraction)).ceil() as usize)
        .clamp(3.min(src.len()), src.len());
    pairs.truncate(keep);
    let rms = (pairs.iter().map(|p| p.2).sum::<f64>() / keep as f64).sqrt();
    let _ = dst;
    (pairs.into_iter().map(|(i, j, _)| (i, j)).collect(), rms)
}

/// Trimmed point-set ICP with a closed-form similarity update per iteration.
/// The reported RMS is over the kept correspondences and never increases.
pub fn icp_similarity(
    src: &[Vec3],
    dst: &[Vec3],
    init: SimilarityTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyInput("icp needs non-empty point sets"));
    }
    let tree = KdTree::build(dst)?;
    let mut current = init;
    let (_, init_rms) = trimmed_matches(src, &tree, dst, &current, params.trim_fraction);
    let mut best = (current, init_rms);
    let mut converged = init_rms < params.tolerance;
    let mut iterations_used = 0;
    let mut stalled = 0;

    for iter in 1..=params.max_iterations {
        if converged {
            break;
        }
        let (pairs, _) = trimmed_matches(src, &tree, dst, &current, params.trim_fraction);
        let fit_src: Vec<Vec3> = pairs.iter().map(|&(i, _)| src[i]).collect();
        let fit_dst: Vec<Vec3> = pairs.iter().map(|&(_, j)| dst[j]).collect();
        let candidate = umeyama(&fit_src, &fit_dst)?;
        let (_, candidate_rms) =
            trimmed_matches(src, &tree, dst, &candidate, params.trim_fraction);
        iterations_used = iter;
        // trimming reshuffles the kept set, so per-iteration error can
        // wiggle; the result is the best transform seen, which makes the
        // reported error non-increasing in the iteration budget
        if candidate_rms < best.1 - params.tolerance {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if candidate_rms < best.1 {
            best = (candidate, candidate_rms);
        }
        current = candidate;
        if best.1 < params.tolerance || stalled >= 3 {
            converged = true;
        }
    }
    Ok(IcpResult {
        transform: best.0,
        rms_error: best.1,
        iterations_used,
        converged,
    })
}

/// Two-step registration: (1) combined coarse mesh onto the partial cloud,
/// (2) hand mesh onto the combined mesh, which contains a copy of the hand.
/// Trimming lets step 2 settle on the hand-shaped region and ignore the rest.
pub fn register_chain(
    coarse_hoi_union: &TriMesh,
    partial_cloud_image: &[Vec3],
    hand_mesh: &TriMesh,
    params: &IcpParams,
) -> Result<RegistrationChain> {
    let label = |step: &'static str| move |e: Error| Error::RegistrationStep {
        step,
        source: Box::new(e),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.sample_seed);
    let union_samples = coarse_hoi_union
        .sample_surface(params.sample_count, &mut rng)
        .map_err(label("union-to-image"))?;
    if partial_cloud_image.is_empty() {
        return Err(Error::RegistrationStep {
            step: "union-to-image",
            source: Box::new(Error::EmptyInput("partial cloud is empty")),
        });
    }
    let init_ui =
        init_centroid_scale(&union_samples, partial_cloud_image).map_err(label("union-to-image"))?;
    let union_to_image =
        icp_similarity(&union_samples, partial_cloud_image, init_ui, params)
            .map_err(label("union-to-image"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.sample_seed ^ 0x9e3779b97f4a7c15);
    let hand_samples = hand_mesh
        .sample_surface(params.sample_count, &mut rng)
        .map_err(label("hand-to-union"))?;
    let init_hu =
        init_centroid_scale(&hand_samples, &union_samples).map_err(label("hand-to-union"))?;
    let hand_to_union = icp_similarity(&hand_samples, &union_samples, init_hu, params)
        .map_err(label("hand-to-union"))?;

    let hand_to_image = union_to_image.transform.compose(&hand_to_union.transform);
    Ok(RegistrationChain { union_to_image, hand_to_union, hand_to_image })
}
