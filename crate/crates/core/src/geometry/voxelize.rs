//! Mesh-to-SDF conversion: exact point-triangle distance with a ray-parity
//! inside test swept along all three axes (majority vote).

use crate::geometry::mesh::TriMesh;
use crate::geometry::sdf::SdfGrid;
use crate::{Result, Vec3};

/// Target grid for `mesh_to_sdf`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub resolution: [usize; 3],
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: [32; 3],
            min: Vec3::new(-1.0, -1.0, -1.0),
            max: Vec3::new(1.0, 1.0, 1.0),
        }
    }
}

impl GridSpec {
    pub fn cubic(resolution: usize) -> Self {
        Self { resolution: [resolution; 3], ..Self::default() }
    }
}

/// Squared distance from `p` to triangle `(a, b, c)` (region-based closest point).
pub fn point_triangle_dist_sq(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - v * ab).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - w * ac).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - w * (c - b)).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - (v * ab + w * ac)).norm_squared()
}

/// Uniform triangle buckets over the mesh bounds, searched in expanding shells.
struct TriangleBuckets<'a> {
    mesh: &'a TriMesh,
    dims: [usize; 3],
    min: Vec3,
    cell: f64,
    buckets: Vec<Vec<u32>>,
}

impl<'a> TriangleBuckets<'a> {
    fn build(mesh: &'a TriMesh) -> Result<Self> {
        let (lo, hi) = mesh.bounds()?;
        let pad = 1e-9 + (hi - lo).norm() * 1e-9;
        let min = lo - Vec3::new(pad, pad, pad);
        let extent = hi - min + Vec3::new(pad, pad, pad);
        // aim for a few triangles per bucket
        let target = (mesh.faces.len() as f64).cbrt().ceil().max(4.0) as usize;
        let cell = (extent.x.max(extent.y).max(extent.z) / target as f64).max(1e-9);
        let dims = [
            (extent.x / cell).ceil() as usize + 1,
            (extent.y / cell).ceil() as usize + 1,
            (extent.z / cell).ceil() as usize + 1,
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (fi, _) in mesh.faces.iter().enumerate() {
            let [a, b, c] = mesh.face_vertices(fi);
            let mut flo = [0usize; 3];
            let mut fhi = [0usize; 3];
            for k in 0..3 {
                let lo_k = a[k].min(b[k]).min(c[k]);
                let hi_k = a[k].max(b[k]).max(c[k]);
                flo[k] = (((lo_k - min[k]) / cell).floor().max(0.0) as usize).min(dims[k] - 1);
                fhi[k] = (((hi_k - min[k]) / cell).floor().max(0.0) as usize).min(dims[k] - 1);
            }
            for x in flo[0]..=fhi[0] {
                for y in flo[1]..=fhi[1] {
                    for z in flo[2]..=fhi[2] {
                        buckets[(x * dims[1] + y) * dims[2] + z].push(fi as u32);
                    }
                }
            }
        }
        Ok(Self { mesh, dims, min, cell, buckets })
    }

    fn clamp_coord(&self, p: Vec3) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let i = ((p[k] - self.min[k]) / self.cell).floor();
            out[k] = (i.max(0.0) as usize).min(self.dims[k] - 1);
        }
        out
    }

    /// Unsigned distance from `p` to the mesh surface.
    fn distance(&self, p: Vec3) -> f64 {
        let home = self.clamp_coord(p);
        let max_ring = *self.dims.iter().max().unwrap();
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // once a hit exists, stop as soon as the ring cannot improve it
            if best.is_finite() {
                let ring_clearance = (ring as f64 - 1.0).max(0.0) * self.cell;
                if ring_clearance * ring_clearance > best {
                    break;
                }
            }
            for x in home[0].saturating_sub(ring)..=(home[0] + ring).min(self.dims[0] - 1) {
                for y in home[1].saturating_sub(ring)..=(home[1] + ring).min(self.dims[1] - 1) {
                    for z in home[2].saturating_sub(ring)..=(home[2] + ring).min(self.dims[2] - 1)
                    {
                        let on_shell = x.abs_diff(home[0]) == ring
                            || y.abs_diff(home[1]) == ring
                            || z.abs_diff(home[2]) == ring;
                        if !on_shell {
                            continue;
                        }
                        for &fi in &self.buckets[(x * self.dims[1] + y) * self.dims[2] + z] {
                            let [a, b, c] = self.mesh.face_vertices(fi as usize);
                            let d = point_triangle_dist_sq(p, a, b, c);
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
            }
        }
        best.sqrt()
    }
}

/// Per-node inside votes from parity sweeps along one axis.
///
/// For every grid line parallel to `axis`, all surface crossings are gathered
/// by projecting triangles onto the other two axes; a node is inside when an
/// odd number of crossings lies below it. Sweep lines carry tiny irrational
/// offsets so they never hit vertices or edges exactly.
fn parity_votes(mesh: &TriMesh, spec: &GridSpec, axis: usize, votes: &mut [u8]) {
    let res = spec.resolution;
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let spacing = |k: usize| (spec.max[k] - spec.min[k]) / (res[k] - 1) as f64;
    let hu = spacing(u);
    let hv = spacing(v);
    let off_u = 2e-7 * std::f64::consts::SQRT_2 * hu;
    let off_v = 2e-7 * std::f64::consts::E.sqrt() * hv;

    // crossings[column] = sorted axis-coordinates where the surface cuts the line
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); res[u] * res[v]];
    for fi in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_vertices(fi);
        let pu = [a[u], b[u], c[u]];
        let pv = [a[v], b[v], c[v]];
        let pw = [a[axis], b[axis], c[axis]];
        let lo_u = pu[0].min(pu[1]).min(pu[2]);
        let hi_u = pu[0].max(pu[1]).max(pu[2]);
        let lo_v = pv[0].min(pv[1]).min(pv[2]);
        let hi_v = pv[0].max(pv[1]).max(pv[2]);
        let iu0 = (((lo_u - off_u - spec.min[u]) / hu).ceil().max(0.0) as usize).min(res[u]);
        let iv0 = (((lo_v - off_v - spec.min[v]) / hv).ceil().max(0.0) as usize).min(res[v]);
        for iu in iu0..res[u] {
            let lu = spec.min[u] + hu * iu as f64 + off_u;
            if lu > hi_u {
                break;
            }
            for iv in iv0..res[v] {
                let lv = spec.min[v] + hv * iv as f64 + off_v;
                if lv > hi_v {
                    break;
                }
                // signed areas of the projected triangle against the line point
                let s0 = (pu[1] - pu[0]) * (lv - pv[0]) - (pv[1] - pv[0]) * (lu - pu[0]);
                let s1 = (pu[2] - pu[1]) * (lv - pv[1]) - (pv[2] - pv[1]) * (lu - pu[1]);
                let s2 = (pu[0] - pu[2]) * (lv - pv[2]) - (pv[0] - pv[2]) * (lu - pu[2]);
                let inside = (s0 > 0.0 && s1 > 0.0 && s2 > 0.0)
                    || (s0 < 0.0 && s1 < 0.0 && s2 < 0.0);
                if !inside {
                    continue;
                }
                let area = s0 + s1 + s2;
                if area.abs() < 1e-30 {
                    continue;
                }
                // barycentric interpolation of the axis coordinate
                let w = (s1 * pw[0] + s2 * pw[1] + s0 * pw[2]) / area;
                crossings[iu * res[v] + iv].push(w);
            }
        }
    }

    let stride = |ix: usize, iy: usize, iz: usize| (ix * res[1] + iy) * res[2] + iz;
    let hw = spacing(axis);
    for iu in 0..res[u] {
        for iv in 0..res[v] {
            let list = &mut crossings[iu * res[v] + iv];
            if list.is_empty() {
                continue;
            }
            list.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut below = 0usize;
            for iw in 0..res[axis] {
                let w = spec.min[axis] + hw * iw as f64;
                while below < list.len() && list[below] < w {
                    below += 1;
                }
                if below % 2 == 1 {
                    let mut ijk = [0usize; 3];
                    ijk[axis] = iw;
                    ijk[u] = iu;
                    ijk[v] = iv;
                    votes[stride(ijk[0], ijk[1], ijk[2])] += 1;
                }
            }
        }
    }
}

/// Samples the signed distance field of a watertight mesh on a regular grid.
pub fn mesh_to_sdf(mesh: &TriMesh, spec: &GridSpec) -> Result<SdfGrid> {
    mesh.check_watertight()?;
    let buckets = TriangleBuckets::build(mesh)?;
    let mut grid = SdfGrid::new(
        spec.resolution,
        spec.min,
        spec.max,
        vec![0.0; spec.resolution[0] * spec.resolution[1] * spec.resolution[2]],
    )?;
    let mut votes = vec![0u8; grid.cell_count()];
    for axis in 0..3 {
        parity_votes(mesh, spec, axis, &mut votes);
    }
    for i in 0..spec.resolution[0] {
        for j in 0..spec.resolution[1] {
            for k in 0..spec.resolution[2] {
                let idx = grid.index([i, j, k]);
                let d = buckets.distance(grid.position([i, j, k]));
                grid.values[idx] = if votes[idx] >= 2 { -d } else { d };
            }
        }
    }
    Ok(grid)
}
