//! Zero-isosurface extraction from SDF grids (marching cubes).
//!
//! Case triangulations are generated once at startup by tracing crossing
//! polygons over the cube faces. Ambiguous faces (alternating corner signs)
//! are resolved by always connecting crossings that flank an inside corner;
//! the rule depends only on the shared face's signs, so neighboring cells
//! agree and the output is watertight whenever the surface stays interior.

use crate::geometry::mesh::TriMesh;
use crate::geometry::sdf::SdfGrid;
use crate::{Error, Result, Vec3};
use std::collections::HashMap;
use std::sync::OnceLock;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

const FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 3, 7, 4],
    [1, 2, 6, 5],
];

const T_CLAMP: f64 = 1e-6;

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(x, y)| (x == a && y == b) || (x == b && y == a))
        .expect("corner pair is not a cube edge")
}

fn trilinear_unit(values: &[f64; 8], p: Vec3) -> (f64, Vec3) {
    let mut value = 0.0;
    let mut grad = Vec3::zeros();
    for (c, &v) in values.iter().enumerate() {
        let o = CORNERS[c];
        let w = |axis: usize| if o[axis] == 1 { p[axis] } else { 1.0 - p[axis] };
        let dw = |axis: usize| if o[axis] == 1 { 1.0 } else { -1.0 };
        value += v * w(0) * w(1) * w(2);
        grad.x += v * dw(0) * w(1) * w(2);
        grad.y += v * w(0) * dw(1) * w(2);
        grad.z += v * w(0) * w(1) * dw(2);
    }
    (value, grad)
}

/// Triangles for one sign configuration, as triples of cube-edge indices.
fn build_case(config: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| config & (1 << c) != 0;
    // partner[edge] lists the (at most two) crossings it connects to
    let mut partners: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for face in &FACES {
        // crossings in face-cycle order: (edge id, corner after the crossing)
        let mut crossings = Vec::new();
        for i in 0..4 {
            let a = face[i];
            let b = face[(i + 1) % 4];
            if inside(a) != inside(b) {
                crossings.push((edge_between(a, b), b));
            }
        }
        match crossings.len() {
            0 => {}
            2 => {
                partners[crossings[0].0].push(crossings[1].0);
                partners[crossings[1].0].push(crossings[0].0);
            }
            4 => {
                for i in 0..4 {
                    let (e0, corner) = crossings[i];
                    let (e1, _) = crossings[(i + 1) % 4];
                    if inside(corner) {
                        partners[e0].push(e1);
                        partners[e1].push(e0);
                    }
                }
            }
            _ => unreachable!("a face has 0, 2, or 4 crossings"),
        }
    }

    // peel the degree-2 adjacency into cycles
    let mut visited = [false; 12];
    let mut triangles = Vec::new();
    for start in 0..12 {
        if visited[start] || partners[start].is_empty() {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut prev = start;
        let mut cur = partners[start][0];
        while cur != start {
            visited[cur] = true;
            cycle.push(cur);
            let next = if partners[cur][0] == prev {
                partners[cur][1]
            } else {
                partners[cur][0]
            };
            prev = cur;
            cur = next;
        }

        // orient outward using edge midpoints and a representative field
        let rep: [f64; 8] = std::array::from_fn(|c| if inside(c) { -1.0 } else { 1.0 });
        let pos: Vec<Vec3> = cycle
            .iter()
            .map(|&e| {
                let (a, b) = EDGES[e];
                let pa = Vec3::new(CORNERS[a][0] as f64, CORNERS[a][1] as f64, CORNERS[a][2] as f64);
                let pb = Vec3::new(CORNERS[b][0] as f64, CORNERS[b][1] as f64, CORNERS[b][2] as f64);
                (pa + pb) / 2.0
            })
            .collect();
        let centroid = pos.iter().sum::<Vec3>() / pos.len() as f64;
        let mut area = Vec3::zeros();
        for i in 0..pos.len() {
            let j = (i + 1) % pos.len();
            area += (pos[i] - centroid).cross(&(pos[j] - centroid));
        }
        let (_, grad) = trilinear_unit(&rep, centroid);
        let aligned = area.dot(&grad);
        debug_assert!(aligned.abs() > 1e-9, "undecidable orientation for config {config}");
        if aligned < 0.0 {
            cycle.reverse();
        }

        for i in 1..cycle.len() - 1 {
            triangles.push([cycle[0] as u8, cycle[i] as u8, cycle[i + 1] as u8]);
        }
    }
    triangles
}

fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|config| build_case(config as u8)))
}

/// Extracts the zero level set as a triangle mesh with welded vertices.
pub fn sdf_to_mesh(sdf: &SdfGrid) -> Result<TriMesh> {
    let table = case_table();
    let [nx, ny, nz] = sdf.resolution;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // (lower node linear index, axis) -> welded vertex index
    let mut weld: HashMap<(usize, u8), u32> = HashMap::new();

    let mut vertex_on_edge = |sdf: &SdfGrid,
                              na: [usize; 3],
                              nb: [usize; 3],
                              vertices: &mut Vec<Vec3>|
     -> u32 {
        let (lo, hi, axis) = {
            let ia = sdf.index(na);
            let ib = sdf.index(nb);
            let axis = (0..3).find(|&k| na[k] != nb[k]).expect("nodes coincide") as u8;
            if ia < ib {
                (na, nb, axis)
            } else {
                (nb, na, axis)
            }
        };
        let key = (sdf.index(lo), axis);
        if let Some(&idx) = weld.get(&key) {
            return idx;
        }
        let va = sdf.value_at(lo);
        let vb = sdf.value_at(hi);
        let t = (va / (va - vb)).clamp(T_CLAMP, 1.0 - T_CLAMP);
        let pa = sdf.position(lo);
        let pb = sdf.position(hi);
        let idx = vertices.len() as u32;
        vertices.push(pa + t * (pb - pa));
        weld.insert(key, idx);
        idx
    };

    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                let mut config = 0u8;
                for (c, o) in CORNERS.iter().enumerate() {
                    if sdf.value_at([i + o[0], j + o[1], k + o[2]]) < 0.0 {
                        config |= 1 << c;
                    }
                }
                for tri in &table[config as usize] {
                    let mut idx = [0u32; 3];
                    for (n, &e) in tri.iter().enumerate() {
                        let (a, b) = EDGES[e as usize];
                        let na = [i + CORNERS[a][0], j + CORNERS[a][1], k + CORNERS[a][2]];
                        let nb = [i + CORNERS[b][0], j + CORNERS[b][1], k + CORNERS[b][2]];
                        idx[n] = vertex_on_edge(sdf, na, nb, &mut vertices);
                    }
                    faces.push(idx);
                }
            }
        }
    }

    if faces.is_empty() {
        return Err(Error::EmptySurface("sdf grid has no zero crossing"));
    }
    TriMesh::new(vertices, faces)
}
