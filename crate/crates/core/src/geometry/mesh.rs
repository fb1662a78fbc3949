//! Indexed triangle meshes, OBJ I/O, and surface sampling.

use crate::geometry::transform::SimilarityTransform;
use crate::{Error, Result, Vec3};
use rand::Rng;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::DegenerateGeometry(format!(
                    "face {i} references vertex out of range (n = {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateGeometry(format!(
                    "face {i} repeats a vertex index"
                )));
            }
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            if (b - a).cross(&(c - a)).norm_squared() == 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "face {i} has exactly zero area"
                )));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn face_vertices(&self, i: usize) -> [Vec3; 3] {
        let f = self.faces[i];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.face_vertices(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(i);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < DEGENERATE_AREA {
            Vec3::zeros()
        } else {
            n / len
        }
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    /// Signed volume via the divergence theorem; meaningful for closed meshes
    /// with consistent outward orientation.
    pub fn signed_volume(&self) -> f64 {
        let mut v = 0.0;
        for f in &self.faces {
            let a = self.vertices[f[0] as usize];
            let b = self.vertices[f[1] as usize];
            let c = self.vertices[f[2] as usize];
            v += a.dot(&b.cross(&c)) / 6.0;
        }
        v
    }

    /// Axis-aligned bounds as (min, max). Errors on an empty mesh.
    pub fn bounds(&self) -> Result<(Vec3, Vec3)> {
        if self.vertices.is_empty() {
            return Err(Error::EmptyInput("mesh has no vertices"));
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Ok((lo, hi))
    }

    pub fn centroid(&self) -> Result<Vec3> {
        if self.vertices.is_empty() {
            return Err(Error::EmptyInput("mesh has no vertices"));
        }
        Ok(self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64)
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| t.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Disjoint union of two meshes as one vertex/face soup (no welding).
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
        );
        TriMesh { vertices, faces }
    }

    /// Every edge must be shared by exactly two faces, traversed in opposite
    /// directions. Returns the offending edge count otherwise.
    pub fn check_watertight(&self) -> Result<()> {
        // (min, max) vertex pair -> signed count (+1 forward, -1 reverse)
        let mut edges: BTreeMap<(u32, u32), (i32, i32)> = BTreeMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                let entry = edges.entry(key).or_insert((0, 0));
                if a < b {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
        let bad = edges.values().filter(|&&(fwd, rev)| fwd != 1 || rev != 1).count();
        if bad > 0 {
            return Err(Error::NonWatertight(format!(
                "{bad} of {} edges are not shared by exactly two opposed faces",
                edges.len()
            )));
        }
        Ok(())
    }

    /// Drops faces whose area is below `DEGENERATE_AREA` and unreferenced vertices.
    pub fn pruned(&self) -> TriMesh {
        let kept: Vec<[u32; 3]> = (0..self.faces.len())
            .filter(|&i| self.face_area(i) > DEGENERATE_AREA)
            .map(|i| self.faces[i])
            .collect();
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(kept.len());
        for f in kept {
            let mut g = [0u32; 3];
            for k in 0..3 {
                let old = f[k] as usize;
                if remap[old] == u32::MAX {
                    remap[old] = vertices.len() as u32;
                    vertices.push(self.vertices[old]);
                }
                g[k] = remap[old];
            }
            faces.push(g);
        }
        TriMesh { vertices, faces }
    }

    /// Draws `n` points on the surface, faces chosen with probability
    /// proportional to area, positions uniform within each face.
    pub fn sample_surface(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Vec3>> {
        if self.faces.is_empty() {
            return Err(Error::EmptyInput("mesh has no faces to sample"));
        }
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for i in 0..self.faces.len() {
            total += self.face_area(i);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(Error::DegenerateGeometry(
                "mesh has zero total surface area".into(),
            ));
        }
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.gen_range(0.0..total);
            let idx = cumulative.partition_point(|&c| c <= r).min(self.faces.len() - 1);
            let [a, b, c] = self.face_vertices(idx);
            // uniform barycentric draw via square-root trick
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            let su = u.sqrt();
            let w0 = 1.0 - su;
            let w1 = su * (1.0 - v);
            let w2 = su * v;
            points.push(w0 * a + w1 * b + w2 * c);
        }
        Ok(points)
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_obj(path: &Path) -> Result<TriMesh> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let malformed = |line_no: usize, what: &str| Error::MalformedFile {
            path: path.display().to_string(),
            detail: format!("line {line_no}: {what}"),
        };
        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = line_no + 1;
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let mut coords = [0.0f64; 3];
                    for c in &mut coords {
                        *c = tokens
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| malformed(line_no, "bad vertex coordinate"))?;
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for t in tokens {
                        // accept "3", "3/1", "3//2" forms; only the position index matters
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| malformed(line_no, "bad face index"))?;
                        if i < 1 {
                            return Err(malformed(line_no, "face index must be >= 1"));
                        }
                        idx.push((i - 1) as u32);
                    }
                    if idx.len() < 3 {
                        return Err(malformed(line_no, "face needs at least 3 indices"));
                    }
                    // fan-triangulate polygons
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriMesh::new(vertices, faces)
    }
}
