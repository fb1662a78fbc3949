//! Dense signed-distance grids with trilinear sampling and binary I/O.
//!
//! Values live on grid nodes spanning the extent inclusively, so spacing is
//! `(max - min) / (resolution - 1)` per axis. Negative means inside.

use crate::{Error, Result, Vec3};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "holdflow-sdf v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub resolution: [usize; 3],
    pub min: Vec3,
    pub max: Vec3,
    pub values: Vec<f64>,
}

/// Trilinear interpolation footprint: base corner, per-axis fractions, and
/// whether the query was clamped along each axis.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub corner: [usize; 3],
    pub frac: [f64; 3],
    pub clamped: [bool; 3],
}

impl SdfGrid {
    pub fn new(resolution: [usize; 3], min: Vec3, max: Vec3, values: Vec<f64>) -> Result<Self> {
        let count = resolution[0] * resolution[1] * resolution[2];
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::GridMismatch(format!(
                "resolution must be at least 2 per axis, got {resolution:?}"
            )));
        }
        if values.len() != count {
            return Err(Error::GridMismatch(format!(
                "expected {count} values for resolution {resolution:?}, got {}",
                values.len()
            )));
        }
        for k in 0..3 {
            if !(max[k] > min[k]) {
                return Err(Error::GridMismatch(format!(
                    "extent degenerate along axis {k}: [{}, {}]",
                    min[k], max[k]
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::GridMismatch("grid contains non-finite values".into()));
        }
        Ok(Self { resolution, min, max, values })
    }

    /// Cubic grid over [-1,1]^3 filled with a constant.
    pub fn filled(resolution: usize, value: f64) -> Self {
        let n = resolution * resolution * resolution;
        Self {
            resolution: [resolution; 3],
            min: Vec3::new(-1.0, -1.0, -1.0),
            max: Vec3::new(1.0, 1.0, 1.0),
            values: vec![value; n],
        }
    }

    /// Samples `f` at every node of a cubic [-1,1]^3 grid.
    pub fn from_fn(resolution: usize, f: impl Fn(Vec3) -> f64) -> Self {
        let mut g = Self::filled(resolution, 0.0);
        for i in 0..resolution {
            for j in 0..resolution {
                for k in 0..resolution {
                    let p = g.position([i, j, k]);
                    let idx = g.index([i, j, k]);
                    g.values[idx] = f(p);
                }
            }
        }
        g
    }

    /// Samples `f` at every node of a grid spanning `[min, max]` inclusively.
    pub fn sampled(
        resolution: [usize; 3],
        min: Vec3,
        max: Vec3,
        f: impl Fn(Vec3) -> f64,
    ) -> Result<Self> {
        let count = resolution[0]
            .saturating_mul(resolution[1])
            .saturating_mul(resolution[2]);
        let mut g = Self::new(resolution, min, max, vec![0.0; count])?;
        for i in 0..resolution[0] {
            for j in 0..resolution[1] {
                for k in 0..resolution[2] {
                    let p = g.position([i, j, k]);
                    let idx = g.index([i, j, k]);
                    g.values[idx] = f(p);
                }
            }
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::GridMismatch("grid contains non-finite values".into()));
        }
        Ok(g)
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> Vec3 {
        Vec3::new(
            (self.max.x - self.min.x) / (self.resolution[0] - 1) as f64,
            (self.max.y - self.min.y) / (self.resolution[1] - 1) as f64,
            (self.max.z - self.min.z) / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.resolution[1] + ijk[1]) * self.resolution[2] + ijk[2]
    }

    pub fn position(&self, ijk: [usize; 3]) -> Vec3 {
        let h = self.spacing();
        Vec3::new(
            self.min.x + h.x * ijk[0] as f64,
            self.min.y + h.y * ijk[1] as f64,
            self.min.z + h.z * ijk[2] as f64,
        )
    }

    pub fn value_at(&self, ijk: [usize; 3]) -> f64 {
        self.values[self.index(ijk)]
    }

    /// True signed-distance data stays within the extent diagonal.
    pub fn check_sdf_bounds(&self) -> Result<()> {
        let limit = self.diagonal() * (1.0 + 1e-9);
        for (i, &v) in self.values.iter().enumerate() {
            if v.abs() > limit {
                return Err(Error::GridMismatch(format!(
                    "cell {i} holds {v}, beyond the extent diagonal {limit:.4}"
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &SdfGrid) -> Result<()> {
        if self.resolution != other.resolution
            || (self.min - other.min).norm() > 1e-12
            || (self.max - other.max).norm() > 1e-12
        {
            return Err(Error::GridMismatch(format!(
                "grid shapes differ: {:?} vs {:?}",
                self.resolution, other.resolution
            )));
        }
        Ok(())
    }

    /// `self += a * x`, elementwise.
    pub fn axpy(&mut self, a: f64, x: &SdfGrid) -> Result<()> {
        self.same_shape(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    /// `(1-w)*a + w*b`, elementwise.
    pub fn blend(a: &SdfGrid, b: &SdfGrid, w: f64) -> Result<SdfGrid> {
        a.same_shape(b)?;
        let mut out = a.clone();
        for (o, v) in out.values.iter_mut().zip(&b.values) {
            *o = (1.0 - w) * *o + w * v;
        }
        Ok(out)
    }

    pub fn linf_diff(&self, other: &SdfGrid) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Locates `p` in the grid, clamping to the extent.
    pub fn stencil(&self, p: Vec3) -> Stencil {
        let h = self.spacing();
        let mut corner = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let mut clamped = [false; 3];
        for k in 0..3 {
            let u = (p[k] - self.min[k]) / h[k];
            let top = (self.resolution[k] - 1) as f64;
            let (u, was_clamped) = if u < 0.0 {
                (0.0, true)
            } else if u > top {
                (top, true)
            } else {
                (u, false)
            };
            let mut i = u.floor() as usize;
            if i >= self.resolution[k] - 1 {
                i = self.resolution[k] - 2;
            }
            corner[k] = i;
            frac[k] = u - i as f64;
            clamped[k] = was_clamped;
        }
        Stencil { corner, frac, clamped }
    }

    /// The eight (linear index, weight) pairs of the trilinear footprint.
    pub fn stencil_weights(&self, st: &Stencil) -> [(usize, f64); 8] {
        let [fx, fy, fz] = st.frac;
        let wx = [1.0 - fx, fx];
        let wy = [1.0 - fy, fy];
        let wz = [1.0 - fz, fz];
        let mut out = [(0usize, 0.0f64); 8];
        let mut n = 0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let idx = self.index([st.corner[0] + a, st.corner[1] + b, st.corner[2] + c]);
                    out[n] = (idx, wx[a] * wy[b] * wz[c]);
                    n += 1;
                }
            }
        }
        out
    }

    pub fn sample(&self, p: Vec3) -> f64 {
        self.sample_flag(p).0
    }

    /// Trilinear value plus whether `p` fell outside the extent.
    pub fn sample_flag(&self, p: Vec3) -> (f64, bool) {
        let st = self.stencil(p);
        let v = self
            .stencil_weights(&st)
            .iter()
            .map(|&(idx, w)| w * self.values[idx])
            .sum();
        (v, st.clamped.iter().any(|&c| c))
    }

    /// Spatial gradient of the trilinear interpolant. Zero along clamped axes
    /// (the clamped evaluation is constant there).
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        self.sample_and_gradient(p).1
    }

    pub fn sample_and_gradient(&self, p: Vec3) -> (f64, Vec3) {
        let st = self.stencil(p);
        let h = self.spacing();
        let [fx, fy, fz] = st.frac;
        let w = [[1.0 - fx, fx], [1.0 - fy, fy], [1.0 - fz, fz]];
        let mut value = 0.0;
        let mut grad = Vec3::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let v = self.values
                        [self.index([st.corner[0] + a, st.corner[1] + b, st.corner[2] + c])];
                    value += w[0][a] * w[1][b] * w[2][c] * v;
                    let da = if a == 0 { -1.0 } else { 1.0 };
                    let db = if b == 0 { -1.0 } else { 1.0 };
                    let dc = if c == 0 { -1.0 } else { 1.0 };
                    grad.x += da * w[1][b] * w[2][c] * v;
                    grad.y += w[0][a] * db * w[2][c] * v;
                    grad.z += w[0][a] * w[1][b] * dc * v;
                }
            }
        }
        for k in 0..3 {
            grad[k] = if st.clamped[k] { 0.0 } else { grad[k] / h[k] };
        }
        (value, grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{MAGIC}")?;
        writeln!(
            w,
            "resolution {} {} {}",
            self.resolution[0], self.resolution[1], self.resolution[2]
        )?;
        writeln!(w, "min {} {} {}", self.min.x, self.min.y, self.min.z)?;
        writeln!(w, "max {} {} {}", self.max.x, self.max.y, self.max.z)?;
        writeln!(w, "sign negative-inside")?;
        writeln!(w, "encoding f32-le")?;
        writeln!(w, "count {}", self.values.len())?;
        writeln!(w, "data")?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SdfGrid> {
        let file = std::fs::File::open(path)?;
        let mut reader = BufReader::new(file);
        let malformed = |detail: String| Error::MalformedFile {
            path: path.display().to_string(),
            detail,
        };
        let mut line = String::new();
        let mut read_line = |reader: &mut BufReader<std::fs::File>| -> Result<String> {
            line.clear();
            reader.read_line(&mut line)?;
            Ok(line.trim_end().to_string())
        };
        if read_line(&mut reader)? != MAGIC {
            return Err(malformed("missing magic line".into()));
        }
        let parse_triple = |s: &str, key: &str| -> Result<[f64; 3]> {
            let mut t = s.split_whitespace();
            if t.next() != Some(key) {
                return Err(malformed(format!("expected '{key}' header line, got '{s}'")));
            }
            let mut out = [0.0; 3];
            for o in &mut out {
                *o = t
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| malformed(format!("bad '{key}' header line")))?;
            }
            Ok(out)
        };
        let res = parse_triple(&read_line(&mut reader)?, "resolution")?;
        let resolution = [res[0] as usize, res[1] as usize, res[2] as usize];
        let mn = parse_triple(&read_line(&mut reader)?, "min")?;
        let mx = parse_triple(&read_line(&mut reader)?, "max")?;
        if read_line(&mut reader)? != "sign negative-inside" {
            return Err(malformed("unexpected sign convention".into()));
        }
        if read_line(&mut reader)? != "encoding f32-le" {
            return Err(malformed("unexpected encoding".into()));
        }
        let count_line = read_line(&mut reader)?;
        let count: usize = count_line
            .strip_prefix("count ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| malformed("bad count line".into()))?;
        if read_line(&mut reader)? != "data" {
            return Err(malformed("missing data marker".into()));
        }
        let mut bytes = vec![0u8; count * 4];
        reader.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        SdfGrid::new(
            resolution,
            Vec3::new(mn[0], mn[1], mn[2]),
            Vec3::new(mx[0], mx[1], mx[2]),
            values,
        )
    }
}
