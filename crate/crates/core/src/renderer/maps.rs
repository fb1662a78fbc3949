//! Render-target maps and their disk formats.
//!
//! PPM (8-bit, P6) is for eyeballing; PFM (32-bit float, grayscale "Pf",
//! little-endian, bottom-up rows per the format's negative-scale convention)
//! preserves exact values.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Per-pixel channels produced by the rasterizer. Row-major, index
/// `y * width + x`; pixel centers at (x + 0.5, y + 0.5).
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionMaps {
    pub width: usize,
    pub height: usize,
    /// Camera-space unit face normals where `normal_valid`.
    pub normal: Vec<[f64; 3]>,
    pub normal_valid: Vec<bool>,
    /// Camera-space z of the nearest surface; +inf where empty.
    pub depth: Vec<f64>,
    /// 1/depth where covered, 0 elsewhere.
    pub disparity: Vec<f64>,
    /// Hard coverage in {0,1} from the rasterizer.
    pub silhouette: Vec<f64>,
    /// Projected keypoints, one entry per input point, paired with a flag
    /// marking points at or behind the camera plane.
    pub keypoints_2d: Vec<[f64; 2]>,
    pub keypoints_behind: Vec<bool>,
}

impl SupervisionMaps {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            normal: vec![[0.0; 3]; n],
            normal_valid: vec![false; n],
            depth: vec![f64::INFINITY; n],
            disparity: vec![0.0; n],
            silhouette: vec![0.0; n],
            keypoints_2d: Vec::new(),
            keypoints_behind: Vec::new(),
        }
    }

    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn covered_count(&self) -> usize {
        self.silhouette.iter().filter(|&&s| s > 0.5).count()
    }
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::MapSizeMismatch(format!(
            "ppm buffer holds {} bytes, expected {}",
            rgb.len(),
            width * height * 3
        )));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(rgb)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let bad = |detail: &str| Error::MalformedFile {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut header = String::new();
    for _ in 0..3 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("truncated ppm header"));
        }
        header.push_str(&line);
    }
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some("P6") {
        return Err(bad("not a binary ppm"));
    }
    let width: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad width"))?;
    let height: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad height"))?;
    if fields.next() != Some("255") {
        return Err(bad("unsupported max value"));
    }
    let mut rgb = vec![0u8; width * height * 3];
    r.read_exact(&mut rgb)?;
    Ok((width, height, rgb))
}

pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::MapSizeMismatch(format!(
            "pfm buffer holds {} values, expected {}",
            data.len(),
            width * height
        )));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    for y in (0..height).rev() {
        for x in 0..width {
            let v = data[y * width + x] as f32;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let bad = |detail: &str| Error::MalformedFile {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut header = String::new();
    for _ in 0..3 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("truncated pfm header"));
        }
        header.push_str(&line);
    }
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some("Pf") {
        return Err(bad("not a grayscale pfm"));
    }
    let width: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad width"))?;
    let height: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad height"))?;
    let scale: f64 = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian pfm not supported"));
    }
    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)?;
    let mut data = vec![0.0; width * height];
    let mut k = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            let bytes = [raw[k], raw[k + 1], raw[k + 2], raw[k + 3]];
            data[y * width + x] = f32::from_le_bytes(bytes) as f64;
            k += 4;
        }
    }
    Ok((width, height, data))
}

/// 8-bit grayscale preview with black = lo, white = hi.
pub fn scalar_to_rgb(data: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = (hi - lo).max(1e-12);
    let mut rgb = Vec::with_capacity(data.len() * 3);
    for &v in data {
        let g = (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
        rgb.extend_from_slice(&[g, g, g]);
    }
    rgb
}

/// Normal-map preview: xyz in [-1,1] mapped to rgb, invalid pixels black.
pub fn normals_to_rgb(normal: &[[f64; 3]], valid: &[bool]) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(normal.len() * 3);
    for (n, &ok) in normal.iter().zip(valid) {
        if ok {
            for c in 0..3 {
                rgb.push(((n[c] * 0.5 + 0.5).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        } else {
            rgb.extend_from_slice(&[0, 0, 0]);
        }
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let rgb: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        write_ppm(&path, 4, 3, &rgb).unwrap();
        let (w, h, back) = read_ppm(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, rgb);
    }

    #[test]
    fn pfm_round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        let data: Vec<f64> = (0..6 * 5)
            .map(|i| (i as f64 * 0.37 - 3.0) * 1.7)
            .map(|v| v as f32 as f64)
            .collect();
        write_pfm(&path, 6, 5, &data).unwrap();
        let (w, h, back) = read_pfm(&path).unwrap();
        assert_eq!((w, h), (6, 5));
        assert_eq!(back, data);
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_ppm(&dir.path().join("a.ppm"), 2, 2, &[0u8; 5]).is_err());
        assert!(write_pfm(&dir.path().join("a.pfm"), 2, 2, &[0.0; 3]).is_err());
    }

    #[test]
    fn corrupt_headers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"PF\n2 2\n-1.0\n").unwrap();
        assert!(read_pfm(&path).is_err());
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P3\n2 2\n255\n").unwrap();
        assert!(read_ppm(&path).is_err());
    }
}
