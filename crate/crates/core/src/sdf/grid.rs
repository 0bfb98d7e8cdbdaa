use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{MeshSdf, Result, SdfError};
use crate::mesh::{Aabb, TriMesh, Vec3};

/// Regular lattice of signed distances, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
    values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(dims: [usize; 3], origin: Vec3, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(SdfError::InvalidGrid(format!("dimensions {dims:?} must each be at least 2")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(SdfError::InvalidGrid(format!("spacing {spacing} must be positive")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(SdfError::InvalidGrid(format!(
                "{} values for dimensions {dims:?}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SdfError::InvalidGrid(format!("value {i} is not finite")));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
        })
    }

    /// Evaluates `f` at every lattice point.
    pub fn from_fn(dims: [usize; 3], origin: Vec3, spacing: f64, f: impl Fn(&Vec3) -> f64 + Sync) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        let probe = Self {
            dims,
            origin,
            spacing,
            values: Vec::new(),
        };
        let values = (0..n)
            .into_par_iter()
            .map(|i| f(&probe.point(probe.unravel(i))))
            .collect();
        Self::new(dims, origin, spacing, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn point(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn bounds(&self) -> Aabb {
        let far = self.point([self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1]);
        Aabb::new(self.origin, far)
    }

    /// Grid reflected across the x mid-plane of its own domain.
    pub fn mirrored_x(&self) -> Self {
        let mut values = self.values.clone();
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values[self.index(i, j, k)] = self.value(nx - 1 - i, j, k);
                }
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    /// Binary layout: 3 x u32 dims, 3 x f64 origin, f64 spacing, then f32 values
    /// (x fastest), all little-endian.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(40 + 4 * self.values.len());
        for d in self.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for c in self.origin.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&self.spacing.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 44 {
            return Err(SdfError::InvalidGrid("file shorter than header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dims = [u32_at(0), u32_at(4), u32_at(8)];
        let origin = Vec3::new(f64_at(12), f64_at(20), f64_at(28));
        let spacing = f64_at(36);
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let body = &bytes[44..];
        match n {
            Some(n) if n.checked_mul(4) == Some(body.len()) => {}
            _ => {
                return Err(SdfError::InvalidGrid(format!(
                    "body of {} bytes does not match dimensions {dims:?}",
                    body.len()
                )))
            }
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(dims, origin, spacing, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Samples the signed distance of `mesh` on a lattice spanning `domain`
/// inclusively. The domain must give equal spacing on every axis.
pub fn sample_sdf_grid(mesh: &TriMesh, dims: [usize; 3], domain: &Aabb) -> Result<SdfGrid> {
    if dims.iter().any(|&d| d < 2) {
        return Err(SdfError::InvalidGrid(format!("dimensions {dims:?} must each be at least 2")));
    }
    let extent = domain.extent();
    let spacing = extent.x / (dims[0] - 1) as f64;
    for a in 1..3 {
        let s = extent[a] / (dims[a] - 1) as f64;
        if (s - spacing).abs() > 1e-9 * spacing.abs().max(1e-300) {
            return Err(SdfError::InvalidGrid(format!(
                "domain {domain:?} gives unequal spacing for dimensions {dims:?}"
            )));
        }
    }
    let sdf = MeshSdf::new(mesh.clone());
    if !sdf.is_watertight() {
        return Err(SdfError::NotWatertight);
    }
    SdfGrid::from_fn(dims, domain.min, spacing, |p| {
        sdf.signed_distance(p).expect("watertightness checked above")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn two_cubed_has_eight_corners() {
        let m = primitives::icosphere(2, 0.5);
        let g = sample_sdf_grid(&m, [2, 2, 2], &Aabb::cube(-1.0, 1.0)).unwrap();
        assert_eq!(g.values().len(), 8);
        assert_eq!(g.point([1, 1, 1]), Vec3::repeat(1.0));
    }

    #[test]
    fn sphere_corner_value() {
        let m = primitives::icosphere(4, 0.5);
        let g = sample_sdf_grid(&m, [33, 33, 33], &Aabb::cube(-1.0, 1.0)).unwrap();
        let expected = 3f64.sqrt() - 0.5;
        assert!((g.value(0, 0, 0) - expected).abs() < 0.02);
        assert!((g.value(32, 32, 32) - expected).abs() < 0.02);
        assert!(g.value(16, 16, 16) < 0.0);
    }

    #[test]
    fn translation_equivariance() {
        let m = primitives::icosphere(2, 0.5);
        let shift = Vec3::new(0.25, -0.125, 0.0625);
        let moved = m.map_positions(|p| p + shift);
        let domain = Aabb::cube(-1.0, 1.0);
        let shifted_domain = Aabb::new(domain.min + shift, domain.max + shift);
        let a = sample_sdf_grid(&m, [9, 9, 9], &domain).unwrap();
        let b = sample_sdf_grid(&moved, [9, 9, 9], &shifted_domain).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn anisotropic_domain_rejected() {
        let m = primitives::icosphere(1, 0.5);
        let domain = Aabb::new(Vec3::repeat(-1.0), Vec3::new(1.0, 2.0, 1.0));
        assert!(matches!(
            sample_sdf_grid(&m, [5, 5, 5], &domain),
            Err(SdfError::InvalidGrid(_))
        ));
    }

    #[test]
    fn binary_layout() {
        let g = SdfGrid::new([2, 2, 3], Vec3::new(-1.0, 0.5, 2.0), 0.25, (0..12).map(|i| i as f64 - 5.5).collect()).unwrap();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 24 + 8 + 12 * 4);
        assert_eq!(&buf[0..4], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..20], &(-1.0f64).to_le_bytes());
        assert_eq!(&buf[36..44], &0.25f64.to_le_bytes());
        assert_eq!(&buf[44..48], &(-5.5f32).to_le_bytes());
        assert_eq!(SdfGrid::read(&buf[..]).unwrap(), g);
    }

    #[test]
    fn truncated_file_rejected() {
        let g = SdfGrid::new([2, 2, 2], Vec3::zeros(), 1.0, vec![1.0; 8]).unwrap();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        buf.pop();
        assert!(SdfGrid::read(&buf[..]).is_err());
    }
}
