//! Monte-Carlo volume IoU and near-surface IoU.

use rand::Rng;
use rayon::prelude::*;

use super::{MeshSdf, Result, SdfError};
use crate::mesh::{Aabb, TriMesh, Vec3};
use crate::rng::item_rng;
use crate::sampling::sample_uniform;

const DOMAIN_VOLUME: u64 = 11;
const DOMAIN_BAND: u64 = 12;

/// A closed region with an inside test.
pub trait Solid: Sync {
    fn bounds(&self) -> Aabb;
    fn contains(&self, p: &Vec3) -> bool;
}

impl Solid for MeshSdf {
    fn bounds(&self) -> Aabb {
        self.mesh().bounds()
    }

    /// Sign of the signed distance: negative means inside.
    fn contains(&self, p: &Vec3) -> bool {
        super::is_inside(self.bvh(), self.mesh(), p)
    }
}

/// Analytic ball.
#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Solid for Sphere {
    fn bounds(&self) -> Aabb {
        Aabb::new(self.center.add_scalar(-self.radius), self.center.add_scalar(self.radius))
    }

    fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm_squared() < self.radius * self.radius
    }
}

/// Volume IoU estimated from `samples` uniform points in the union of both bounding boxes.
pub fn volume_iou(a: &impl Solid, b: &impl Solid, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(SdfError::ZeroSamples);
    }
    let domain = a.bounds().union(&b.bounds());
    let extent = domain.extent();
    let (inter, union) = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, DOMAIN_VOLUME, i as u64);
            let p = domain.min + Vec3::new(rng.random(), rng.random(), rng.random()).component_mul(&extent);
            let (ia, ib) = (a.contains(&p), b.contains(&p));
            ((ia && ib) as usize, (ia || ib) as usize)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    if union == 0 {
        return Err(SdfError::NoOccupiedSamples);
    }
    Ok(inter as f64 / union as f64)
}

/// Volume IoU of two watertight meshes.
pub fn volume_iou_meshes(a: &TriMesh, b: &TriMesh, samples: usize, seed: u64) -> Result<f64> {
    let (sa, sb) = (MeshSdf::new(a.clone()), MeshSdf::new(b.clone()));
    if !sa.is_watertight() || !sb.is_watertight() {
        return Err(SdfError::NotWatertight);
    }
    volume_iou(&sa, &sb, samples, seed)
}

/// Points scattered in the band of half-width `band` around the surface of `mesh`.
fn band_samples(mesh: &TriMesh, band: f64, samples: usize, seed: u64, domain: u64) -> Result<Vec<Vec3>> {
    let cloud = sample_uniform(mesh, samples, seed ^ domain)?;
    Ok(cloud
        .positions()
        .par_iter()
        .zip(cloud.normals().par_iter())
        .enumerate()
        .map(|(i, (p, n))| {
            let mut rng = item_rng(seed, DOMAIN_BAND + domain, i as u64);
            p + n * rng.random_range(-band..=band)
        })
        .collect())
}

/// IoU of the near-surface bands of two meshes.
///
/// `samples` points are drawn in the band of each mesh; a point is near a mesh
/// when its unsigned distance to it is at most `band`.
pub fn surface_iou(a: &TriMesh, b: &TriMesh, band: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(band > 0.0) {
        return Err(SdfError::InvalidBand(band));
    }
    if samples == 0 {
        return Err(SdfError::ZeroSamples);
    }
    let (sa, sb) = (MeshSdf::new(a.clone()), MeshSdf::new(b.clone()));
    let mut points = band_samples(a, band, samples, seed, 0)?;
    points.extend(band_samples(b, band, samples, seed, 1)?);
    let (inter, union) = points
        .par_iter()
        .map(|p| {
            let na = sa.unsigned_distance(p) <= band;
            let nb = sb.unsigned_distance(p) <= band;
            ((na && nb) as usize, (na || nb) as usize)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Default near-surface band: 2% of the diagonal of the union bounding box.
pub fn default_band(a: &TriMesh, b: &TriMesh) -> f64 {
    0.02 * a.bounds().union(&b.bounds()).diagonal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn identical_meshes() {
        let m = primitives::icosphere(2, 1.0);
        assert_eq!(volume_iou_meshes(&m, &m, 5000, 1).unwrap(), 1.0);
        assert_eq!(surface_iou(&m, &m, 0.05, 2000, 1).unwrap(), 1.0);
    }

    #[test]
    fn offset_cubes_overlap_one_third() {
        let a = primitives::unit_cube();
        let b = primitives::cuboid(Vec3::new(0.5, 0.0, 0.0), Vec3::repeat(1.0));
        let iou = volume_iou_meshes(&a, &b, 200_000, 7).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 0.02, "{iou}");
    }

    #[test]
    fn disjoint_meshes() {
        let a = primitives::unit_cube();
        let b = primitives::cuboid(Vec3::new(3.0, 0.0, 0.0), Vec3::repeat(1.0));
        assert_eq!(volume_iou_meshes(&a, &b, 20_000, 7).unwrap(), 0.0);
    }

    #[test]
    fn open_mesh_rejected() {
        let a = primitives::plane_grid(2, 2, 1.0, 1.0);
        assert!(matches!(volume_iou_meshes(&a, &a, 10, 0), Err(SdfError::NotWatertight)));
    }

    #[test]
    fn separated_bands() {
        let band = 0.02;
        let a = primitives::icosphere(4, 0.5);
        let b = primitives::icosphere(4, 0.5 + 2.0 * band);
        let iou = surface_iou(&a, &b, band, 20_000, 3).unwrap();
        assert!(iou < 0.03, "{iou}");
    }

    #[test]
    fn surface_iou_symmetric() {
        let a = primitives::icosphere(3, 0.5);
        let b = primitives::cuboid(Vec3::repeat(-0.4), Vec3::repeat(0.8));
        let ab = surface_iou(&a, &b, 0.05, 100_000, 5).unwrap();
        let ba = surface_iou(&b, &a, 0.05, 100_000, 5).unwrap();
        assert!((ab - ba).abs() <= 0.01, "{ab} vs {ba}");
    }

    #[test]
    fn sphere_solid_matches_mesh() {
        let s = Sphere {
            center: Vec3::zeros(),
            radius: 1.0,
        };
        let m = MeshSdf::new(primitives::icosphere(4, 1.0));
        let iou = volume_iou(&s, &m, 50_000, 2).unwrap();
        assert!(iou > 0.98, "{iou}");
    }
}
