//! Signed distance fields: mesh distance queries, regular grids, marching
//! cubes extraction and volume/surface IoU metrics.

pub mod grid;
pub mod marching_cubes;
pub mod metrics;

use std::sync::OnceLock;

use thiserror::Error;

use crate::mesh::{Aabb, Bvh, MeshError, TriMesh, Vec3};
use crate::sampling::SamplingError;

pub use grid::{sample_sdf_grid, SdfGrid};
pub use marching_cubes::marching_cubes;
pub use metrics::{surface_iou, volume_iou, volume_iou_meshes, Solid, Sphere};

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("mesh is not watertight; the sign of the distance is undefined")]
    NotWatertight,
    #[error("iso value {0} is not crossed anywhere in the grid")]
    EmptySurface(f64),
    #[error("no sample fell inside either shape")]
    NoOccupiedSamples,
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("band must be positive, got {0}")]
    InvalidBand(f64),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SdfError>;

/// Barycentric margin below which a ray hit counts as grazing an edge or vertex.
const GRAZE_EPS: f64 = 1e-9;

/// Primary parity direction followed by the two tie-break directions.
fn vote_directions() -> [Vec3; 3] {
    [
        Vec3::x(),
        Vec3::new(0.285_714, 0.928_571, 0.238_095).normalize(),
        Vec3::new(-0.412_3, 0.155_7, 0.897_6).normalize(),
    ]
}

/// Crossings along a ray, merging hits at the same distance (a ray through a
/// shared edge reports both adjacent faces).
fn crossing_count(bvh: &Bvh, mesh: &TriMesh, p: &Vec3, dir: &Vec3) -> (usize, bool) {
    let (hits, grazing) = bvh.ray_hits(mesh, p, dir, f64::INFINITY, GRAZE_EPS);
    let mut count = 0;
    let mut last = f64::NEG_INFINITY;
    for h in hits {
        if h.t - last > 1e-10 * h.t.abs().max(1.0) {
            count += 1;
            last = h.t;
        }
    }
    (count, grazing)
}

/// Parity inside test along +x, falling back to a three-direction majority
/// vote when the +x ray grazes an edge, vertex or face plane.
pub fn is_inside(bvh: &Bvh, mesh: &TriMesh, p: &Vec3) -> bool {
    let dirs = vote_directions();
    let (count, grazing) = crossing_count(bvh, mesh, p, &dirs[0]);
    if !grazing {
        return count % 2 == 1;
    }
    let votes = dirs
        .iter()
        .filter(|d| crossing_count(bvh, mesh, p, d).0 % 2 == 1)
        .count();
    votes >= 2
}

/// Distance to the nearest surface point (any mesh).
pub fn unsigned_distance(bvh: &Bvh, mesh: &TriMesh, p: &Vec3) -> f64 {
    bvh.closest_point(mesh, p).distance()
}

/// Signed distance to a watertight mesh, negative inside.
///
/// Checks watertightness on every call; use [`MeshSdf`] for repeated queries.
pub fn signed_distance(bvh: &Bvh, mesh: &TriMesh, p: &Vec3) -> Result<f64> {
    if !mesh.is_watertight() {
        return Err(SdfError::NotWatertight);
    }
    Ok(signed_distance_unchecked(bvh, mesh, p))
}

fn signed_distance_unchecked(bvh: &Bvh, mesh: &TriMesh, p: &Vec3) -> f64 {
    let d = unsigned_distance(bvh, mesh, p);
    if d == 0.0 {
        return 0.0;
    }
    if is_inside(bvh, mesh, p) {
        -d
    } else {
        d
    }
}

/// A mesh with its BVH and a lazily computed watertightness flag.
#[derive(Debug, Clone)]
pub struct MeshSdf {
    mesh: TriMesh,
    bvh: Bvh,
    watertight: OnceLock<bool>,
}

impl MeshSdf {
    pub fn new(mesh: TriMesh) -> Self {
        let bvh = Bvh::build(&mesh);
        Self {
            mesh,
            bvh,
            watertight: OnceLock::new(),
        }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn is_watertight(&self) -> bool {
        *self.watertight.get_or_init(|| self.mesh.is_watertight())
    }

    pub fn unsigned_distance(&self, p: &Vec3) -> f64 {
        unsigned_distance(&self.bvh, &self.mesh, p)
    }

    pub fn signed_distance(&self, p: &Vec3) -> Result<f64> {
        if !self.is_watertight() {
            return Err(SdfError::NotWatertight);
        }
        Ok(signed_distance_unchecked(&self.bvh, &self.mesh, p))
    }

    pub fn bounds(&self) -> Aabb {
        self.mesh.bounds()
    }
}
