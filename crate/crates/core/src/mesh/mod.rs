//! Indexed triangle meshes, file I/O, BVH acceleration and UV atlas rasterization.

pub mod atlas;
pub mod bvh;
pub mod io;
pub mod primitives;
pub mod triangle;

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

pub use atlas::{face_chart_uvs, ChartScale, TexelSample, UvAtlas};
pub use bvh::{Bvh, ClosestHit, RayHit};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Normals must be unit length within this tolerance.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

/// Side length of the longest bounding-box axis after [`normalize_to_unit_cube`].
pub const NORMALIZED_EXTENT: f64 = 1.9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index}, mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("unsupported mesh format `{0}` (expected .obj or .ply)")]
    UnsupportedFormat(String),
    #[error("bounding box diagonal {0:e} is too small to normalize")]
    DegenerateExtent(f64),
    #[error("mesh has no UV coordinates")]
    MissingUvs,
    #[error("normal {0} is not unit length")]
    InvalidNormal(usize),
    #[error("uv coordinate of face {0} lies outside [0,1]")]
    UvOutOfRange(usize),
    #[error("attribute `{name}` has {got} entries, expected {expected}")]
    AttributeLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vector3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vector3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// The cube `[lo, hi]^3`.
    pub fn cube(lo: f64, hi: f64) -> Self {
        Self::new(Vec3::repeat(lo), Vec3::repeat(hi))
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        points.into_iter().fold(Self::EMPTY, |b, p| b.grow(p))
    }

    pub fn grow(&self, p: &Vec3) -> Self {
        Self::new(self.min.inf(p), self.max.sup(p))
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Self::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn padded(&self, pad: f64) -> Self {
        Self::new(self.min.add_scalar(-pad), self.max.add_scalar(pad))
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] && other.max[i] <= self.max[i])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test. Returns the entry distance if the ray overlaps the box within `[0, t_max]`.
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let a = (self.min[i] - origin[i]) * inv_dir[i];
            let b = (self.max[i] - origin[i]) * inv_dir[i];
            // NaN arises for 0 * inf when the origin lies on a slab plane of a parallel ray.
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            if !near.is_nan() {
                t0 = t0.max(near);
            }
            if !far.is_nan() {
                t1 = t1.min(far);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Indexed triangle mesh with optional per-vertex normals and per-corner UVs.
///
/// Construction validates indices, normal lengths and the UV range, so every
/// `TriMesh` in circulation satisfies those invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    normals: Option<Vec<Vec3>>,
    uvs: Option<Vec<[Vec2; 3]>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let count = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i as usize >= count) {
                return Err(MeshError::IndexOutOfRange {
                    face: fi,
                    index,
                    count,
                });
            }
        }
        Ok(Self {
            vertices,
            faces,
            normals: None,
            uvs: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.vertices.len() {
            return Err(MeshError::AttributeLength {
                name: "normals",
                got: normals.len(),
                expected: self.vertices.len(),
            });
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !((n.norm() - 1.0).abs() <= NORMAL_TOLERANCE))
        {
            return Err(MeshError::InvalidNormal(i));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_uvs(mut self, uvs: Vec<[Vec2; 3]>) -> Result<Self> {
        if uvs.len() != self.faces.len() {
            return Err(MeshError::AttributeLength {
                name: "uvs",
                got: uvs.len(),
                expected: self.faces.len(),
            });
        }
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if let Some(i) = uvs
            .iter()
            .position(|c| !c.iter().all(|uv| in_unit(uv.x) && in_unit(uv.y)))
        {
            return Err(MeshError::UvOutOfRange(i));
        }
        self.uvs = Some(uvs);
        Ok(self)
    }

    pub fn without_attributes(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
            normals: None,
            uvs: None,
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn uvs(&self) -> Option<&[[Vec2; 3]]> {
        self.uvs.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_positions(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Cross product of the face edges: direction is the geometric normal, length is twice the area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_positions(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    /// Unit face normal, or `None` for a zero-area face.
    pub fn face_normal(&self, face: usize) -> Option<Vec3> {
        let n = self.face_cross(face);
        let len = n.norm();
        (len > 0.0 && len.is_finite()).then(|| n / len)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Applies `f` to every vertex position; normals and UVs are carried over unchanged.
    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Applies a rotation to positions and normals.
    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| rotation * p).collect(),
            faces: self.faces.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| (rotation * n).normalize()).collect()),
            uvs: self.uvs.clone(),
        }
    }

    /// Maps each undirected edge `(min, max)` to the faces that contain it, in face order.
    pub fn edge_faces(&self) -> HashMap<(u32, u32), Vec<usize>> {
        let mut map: HashMap<(u32, u32), Vec<usize>> = HashMap::with_capacity(self.faces.len() * 2);
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        map
    }

    /// Every edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        self.edge_faces().values().all(|fs| fs.len() == 2)
    }

    /// Every edge is shared by at most two faces.
    pub fn is_edge_manifold(&self) -> bool {
        self.edge_faces().values().all(|fs| fs.len() <= 2)
    }

    /// Vertex adjacency lists, sorted and deduplicated.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Uniformly scales and translates `mesh` so its bounding box is centred at the
/// origin with longest side [`NORMALIZED_EXTENT`].
pub fn normalize_to_unit_cube(mesh: &TriMesh) -> Result<TriMesh> {
    let bounds = mesh.bounds();
    let diag = bounds.diagonal();
    if !(diag >= 1e-12) {
        return Err(MeshError::DegenerateExtent(diag));
    }
    let extent = bounds.extent();
    let longest = extent.x.max(extent.y).max(extent.z);
    let scale = NORMALIZED_EXTENT / longest;
    let center = bounds.center();
    Ok(mesh.map_positions(|p| (p - center) * scale))
}
