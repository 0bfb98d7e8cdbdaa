//! Surface point sampling for shape encoding.
//!
//! Two clouds are drawn from a mesh: a uniform one (area-proportional) and an
//! importance one concentrated on sharp edges. Each is reduced to a query set
//! by farthest point sampling and the two query sets are concatenated.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{TriMesh, Vec3, NORMAL_TOLERANCE};
use crate::rng::{item_rng, seq_rng};

pub const DEFAULT_DIHEDRAL_THRESHOLD_DEG: f64 = 30.0;

const DOMAIN_UNIFORM: u64 = 1;
const DOMAIN_IMPORTANCE: u64 = 2;
const DOMAIN_FPS: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("total surface area {0:e} is too small to sample")]
    ZeroArea(f64),
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error("dihedral threshold {0} must lie in (0, 180) degrees")]
    InvalidThreshold(f64),
    #[error("requested {target} points but the input has only {available}")]
    TargetExceedsInput { target: usize, available: usize },
    #[error("positions ({positions}) and normals ({normals}) differ in length")]
    LengthMismatch { positions: usize, normals: usize },
    #[error("normal {0} is not unit length")]
    InvalidNormal(usize),
}

pub type Result<T> = std::result::Result<T, SamplingError>;

/// Points with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if positions.len() != normals.len() {
            return Err(SamplingError::LengthMismatch {
                positions: positions.len(),
                normals: normals.len(),
            });
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !((n.norm() - 1.0).abs() <= NORMAL_TOLERANCE))
        {
            return Err(SamplingError::InvalidNormal(i));
        }
        Ok(Self { positions, normals })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
        }
    }

    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        PointCloud {
            positions: [self.positions.as_slice(), other.positions.as_slice()].concat(),
            normals: [self.normals.as_slice(), other.normals.as_slice()].concat(),
        }
    }
}

/// Inverse-CDF lookup: index of the first bucket whose cumulative weight exceeds `x`.
/// Zero-weight buckets are never selected.
fn pick(cdf: &[f64], x: f64) -> usize {
    cdf.partition_point(|&c| c <= x).min(cdf.len() - 1)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Area-weighted uniform surface samples. Each point is placed in its triangle with
/// the square-root barycentric mapping and carries the face normal.
pub fn sample_uniform(mesh: &TriMesh, count: usize, seed: u64) -> Result<PointCloud> {
    if count == 0 {
        return Err(SamplingError::ZeroCount);
    }
    let cdf = cumulative((0..mesh.face_count()).map(|f| mesh.face_area(f)));
    let total = *cdf.last().expect("mesh has faces");
    if !(total >= 1e-12) {
        return Err(SamplingError::ZeroArea(total));
    }
    let (positions, normals): (Vec<Vec3>, Vec<Vec3>) = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, DOMAIN_UNIFORM, i as u64);
            let face = pick(&cdf, rng.random::<f64>() * total);
            let [a, b, c] = mesh.face_positions(face);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
            let n = mesh.face_normal(face).expect("sampled faces have positive area");
            (p, n)
        })
        .unzip();
    PointCloud::new(positions, normals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpEdge {
    pub a: u32,
    pub b: u32,
    /// Angle between the adjacent face normals; 180 for boundary and non-manifold edges.
    pub dihedral_deg: f64,
    /// Unit normal assigned to points sampled on this edge.
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpEdgeSet {
    pub threshold_deg: f64,
    pub edges: Vec<SharpEdge>,
}

/// Interior edges whose dihedral angle is at least `threshold_deg`, plus all
/// boundary edges, sorted by vertex pair.
pub fn detect_sharp_edges(mesh: &TriMesh, threshold_deg: f64) -> Result<SharpEdgeSet> {
    if !(threshold_deg > 0.0 && threshold_deg < 180.0) {
        return Err(SamplingError::InvalidThreshold(threshold_deg));
    }
    let mut edges: Vec<SharpEdge> = mesh
        .edge_faces()
        .into_iter()
        .filter_map(|((a, b), faces)| {
            let normals: Vec<Vec3> = faces.iter().filter_map(|&f| mesh.face_normal(f)).collect();
            let first = *normals.first()?;
            let (dihedral_deg, normal) = match normals.as_slice() {
                [n1, n2] if faces.len() == 2 => {
                    let angle = n1.dot(n2).clamp(-1.0, 1.0).acos().to_degrees();
                    (angle, (n1 + n2).try_normalize(1e-9).unwrap_or(*n1))
                }
                _ => {
                    let sum: Vec3 = normals.iter().sum();
                    (180.0, sum.try_normalize(1e-9).unwrap_or(first))
                }
            };
            (dihedral_deg >= threshold_deg).then_some(SharpEdge {
                a,
                b,
                dihedral_deg,
                normal,
            })
        })
        .collect();
    edges.sort_by_key(|e| (e.a, e.b));
    Ok(SharpEdgeSet {
        threshold_deg,
        edges,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSamples {
    pub cloud: PointCloud,
    /// The mesh had no sharp edges, so the cloud was drawn uniformly instead.
    pub fell_back: bool,
}

/// Samples points uniformly by length along the sharp edges of `mesh`.
/// Corners are covered as edge endpoints.
pub fn sample_importance(mesh: &TriMesh, count: usize, seed: u64, threshold_deg: f64) -> Result<ImportanceSamples> {
    if count == 0 {
        return Err(SamplingError::ZeroCount);
    }
    let set = detect_sharp_edges(mesh, threshold_deg)?;
    let v = mesh.vertices();
    let cdf = cumulative(
        set.edges
            .iter()
            .map(|e| (v[e.b as usize] - v[e.a as usize]).norm()),
    );
    let total = cdf.last().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Ok(ImportanceSamples {
            cloud: sample_uniform(mesh, count, seed)?,
            fell_back: true,
        });
    }
    let (positions, normals): (Vec<Vec3>, Vec<Vec3>) = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, DOMAIN_IMPORTANCE, i as u64);
            let e = &set.edges[pick(&cdf, rng.random::<f64>() * total)];
            let t = rng.random::<f64>();
            let (a, b) = (v[e.a as usize], v[e.b as usize]);
            (a + (b - a) * t, e.normal)
        })
        .unzip();
    Ok(ImportanceSamples {
        cloud: PointCloud::new(positions, normals)?,
        fell_back: false,
    })
}

/// Greedy farthest point sampling under squared Euclidean distance.
///
/// The first index is drawn from `seed`; each following index maximizes the
/// distance to the already selected set, ties going to the lowest index.
pub fn farthest_point_sampling(points: &[Vec3], target: usize, seed: u64) -> Result<Vec<usize>> {
    if target > points.len() {
        return Err(SamplingError::TargetExceedsInput {
            target,
            available: points.len(),
        });
    }
    if target == 0 {
        return Ok(Vec::new());
    }
    let start = seq_rng(seed, DOMAIN_FPS).random_range(0..points.len());
    Ok(farthest_point_sampling_from(points, target, start))
}

/// Farthest point sampling from a fixed start index.
pub fn farthest_point_sampling_from(points: &[Vec3], target: usize, start: usize) -> Vec<usize> {
    let mut selected = Vec::with_capacity(target);
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut current = start;
    loop {
        selected.push(current);
        min_d2[current] = f64::NEG_INFINITY;
        if selected.len() == target {
            return selected;
        }
        let p = points[current];
        min_d2.par_iter_mut().zip(points.par_iter()).for_each(|(d, q)| {
            if *d != f64::NEG_INFINITY {
                *d = d.min((q - p).norm_squared());
            }
        });
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        current = best;
    }
}

/// Query points built from the uniform and importance clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct PointQuerySet {
    pub uniform_indices: Vec<usize>,
    pub importance_indices: Vec<usize>,
    /// Uniform queries followed by importance queries.
    pub combined: PointCloud,
}

impl PointQuerySet {
    pub fn uniform_query(&self) -> &[Vec3] {
        &self.combined.positions()[..self.uniform_indices.len()]
    }

    pub fn importance_query(&self) -> &[Vec3] {
        &self.combined.positions()[self.uniform_indices.len()..]
    }
}

/// Applies FPS separately to both clouds and concatenates the results.
pub fn build_point_query(
    uniform: &PointCloud,
    importance: &PointCloud,
    uniform_target: usize,
    importance_target: usize,
    seed: u64,
) -> Result<PointQuerySet> {
    let uniform_indices = farthest_point_sampling(uniform.positions(), uniform_target, seed)?;
    let importance_indices =
        farthest_point_sampling(importance.positions(), importance_target, seed.wrapping_add(1))?;
    let combined = uniform
        .select(&uniform_indices)
        .concat(&importance.select(&importance_indices));
    Ok(PointQuerySet {
        uniform_indices,
        importance_indices,
        combined,
    })
}

/// Distance from `p` to the nearest of the 12 edges of the axis-aligned cube `[lo, hi]^3`.
#[cfg(test)]
pub(crate) fn distance_to_cube_edges(p: &Vec3, lo: f64, hi: f64) -> f64 {
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        for cu in [lo, hi] {
            for cw in [lo, hi] {
                let along = p[axis].clamp(lo, hi) - p[axis];
                let d = (along * along + (p[u] - cu).powi(2) + (p[w] - cw).powi(2)).sqrt();
                best = best.min(d);
            }
        }
    }
    best
}
