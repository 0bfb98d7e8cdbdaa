//! Quadric error metric edge-collapse decimation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Matrix4, Vector4};

use super::{LowpolyError, Result};
use crate::mesh::{TriMesh, Vec3};

/// Below this `|det|` the optimal-position system counts as singular.
pub const SINGULAR_DET: f64 = 1e-12;
/// Two faces is the smallest open surface (a quad).
pub const MIN_TARGET_FACES: usize = 2;
/// Weight of the constraint planes through boundary edges.
pub const BOUNDARY_WEIGHT: f64 = 1e3;

type Quadric = Matrix4<f64>;

fn plane_quadric(n: &Vec3, point: &Vec3, weight: f64) -> Quadric {
    let p = Vector4::new(n.x, n.y, n.z, -n.dot(point));
    p * p.transpose() * weight
}

fn quadric_error(q: &Quadric, p: &Vec3) -> f64 {
    let v = Vector4::new(p.x, p.y, p.z, 1.0);
    (v.transpose() * q * v)[0].max(0.0)
}

/// Position minimizing `q`, or the best of midpoint and endpoints when the
/// system is singular (midpoint first on ties).
fn best_position(q: &Quadric, a: &Vec3, b: &Vec3) -> (Vec3, f64) {
    let m: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into();
    if m.determinant().abs() >= SINGULAR_DET {
        if let Some(inv) = m.try_inverse() {
            let p = -(inv * q.fixed_view::<3, 1>(0, 3));
            if p.iter().all(|c| c.is_finite()) {
                return (p, quadric_error(q, &p));
            }
        }
    }
    let mut best = ((a + b) * 0.5, f64::INFINITY);
    for p in [(a + b) * 0.5, *a, *b] {
        let e = quadric_error(q, &p);
        if e < best.1 {
            best = (p, e);
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    error: f64,
    a: u32,
    b: u32,
    version_a: u32,
    version_b: u32,
    position: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Reversed so that `BinaryHeap` pops the smallest error, then the
    /// lowest vertex pair.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .error
            .total_cmp(&self.error)
            .then((other.a, other.b).cmp(&(self.a, self.b)))
    }
}

/// Result of a decimation run.
#[derive(Debug, Clone)]
pub struct Decimation {
    pub mesh: TriMesh,
    /// Error of every executed collapse, in execution order.
    pub errors: Vec<f64>,
    /// Start offsets in `errors` of each pass over the rebuilt queue.
    pub passes: Vec<usize>,
    /// Whether the face count reached the target.
    pub reached: bool,
}

struct State {
    pos: Vec<Vec3>,
    quadric: Vec<Quadric>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    alive: Vec<bool>,
    boundary: Vec<bool>,
    version: Vec<u32>,
    face_count: usize,
}

impl State {
    fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut quadric = vec![Quadric::zeros(); n];
        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, f) in mesh.faces().iter().enumerate() {
            if let Some(normal) = mesh.face_normal(fi) {
                let k = plane_quadric(&normal, &mesh.vertices()[f[0] as usize], 1.0);
                for &v in f {
                    quadric[v as usize] += k;
                }
            }
            for &v in f {
                vertex_faces[v as usize].push(fi);
            }
        }
        let mut boundary = vec![false; n];
        for ((a, b), fs) in mesh.edge_faces() {
            if fs.len() != 1 {
                continue;
            }
            boundary[a as usize] = true;
            boundary[b as usize] = true;
            let Some(normal) = mesh.face_normal(fs[0]) else { continue };
            let (pa, pb) = (mesh.vertices()[a as usize], mesh.vertices()[b as usize]);
            let side = (pb - pa).cross(&normal);
            if side.norm() > 0.0 {
                let k = plane_quadric(&side.normalize(), &pa, BOUNDARY_WEIGHT);
                quadric[a as usize] += k;
                quadric[b as usize] += k;
            }
        }
        Self {
            pos: mesh.vertices().to_vec(),
            quadric,
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vertex_faces,
            alive: vec![true; n],
            boundary,
            version: vec![0; n],
            face_count: mesh.face_count(),
        }
    }

    fn live_faces(&self, v: u32) -> impl Iterator<Item = usize> + '_ {
        self.vertex_faces[v as usize].iter().copied().filter(|&f| self.face_alive[f])
    }

    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .live_faces(v)
            .flat_map(|f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        let q = self.quadric[a as usize] + self.quadric[b as usize];
        let (position, error) = best_position(&q, &self.pos[a as usize], &self.pos[b as usize]);
        Candidate {
            error,
            a,
            b,
            version_a: self.version[a as usize],
            version_b: self.version[b as usize],
            position,
        }
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.alive[c.a as usize]
            && self.alive[c.b as usize]
            && self.version[c.a as usize] == c.version_a
            && self.version[c.b as usize] == c.version_b
    }

    fn face_cross(&self, f: &[u32; 3], moved: &[u32], to: &Vec3) -> Vec3 {
        let p = f.map(|v| if moved.contains(&v) { *to } else { self.pos[v as usize] });
        (p[1] - p[0]).cross(&(p[2] - p[0]))
    }

    fn is_legal(&self, c: &Candidate) -> bool {
        let (a, b) = (c.a, c.b);
        let shared: Vec<usize> = self.live_faces(a).filter(|&f| self.faces[f].contains(&b)).collect();
        if shared.is_empty() || shared.len() > 2 {
            return false;
        }
        if shared.len() == 2 && self.boundary[a as usize] && self.boundary[b as usize] {
            return false;
        }
        // Link condition: the only common neighbours are the apexes of the shared faces.
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common = na.iter().filter(|v| nb.binary_search(v).is_ok()).count();
        if common != shared.len() {
            return false;
        }
        let moved = [a, b];
        let mut scale: f64 = 0.0;
        let mut kept: Vec<[u32; 3]> = Vec::new();
        for f in self.live_faces(a).chain(self.live_faces(b)) {
            let face = self.faces[f];
            if face.contains(&a) && face.contains(&b) {
                continue;
            }
            for k in 0..3 {
                let e = self.pos[face[(k + 1) % 3] as usize] - self.pos[face[k] as usize];
                scale = scale.max(e.norm_squared());
            }
            kept.push(face.map(|v| if v == b { a } else { v }));
        }
        for f in self.live_faces(a).chain(self.live_faces(b)) {
            let face = self.faces[f];
            if face.contains(&a) && face.contains(&b) {
                continue;
            }
            let old = self.face_cross(&face, &[], &c.position);
            let new = self.face_cross(&face, &moved, &c.position);
            if new.dot(&old) < 0.0 || new.norm() <= 1e-12 * scale {
                return false;
            }
        }
        // Two surviving faces on the same vertex triple would overlap.
        let mut keys: Vec<[u32; 3]> = kept
            .iter()
            .map(|f| {
                let mut k = *f;
                k.sort_unstable();
                k
            })
            .collect();
        keys.sort_unstable();
        keys.windows(2).all(|w| w[0] != w[1])
    }

    /// Merges `b` into `a` at `c.position`.
    fn collapse(&mut self, c: &Candidate) {
        let (a, b) = (c.a, c.b);
        self.pos[a as usize] = c.position;
        let qb = self.quadric[b as usize];
        self.quadric[a as usize] += qb;
        self.boundary[a as usize] |= self.boundary[b as usize];
        let b_faces = std::mem::take(&mut self.vertex_faces[b as usize]);
        for f in b_faces {
            if !self.face_alive[f] {
                continue;
            }
            if self.faces[f].contains(&a) {
                self.face_alive[f] = false;
                self.face_count -= 1;
            } else {
                for v in self.faces[f].iter_mut() {
                    if *v == b {
                        *v = a;
                    }
                }
                self.vertex_faces[a as usize].push(f);
            }
        }
        let alive = &self.face_alive;
        self.vertex_faces[a as usize].retain(|&f| alive[f]);
        self.vertex_faces[a as usize].sort_unstable();
        self.vertex_faces[a as usize].dedup();
        self.alive[b as usize] = false;
        self.version[a as usize] += 1;
        self.version[b as usize] += 1;
    }

    fn all_candidates(&self) -> BinaryHeap<Candidate> {
        let mut heap = BinaryHeap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            if !self.face_alive[fi] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                // Each undirected edge once: from the face where it runs low-to-high,
                // or from its only face on a boundary.
                if a < b || self.live_faces(a).filter(|&g| self.faces[g].contains(&b)).count() == 1 {
                    heap.push(self.candidate(a, b));
                }
            }
        }
        heap
    }

    fn into_mesh(self) -> TriMesh {
        let mut remap = vec![u32::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        for (v, &alive) in self.alive.iter().enumerate() {
            if alive && !self.vertex_faces[v].iter().all(|&f| !self.face_alive[f]) {
                remap[v] = vertices.len() as u32;
                vertices.push(self.pos[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| f.map(|v| remap[v as usize]))
            .collect();
        TriMesh::new(vertices, faces).expect("decimated mesh keeps valid indices")
    }
}

/// Collapses edges in order of increasing quadric error until at most
/// `target_faces` faces remain or no legal collapse is left. Normals and UVs
/// are dropped from the output.
///
/// Rejected collapses are not retried within a pass; when a pass runs out of
/// candidates the queue is rebuilt, and the run stops once a whole pass makes
/// no progress.
pub fn decimate(mesh: &TriMesh, target_faces: usize) -> Result<Decimation> {
    if target_faces < MIN_TARGET_FACES {
        return Err(LowpolyError::InvalidTarget(target_faces));
    }
    if !mesh.is_edge_manifold() {
        return Err(LowpolyError::NonManifoldInput);
    }
    if mesh.face_count() <= target_faces {
        return Ok(Decimation {
            mesh: mesh.clone(),
            errors: Vec::new(),
            passes: Vec::new(),
            reached: true,
        });
    }
    let mut state = State::new(mesh);
    let mut errors = Vec::new();
    let mut passes = Vec::new();
    loop {
        passes.push(errors.len());
        let before = errors.len();
        let mut heap = state.all_candidates();
        while state.face_count > target_faces {
            let Some(c) = heap.pop() else { break };
            if !state.is_current(&c) || !state.is_legal(&c) {
                continue;
            }
            state.collapse(&c);
            errors.push(c.error);
            for w in state.neighbors(c.a) {
                heap.push(state.candidate(c.a, w));
            }
        }
        if state.face_count <= target_faces || errors.len() == before {
            break;
        }
    }
    let reached = state.face_count <= target_faces;
    Ok(Decimation {
        mesh: state.into_mesh(),
        errors,
        passes,
        reached,
    })
}

/// [`decimate`] that fails with [`LowpolyError::TargetUnreachable`] when the
/// target is not met.
pub fn qem_decimate(mesh: &TriMesh, target_faces: usize) -> Result<TriMesh> {
    let d = decimate(mesh, target_faces)?;
    if !d.reached {
        return Err(LowpolyError::TargetUnreachable {
            target: target_faces,
            achieved: d.mesh.face_count(),
        });
    }
    Ok(d.mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::sampling::sample_uniform;
    use crate::sdf::MeshSdf;

    #[test]
    fn planar_grid_to_two_faces() {
        let m = primitives::plane_grid(10, 10, 1.0, 1.0);
        assert_eq!(m.face_count(), 200);
        let d = qem_decimate(&m, 2).unwrap();
        assert_eq!(d.face_count(), 2);
        assert!(d.is_edge_manifold());
        assert!(d.vertices().iter().all(|v| v.z.abs() < 1e-9));
    }

    #[test]
    fn cube_at_its_own_count_is_identity() {
        let m = primitives::unit_cube();
        let d = qem_decimate(&m, 12).unwrap();
        assert_eq!(d.vertices(), m.vertices());
        assert_eq!(d.faces(), m.faces());
    }

    #[test]
    fn rejects_bad_input() {
        let m = primitives::unit_cube();
        assert!(matches!(qem_decimate(&m, 1), Err(LowpolyError::InvalidTarget(1))));
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), -Vec3::z()];
        let fan = TriMesh::new(v, vec![[0, 1, 2], [0, 1, 3], [0, 1, 4], [2, 3, 4]]).unwrap();
        assert!(matches!(qem_decimate(&fan, 4), Err(LowpolyError::NonManifoldInput)));
    }

    #[test]
    fn closed_mesh_stays_closed() {
        let d = decimate(&primitives::unit_cube(), 2).unwrap();
        assert!(!d.reached);
        assert!(d.mesh.is_watertight());
        assert!(d.mesh.face_count() >= 4);
        assert!(matches!(
            qem_decimate(&primitives::unit_cube(), 2),
            Err(LowpolyError::TargetUnreachable { target: 2, .. })
        ));
    }

    #[test]
    fn icosphere_to_500() {
        let m = primitives::icosphere(4, 1.0);
        let d = decimate(&m, 500).unwrap();
        assert!(d.reached);
        assert!(d.mesh.face_count() <= 500);
        assert!(d.mesh.is_watertight());
        for w in d.errors[..d.passes.get(1).copied().unwrap_or(d.errors.len())].windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1e-12), "{} then {}", w[0], w[1]);
        }
        assert!(d.errors.iter().all(|&e| e >= 0.0));
        let sdf = MeshSdf::new(d.mesh.clone());
        let samples = sample_uniform(&m, 10_000, 3).unwrap();
        let mean: f64 = samples
            .positions()
            .iter()
            .map(|p| sdf.signed_distance(p).unwrap().abs())
            .sum::<f64>()
            / 10_000.0;
        assert!(mean < 0.01, "{mean}");
    }
}
