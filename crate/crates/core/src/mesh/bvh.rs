//! Bounding volume hierarchy over mesh faces.
//!
//! Built by median split of face centroids along the longest axis of the
//! centroid bounds. Leaves hold at most [`MAX_LEAF_SIZE`] faces.

use super::triangle::{closest_point, ShearedRay, RAY_T_MIN};
use super::{Aabb, TriMesh, Vec3};

pub const MAX_LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    face_order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: u32,
    pub bary: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub distance_sq: f64,
    pub point: Vec3,
    pub face: u32,
    pub bary: [f64; 3],
}

impl ClosestHit {
    pub fn distance(&self) -> f64 {
        self.distance_sq.sqrt()
    }
}

fn face_bounds(mesh: &TriMesh, face: usize) -> Aabb {
    Aabb::from_points(&mesh.face_positions(face))
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let pad = 1e-9 * mesh.bounds().diagonal().max(1e-300);
        let mut items: Vec<(u32, Vec3)> = (0..mesh.face_count())
            .map(|f| {
                let [a, b, c] = mesh.face_positions(f);
                (f as u32, (a + b + c) / 3.0)
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * mesh.face_count() / MAX_LEAF_SIZE + 1),
            face_order: Vec::with_capacity(mesh.face_count()),
        };
        bvh.build_node(mesh, &mut items, pad);
        bvh
    }

    fn build_node(&mut self, mesh: &TriMesh, items: &mut [(u32, Vec3)], pad: f64) -> u32 {
        let bounds = items
            .iter()
            .fold(Aabb::EMPTY, |b, (f, _)| b.union(&face_bounds(mesh, *f as usize)))
            .padded(pad);
        let index = self.nodes.len() as u32;
        if items.len() <= MAX_LEAF_SIZE {
            let start = self.face_order.len() as u32;
            self.face_order.extend(items.iter().map(|(f, _)| *f));
            self.nodes.push(BvhNode {
                bounds,
                kind: NodeKind::Leaf {
                    start,
                    count: items.len() as u32,
                },
            });
            return index;
        }
        let axis = Aabb::from_points(items.iter().map(|(_, c)| c)).longest_axis();
        items.sort_unstable_by(|a, b| a.1[axis].total_cmp(&b.1[axis]).then(a.0.cmp(&b.0)));
        self.nodes.push(BvhNode {
            bounds,
            kind: NodeKind::Leaf { start: 0, count: 0 },
        });
        let mid = items.len() / 2;
        let (lo, hi) = items.split_at_mut(mid);
        let left = self.build_node(mesh, lo, pad);
        let right = self.build_node(mesh, hi, pad);
        self.nodes[index as usize].kind = NodeKind::Inner { left, right };
        index
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn root(&self) -> &BvhNode {
        &self.nodes[0]
    }

    pub fn leaf_faces(&self, node: &BvhNode) -> &[u32] {
        match node.kind {
            NodeKind::Leaf { start, count } => {
                &self.face_order[start as usize..(start + count) as usize]
            }
            NodeKind::Inner { .. } => &[],
        }
    }

    /// Nearest hit with `t` in `(RAY_T_MIN, t_max)`; equal `t` resolves to the lowest face index.
    pub fn ray_intersect(&self, mesh: &TriMesh, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
        let ray = ShearedRay::new(*origin, *dir);
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<RayHit> = None;
        let mut best_t = t_max;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            match node.bounds.ray_entry(origin, &inv, best_t) {
                Some(_) => {}
                None => continue,
            }
            match node.kind {
                NodeKind::Leaf { .. } => {
                    for &f in self.leaf_faces(node) {
                        let [a, b, c] = mesh.face_positions(f as usize);
                        if let Some((t, bary)) = ray.intersect(&a, &b, &c) {
                            if t <= RAY_T_MIN || t >= t_max {
                                continue;
                            }
                            let better = match best {
                                None => true,
                                Some(h) => t < h.t || (t == h.t && f < h.face),
                            };
                            if better {
                                best = Some(RayHit { t, face: f, bary });
                                best_t = t;
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let tl = self.nodes[left as usize].bounds.ray_entry(origin, &inv, best_t);
                    let tr = self.nodes[right as usize].bounds.ray_entry(origin, &inv, best_t);
                    match (tl, tr) {
                        (Some(a), Some(b)) => {
                            if a <= b {
                                stack.push(right);
                                stack.push(left);
                            } else {
                                stack.push(left);
                                stack.push(right);
                            }
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }

    /// Whether any hit exists in `(RAY_T_MIN, t_max)`.
    pub fn occluded(&self, mesh: &TriMesh, origin: &Vec3, dir: &Vec3, t_max: f64) -> bool {
        let ray = ShearedRay::new(*origin, *dir);
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bounds.ray_entry(origin, &inv, t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { .. } => {
                    for &f in self.leaf_faces(node) {
                        let [a, b, c] = mesh.face_positions(f as usize);
                        if let Some((t, _)) = ray.intersect(&a, &b, &c) {
                            if t > RAY_T_MIN && t < t_max {
                                return true;
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }

    /// All hits in `(RAY_T_MIN, t_max)` sorted by `(t, face)`, plus a flag telling
    /// whether the ray grazes an edge, vertex or plane of some candidate face.
    pub fn ray_hits(&self, mesh: &TriMesh, origin: &Vec3, dir: &Vec3, t_max: f64, graze_eps: f64) -> (Vec<RayHit>, bool) {
        let ray = ShearedRay::new(*origin, *dir);
        let inv = dir.map(|d| 1.0 / d);
        let mut hits = Vec::new();
        let mut grazing = false;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bounds.ray_entry(origin, &inv, t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { .. } => {
                    for &f in self.leaf_faces(node) {
                        let [a, b, c] = mesh.face_positions(f as usize);
                        if let Some((t, bary)) = ray.intersect(&a, &b, &c) {
                            if t > RAY_T_MIN && t < t_max {
                                hits.push(RayHit { t, face: f, bary });
                            }
                        }
                        if !grazing && graze_eps > 0.0 {
                            grazing = ray.is_grazing(&a, &b, &c, graze_eps);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.face.cmp(&b.face)));
        (hits, grazing)
    }

    /// Closest surface point to `p`; equal distances resolve to the lowest face index.
    pub fn closest_point(&self, mesh: &TriMesh, p: &Vec3) -> ClosestHit {
        let mut best = ClosestHit {
            distance_sq: f64::INFINITY,
            point: Vec3::zeros(),
            face: u32::MAX,
            bary: [0.0; 3],
        };
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bounds.distance_sq(p) > best.distance_sq {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { .. } => {
                    for &f in self.leaf_faces(node) {
                        let [a, b, c] = mesh.face_positions(f as usize);
                        let (q, bary) = closest_point(p, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best.distance_sq || (d2 == best.distance_sq && f < best.face) {
                            best = ClosestHit {
                                distance_sq: d2,
                                point: q,
                                face: f,
                                bary,
                            };
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left as usize].bounds.distance_sq(p);
                    let dr = self.nodes[right as usize].bounds.distance_sq(p);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }

    /// Checks the structural invariants: every face in exactly one leaf, leaf
    /// size bound, and containment of child boxes and leaf faces.
    pub fn validate(&self, mesh: &TriMesh) -> Result<(), String> {
        let mut seen = vec![0u32; mesh.face_count()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Leaf { count, .. } => {
                    if count as usize > MAX_LEAF_SIZE {
                        return Err(format!("leaf {i} holds {count} faces"));
                    }
                    for &f in self.leaf_faces(node) {
                        seen[f as usize] += 1;
                        if !node.bounds.contains_box(&face_bounds(mesh, f as usize)) {
                            return Err(format!("leaf {i} does not contain face {f}"));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    for c in [left, right] {
                        if !node.bounds.contains_box(&self.nodes[c as usize].bounds) {
                            return Err(format!("node {i} does not contain child {c}"));
                        }
                    }
                }
            }
        }
        match seen.iter().position(|&n| n != 1) {
            Some(f) => Err(format!("face {f} appears {} times", seen[f])),
            None => Ok(()),
        }
    }
}
