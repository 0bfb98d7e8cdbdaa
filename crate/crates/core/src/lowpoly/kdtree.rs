//! Exact nearest-neighbour search over 3D points.

use crate::mesh::Vec3;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    point: u32,
    axis: u8,
    left: u32,
    right: u32,
}

/// Balanced k-d tree built by median splits on the widest axis.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: u32,
}

impl KdTree {
    pub fn build(points: Vec<Vec3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_node(&points, &mut order, &mut nodes);
        Self { points, nodes, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Index of and distance to the nearest stored point; equidistant points
    /// resolve to the lowest index. `None` when the tree is empty.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        if self.root == NONE {
            return None;
        }
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(self.root, query, &mut best);
        Some((best.1 as usize, best.0.sqrt()))
    }

    fn search(&self, node: u32, q: &Vec3, best: &mut (f64, u32)) {
        let n = self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        let d2 = (p - q).norm_squared();
        if d2 < best.0 || (d2 == best.0 && n.point < best.1) {
            *best = (d2, n.point);
        }
        let diff = q[n.axis as usize] - p[n.axis as usize];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if near != NONE {
            self.search(near, q, best);
        }
        // Equal distances must still be explored for the lowest-index rule.
        if far != NONE && diff * diff <= best.0 {
            self.search(far, q, best);
        }
    }
}

fn build_node(points: &[Vec3], order: &mut [u32], nodes: &mut Vec<Node>) -> u32 {
    if order.is_empty() {
        return NONE;
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i as usize]);
        hi = hi.sup(&points[i as usize]);
    }
    let axis = (hi - lo).imax();
    order.sort_unstable_by(|&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let id = nodes.len() as u32;
    nodes.push(Node {
        point: order[mid],
        axis: axis as u8,
        left: NONE,
        right: NONE,
    });
    let (left, rest) = order.split_at_mut(mid);
    let l = build_node(points, left, nodes);
    let r = build_node(points, &mut rest[1..], nodes);
    nodes[id as usize].left = l;
    nodes[id as usize].right = r;
    id
}

/// Linear-scan nearest neighbour with the same tie rule as [`KdTree::nearest`].
pub fn brute_force_nearest(points: &[Vec3], query: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, d2)| (i, d2.sqrt()))
}
