//! Single-triangle geometric predicates.

use super::Vec3;

/// Minimum accepted ray parameter; hits closer than this are ignored.
pub const RAY_T_MIN: f64 = 1e-6;

/// Ray prepared for the watertight intersection test of Woop, Benthin and Wald.
///
/// The ray is transformed into a shear space where it runs along +z, so the
/// inside test reduces to 2D edge functions evaluated identically for two
/// triangles sharing an edge. A ray crossing a shared edge therefore hits at
/// least one of them.
#[derive(Debug, Clone, Copy)]
pub struct ShearedRay {
    pub origin: Vec3,
    pub dir: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl ShearedRay {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        let kz = dir.iamax();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Self {
            origin,
            dir,
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }

    /// Intersection parameter and barycentrics `(wa, wb, wc)` of the hit.
    ///
    /// Edges count as inside on both adjacent triangles, so a ray through a
    /// shared edge reports the same `t` for each of them.
    pub fn intersect(&self, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(f64, [f64; 3])> {
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let a = a - self.origin;
        let b = b - self.origin;
        let c = c - self.origin;
        let ax = a[kx] - self.sx * a[kz];
        let ay = a[ky] - self.sy * a[kz];
        let bx = b[kx] - self.sx * b[kz];
        let by = b[ky] - self.sy * b[kz];
        let cx = c[kx] - self.sx * c[kz];
        let cy = c[ky] - self.sy * c[kz];

        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * a[kz];
        let bz = self.sz * b[kz];
        let cz = self.sz * c[kz];
        let t = (u * az + v * bz + w * cz) / det;
        if !t.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some((t, [u * inv, v * inv, w * inv]))
    }

    /// Whether the ray passes within a relative barycentric margin of an edge
    /// or vertex of the triangle, or runs nearly parallel to its plane.
    pub fn is_grazing(&self, a: &Vec3, b: &Vec3, c: &Vec3, eps: f64) -> bool {
        let n = (b - a).cross(&(c - a));
        let nn = n.norm();
        if nn == 0.0 {
            return false;
        }
        if (n.dot(&self.dir) / nn).abs() < eps {
            // Near-parallel: only ambiguous if the ray actually passes close to the triangle.
            let d = (self.origin - a).dot(&n) / nn;
            let scale = (b - a).norm().max((c - a).norm());
            return d.abs() <= eps * scale.max(1.0);
        }
        match self.intersect(a, b, c) {
            Some((t, bary)) => t > RAY_T_MIN && bary.iter().any(|&w| w.abs() < eps),
            None => false,
        }
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
///
/// Returns the point and its barycentric weights.
pub fn closest_point(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}
