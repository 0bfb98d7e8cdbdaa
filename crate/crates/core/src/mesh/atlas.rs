//! Per-texel surface correspondence built by rasterizing UV triangles.
//!
//! Texel `(x, y)` has its centre at `((x + 0.5) / width, (y + 0.5) / height)` in
//! UV space, so row 0 is `v` near 0. Images written to disk flip rows so that
//! `v = 1` is the top row.

use super::{MeshError, Result, TriMesh, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelSample {
    pub face: u32,
    pub bary: [f64; 3],
    pub position: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone)]
pub struct UvAtlas {
    width: usize,
    height: usize,
    texels: Vec<Option<TexelSample>>,
}

fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

impl UvAtlas {
    /// Rasterizes every face's UV triangle. A texel is valid when its centre
    /// lies inside (or on the border of) some UV triangle; overlapping charts
    /// resolve to the lowest face index.
    pub fn rasterize(mesh: &TriMesh, width: usize, height: usize) -> Result<Self> {
        let uvs = mesh.uvs().ok_or(MeshError::MissingUvs)?;
        assert!(width >= 1 && height >= 1, "atlas dimensions must be positive");
        let mut texels: Vec<Option<TexelSample>> = vec![None; width * height];
        let scale = Vec2::new(width as f64, height as f64);
        for (fi, corners) in uvs.iter().enumerate() {
            let [a, b, c] = corners.map(|uv| uv.component_mul(&scale));
            let area = edge(&a, &b, &c);
            if area.abs() < 1e-18 {
                continue;
            }
            let lo = a.inf(&b).inf(&c);
            let hi = a.sup(&b).sup(&c);
            let x0 = ((lo.x - 0.5).floor().max(0.0)) as usize;
            let y0 = ((lo.y - 0.5).floor().max(0.0)) as usize;
            let x1 = ((hi.x - 0.5).ceil().max(0.0) as usize).min(width - 1);
            let y1 = ((hi.y - 0.5).ceil().max(0.0) as usize).min(height - 1);
            let positions = mesh.face_positions(fi);
            let face_normal = mesh.face_normal(fi);
            let vertex_normals = mesh.normals().map(|ns| {
                let f = mesh.faces()[fi];
                [ns[f[0] as usize], ns[f[1] as usize], ns[f[2] as usize]]
            });
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let slot = &mut texels[y * width + x];
                    if slot.is_some() {
                        continue;
                    }
                    let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let w = [edge(&b, &c, &p) / area, edge(&c, &a, &p) / area, edge(&a, &b, &p) / area];
                    if w.iter().any(|&wi| wi < 0.0) {
                        continue;
                    }
                    let sum = w[0] + w[1] + w[2];
                    let bary = [w[0] / sum, w[1] / sum, w[2] / sum];
                    let position = positions[0] * bary[0] + positions[1] * bary[1] + positions[2] * bary[2];
                    let normal = vertex_normals
                        .and_then(|ns| {
                            let n = ns[0] * bary[0] + ns[1] * bary[1] + ns[2] * bary[2];
                            let len = n.norm();
                            (len > 1e-12).then(|| n / len)
                        })
                        .or(face_normal)
                        .unwrap_or_else(Vec3::z);
                    *slot = Some(TexelSample {
                        face: fi as u32,
                        bary,
                        position,
                        normal,
                    });
                }
            }
        }
        Ok(Self { width, height, texels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.texels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&TexelSample> {
        self.texels[y * self.width + x].as_ref()
    }

    pub fn texel(&self, index: usize) -> Option<&TexelSample> {
        self.texels[index].as_ref()
    }

    pub fn texels(&self) -> &[Option<TexelSample>] {
        &self.texels
    }

    /// UV coordinate of the centre of texel `index`.
    pub fn texel_uv(&self, index: usize) -> Vec2 {
        let (x, y) = (index % self.width, index / self.width);
        Vec2::new((x as f64 + 0.5) / self.width as f64, (y as f64 + 0.5) / self.height as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.texels.iter().filter(|t| t.is_some()).count()
    }

    /// `(index, sample)` for every valid texel, in index order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, &TexelSample)> {
        self.texels
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_ref().map(|s| (i, s)))
    }
}

/// How per-face charts are sized inside their grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartScale {
    /// Every chart's longest edge spans its cell.
    PerFace,
    /// One scale for all charts, so UV area is proportional to surface area.
    AreaProportional,
}

/// Gives every face its own UV triangle in a square grid of cells.
///
/// Each chart is similar to its 3D triangle, with the longest edge along the
/// bottom of the cell. `resolution` is the atlas size the charts are meant for;
/// cells keep a margin of 1.5 texels so neighbouring charts never share texels.
pub fn face_chart_uvs(mesh: &TriMesh, resolution: usize, scale: ChartScale) -> Vec<[Vec2; 3]> {
    let faces = mesh.face_count();
    let cols = (faces as f64).sqrt().ceil().max(1.0) as usize;
    let cell = 1.0 / cols as f64;
    let margin = (1.5 / resolution.max(1) as f64).min(0.25 * cell);
    let inner = cell - 2.0 * margin;
    let longest = |f: usize| {
        let p = mesh.face_positions(f);
        (0..3)
            .map(|k| ((p[(k + 1) % 3] - p[k]).norm(), k))
            .fold((f64::NEG_INFINITY, 0), |best, e| if e.0 > best.0 { e } else { best })
    };
    let global = (0..faces).map(|f| longest(f).0).fold(0.0, f64::max);
    (0..faces)
        .map(|f| {
            let p = mesh.face_positions(f);
            let (len, k) = longest(f);
            let origin = Vec2::new((f % cols) as f64 * cell + margin, (f / cols) as f64 * cell + margin);
            if len <= 0.0 {
                return [origin; 3];
            }
            let s = inner
                / match scale {
                    ChartScale::PerFace => len,
                    ChartScale::AreaProportional => global,
                };
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let axis = (b - a) / len;
            let along = (c - a).dot(&axis);
            let height = ((c - a) - axis * along).norm();
            let mut uv = [Vec2::zeros(); 3];
            uv[k] = origin;
            uv[(k + 1) % 3] = origin + Vec2::new(len * s, 0.0);
            uv[(k + 2) % 3] = origin + Vec2::new(along * s, height * s);
            uv
        })
        .collect()
}
