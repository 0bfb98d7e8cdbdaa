//! Geometry-aware greedy viewpoint selection.
//!
//! A view covers a texel when the texel's surface point faces the camera
//! (`cos >= cos_threshold`), projects inside the frame and has an unoccluded
//! ray towards the camera. Starting from four orthogonal equatorial views,
//! the candidate that newly covers the most texels is added until `n_max`
//! views are selected.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Bvh, TriMesh, UvAtlas, Vec2, Vec3};

pub const DEFAULT_COS_THRESHOLD: f64 = 0.2;
pub const DEFAULT_N_FIXED: usize = 4;
pub const DEFAULT_N_MAX: usize = 12;
/// Offset along the texel normal before the visibility ray is cast.
pub const RAY_OFFSET: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("invalid viewpoint: {0}")]
    InvalidViewpoint(String),
    #[error("n_fixed ({n_fixed}) must be at most n_max ({n_max}) and at most 4")]
    InvalidCounts { n_fixed: usize, n_max: usize },
    #[error("need {needed} candidate views but only {available} remain")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("views file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ViewError>;

/// Orthographic camera on a sphere around the origin, +z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    /// Degrees, measured from +x towards +y.
    pub azimuth: f64,
    /// Degrees in [-90, 90].
    pub elevation: f64,
    pub distance: f64,
    pub half_width: f64,
}

impl Viewpoint {
    pub fn new(azimuth: f64, elevation: f64, framing: Framing) -> Result<Self> {
        let v = Self {
            azimuth,
            elevation,
            distance: framing.distance,
            half_width: framing.half_width,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.azimuth.is_finite() {
            return Err(ViewError::InvalidViewpoint(format!("azimuth {} is not finite", self.azimuth)));
        }
        if !(-90.0..=90.0).contains(&self.elevation) {
            return Err(ViewError::InvalidViewpoint(format!(
                "elevation {} outside [-90, 90]",
                self.elevation
            )));
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(ViewError::InvalidViewpoint(format!("distance {} must be positive", self.distance)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(ViewError::InvalidViewpoint(format!(
                "half_width {} must be positive",
                self.half_width
            )));
        }
        Ok(())
    }

    /// Unit vector from the origin towards the camera.
    pub fn direction(&self) -> Vec3 {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Image-plane axes `(right, up)`.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let az = self.azimuth.to_radians();
        let right = Vec3::new(-az.sin(), az.cos(), 0.0);
        (right, self.direction().cross(&right))
    }

    pub fn camera_center(&self) -> Vec3 {
        self.direction() * self.distance
    }

    /// Image-plane coordinates of `p`, in model units relative to the frame centre.
    pub fn project(&self, p: &Vec3) -> Vec2 {
        let (right, up) = self.basis();
        Vec2::new(p.dot(&right), p.dot(&up))
    }

    pub fn in_frame(&self, p: &Vec3) -> bool {
        let q = self.project(p);
        q.x.abs() <= self.half_width && q.y.abs() <= self.half_width
    }

    /// Continuous pixel coordinates `(column, row)` of `p` in a `width`×`height`
    /// image, row 0 at the top and pixel centres at half-integers.
    pub fn to_pixel(&self, p: &Vec3, width: usize, height: usize) -> Vec2 {
        let q = self.project(p) / self.half_width;
        Vec2::new((q.x + 1.0) * 0.5 * width as f64, (1.0 - (q.y + 1.0) * 0.5) * height as f64)
    }

    /// Same camera direction (poles ignore azimuth).
    pub fn same_direction(&self, other: &Viewpoint) -> bool {
        (self.direction() - other.direction()).norm() < 1e-9
    }
}

/// Camera distance and frame half-width shared by a family of views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Framing {
    pub distance: f64,
    pub half_width: f64,
}

impl Framing {
    /// Frames a mesh by its bounding radius `r` about the origin: camera at
    /// `3r`, half-width `1.1r`.
    pub fn for_mesh(mesh: &TriMesh) -> Self {
        let r = mesh.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-9);
        Self {
            distance: 3.0 * r,
            half_width: 1.1 * r,
        }
    }
}

/// The four orthogonal equatorial views (azimuth 0, 90, 180, 270).
pub fn orthogonal_views(framing: Framing) -> Vec<Viewpoint> {
    [0.0, 90.0, 180.0, 270.0]
        .iter()
        .map(|&az| Viewpoint::new(az, 0.0, framing).expect("fixed views are valid"))
        .collect()
}

/// 44 candidates: 8 azimuths × elevations {-45, -20, 0, 20, 45}, both poles,
/// and two extra equatorial views at azimuths 22.5 and 202.5.
pub fn default_candidates(framing: Framing) -> Vec<Viewpoint> {
    let mut out = Vec::with_capacity(44);
    for el in [-45.0, -20.0, 0.0, 20.0, 45.0] {
        for k in 0..8 {
            out.push((k as f64 * 45.0, el));
        }
    }
    out.extend([(0.0, 90.0), (0.0, -90.0), (22.5, 0.0), (202.5, 0.0)]);
    out.into_iter()
        .map(|(az, el)| Viewpoint::new(az, el, framing).expect("candidate views are valid"))
        .collect()
}

/// Bitset over atlas texels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TexelCoverage {
    len: usize,
    words: Vec<u64>,
}

impl TexelCoverage {
    pub fn empty(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "texel {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &TexelCoverage) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Number of texels in `self` that are not in `other`.
    pub fn count_not_in(&self, other: &TexelCoverage) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.contains(i))
    }
}

/// Whether `view` sees the surface point `position` with normal `normal`.
pub fn texel_visible(view: &Viewpoint, mesh: &TriMesh, bvh: &Bvh, position: &Vec3, normal: &Vec3, cos_threshold: f64) -> bool {
    let d = view.direction();
    if normal.dot(&d) < cos_threshold || !view.in_frame(position) {
        return false;
    }
    let origin = position + normal * RAY_OFFSET;
    // Distance along the view direction to the camera plane.
    let t_max = view.distance - origin.dot(&d);
    t_max > 0.0 && !bvh.occluded(mesh, &origin, &d, t_max)
}

/// Set of atlas texels covered by `view`.
pub fn uv_cover(view: &Viewpoint, mesh: &TriMesh, bvh: &Bvh, atlas: &UvAtlas, cos_threshold: f64) -> TexelCoverage {
    let hits: Vec<usize> = atlas
        .texels()
        .par_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let t = t.as_ref()?;
            texel_visible(view, mesh, bvh, &t.position, &t.normal, cos_threshold).then_some(i)
        })
        .collect();
    let mut cover = TexelCoverage::empty(atlas.len());
    for i in hits {
        cover.insert(i);
    }
    cover
}

/// Number of texels covered by `view` but by none of `selected`.
pub fn coverage_gain(
    view: &Viewpoint,
    selected: &[Viewpoint],
    mesh: &TriMesh,
    bvh: &Bvh,
    atlas: &UvAtlas,
    cos_threshold: f64,
) -> usize {
    let mut union = TexelCoverage::empty(atlas.len());
    for s in selected {
        union.union_with(&uv_cover(s, mesh, bvh, atlas, cos_threshold));
    }
    uv_cover(view, mesh, bvh, atlas, cos_threshold).count_not_in(&union)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectParams {
    pub n_fixed: usize,
    pub n_max: usize,
    pub cos_threshold: f64,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            n_fixed: DEFAULT_N_FIXED,
            n_max: DEFAULT_N_MAX,
            cos_threshold: DEFAULT_COS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub selected: Vec<Viewpoint>,
    pub candidates: Vec<Viewpoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub views: ViewSet,
    /// Newly covered texels for each greedily added view.
    pub gains: Vec<usize>,
    /// Covered texels after the fixed views, then after each added view.
    pub covered: Vec<usize>,
    pub valid_texels: usize,
}

/// Greedy coverage maximization.
///
/// The first `n_fixed` orthogonal views (framed like `framing`) seed the
/// selection; candidates looking along a seeded direction are dropped. Each
/// iteration moves the candidate with the largest gain to the selection,
/// the earliest in list order winning ties.
pub fn greedy_select(
    candidates: &[Viewpoint],
    framing: Framing,
    mesh: &TriMesh,
    bvh: &Bvh,
    atlas: &UvAtlas,
    params: SelectParams,
) -> Result<Selection> {
    let SelectParams {
        n_fixed,
        n_max,
        cos_threshold,
    } = params;
    if n_fixed > n_max || n_fixed > 4 {
        return Err(ViewError::InvalidCounts { n_fixed, n_max });
    }
    for c in candidates {
        c.validate()?;
    }
    let selected: Vec<Viewpoint> = orthogonal_views(framing).into_iter().take(n_fixed).collect();
    let mut pool: Vec<Viewpoint> = candidates
        .iter()
        .filter(|c| !selected.iter().any(|s| s.same_direction(c)))
        .copied()
        .collect();
    let needed = n_max - n_fixed;
    if pool.len() < needed {
        return Err(ViewError::InsufficientCandidates {
            needed,
            available: pool.len(),
        });
    }

    let mut union = TexelCoverage::empty(atlas.len());
    for s in &selected {
        union.union_with(&uv_cover(s, mesh, bvh, atlas, cos_threshold));
    }
    let mut covers: Vec<TexelCoverage> = if needed == 0 {
        Vec::new()
    } else {
        pool.par_iter()
            .map(|v| uv_cover(v, mesh, bvh, atlas, cos_threshold))
            .collect()
    };

    let mut selection = Selection {
        views: ViewSet {
            selected,
            candidates: Vec::new(),
        },
        gains: Vec::with_capacity(needed),
        covered: vec![union.count()],
        valid_texels: atlas.valid_count(),
    };
    for _ in 0..needed {
        let gains: Vec<usize> = covers.par_iter().map(|c| c.count_not_in(&union)).collect();
        let mut best: Option<(usize, usize)> = None;
        for (i, &g) in gains.iter().enumerate() {
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        let (i, gain) = best.expect("pool is non-empty");
        let view = pool.remove(i);
        let cover = covers.remove(i);
        union.union_with(&cover);
        selection.views.selected.push(view);
        selection.gains.push(gain);
        selection.covered.push(union.count());
    }
    selection.views.candidates = pool;
    Ok(selection)
}

/// One entry of a views file; `image` optionally names the view's image file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    #[serde(flatten)]
    pub view: Viewpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl ViewRecord {
    /// `image` if given, else `az{azimuth:.1}_el{elevation:.1}.png`.
    pub fn image_name(&self) -> String {
        self.image
            .clone()
            .unwrap_or_else(|| default_image_name(&self.view))
    }
}

pub fn default_image_name(view: &Viewpoint) -> String {
    format!("az{:.1}_el{:.1}.png", view.azimuth, view.elevation)
}

/// Writes a JSON array of view objects.
pub fn write_views(views: &[Viewpoint], path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<ViewRecord> = views
        .iter()
        .map(|&view| ViewRecord { view, image: None })
        .collect();
    let mut text = serde_json::to_string_pretty(&records)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_views(path: impl AsRef<Path>) -> Result<Vec<ViewRecord>> {
    let records: Vec<ViewRecord> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for r in &records {
        r.view.validate()?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{face_chart_uvs, primitives, ChartScale};

    fn framing() -> Framing {
        Framing {
            distance: 3.0,
            half_width: 1.1,
        }
    }

    fn camera_facing_triangle() -> TriMesh {
        // Lies in the plane x = 0, facing +x.
        let v = vec![Vec3::new(0.0, -0.5, -0.5), Vec3::new(0.0, 0.5, -0.5), Vec3::new(0.0, -0.5, 0.5)];
        TriMesh::new(v, vec![[0, 1, 2]])
            .unwrap()
            .with_uvs(vec![[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]])
            .unwrap()
    }

    fn sphere_setup(res: usize) -> (TriMesh, Bvh, UvAtlas) {
        let m = primitives::icosphere(3, 1.0);
        let uvs = face_chart_uvs(&m, res, ChartScale::AreaProportional);
        let m = m.with_uvs(uvs).unwrap();
        let atlas = UvAtlas::rasterize(&m, res, res).unwrap();
        (m.clone(), Bvh::build(&m), atlas)
    }

    #[test]
    fn basis_is_right_handed() {
        for (az, el) in [(0.0, 0.0), (37.0, 20.0), (210.0, -45.0), (0.0, 90.0)] {
            let v = Viewpoint::new(az, el, framing()).unwrap();
            let (r, u) = v.basis();
            let d = v.direction();
            assert!((r.cross(&u) - d).norm() < 1e-12);
            assert!(r.dot(&d).abs() < 1e-12 && (u.norm() - 1.0).abs() < 1e-12);
        }
        let v = Viewpoint::new(0.0, 0.0, framing()).unwrap();
        assert!((v.basis().1 - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn pixel_mapping_corners() {
        let v = Viewpoint::new(0.0, 0.0, framing()).unwrap();
        let p = v.to_pixel(&Vec3::new(0.0, -1.1, 1.1), 100, 50);
        assert!((p - Vec2::new(0.0, 0.0)).norm() < 1e-12);
        let p = v.to_pixel(&Vec3::new(0.0, 1.1, -1.1), 100, 50);
        assert!((p - Vec2::new(100.0, 50.0)).norm() < 1e-12);
    }

    #[test]
    fn invalid_viewpoints() {
        assert!(Viewpoint::new(0.0, 91.0, framing()).is_err());
        let f = Framing {
            distance: 0.0,
            half_width: 1.0,
        };
        assert!(Viewpoint::new(0.0, 0.0, f).is_err());
    }

    #[test]
    fn facing_triangle_fully_covered() {
        let m = camera_facing_triangle();
        let bvh = Bvh::build(&m);
        let atlas = UvAtlas::rasterize(&m, 32, 32).unwrap();
        let front = Viewpoint::new(0.0, 0.0, framing()).unwrap();
        let cover = uv_cover(&front, &m, &bvh, &atlas, DEFAULT_COS_THRESHOLD);
        assert_eq!(cover.count(), atlas.valid_count());
        let back = Viewpoint::new(180.0, 0.0, framing()).unwrap();
        assert!(uv_cover(&back, &m, &bvh, &atlas, DEFAULT_COS_THRESHOLD).is_empty());
    }

    #[test]
    fn occluder_blocks_coverage() {
        let m = camera_facing_triangle();
        let blocker = m.map_positions(|p| p * 2.0 + Vec3::new(0.5, 0.0, 0.0));
        let mut v = m.vertices().to_vec();
        v.extend_from_slice(blocker.vertices());
        let both = TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]])
            .unwrap()
            .with_uvs(vec![m.uvs().unwrap()[0], [Vec2::zeros(); 3]])
            .unwrap();
        let bvh = Bvh::build(&both);
        let atlas = UvAtlas::rasterize(&both, 16, 16).unwrap();
        let front = Viewpoint::new(0.0, 0.0, framing()).unwrap();
        assert!(uv_cover(&front, &both, &bvh, &atlas, DEFAULT_COS_THRESHOLD).is_empty());
    }

    #[test]
    fn sphere_single_view_cap_fraction() {
        let (m, bvh, atlas) = sphere_setup(1024);
        for (az, el) in [(0.0, 0.0), (70.0, 30.0), (0.0, 90.0)] {
            let v = Viewpoint::new(az, el, Framing::for_mesh(&m)).unwrap();
            let frac = uv_cover(&v, &m, &bvh, &atlas, 0.2).count() as f64 / atlas.valid_count() as f64;
            assert!((frac - 0.4).abs() < 0.03, "{az},{el}: {frac}");
        }
    }

    #[test]
    fn gain_basics() {
        let (m, bvh, atlas) = sphere_setup(128);
        let f = Framing::for_mesh(&m);
        let v = Viewpoint::new(45.0, 20.0, f).unwrap();
        let alone = uv_cover(&v, &m, &bvh, &atlas, 0.2).count();
        assert_eq!(coverage_gain(&v, &[], &m, &bvh, &atlas, 0.2), alone);
        assert_eq!(coverage_gain(&v, &[v], &m, &bvh, &atlas, 0.2), 0);
        let top = Viewpoint::new(0.0, 90.0, f).unwrap();
        assert!(coverage_gain(&top, &orthogonal_views(f), &m, &bvh, &atlas, 0.2) > 0);
    }

    #[test]
    fn fixed_only_selection() {
        let (m, bvh, atlas) = sphere_setup(64);
        let f = Framing::for_mesh(&m);
        let params = SelectParams {
            n_max: 4,
            ..SelectParams::default()
        };
        let s = greedy_select(&[], f, &m, &bvh, &atlas, params).unwrap();
        assert_eq!(s.views.selected, orthogonal_views(f));
        assert!(s.gains.is_empty());
    }

    #[test]
    fn selection_errors() {
        let (m, bvh, atlas) = sphere_setup(32);
        let f = Framing::for_mesh(&m);
        let bad = SelectParams {
            n_fixed: 4,
            n_max: 3,
            ..SelectParams::default()
        };
        assert!(matches!(
            greedy_select(&default_candidates(f), f, &m, &bvh, &atlas, bad),
            Err(ViewError::InvalidCounts { .. })
        ));
        let few = default_candidates(f)[..5].to_vec();
        assert!(matches!(
            greedy_select(&few, f, &m, &bvh, &atlas, SelectParams::default()),
            Err(ViewError::InsufficientCandidates { .. })
        ));
    }

    #[test]
    fn default_pool_and_disjointness() {
        let (m, bvh, atlas) = sphere_setup(64);
        let f = Framing::for_mesh(&m);
        let pool = default_candidates(f);
        assert_eq!(pool.len(), 44);
        let s = greedy_select(&pool, f, &m, &bvh, &atlas, SelectParams::default()).unwrap();
        assert_eq!(s.views.selected.len(), 12);
        for a in &s.views.selected {
            assert!(!s.views.candidates.iter().any(|c| c.same_direction(a)));
        }
        assert!(s.covered.windows(2).all(|w| w[0] <= w[1]));
        for (k, g) in s.gains.iter().enumerate() {
            assert_eq!(s.covered[k + 1] - s.covered[k], *g);
        }
    }

    #[test]
    fn views_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("views.json");
        let views = default_candidates(framing());
        write_views(&views, &path).unwrap();
        let back = read_views(&path).unwrap();
        assert_eq!(back.iter().map(|r| r.view).collect::<Vec<_>>(), views);
        assert_eq!(back[0].image_name(), "az0.0_el-45.0.png");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"half_width\""));
    }

    #[test]
    fn rotation_invariance() {
        let m = primitives::uv_sphere(32, 16, 1.0);
        let atlas = UvAtlas::rasterize(&m, 128, 128).unwrap();
        let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), 30f64.to_radians());
        let r = m.rotated(&rot);
        let ratlas = UvAtlas::rasterize(&r, 128, 128).unwrap();
        let f = Framing::for_mesh(&m);
        let v = Viewpoint::new(10.0, 25.0, f).unwrap();
        let rv = Viewpoint::new(40.0, 25.0, f).unwrap();
        let a = uv_cover(&v, &m, &Bvh::build(&m), &atlas, 0.2);
        let b = uv_cover(&rv, &r, &Bvh::build(&r), &ratlas, 0.2);
        let diff = a.count_not_in(&b) + b.count_not_in(&a);
        assert!(diff as f64 <= 0.005 * atlas.valid_count() as f64, "{diff}");
    }
}
