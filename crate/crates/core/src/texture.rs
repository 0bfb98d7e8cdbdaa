//! Multi-view texture baking and vertex-propagation inpainting.
//!
//! Texture maps share the atlas indexing (row 0 is `v` near 0); PNG files are
//! written with `v = 1` as the top row. View images are stored top row first.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{Bvh, MeshError, TriMesh, UvAtlas, Vec2};
use crate::views::{texel_visible, Viewpoint, DEFAULT_COS_THRESHOLD};

pub const DEFAULT_WEIGHT_EXPONENT: i32 = 4;
/// Floor on vertex distances in inverse-distance weights.
pub const DISTANCE_EPS: f64 = 1e-8;

pub type Rgb64 = [f64; 3];

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("no views to bake")]
    NoViews,
    #[error("view images differ in resolution: {0}x{1} vs {2}x{3}")]
    ResolutionMismatch(usize, usize, usize, usize),
    #[error("texture has no covered texels to inpaint from")]
    NoSeedTexels,
    #[error("texture is {0}x{1} but the atlas is {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("upsampling factor must be at least 1")]
    InvalidFactor,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TextureError>;

/// RGB image with channels in [0, 1], row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb64>,
}

impl Image {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Rgb64) -> Self {
        let pixels = (0..width * height)
            .map(|i| f(i % width, i / width).map(|c| c.clamp(0.0, 1.0)))
            .collect();
        Self { width, height, pixels }
    }

    pub fn constant(width: usize, height: usize, color: Rgb64) -> Self {
        Self::from_fn(width, height, |_, _| color)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear lookup at continuous pixel coordinates (pixel centres at
    /// half-integers), clamped to the border.
    pub fn sample(&self, p: &Vec2) -> Rgb64 {
        let x = (p.x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (p.y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            top + (bottom - top) * fy
        })
    }

    /// Integer-factor bilinear upsampling.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(TextureError::InvalidFactor);
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let f = factor as f64;
        let (w, h) = (self.width * factor, self.height * factor);
        let pixels = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let p = Vec2::new(((i % w) as f64 + 0.5) / f, ((i / w) as f64 + 0.5) / f);
                self.sample(&p)
            })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Ok(Self::from_fn(w, h, |x, y| {
            img.get_pixel(x as u32, y as u32).0.map(|c| c as f64 / 255.0)
        }))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Rgb(to_u8(self.get(x as usize, y as usize)))
        });
        img.save(path)?;
        Ok(())
    }
}

fn to_u8(c: Rgb64) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// A view and the image seen from it.
#[derive(Debug, Clone)]
pub struct ViewImage {
    pub view: Viewpoint,
    pub image: Image,
}

/// Views sharing one image resolution.
#[derive(Debug, Clone)]
pub struct MultiViewImages {
    views: Vec<ViewImage>,
}

impl MultiViewImages {
    pub fn new(views: Vec<ViewImage>) -> Result<Self> {
        let first = views.first().ok_or(TextureError::NoViews)?;
        let (w, h) = (first.image.width, first.image.height);
        for v in &views {
            if (v.image.width, v.image.height) != (w, h) {
                return Err(TextureError::ResolutionMismatch(w, h, v.image.width, v.image.height));
            }
        }
        Ok(Self { views })
    }

    pub fn views(&self) -> &[ViewImage] {
        &self.views
    }

    /// View indices ordered by `(azimuth, elevation, distance, half_width)`,
    /// input order breaking exact ties.
    fn canonical_order(&self) -> Vec<usize> {
        let key = |v: &Viewpoint| [v.azimuth, v.elevation, v.distance, v.half_width];
        let mut order: Vec<usize> = (0..self.views.len()).collect();
        order.sort_by(|&a, &b| {
            let (ka, kb) = (key(&self.views[a].view), key(&self.views[b].view));
            ka.iter()
                .zip(&kb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
    }
}

/// RGB texture over an atlas plus a per-texel coverage flag.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureMap {
    width: usize,
    height: usize,
    rgb: Vec<Rgb64>,
    covered: Vec<bool>,
}

impl TextureMap {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![[0.0; 3]; width * height],
            covered: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[Rgb64] {
        &self.rgb
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn color(&self, index: usize) -> Rgb64 {
        self.rgb[index]
    }

    pub fn is_covered(&self, index: usize) -> bool {
        self.covered[index]
    }

    pub fn set(&mut self, index: usize, color: Rgb64) {
        self.rgb[index] = color.map(|c| c.clamp(0.0, 1.0));
        self.covered[index] = true;
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    fn check_atlas(&self, atlas: &UvAtlas) -> Result<()> {
        if (self.width, self.height) != (atlas.width(), atlas.height()) {
            return Err(TextureError::SizeMismatch(self.width, self.height, atlas.width(), atlas.height()));
        }
        Ok(())
    }

    /// Texture from an image whose top row is `v = 1`; every valid atlas
    /// texel is marked covered.
    pub fn from_image(image: &Image, atlas: &UvAtlas) -> Result<Self> {
        let (w, h) = (atlas.width(), atlas.height());
        if (image.width, image.height) != (w, h) {
            return Err(TextureError::SizeMismatch(image.width, image.height, w, h));
        }
        let mut tex = Self::blank(w, h);
        for (i, _) in atlas.iter_valid() {
            tex.set(i, image.get(i % w, h - 1 - i / w));
        }
        Ok(tex)
    }

    /// Clears coverage wherever the one-channel `mask` PNG (written by
    /// [`save_mask_png`](Self::save_mask_png)) is zero.
    pub fn apply_mask_png(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let mask = image::open(path)?.to_luma8();
        let (w, h) = (self.width, self.height);
        if (mask.width() as usize, mask.height() as usize) != (w, h) {
            return Err(TextureError::SizeMismatch(mask.width() as usize, mask.height() as usize, w, h));
        }
        for (i, c) in self.covered.iter_mut().enumerate() {
            let (x, y) = (i % w, h - 1 - i / w);
            if mask.get_pixel(x as u32, y as u32).0[0] == 0 {
                *c = false;
            }
        }
        Ok(())
    }

    /// Image with `v = 1` as the top row; uncovered texels are black.
    pub fn to_image(&self) -> Image {
        let (w, h) = (self.width, self.height);
        Image::from_fn(w, h, |x, y| {
            let i = (h - 1 - y) * w + x;
            if self.covered[i] {
                self.rgb[i]
            } else {
                [0.0; 3]
            }
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_png(path)
    }

    /// One-channel mask, 255 where covered, `v = 1` as the top row.
    pub fn save_mask_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let (w, h) = (self.width, self.height);
        let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
            let i = (h - 1 - y as usize) * w + x as usize;
            Luma([if self.covered[i] { 255 } else { 0 }])
        });
        img.save(path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakeParams {
    pub cos_threshold: f64,
    pub weight_exponent: i32,
}

impl Default for BakeParams {
    fn default() -> Self {
        Self {
            cos_threshold: DEFAULT_COS_THRESHOLD,
            weight_exponent: DEFAULT_WEIGHT_EXPONENT,
        }
    }
}

/// Fuses view images into a texture.
///
/// A texel takes the `cos^k`-weighted mean of the bilinear samples from every
/// view that sees it; it stays uncovered when no view does. Views are summed
/// in a canonical order so the result does not depend on list order.
pub fn bake(atlas: &UvAtlas, mesh: &TriMesh, bvh: &Bvh, views: &MultiViewImages, params: BakeParams) -> TextureMap {
    let order = views.canonical_order();
    let results: Vec<Option<Rgb64>> = atlas
        .texels()
        .par_iter()
        .map(|t| {
            let t = t.as_ref()?;
            let mut sum = [0.0; 3];
            let mut wsum = 0.0;
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &vi in &order {
                let ViewImage { view, image } = &views.views[vi];
                if !texel_visible(view, mesh, bvh, &t.position, &t.normal, params.cos_threshold) {
                    continue;
                }
                let w = t.normal.dot(&view.direction()).powi(params.weight_exponent);
                let c = image.sample(&view.to_pixel(&t.position, image.width, image.height));
                for k in 0..3 {
                    sum[k] += w * c[k];
                    lo[k] = lo[k].min(c[k]);
                    hi[k] = hi[k].max(c[k]);
                }
                wsum += w;
            }
            (wsum > 0.0).then(|| std::array::from_fn(|k| (sum[k] / wsum).clamp(lo[k], hi[k])))
        })
        .collect();
    let mut tex = TextureMap::blank(atlas.width(), atlas.height());
    for (i, c) in results.into_iter().enumerate() {
        if let Some(c) = c {
            tex.set(i, c);
        }
    }
    tex
}

/// Per-vertex colors with a flag telling which vertices received one.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexColors {
    pub colors: Vec<Rgb64>,
    pub textured: Vec<bool>,
}

impl VertexColors {
    pub fn uniform(count: usize, color: Rgb64) -> Self {
        Self {
            colors: vec![color; count],
            textured: vec![true; count],
        }
    }

    pub fn textured_count(&self) -> usize {
        self.textured.iter().filter(|&&t| t).count()
    }
}

/// Per-channel running bounds, used to keep averages inside the range of
/// their inputs despite rounding (equal inputs then average exactly).
#[derive(Clone, Copy)]
struct Bounds([f64; 3], [f64; 3]);

impl Bounds {
    fn new() -> Self {
        Self([f64::INFINITY; 3], [f64::NEG_INFINITY; 3])
    }

    fn add(&mut self, c: &Rgb64) {
        for k in 0..3 {
            self.0[k] = self.0[k].min(c[k]);
            self.1[k] = self.1[k].max(c[k]);
        }
    }

    fn clamp(&self, c: Rgb64) -> Rgb64 {
        std::array::from_fn(|k| c[k].clamp(self.0[k], self.1[k]))
    }
}

fn mean(colors: impl IntoIterator<Item = Rgb64>) -> Option<Rgb64> {
    let mut sum = [0.0; 3];
    let mut bounds = Bounds::new();
    let mut n = 0usize;
    for c in colors {
        for k in 0..3 {
            sum[k] += c[k];
        }
        bounds.add(&c);
        n += 1;
    }
    (n > 0).then(|| bounds.clamp(sum.map(|s| s / n as f64)))
}

/// Faces incident to each vertex, in face order.
fn vertex_faces(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        for &v in f {
            if out[v as usize].last() != Some(&fi) {
                out[v as usize].push(fi);
            }
        }
    }
    out
}

/// Covered texels of each face, in index order.
fn covered_face_texels(mesh: &TriMesh, atlas: &UvAtlas, tex: &TextureMap) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); mesh.face_count()];
    for (i, t) in atlas.iter_valid() {
        if tex.covered[i] {
            out[t.face as usize].push(i);
        }
    }
    out
}

/// Samples the texture at the vertices.
///
/// A vertex averages the covered texels of its incident faces whose centres
/// lie within one texel of the vertex's UV position in that face's chart.
/// When a sharp chart corner leaves no texel that close, the nearest covered
/// texel of an incident face is used instead.
pub fn texture_to_vertex_colors(mesh: &TriMesh, atlas: &UvAtlas, tex: &TextureMap) -> Result<VertexColors> {
    tex.check_atlas(atlas)?;
    let uvs = mesh.uvs().ok_or(MeshError::MissingUvs)?;
    let (w, h) = (atlas.width(), atlas.height());
    let scale = Vec2::new(w as f64, h as f64);
    let incident = vertex_faces(mesh);
    let face_texels = covered_face_texels(mesh, atlas, tex);
    let centre = |i: usize| Vec2::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
    let results: Vec<Option<Rgb64>> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| {
            let mut picked = Vec::new();
            let mut nearest: Option<(f64, usize)> = None;
            for &f in &incident[v] {
                let corner = mesh.faces()[f].iter().position(|&x| x as usize == v).unwrap();
                let p = uvs[f][corner].component_mul(&scale);
                for &i in &face_texels[f] {
                    let d = (centre(i) - p).norm();
                    if d <= 1.0 {
                        picked.push(i);
                    }
                    if nearest.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                        nearest = Some((d, i));
                    }
                }
            }
            if picked.is_empty() {
                picked.extend(nearest.map(|(_, i)| i));
            }
            picked.sort_unstable();
            picked.dedup();
            mean(picked.into_iter().map(|i| tex.rgb[i]))
        })
        .collect();
    Ok(VertexColors {
        textured: results.iter().map(Option::is_some).collect(),
        colors: results.into_iter().map(|c| c.unwrap_or([0.0; 3])).collect(),
    })
}

fn inverse_distance_mean(items: impl Iterator<Item = (f64, Rgb64)>) -> Rgb64 {
    let mut sum = [0.0; 3];
    let mut bounds = Bounds::new();
    let mut wsum = 0.0;
    for (d, c) in items {
        let w = 1.0 / d.max(DISTANCE_EPS);
        for k in 0..3 {
            sum[k] += w * c[k];
        }
        bounds.add(&c);
        wsum += w;
    }
    bounds.clamp(sum.map(|s| s / wsum))
}

/// Spreads vertex colors over the vertex graph, one breadth-first wave at a
/// time: an untextured vertex next to textured ones takes the inverse-distance
/// weighted mean of them. Vertices with no textured vertex in their connected
/// component take the mean of the seed colors.
pub fn propagate_vertex_colors(mesh: &TriMesh, colors: &VertexColors) -> VertexColors {
    let neighbors = mesh.vertex_neighbors();
    let positions = mesh.vertices();
    let mut out = colors.clone();
    loop {
        let wave: Vec<(usize, Rgb64)> = (0..positions.len())
            .into_par_iter()
            .filter(|&v| !out.textured[v])
            .filter_map(|v| {
                let mut sources = neighbors[v].iter().map(|&u| u as usize).filter(|&u| out.textured[u]).peekable();
                sources.peek()?;
                Some((
                    v,
                    inverse_distance_mean(sources.map(|u| ((positions[u] - positions[v]).norm(), out.colors[u]))),
                ))
            })
            .collect();
        if wave.is_empty() {
            break;
        }
        for (v, c) in wave {
            out.colors[v] = c;
            out.textured[v] = true;
        }
    }
    if let Some(fill) = mean((0..positions.len()).filter(|&v| colors.textured[v]).map(|v| colors.colors[v])) {
        for v in 0..positions.len() {
            if !out.textured[v] {
                out.colors[v] = fill;
                out.textured[v] = true;
            }
        }
    }
    out
}

/// Fills every uncovered valid texel from its face's vertex colors.
///
/// Vertex colors come from [`texture_to_vertex_colors`] and are propagated
/// over the mesh; each uncovered texel takes the inverse-distance weighted mean of its face's three vertex
/// colors, distances measured in 3D. Covered texels are left untouched.
pub fn inpaint(mesh: &TriMesh, atlas: &UvAtlas, tex: &TextureMap) -> Result<TextureMap> {
    tex.check_atlas(atlas)?;
    if !atlas.iter_valid().any(|(i, _)| tex.covered[i]) {
        return Err(TextureError::NoSeedTexels);
    }
    let colors = propagate_vertex_colors(mesh, &texture_to_vertex_colors(mesh, atlas, tex)?);

    let positions = mesh.vertices();
    let fills: Vec<(usize, Rgb64)> = atlas
        .texels()
        .par_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let t = t.as_ref()?;
            if tex.covered[i] {
                return None;
            }
            let f = mesh.faces()[t.face as usize];
            let c = inverse_distance_mean(f.iter().map(|&v| {
                let v = v as usize;
                ((t.position - positions[v]).norm(), colors.colors[v])
            }));
            Some((i, c))
        })
        .collect();
    let mut out = tex.clone();
    for (i, c) in fills {
        out.set(i, c);
    }
    Ok(out)
}

/// Texture whose valid texels interpolate the vertex colors barycentrically.
pub fn bake_vertex_colors(mesh: &TriMesh, atlas: &UvAtlas, colors: &VertexColors) -> TextureMap {
    let mut tex = TextureMap::blank(atlas.width(), atlas.height());
    for (i, t) in atlas.iter_valid() {
        let [a, b, c] = mesh.faces()[t.face as usize].map(|v| colors.colors[v as usize]);
        let mut bounds = Bounds::new();
        for x in [&a, &b, &c] {
            bounds.add(x);
        }
        let color = std::array::from_fn(|k| a[k] + t.bary[1] * (b[k] - a[k]) + t.bary[2] * (c[k] - a[k]));
        tex.set(i, bounds.clamp(color));
    }
    tex
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{face_chart_uvs, primitives, ChartScale, Vec3};
    use crate::views::{orthogonal_views, Framing};

    fn sphere(res: usize) -> (TriMesh, Bvh, UvAtlas) {
        let m = primitives::icosphere(3, 1.0);
        let m = m.clone().with_uvs(face_chart_uvs(&m, res, ChartScale::AreaProportional)).unwrap();
        let atlas = UvAtlas::rasterize(&m, res, res).unwrap();
        (m.clone(), Bvh::build(&m), atlas)
    }

    fn constant_views(m: &TriMesh, c: Rgb64) -> MultiViewImages {
        let f = Framing::for_mesh(m);
        MultiViewImages::new(
            orthogonal_views(f)
                .into_iter()
                .map(|view| ViewImage {
                    view,
                    image: Image::constant(64, 64, c),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bilinear_sampling() {
        let img = Image::from_fn(2, 1, |x, _| [x as f64, 0.0, 1.0]);
        assert_eq!(img.sample(&Vec2::new(1.0, 0.5))[0], 0.5);
        assert_eq!(img.sample(&Vec2::new(0.0, 0.5))[0], 0.0);
        assert_eq!(img.sample(&Vec2::new(1.75, 0.5))[0], 1.0);
    }

    #[test]
    fn upsample_preserves_constant() {
        let img = Image::constant(3, 2, [0.2, 0.4, 0.6]).upsample(3).unwrap();
        assert_eq!((img.width(), img.height()), (9, 6));
        assert!(img.pixels.iter().all(|p| *p == [0.2, 0.4, 0.6]));
        assert!(Image::constant(1, 1, [0.0; 3]).upsample(0).is_err());
    }

    #[test]
    fn constant_bake_is_exact() {
        let (m, bvh, atlas) = sphere(256);
        let c = [0.25, 0.5, 0.75];
        let tex = bake(&atlas, &m, &bvh, &constant_views(&m, c), BakeParams::default());
        assert!(tex.covered_count() > 0);
        for i in 0..tex.rgb.len() {
            if tex.covered[i] {
                assert_eq!(tex.rgb[i], c);
                assert!(atlas.texel(i).is_some());
            }
        }
        // Equatorial views miss the poles.
        let pole_uncovered = atlas
            .iter_valid()
            .filter(|(_, t)| t.position.z > 0.99)
            .all(|(i, _)| !tex.covered[i]);
        assert!(pole_uncovered);
    }

    #[test]
    fn bake_ignores_view_order() {
        let (m, bvh, atlas) = sphere(128);
        let f = Framing::for_mesh(&m);
        let mut list: Vec<ViewImage> = orthogonal_views(f)
            .into_iter()
            .enumerate()
            .map(|(k, view)| ViewImage {
                view,
                image: Image::from_fn(32, 32, |x, y| [x as f64 / 31.0, y as f64 / 31.0, k as f64 / 3.0]),
            })
            .collect();
        let a = bake(&atlas, &m, &bvh, &MultiViewImages::new(list.clone()).unwrap(), BakeParams::default());
        list.reverse();
        list.swap(0, 2);
        let b = bake(&atlas, &m, &bvh, &MultiViewImages::new(list).unwrap(), BakeParams::default());
        assert_eq!(a, b);
    }

    #[test]
    fn resolution_mismatch() {
        let f = Framing {
            distance: 3.0,
            half_width: 1.0,
        };
        let v = orthogonal_views(f);
        let r = MultiViewImages::new(vec![
            ViewImage {
                view: v[0],
                image: Image::constant(4, 4, [0.0; 3]),
            },
            ViewImage {
                view: v[1],
                image: Image::constant(4, 5, [0.0; 3]),
            },
        ]);
        assert!(matches!(r, Err(TextureError::ResolutionMismatch(..))));
        assert!(matches!(MultiViewImages::new(vec![]), Err(TextureError::NoViews)));
    }

    #[test]
    fn inpaint_constant_fills_everything() {
        let (m, bvh, atlas) = sphere(256);
        let c = [0.1, 0.9, 0.3];
        let tex = bake(&atlas, &m, &bvh, &constant_views(&m, c), BakeParams::default());
        let full = inpaint(&m, &atlas, &tex).unwrap();
        for (i, _) in atlas.iter_valid() {
            assert!(full.covered[i]);
            for k in 0..3 {
                assert!((full.rgb[i][k] - c[k]).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn inpaint_identity_on_covered() {
        let (m, _, atlas) = sphere(64);
        let mut tex = TextureMap::blank(64, 64);
        for (i, t) in atlas.iter_valid() {
            tex.set(i, [t.position.x.abs(), t.position.y.abs(), 0.5]);
        }
        assert_eq!(inpaint(&m, &atlas, &tex).unwrap(), tex);
        let empty = TextureMap::blank(64, 64);
        assert!(matches!(inpaint(&m, &atlas, &empty), Err(TextureError::NoSeedTexels)));
    }

    #[test]
    fn equilateral_barycentre_is_grey() {
        let s = 3f64.sqrt();
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, s, 0.0)];
        let m = TriMesh::new(v, vec![[0, 1, 2]])
            .unwrap()
            .with_uvs(vec![[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, s / 2.0)]])
            .unwrap();
        let colors = VertexColors {
            colors: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            textured: vec![true; 3],
        };
        let propagated = propagate_vertex_colors(&m, &colors);
        assert_eq!(propagated, colors);
        let centre = Vec3::new(1.0, s / 3.0, 0.0);
        let c = inverse_distance_mean((0..3).map(|v| ((centre - m.vertices()[v]).norm(), colors.colors[v])));
        for k in 0..3 {
            assert!((c[k] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn propagation_reaches_connected_vertices() {
        let m = primitives::plane_grid(4, 4, 1.0, 1.0);
        let mut colors = VertexColors {
            colors: vec![[0.0; 3]; m.vertex_count()],
            textured: vec![false; m.vertex_count()],
        };
        colors.colors[0] = [0.3, 0.6, 0.9];
        colors.textured[0] = true;
        let out = propagate_vertex_colors(&m, &colors);
        assert!(out.textured.iter().all(|&t| t));
        assert!(out.colors.iter().all(|c| *c == [0.3, 0.6, 0.9]));
    }

    #[test]
    fn vertex_colors_from_constant_texture() {
        let m = primitives::plane_grid(3, 3, 1.0, 1.0);
        let atlas = UvAtlas::rasterize(&m, 48, 48).unwrap();
        let mut tex = TextureMap::blank(48, 48);
        for (i, _) in atlas.iter_valid() {
            tex.set(i, [0.5, 0.25, 1.0]);
        }
        let vc = texture_to_vertex_colors(&m, &atlas, &tex).unwrap();
        assert!(vc.textured.iter().all(|&t| t));
        assert!(vc.colors.iter().all(|c| *c == [0.5, 0.25, 1.0]));
        let none = texture_to_vertex_colors(&m, &atlas, &TextureMap::blank(48, 48)).unwrap();
        assert_eq!(none.textured_count(), 0);
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = primitives::plane_grid(2, 2, 1.0, 1.0);
        let atlas = UvAtlas::rasterize(&m, 8, 8).unwrap();
        let mut tex = TextureMap::blank(8, 8);
        for (i, _) in atlas.iter_valid() {
            tex.set(i, [(i % 8) as f64 / 7.0, (i / 8) as f64 / 7.0, 0.0]);
        }
        let path = dir.path().join("t.png");
        tex.save_png(&path).unwrap();
        tex.save_mask_png(dir.path().join("m.png")).unwrap();
        let back = TextureMap::from_image(&Image::load_png(&path).unwrap(), &atlas).unwrap();
        for i in 0..64 {
            for k in 0..3 {
                assert!((back.rgb[i][k] - tex.rgb[i][k]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
        // Row 0 of the texture (v near 0) is the bottom row of the image.
        let img = Image::load_png(&path).unwrap();
        assert_eq!(img.get(0, 7)[1], 0.0);
    }

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = primitives::plane_grid(2, 2, 1.0, 1.0);
        let atlas = UvAtlas::rasterize(&m, 8, 8).unwrap();
        let mut tex = TextureMap::blank(8, 8);
        for (i, _) in atlas.iter_valid().filter(|(i, _)| i % 3 == 0) {
            tex.set(i, [1.0, 0.0, 0.0]);
        }
        let mask = dir.path().join("m.png");
        tex.save_mask_png(&mask).unwrap();
        tex.save_png(dir.path().join("t.png")).unwrap();
        let mut back = TextureMap::from_image(&Image::load_png(dir.path().join("t.png")).unwrap(), &atlas).unwrap();
        back.apply_mask_png(&mask).unwrap();
        assert_eq!(back.covered, tex.covered);
        assert!(TextureMap::blank(4, 4).apply_mask_png(&mask).is_err());
    }
}
