//! Low-polygon stylization: decimation, nearest-vertex color transfer and
//! rebaking onto the simplified mesh.

pub mod kdtree;
pub mod qem;

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{face_chart_uvs, ChartScale, MeshError, TriMesh, UvAtlas};
use crate::texture::{bake_vertex_colors, propagate_vertex_colors, texture_to_vertex_colors, TextureError, TextureMap, VertexColors};

pub use kdtree::KdTree;
pub use qem::{decimate, qem_decimate, Decimation};

#[derive(Debug, Error)]
pub enum LowpolyError {
    #[error("target face count {0} is below the minimum of 2")]
    InvalidTarget(usize),
    #[error("input mesh has an edge shared by more than two faces")]
    NonManifoldInput,
    #[error("no legal collapse left at {achieved} faces (target {target})")]
    TargetUnreachable { target: usize, achieved: usize },
    #[error("dense texture has no textured vertices to transfer")]
    NoTexturedVertices,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Texture(#[from] TextureError),
}

pub type Result<T> = std::result::Result<T, LowpolyError>;

/// Colors each `low` vertex with the color of the nearest `dense` vertex.
///
/// Dense vertex colors are read from the texture; vertices the texture misses
/// are filled by propagation over the dense mesh first.
pub fn transfer_texture(dense: &TriMesh, atlas: &UvAtlas, tex: &TextureMap, low: &TriMesh) -> Result<VertexColors> {
    let colors = texture_to_vertex_colors(dense, atlas, tex)?;
    if colors.textured_count() == 0 {
        return Err(LowpolyError::NoTexturedVertices);
    }
    let colors = propagate_vertex_colors(dense, &colors);
    Ok(transfer_vertex_colors(dense, &colors, low))
}

/// Nearest-vertex lookup of `colors` (on `dense`) for every vertex of `low`.
pub fn transfer_vertex_colors(dense: &TriMesh, colors: &VertexColors, low: &TriMesh) -> VertexColors {
    let tree = KdTree::build(dense.vertices().to_vec());
    let picked: Vec<usize> = low
        .vertices()
        .par_iter()
        .map(|p| tree.nearest(p).expect("dense mesh has vertices").0)
        .collect();
    VertexColors {
        colors: picked.iter().map(|&i| colors.colors[i]).collect(),
        textured: picked.iter().map(|&i| colors.textured[i]).collect(),
    }
}

/// A low-poly mesh with its atlas and baked vertex-color texture.
#[derive(Debug, Clone)]
pub struct Rebake {
    pub mesh: TriMesh,
    pub atlas: UvAtlas,
    pub texture: TextureMap,
}

/// Bakes vertex colors into a `size`×`size` texture on `low`'s UVs. Without
/// UVs, `chart_fallback` gives every face its own chart; otherwise the call
/// fails with [`MeshError::MissingUvs`].
pub fn rebake_lowpoly(low: &TriMesh, colors: &VertexColors, size: usize, chart_fallback: bool) -> Result<Rebake> {
    let mesh = match low.uvs() {
        Some(_) => low.clone(),
        None if chart_fallback => low.clone().with_uvs(face_chart_uvs(low, size, ChartScale::PerFace))?,
        None => return Err(MeshError::MissingUvs.into()),
    };
    let atlas = UvAtlas::rasterize(&mesh, size, size)?;
    let texture = bake_vertex_colors(&mesh, &atlas, colors);
    Ok(Rebake { mesh, atlas, texture })
}
