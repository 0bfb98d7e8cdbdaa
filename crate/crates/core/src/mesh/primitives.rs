//! Procedural meshes used by tests, demos and the CLI.

use std::collections::HashMap;

use super::{TriMesh, Vec2, Vec3};

/// Axis-aligned box with outward winding; corners are indexed `x + 2y + 4z`.
pub fn cuboid(min: Vec3, size: Vec3) -> TriMesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                min.x + size.x * (i & 1) as f64,
                min.y + size.y * ((i >> 1) & 1) as f64,
                min.z + size.z * ((i >> 2) & 1) as f64,
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
    ];
    TriMesh::new(vertices, faces).expect("static cube topology")
}

/// The cube `[0,1]^3` as 12 triangles.
pub fn unit_cube() -> TriMesh {
    cuboid(Vec3::zeros(), Vec3::repeat(1.0))
}

/// Subdivided icosahedron; `subdivisions = 4` yields 5120 faces.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let normals = vertices.clone();
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces)
        .and_then(|m| m.with_normals(normals))
        .expect("icosphere topology")
}

/// Latitude/longitude sphere with shared seam vertices and per-corner UVs
/// (`u` follows longitude, `v = 1` at the north pole).
pub fn uv_sphere(segments: usize, rings: usize, radius: f64) -> TriMesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for i in 1..rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            vertices.push(radius * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
    let uv = |i: usize, j: usize| Vec2::new(j as f64 / segments as f64, 1.0 - i as f64 / rings as f64);
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..segments {
        let pole_uv = Vec2::new((j as f64 + 0.5) / segments as f64, 1.0);
        faces.push([0, ring(1, j), ring(1, j + 1)]);
        uvs.push([pole_uv, uv(1, j), uv(1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, d]);
            uvs.push([uv(i, j), uv(i + 1, j), uv(i + 1, j + 1)]);
            faces.push([a, d, b]);
            uvs.push([uv(i, j), uv(i + 1, j + 1), uv(i, j + 1)]);
        }
    }
    for j in 0..segments {
        let pole_uv = Vec2::new((j as f64 + 0.5) / segments as f64, 0.0);
        faces.push([ring(rings - 1, j), south, ring(rings - 1, j + 1)]);
        uvs.push([uv(rings - 1, j), pole_uv, uv(rings - 1, j + 1)]);
    }
    let normals = vertices.iter().map(|v| v.normalize()).collect();
    TriMesh::new(vertices, faces)
        .and_then(|m| m.with_normals(normals))
        .and_then(|m| m.with_uvs(uvs))
        .expect("uv sphere topology")
}

/// Regular grid of `nx * ny` quads (two triangles each) in the plane `z = 0`,
/// spanning `[0, width] x [0, height]`, normal `+z`, UVs proportional to position.
pub fn plane_grid(nx: usize, ny: usize, width: f64, height: f64) -> TriMesh {
    assert!(nx >= 1 && ny >= 1);
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(width * i as f64 / nx as f64, height * j as f64 / ny as f64, 0.0));
        }
    }
    let uv_of = |v: u32| {
        let (i, j) = (v as usize % (nx + 1), v as usize / (nx + 1));
        Vec2::new(i as f64 / nx as f64, j as f64 / ny as f64)
    };
    let mut faces = Vec::with_capacity(nx * ny * 2);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let uvs = faces.iter().map(|f| [uv_of(f[0]), uv_of(f[1]), uv_of(f[2])]).collect();
    let normals = vec![Vec3::z(); vertices.len()];
    TriMesh::new(vertices, faces)
        .and_then(|m| m.with_normals(normals))
        .and_then(|m| m.with_uvs(uvs))
        .expect("grid topology")
}
