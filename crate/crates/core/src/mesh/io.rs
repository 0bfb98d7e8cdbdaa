//! OBJ and PLY readers, OBJ writer, PLY point-cloud writer.
//!
//! Polygons with more than three corners are fan-triangulated from their
//! first corner: `(v0, v1, v2), (v0, v2, v3), ...`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MeshError, Result, TriMesh, Vec2, Vec3};

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

/// Loads an OBJ or PLY (ASCII or binary) mesh, dispatching on the extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(MeshError::FileNotFound(path.to_path_buf()));
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "obj" => parse_obj(BufReader::new(fs::File::open(path)?)),
        "ply" => parse_ply(BufReader::new(fs::File::open(path)?)),
        other => Err(MeshError::UnsupportedFormat(other.to_string())),
    }
}

fn resolve_index(token: &str, count: usize, line: usize) -> Result<usize> {
    let raw: i64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("bad index `{token}`")))?;
    let idx = match raw {
        0 => return Err(parse_err(line, "index 0 is not valid in OBJ")),
        r if r > 0 => (r - 1) as usize,
        r => {
            let back = (-r) as usize;
            if back > count {
                return Err(parse_err(line, format!("relative index {r} out of range")));
            }
            count - back
        }
    };
    if idx >= count {
        return Err(parse_err(
            line,
            format!("index {} out of range ({} defined)", idx + 1, count),
        ));
    }
    Ok(idx)
}

fn parse_floats<const N: usize>(tokens: &[&str], line: usize) -> Result<[f64; N]> {
    if tokens.len() < N {
        return Err(parse_err(line, format!("expected {N} numbers")));
    }
    let mut out = [0.0f64; N];
    for (o, t) in out.iter_mut().zip(tokens) {
        *o = t
            .parse()
            .map_err(|_| parse_err(line, format!("bad number `{t}`")))?;
        if !o.is_finite() {
            return Err(parse_err(line, format!("non-finite number `{t}`")));
        }
    }
    Ok(out)
}

/// Parses Wavefront OBJ text (`v`, `vt`, `vn`, `f`; other records are ignored).
pub fn parse_obj(reader: impl BufRead) -> Result<TriMesh> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    let mut obj_normals: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut face_uvs: Vec<[Vec2; 3]> = Vec::new();
    let mut corner_normals: Vec<(u32, usize)> = Vec::new();
    let mut faces_with_uv = 0usize;
    let mut corners_with_normal = 0usize;
    let mut corners = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some((&kind, rest)) = tokens.split_first() else {
            continue;
        };
        match kind {
            "v" => {
                let [x, y, z] = parse_floats::<3>(rest, lineno)?;
                positions.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(rest, lineno)?;
                texcoords.push(Vec2::new(u, v));
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(rest, lineno)?;
                obj_normals.push(Vec3::new(x, y, z));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(lineno, "face needs at least 3 corners"));
                }
                let mut poly: Vec<(u32, Option<Vec2>, Option<usize>)> = Vec::with_capacity(rest.len());
                for corner in rest {
                    let mut parts = corner.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), positions.len(), lineno)?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(texcoords[resolve_index(s, texcoords.len(), lineno)?]),
                        _ => None,
                    };
                    let vn = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(s, obj_normals.len(), lineno)?),
                        _ => None,
                    };
                    poly.push((v as u32, vt, vn));
                }
                let has_uv = poly.iter().all(|c| c.1.is_some());
                if !has_uv && poly.iter().any(|c| c.1.is_some()) {
                    return Err(parse_err(lineno, "face mixes corners with and without texture coordinates"));
                }
                for k in 1..poly.len() - 1 {
                    let tri = [poly[0], poly[k], poly[k + 1]];
                    faces.push(tri.map(|c| c.0));
                    if has_uv {
                        faces_with_uv += 1;
                        face_uvs.push(tri.map(|c| c.1.unwrap()));
                    }
                    for c in tri {
                        corners += 1;
                        if let Some(n) = c.2 {
                            corners_with_normal += 1;
                            corner_normals.push((c.0, n));
                        }
                    }
                }
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let mut mesh = TriMesh::new(positions, faces)?;
    if faces_with_uv > 0 {
        if faces_with_uv != mesh.face_count() {
            return Err(parse_err(0, "only some faces carry texture coordinates"));
        }
        let clamped = face_uvs
            .into_iter()
            .map(|c| c.map(clamp_uv))
            .map(|[a, b, c]| Some([a?, b?, c?]))
            .collect::<Option<Vec<_>>>();
        match clamped {
            Some(uvs) => mesh = mesh.with_uvs(uvs)?,
            None => return Err(parse_err(0, "texture coordinates outside [0,1]")),
        }
    }
    if corners_with_normal == corners && corners > 0 {
        // Per-corner normals collapse to per-vertex; the last reference wins.
        let mut normals = vec![None; mesh.vertex_count()];
        for (v, n) in corner_normals {
            normals[v as usize] = Some(obj_normals[n]);
        }
        let normals = normals
            .into_iter()
            .map(|n| n.and_then(|n: Vec3| n.try_normalize(1e-12)))
            .collect::<Option<Vec<_>>>();
        if let Some(normals) = normals {
            mesh = mesh.with_normals(normals)?;
        }
    }
    Ok(mesh)
}

/// UVs within rounding of the unit square are snapped into it; anything further out is rejected.
fn clamp_uv(uv: Vec2) -> Option<Vec2> {
    const SLACK: f64 = 1e-9;
    let ok = |x: f64| (-SLACK..=1.0 + SLACK).contains(&x);
    (ok(uv.x) && ok(uv.y)).then(|| uv.map(|x| x.clamp(0.0, 1.0)))
}

/// Writes `mesh` as OBJ. Coordinates use Rust's shortest round-trip float
/// formatting, so reloading reproduces the arrays bit for bit.
pub fn write_obj(mesh: &TriMesh, writer: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    if let Some(uvs) = mesh.uvs() {
        for c in uvs {
            for uv in c {
                writeln!(w, "vt {} {}", uv.x, uv.y)?;
            }
        }
    }
    if let Some(ns) = mesh.normals() {
        for n in ns {
            writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
        }
    }
    let has_uv = mesh.uvs().is_some();
    let has_n = mesh.normals().is_some();
    for (fi, f) in mesh.faces().iter().enumerate() {
        write!(w, "f")?;
        for (k, &v) in f.iter().enumerate() {
            let v = v + 1;
            let t = fi * 3 + k + 1;
            match (has_uv, has_n) {
                (true, true) => write!(w, " {v}/{t}/{v}")?,
                (true, false) => write!(w, " {v}/{t}")?,
                (false, true) => write!(w, " {v}//{v}")?,
                (false, false) => write!(w, " {v}")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    write_obj(mesh, fs::File::create(path)?)?;
    Ok(())
}

/// Writes an ASCII PLY point cloud with per-point normals.
pub fn write_ply_points(positions: &[Vec3], normals: &[Vec3], writer: impl Write) -> std::io::Result<()> {
    assert_eq!(positions.len(), normals.len());
    let mut w = BufWriter::new(writer);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", positions.len())?;
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(w, "property double {p}")?;
    }
    writeln!(w, "end_header")?;
    for (p, n) in positions.iter().zip(normals) {
        writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)?;
    }
    w.flush()
}

// ---------------------------------------------------------------------------
// PLY

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut b = [0u8; $n];
                b.copy_from_slice(&bytes[..$n]);
                if big_endian {
                    <$t>::from_be_bytes(b) as f64
                } else {
                    <$t>::from_le_bytes(b) as f64
                }
            }};
        }
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

/// One record's property values, lists flattened into `Vec<f64>`.
type Record = Vec<Vec<f64>>;

trait RecordSource {
    fn next_record(&mut self, element: &Element) -> Result<Record>;
}

struct AsciiSource<R: BufRead> {
    reader: R,
    line: usize,
}

impl<R: BufRead> RecordSource for AsciiSource<R> {
    fn next_record(&mut self, element: &Element) -> Result<Record> {
        let mut buf = String::new();
        loop {
            buf.clear();
            self.line += 1;
            if self.reader.read_line(&mut buf)? == 0 {
                return Err(parse_err(self.line, format!("unexpected end of file in element `{}`", element.name)));
            }
            if !buf.trim().is_empty() {
                break;
            }
        }
        let line = self.line;
        let mut tokens = buf.split_whitespace();
        let mut next = || -> Result<f64> {
            let t = tokens
                .next()
                .ok_or_else(|| parse_err(line, "record is missing values"))?;
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("bad number `{t}`")))
        };
        let mut record = Vec::with_capacity(element.properties.len());
        for p in &element.properties {
            match p {
                Property::Scalar { .. } => record.push(vec![next()?]),
                Property::List { .. } => {
                    let n = next()?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(parse_err(line, "bad list length"));
                    }
                    record.push((0..n as usize).map(|_| next()).collect::<Result<Vec<_>>>()?);
                }
            }
        }
        Ok(record)
    }
}

struct BinarySource<R: Read> {
    reader: R,
    big_endian: bool,
    header_lines: usize,
    record: usize,
}

impl<R: Read> BinarySource<R> {
    fn read_scalar(&mut self, ty: Scalar) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.reader
            .read_exact(&mut buf[..ty.size()])
            .map_err(|_| parse_err(self.header_lines, format!("truncated binary body at record {}", self.record)))?;
        Ok(ty.decode(&buf, self.big_endian))
    }
}

impl<R: Read> RecordSource for BinarySource<R> {
    fn next_record(&mut self, element: &Element) -> Result<Record> {
        self.record += 1;
        let mut record = Vec::with_capacity(element.properties.len());
        for p in &element.properties {
            match p {
                Property::Scalar { ty, .. } => record.push(vec![self.read_scalar(*ty)?]),
                Property::List { count, item, .. } => {
                    let n = self.read_scalar(*count)?;
                    if n < 0.0 {
                        return Err(parse_err(self.header_lines, "negative list length"));
                    }
                    record.push((0..n as usize).map(|_| self.read_scalar(*item)).collect::<Result<Vec<_>>>()?);
                }
            }
        }
        Ok(record)
    }
}

fn property_name(p: &Property) -> &str {
    match p {
        Property::Scalar { name, .. } | Property::List { name, .. } => name,
    }
}

/// Parses an ASCII or binary PLY mesh (`element vertex` / `element face`).
pub fn parse_ply(mut reader: impl BufRead) -> Result<TriMesh> {
    let mut line = String::new();
    let mut lineno = 0usize;
    let mut read_line = |reader: &mut dyn BufRead, line: &mut String| -> Result<usize> {
        line.clear();
        lineno += 1;
        if reader.read_line(line)? == 0 {
            return Err(parse_err(lineno, "unexpected end of header"));
        }
        Ok(lineno)
    };
    let ln = read_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(parse_err(ln, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let header_end;
    loop {
        let ln = read_line(&mut reader, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(parse_err(ln, format!("unknown format `{other}`"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(ln, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(ln, "property before element"))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(parse_err(ln, "unknown property type"));
                };
                el.properties.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(ln, "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(ln, "unknown property type"))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => {
                header_end = ln;
                break;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse_err(ln, format!("unrecognized header line `{}`", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| parse_err(header_end, "missing format line"))?;
    let mut source: Box<dyn RecordSource> = match format {
        Format::Ascii => Box::new(AsciiSource {
            reader,
            line: header_end,
        }),
        Format::BinaryLe | Format::BinaryBe => Box::new(BinarySource {
            reader,
            big_endian: format == Format::BinaryBe,
            header_lines: header_end,
            record: 0,
        }),
    };

    let mut positions = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut vertex_uvs: Vec<Vec2> = Vec::new();
    let mut faces = Vec::new();
    let mut face_uvs: Vec<[Vec2; 3]> = Vec::new();
    let mut have_face_uvs = true;
    for el in &elements {
        let find = |names: &[&str]| {
            el.properties
                .iter()
                .position(|p| names.contains(&property_name(p)))
        };
        match el.name.as_str() {
            "vertex" => {
                let (Some(x), Some(y), Some(z)) = (find(&["x"]), find(&["y"]), find(&["z"])) else {
                    return Err(parse_err(header_end, "vertex element lacks x/y/z"));
                };
                let n = (find(&["nx"]), find(&["ny"]), find(&["nz"]));
                let uv = (
                    find(&["u", "s", "texture_u", "texture_s"]),
                    find(&["v", "t", "texture_v", "texture_t"]),
                );
                for _ in 0..el.count {
                    let r = source.next_record(el)?;
                    positions.push(Vec3::new(r[x][0], r[y][0], r[z][0]));
                    if let (Some(a), Some(b), Some(c)) = n {
                        normals.push(Vec3::new(r[a][0], r[b][0], r[c][0]));
                    }
                    if let (Some(a), Some(b)) = uv {
                        vertex_uvs.push(Vec2::new(r[a][0], r[b][0]));
                    }
                }
            }
            "face" => {
                let idx = find(&["vertex_indices", "vertex_index"])
                    .ok_or_else(|| parse_err(header_end, "face element lacks vertex_indices"))?;
                let tc = find(&["texcoord"]);
                for fi in 0..el.count {
                    let r = source.next_record(el)?;
                    let poly = &r[idx];
                    if poly.len() < 3 {
                        return Err(parse_err(header_end, format!("face {fi} has fewer than 3 corners")));
                    }
                    for &i in poly {
                        if i < 0.0 || i as usize >= positions.len() {
                            return Err(parse_err(header_end, format!("face {fi} references vertex {i} out of range")));
                        }
                    }
                    let coords = tc.map(|t| &r[t]).filter(|c| c.len() == poly.len() * 2);
                    have_face_uvs &= coords.is_some();
                    for k in 1..poly.len() - 1 {
                        let corners = [0, k, k + 1];
                        faces.push(corners.map(|c| poly[c] as u32));
                        if let Some(c) = coords {
                            face_uvs.push(corners.map(|i| Vec2::new(c[2 * i], c[2 * i + 1])));
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    source.next_record(el)?;
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    if !have_face_uvs {
        face_uvs.clear();
    }
    if face_uvs.is_empty() && vertex_uvs.len() == positions.len() {
        face_uvs = faces
            .iter()
            .map(|f: &[u32; 3]| f.map(|v| vertex_uvs[v as usize]))
            .collect();
    }
    let mut mesh = TriMesh::new(positions, faces)?;
    if !face_uvs.is_empty() {
        let uvs = face_uvs
            .into_iter()
            .map(|c| c.map(clamp_uv))
            .map(|[a, b, c]| Some([a?, b?, c?]))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| parse_err(header_end, "texture coordinates outside [0,1]"))?;
        mesh = mesh.with_uvs(uvs)?;
    }
    if normals.len() == mesh.vertex_count() {
        if let Some(ns) = normals
            .iter()
            .map(|n| n.try_normalize(1e-12))
            .collect::<Option<Vec<_>>>()
        {
            mesh = mesh.with_normals(ns)?;
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn minimal_obj() {
        let m = parse_obj(Cursor::new("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let m = parse_obj(Cursor::new(src)).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_reports_line() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 7\n";
        match parse_obj(Cursor::new(src)) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_vertex() {
        let err = parse_obj(Cursor::new("v 0 zero 0\n")).unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 1, .. }));
    }

    #[test]
    fn obj_without_faces_is_empty() {
        let err = parse_obj(Cursor::new("v 0 0 0\n")).unwrap_err();
        assert!(matches!(err, MeshError::EmptyMesh));
    }

    #[test]
    fn negative_indices_and_uvs() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf -3/-3 -2/-2 -1/-1\n";
        let m = parse_obj(Cursor::new(src)).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert_eq!(m.uvs().unwrap()[0][1], Vec2::new(1.0, 0.0));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_mesh("/nonexistent/x.obj"), Err(MeshError::FileNotFound(_))));
    }

    #[test]
    fn ascii_ply_with_quad() {
        let src = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                   element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                   0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let m = parse_ply(Cursor::new(src)).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn binary_ply_little_endian() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty double x\nproperty double y\n\
property double z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_vec();
        for v in [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let m = parse_ply(Cursor::new(bytes)).unwrap();
        assert_eq!(m.vertices()[1], Vec3::x());
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn binary_ply_big_endian_float() {
        let mut bytes = b"ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
property float z\nelement face 1\nproperty list uchar int vertex_index\nend_header\n"
            .to_vec();
        for v in [[0.0f32, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            for c in v {
                bytes.extend_from_slice(&c.to_be_bytes());
            }
        }
        bytes.push(3);
        for i in [0i32, 1, 2] {
            bytes.extend_from_slice(&i.to_be_bytes());
        }
        let m = parse_ply(Cursor::new(bytes)).unwrap();
        assert_eq!(m.vertices()[1], Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn ply_face_out_of_range() {
        let src = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
                   element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n";
        assert!(matches!(parse_ply(Cursor::new(src)), Err(MeshError::Parse { .. })));
    }

    #[test]
    fn obj_roundtrip_with_attributes() {
        let m = crate::mesh::primitives::uv_sphere(7, 5, 0.37);
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        let back = parse_obj(Cursor::new(buf)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.faces(), m.faces());
        assert_eq!(back.uvs(), m.uvs());
    }
}
