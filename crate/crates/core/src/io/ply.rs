//! Minimal PLY reader/writer covering the element layouts this crate emits:
//! point clouds (`x y z`), lidar scans (`x y z ring timestamp`), triangle
//! meshes and polylines. Reads `ascii` and `binary_little_endian` bodies.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Frame, PointCloud, Vec3};
use crate::lidar::{LidarPoint, LidarScan};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

/// One parsed element: scalar properties as `f64` columns, list properties
/// as nested vectors.
#[derive(Debug, Clone)]
pub struct Element {
    pub name: String,
    properties: Vec<Property>,
    rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

impl Element {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    /// Values of a scalar property, one per row.
    pub fn scalar(&self, name: &str) -> Option<Vec<f64>> {
        let col = self.column(name)?;
        self.rows
            .iter()
            .map(|r| match &r[col] {
                Value::Scalar(x) => Some(*x),
                Value::List(_) => None,
            })
            .collect()
    }

    /// Values of a list property, one list per row.
    pub fn list(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        let col = self.column(name)?;
        self.rows
            .iter()
            .map(|r| match &r[col] {
                Value::List(v) => Some(v.clone()),
                Value::Scalar(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PlyFile {
    pub encoding: Encoding,
    pub elements: Vec<Element>,
}

impl PlyFile {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

pub fn read_ply(path: &Path) -> Result<PlyFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let bad = |msg: String| Error::parse(path, msg);

    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<File>| -> Result<String> {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse(path, "unexpected end of PLY header"));
        }
        Ok(line.trim().to_string())
    };

    if next_line(&mut reader)? != "ply" {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut headers: Vec<(String, usize, Vec<Property>)> = Vec::new();
    loop {
        let l = next_line(&mut reader)?;
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("format") => {
                encoding = Some(match tok.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLittleEndian,
                    other => return Err(bad(format!("unsupported PLY format {other:?}"))),
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| bad("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| bad(format!("bad element count in '{l}'")))?;
                headers.push((name.to_string(), count, Vec::new()));
            }
            Some("property") => {
                let (_, _, props) = headers
                    .last_mut()
                    .ok_or_else(|| bad("property before element".into()))?;
                let ty = tok.next().ok_or_else(|| bad(format!("bad property '{l}'")))?;
                let kind = if ty == "list" {
                    let count = tok.next().and_then(ScalarType::parse);
                    let item = tok.next().and_then(ScalarType::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => PropertyKind::List { count, item },
                        _ => return Err(bad(format!("bad list property '{l}'"))),
                    }
                } else {
                    PropertyKind::Scalar(
                        ScalarType::parse(ty).ok_or_else(|| bad(format!("unknown type '{ty}'")))?,
                    )
                };
                let name = tok
                    .next()
                    .ok_or_else(|| bad(format!("property without name '{l}'")))?;
                props.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            Some("end_header") => break,
            Some(other) => return Err(bad(format!("unexpected header keyword '{other}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| bad("missing format line".into()))?;

    let mut elements = Vec::with_capacity(headers.len());
    match encoding {
        Encoding::Ascii => {
            let mut body = String::new();
            reader
                .read_to_string(&mut body)
                .map_err(|e| Error::io(path, e))?;
            let mut lines = body.lines().filter(|l| !l.trim().is_empty());
            for (name, count, properties) in headers {
                let mut rows = Vec::with_capacity(count);
                for _ in 0..count {
                    let l = lines
                        .next()
                        .ok_or_else(|| bad(format!("element '{name}' truncated")))?;
                    let mut nums = l.split_whitespace().map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| bad(format!("bad number '{t}' in element '{name}'")))
                    });
                    let mut next = || -> Result<f64> {
                        nums.next()
                            .unwrap_or_else(|| Err(bad(format!("short row in element '{name}'"))))
                    };
                    let mut row = Vec::with_capacity(properties.len());
                    for p in &properties {
                        row.push(match p.kind {
                            PropertyKind::Scalar(_) => Value::Scalar(next()?),
                            PropertyKind::List { .. } => {
                                let n = next()? as usize;
                                Value::List((0..n).map(|_| next()).collect::<Result<_>>()?)
                            }
                        });
                    }
                    rows.push(row);
                }
                elements.push(Element {
                    name,
                    properties,
                    rows,
                });
            }
        }
        Encoding::BinaryLittleEndian => {
            let mut body = Vec::new();
            reader
                .read_to_end(&mut body)
                .map_err(|e| Error::io(path, e))?;
            let mut pos = 0usize;
            let mut take = |ty: ScalarType| -> Result<f64> {
                let end = pos + ty.size();
                if end > body.len() {
                    return Err(Error::parse(path, "binary PLY body truncated"));
                }
                let v = ty.read_le(&body[pos..end]);
                pos = end;
                Ok(v)
            };
            for (name, count, properties) in headers {
                let mut rows = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut row = Vec::with_capacity(properties.len());
                    for p in &properties {
                        row.push(match p.kind {
                            PropertyKind::Scalar(ty) => Value::Scalar(take(ty)?),
                            PropertyKind::List { count, item } => {
                                let n = take(count)? as usize;
                                Value::List((0..n).map(|_| take(item)).collect::<Result<_>>()?)
                            }
                        });
                    }
                    rows.push(row);
                }
                elements.push(Element {
                    name,
                    properties,
                    rows,
                });
            }
        }
    }
    Ok(PlyFile { encoding, elements })
}

fn vertex_positions(path: &Path, ply: &PlyFile) -> Result<Vec<Vec3>> {
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::parse(path, "no 'vertex' element"))?;
    let col = |n: &str| {
        vertex
            .scalar(n)
            .ok_or_else(|| Error::parse(path, format!("vertex has no scalar property '{n}'")))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    Ok((0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn read_point_cloud(path: &Path, frame: Frame) -> Result<PointCloud> {
    let ply = read_ply(path)?;
    let cloud = PointCloud::new(vertex_positions(path, &ply)?, frame);
    if !cloud.is_finite() {
        return Err(Error::parse(path, "non-finite coordinates"));
    }
    Ok(cloud)
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header",
        cloud.len()
    )
    .map_err(io)?;
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a lidar scan with `x y z ring` (and optional `timestamp`) vertex
/// properties. `num_rings` is one more than the largest ring index.
pub fn read_scan(path: &Path) -> Result<LidarScan> {
    let ply = read_ply(path)?;
    let positions = vertex_positions(path, &ply)?;
    let vertex = ply.element("vertex").expect("checked above");
    let rings = vertex
        .scalar("ring")
        .ok_or_else(|| Error::parse(path, "vertex has no 'ring' property"))?;
    let stamps = vertex
        .scalar("timestamp")
        .unwrap_or_else(|| vec![0.0; rings.len()]);
    let mut points = Vec::with_capacity(positions.len());
    for ((position, ring), timestamp) in positions.into_iter().zip(rings).zip(stamps) {
        if ring < 0.0 || ring.fract() != 0.0 || ring > u16::MAX as f64 {
            return Err(Error::parse(path, format!("invalid ring index {ring}")));
        }
        points.push(LidarPoint {
            position,
            ring: ring as u16,
            timestamp,
        });
    }
    let num_rings = points.iter().map(|p| p.ring + 1).max().unwrap_or(0);
    Ok(LidarScan { points, num_rings })
}

pub fn write_scan(path: &Path, scan: &LidarScan) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "ply\nformat ascii 1.0\ncomment num_rings {}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty ushort ring\nproperty double timestamp\nend_header",
        scan.num_rings,
        scan.points.len()
    )
    .map_err(io)?;
    for p in &scan.points {
        writeln!(
            w,
            "{} {} {} {} {}",
            p.position.x, p.position.y, p.position.z, p.ring, p.timestamp
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_mesh(path: &Path, mesh: &TriMesh, encoding: Encoding) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let format = match encoding {
        Encoding::Ascii => "ascii",
        Encoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(
        w,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header",
        mesh.vertices.len(),
        mesh.triangles.len()
    )
    .map_err(io)?;
    match encoding {
        Encoding::Ascii => {
            for v in &mesh.vertices {
                writeln!(w, "{} {} {}", v.x as f32, v.y as f32, v.z as f32).map_err(io)?;
            }
            for t in &mesh.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2]).map_err(io)?;
            }
        }
        Encoding::BinaryLittleEndian => {
            for v in &mesh.vertices {
                for c in [v.x, v.y, v.z] {
                    w.write_all(&(c as f32).to_le_bytes()).map_err(io)?;
                }
            }
            for t in &mesh.triangles {
                w.write_all(&[3u8]).map_err(io)?;
                for i in t {
                    w.write_all(&(*i as i32).to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let ply = read_ply(path)?;
    let vertices = vertex_positions(path, &ply)?;
    let triangles = match ply.element("face") {
        None => Vec::new(),
        Some(face) => {
            let lists = face
                .list("vertex_indices")
                .or_else(|| face.list("vertex_index"))
                .ok_or_else(|| Error::parse(path, "face has no vertex_indices list"))?;
            lists
                .into_iter()
                .map(|l| {
                    if l.len() != 3 || l.iter().any(|&i| i < 0.0 || i as usize >= vertices.len()) {
                        Err(Error::parse(path, format!("invalid triangle {l:?}")))
                    } else {
                        Ok([l[0] as u32, l[1] as u32, l[2] as u32])
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(TriMesh {
        vertices,
        triangles,
    })
}

/// Writes a polyline as vertices plus consecutive `edge` elements.
pub fn write_polyline(path: &Path, points: &[Vec3]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement edge {}\nproperty int vertex1\nproperty int vertex2\nend_header",
        points.len(),
        points.len().saturating_sub(1)
    )
    .map_err(io)?;
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(io)?;
    }
    for i in 1..points.len() {
        writeln!(w, "{} {}", i - 1, i).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_polyline(path: &Path) -> Result<Vec<Vec3>> {
    vertex_positions(path, &read_ply(path)?)
}
