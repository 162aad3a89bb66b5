use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Hits closer than this are ignored so rays leaving a surface do not
/// re-hit it.
const T_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Axis-aligned box; `size` holds full edge lengths.
    Box { center: Vec3, size: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Solid half-space `normal · x ≤ offset`, `normal` unit length.
    Plane { normal: Vec3, offset: f64 },
}

impl Primitive {
    pub fn plane(normal: Vec3, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter(format!("plane normal {normal:?} must be non-zero")));
        }
        Ok(Primitive::Plane {
            normal: normal / n,
            offset: offset / n,
        })
    }

    /// Nearest intersection parameter `t > 0` along `origin + t·dir`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let pick = |near: f64, far: f64| {
            if near > T_EPS {
                Some(near)
            } else if far > T_EPS {
                Some(far)
            } else {
                None
            }
        };
        match self {
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                pick((-b - sq) / a, (-b + sq) / a)
            }
            Primitive::Box { center, size } => {
                let lo = center - size / 2.0;
                let hi = center + size / 2.0;
                let mut near = f64::NEG_INFINITY;
                let mut far = f64::INFINITY;
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if origin[a] < lo[a] || origin[a] > hi[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (lo[a] - origin[a]) / dir[a];
                    let t2 = (hi[a] - origin[a]) / dir[a];
                    near = near.max(t1.min(t2));
                    far = far.min(t1.max(t2));
                }
                if near > far {
                    return None;
                }
                pick(near, far)
            }
            Primitive::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (offset - normal.dot(origin)) / denom;
                (t > T_EPS).then_some(t)
            }
        }
    }

    /// Point-in-solid test (closed).
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Primitive::Sphere { center, radius } => (p - center).norm() <= *radius,
            Primitive::Box { center, size } => (0..3).all(|a| (p[a] - center[a]).abs() <= size[a] / 2.0),
            Primitive::Plane { normal, offset } => normal.dot(p) <= *offset,
        }
    }

    /// Euclidean distance from `p` to the solid; 0 inside.
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => ((p - center).norm() - radius).max(0.0),
            Primitive::Box { center, size } => {
                let q = (p - center).abs() - size / 2.0;
                q.map(|c| c.max(0.0)).norm()
            }
            Primitive::Plane { normal, offset } => (normal.dot(p) - offset).max(0.0),
        }
    }

    fn is_finite(&self) -> bool {
        let f = |v: &Vec3| v.iter().all(|c| c.is_finite());
        match self {
            Primitive::Sphere { center, radius } => f(center) && radius.is_finite() && *radius > 0.0,
            Primitive::Box { center, size } => f(center) && f(size) && size.iter().all(|s| *s > 0.0),
            Primitive::Plane { normal, offset } => f(normal) && offset.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if let Some(bad) = primitives.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("degenerate primitive {bad:?}")));
        }
        Ok(Self { primitives })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.primitives.iter().any(|s| s.contains(p))
    }

    /// Distance to the nearest solid; infinite for an empty scene.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.primitives.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse::<Scene>().map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.primitives {
            let line = match p {
                Primitive::Box { center: c, size: s } => {
                    format!("box {} {} {} {} {} {}", c.x, c.y, c.z, s.x, s.y, s.z)
                }
                Primitive::Sphere { center: c, radius } => format!("sphere {} {} {} {}", c.x, c.y, c.z, radius),
                Primitive::Plane { normal: n, offset } => format!("plane {} {} {} {}", n.x, n.y, n.z, offset),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut primitives = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse("<scene>", format!("line {}: {msg}", n + 1));
            let mut parts = line.split_whitespace();
            let kind = parts.next().unwrap();
            let values: Vec<f64> = parts
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("invalid number {t:?}"))))
                .collect::<Result<_>>()?;
            let expect = |k: usize| {
                if values.len() == k {
                    Ok(())
                } else {
                    Err(bad(format!("{kind} expects {k} numbers, got {}", values.len())))
                }
            };
            let v = |i: usize| Vec3::new(values[i], values[i + 1], values[i + 2]);
            let prim = match kind {
                "box" => {
                    expect(6)?;
                    Primitive::Box { center: v(0), size: v(3) }
                }
                "sphere" => {
                    expect(4)?;
                    Primitive::Sphere { center: v(0), radius: values[3] }
                }
                "plane" => {
                    expect(4)?;
                    Primitive::plane(v(0), values[3]).map_err(|e| bad(e.to_string()))?
                }
                other => return Err(bad(format!("unknown primitive {other:?}"))),
            };
            if !prim.is_finite() {
                return Err(bad(format!("degenerate {kind}")));
            }
            primitives.push(prim);
        }
        Ok(Scene { primitives })
    }
}

/// Nearest hit over all primitives: `(point, range)` for unit `direction`.
pub fn trace_ray(scene: &Scene, origin: &Vec3, direction: &Vec3) -> Option<(Vec3, f64)> {
    scene
        .primitives
        .iter()
        .filter_map(|p| p.intersect(origin, direction))
        .min_by(|a, b| a.total_cmp(b))
        .map(|t| (origin + direction * t, t))
}
