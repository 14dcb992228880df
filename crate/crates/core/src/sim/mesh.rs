//! Triangle meshes and the OBJ / binary STL readers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::VehicleDims;
use crate::geometry::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub triangles: Vec<[u32; 3]>,
}

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v as usize >= n))
        {
            return Err(Error::Validation(format!(
                "triangle {i} references vertex {:?} but mesh has {n} vertices",
                t
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, tri: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Drops zero-area triangles, returning the cleaned mesh and the number removed.
    pub fn cleaned(mut self) -> (Self, usize) {
        let before = self.triangles.len();
        let verts = &self.vertices;
        self.triangles.retain(|&[a, b, c]| {
            let (a, b, c) = (verts[a as usize], verts[b as usize], verts[c as usize]);
            let (e1, e2) = (b - a, c - a);
            let scale = e1.norm_sq() + e2.norm_sq();
            e1.cross(e2).norm() > T::epsilon() * scale && scale > T::zero()
        });
        let dropped = before - self.triangles.len();
        (self, dropped)
    }

    pub fn append(&mut self, other: &Self) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    /// Rotates about +z by `yaw` and then translates.
    pub fn transformed(&self, yaw: T, translation: Vec3<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v.rotate_z(yaw) + translation).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Axis-aligned cuboid centered at the origin, outward-facing triangles.
    pub fn cuboid(dims: VehicleDims<T>) -> Self {
        let h = dims.half();
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let sx = if i & 1 == 0 { -h.x } else { h.x };
            let sy = if i & 2 == 0 { -h.y } else { h.y };
            let sz = if i & 4 == 0 { -h.z } else { h.z };
            vertices.push(Vec3::new(sx, sy, sz));
        }
        let quads: [[u32; 4]; 6] = [
            [0, 2, 6, 4], // -x
            [1, 5, 7, 3], // +x
            [0, 4, 5, 1], // -y
            [2, 3, 7, 6], // +y
            [0, 1, 3, 2], // -z
            [4, 6, 7, 5], // +z
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .map(|[a, b, c]: [u32; 3]| {
                let (va, vb, vc) = (vertices[a as usize], vertices[b as usize], vertices[c as usize]);
                // the cuboid is centered at the origin, so outward means away from it
                if (vb - va).cross(vc - va).dot(va + vb + vc) < T::zero() {
                    [a, c, b]
                } else {
                    [a, b, c]
                }
            })
            .collect();
        Self { vertices, triangles }
    }

    /// Planar quad with corners given in order, split into two triangles.
    pub fn quad(corners: [Vec3<T>; 4]) -> Self {
        Self {
            vertices: corners.to_vec(),
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    /// Horizontal square of half-width `half` at height `z`, centered on the z axis.
    pub fn ground(half: T, z: T) -> Self {
        Self::quad([
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ])
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), &v| {
            (lo.component_min(v), hi.component_max(v))
        }))
    }
}

/// Parses the `v` / `f` subset of Wavefront OBJ. Polygons are fan-triangulated.
pub fn parse_obj<T: Real>(text: &str, path: &Path) -> Result<TriangleMesh<T>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let xyz: Vec<T> = tokens
                    .take(3)
                    .map(|t| t.parse::<T>().map_err(|_| perr(line, format!("bad coordinate '{t}'"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(perr(line, "vertex needs 3 coordinates".into()));
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let v: i64 = first.parse().map_err(|_| perr(line, format!("bad face index '{t}'")))?;
                        let n = vertices.len() as i64;
                        let resolved = if v < 0 { n + v } else { v - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(perr(line, format!("face index {v} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(perr(line, "face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Parses binary STL: 80-byte header, `u32` count, 50 bytes per facet.
pub fn parse_stl<T: Real>(bytes: &[u8], path: &Path) -> Result<TriangleMesh<T>> {
    let ferr = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 84 {
        return Err(ferr(bytes.len(), "binary STL shorter than its 84-byte header".into()));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + 50 * count;
    if bytes.len() < expected {
        return Err(ferr(
            bytes.len(),
            format!("{count} facets need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut vertices = Vec::with_capacity(3 * count);
    let mut triangles = Vec::with_capacity(count);
    for f in 0..count {
        let rec = &bytes[84 + 50 * f..84 + 50 * (f + 1)];
        let val = |k: usize| T::from_f32_bits(f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()));
        let base = vertices.len() as u32;
        for v in 0..3 {
            let k = 3 + 3 * v;
            vertices.push(Vec3::new(val(k), val(k + 1), val(k + 2)));
        }
        triangles.push([base, base + 1, base + 2]);
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn encode_stl<T: Real>(mesh: &TriangleMesh<T>) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.len() as u32).to_le_bytes());
    for i in 0..mesh.len() {
        let [a, b, c] = mesh.corners(i);
        let n = (b - a).cross(c - a);
        for v in [n, a, b, c] {
            for s in [v.x, v.y, v.z] {
                out.extend_from_slice(&s.as_f32().to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

/// Loads `.obj` (ASCII) or `.stl` (binary) by extension.
pub fn load_mesh<T: Real>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "obj" => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_obj(&text, path)
        }
        "stl" => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_stl(&bytes, path)
        }
        _ => Err(Error::Config(format!(
            "unsupported mesh format for {} (expected .obj or .stl)",
            path.display()
        ))),
    }
}
