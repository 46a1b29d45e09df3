//! Triangle meshes and the spatial queries built on them.
//!
//! Everything is in centimeters. Meshes are immutable after construction; the
//! closest-point hierarchy is built lazily on first query and shared by all
//! threads afterwards.

mod bvh;
mod obj;
mod sample;
mod sdf;
pub mod shapes;
mod voxel;
mod winding;

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub use bvh::{closest_point_on_triangle, Bvh, ClosestHit};
pub use obj::{load_obj, obj_string, parse_obj, write_obj, ObjFile};
pub use sample::{sample_surface, SurfaceSampleSet};
pub use sdf::{build_sdf, SdfGrid, SdfSample, SDF_MAGIC, SDF_VERSION};
pub use voxel::{voxelize_occupancy, voxelize_on_grid, GridSpec, OccupancyGrid};
pub use winding::{inside_on_grid, winding_number};

/// Faces with less area than this are rejected as degenerate (cm²).
pub const DEGENERATE_AREA: f64 = 1e-10;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point3::from(Vector3::repeat(f64::INFINITY)),
            max: Point3::from(Vector3::repeat(f64::NEG_INFINITY)),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut bb = Aabb::empty();
        for p in points {
            bb.grow(p);
        }
        bb
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}

/// Indexed triangle mesh with area-weighted vertex normals.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    vertex_normals: Vec<Vector3<f64>>,
    bvh: OnceLock<Bvh>,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range indices and degenerate faces.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::Invalid("empty mesh".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Invalid(format!(
                    "face {fi} references vertex out of range ({} vertices)",
                    vertices.len()
                )));
            }
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area >= DEGENERATE_AREA) {
                return Err(Error::Invalid(format!("face {fi} is degenerate (area {area:e})")));
            }
        }
        let vertex_normals = compute_vertex_normals(&vertices, &faces);
        Ok(TriMesh {
            vertices,
            faces,
            vertex_normals,
            bvh: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_normals(&self) -> &[Vector3<f64>] {
        &self.vertex_normals
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unit normal of a face, following the right-hand rule on its winding.
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(&a, &b, &c)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a].coords, self.vertices[b].coords, self.vertices[c].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges not shared by exactly two faces.
    pub fn open_edge_count(&self) -> usize {
        self.edge_counts().values().filter(|&&c| c != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        self.open_edge_count() == 0
    }

    pub fn require_watertight(&self) -> Result<()> {
        match self.open_edge_count() {
            0 => Ok(()),
            open_edges => Err(Error::NotWatertight { open_edges }),
        }
    }

    /// Edges shared by more than two faces.
    pub fn non_manifold_edge_count(&self) -> usize {
        self.edge_counts().values().filter(|&&c| c > 2).count()
    }

    /// Lazily built closest-point hierarchy.
    pub fn bvh(&self) -> &Bvh {
        self.bvh.get_or_init(|| Bvh::build(self))
    }

    /// Exact closest point on the surface to `query`.
    pub fn closest_point(&self, query: &Point3<f64>) -> ClosestHit {
        self.bvh().closest(query, f64::INFINITY)
    }

    /// Submesh made of the listed faces, with unused vertices dropped.
    pub fn submesh(&self, face_ids: &[usize]) -> Result<TriMesh> {
        let mut remap = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(face_ids.len());
        for &fi in face_ids {
            let f = self
                .faces
                .get(fi)
                .ok_or_else(|| Error::Invalid(format!("part face index {fi} out of range")))?;
            let mut nf = [0; 3];
            for k in 0..3 {
                nf[k] = *remap.entry(f[k]).or_insert_with(|| {
                    vertices.push(self.vertices[f[k]]);
                    vertices.len() - 1
                });
            }
            faces.push(nf);
        }
        TriMesh::new(vertices, faces)
    }

    /// Applies `f` to every vertex; face winding is kept.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Result<TriMesh> {
        TriMesh::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }

    /// Concatenates meshes into one (components stay disconnected).
    pub fn merge(meshes: &[&TriMesh]) -> Result<TriMesh> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in meshes {
            let base = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        TriMesh::new(vertices, faces)
    }
}

pub fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn compute_vertex_normals(vertices: &[Point3<f64>], faces: &[[usize; 3]]) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); vertices.len()];
    for f in faces {
        // The unnormalized cross product is twice the area: area weighting.
        let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
        for &i in f {
            normals[i] += n;
        }
    }
    normals
        .into_iter()
        .map(|n| n.try_normalize(1e-300).unwrap_or_else(Vector3::z))
        .collect()
}
