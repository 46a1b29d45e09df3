use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;
use crate::error::{Error, Result};

/// Area-weighted uniform samples on a mesh surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSampleSet {
    pub points: Vec<Point3<f64>>,
    /// Unit normal of each sample's source face.
    pub normals: Vec<Vector3<f64>>,
    pub face_ids: Vec<usize>,
}

impl SurfaceSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` points uniformly by area. Identical `(mesh, n, seed)` give
/// bit-identical results.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<SurfaceSampleSet> {
    if n == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SurfaceSampleSet {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        face_ids: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c <= target)
            .min(cumulative.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let (u, v, w) = (1.0 - s, s * (1.0 - r2), s * r2);
        let [a, b, c] = mesh.triangle(face);
        out.points
            .push(Point3::from(a.coords * u + b.coords * v + c.coords * w));
        out.normals.push(mesh.face_normal(face));
        out.face_ids.push(face);
    }
    Ok(out)
}
