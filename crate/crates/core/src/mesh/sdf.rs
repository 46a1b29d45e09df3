//! Dense signed-distance grids.
//!
//! Values are true (untruncated) signed distances sampled at voxel centers:
//! negative inside, positive outside. Queries interpolate trilinearly between
//! voxel centers and return the exact derivative of that interpolant.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::{inside_on_grid, GridSpec, TriMesh};
use crate::error::{Error, Result};

pub const SDF_MAGIC: &[u8; 4] = b"GSDF";
pub const SDF_VERSION: u32 = 1;

const PAD_VOXELS: usize = 3;
const MIN_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    /// Minimum corner of the grid; voxel centers sit half a voxel inside.
    pub origin: Point3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    /// x-fastest, centimeters.
    pub values: Vec<f32>,
}

/// Value and gradient of the interpolated field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    pub gradient: Vector3<f64>,
    /// The point was outside the grid box and got clamped.
    pub clamped: bool,
}

/// Samples the signed distance of a watertight mesh at the voxel centers of
/// a grid with `resolution` voxels across the mesh's longest axis, padded by
/// three voxels on every side.
pub fn build_sdf(mesh: &TriMesh, resolution: usize) -> Result<SdfGrid> {
    if !(16..=512).contains(&resolution) {
        return Err(Error::Invalid(format!(
            "SDF resolution {resolution} outside [16, 512]"
        )));
    }
    mesh.require_watertight()?;

    let mut spec = GridSpec::covering(&mesh.aabb(), resolution, PAD_VOXELS);
    for k in 0..3 {
        if spec.dims[k] < MIN_DIM {
            let grow = MIN_DIM - spec.dims[k];
            spec.origin[k] -= grow as f64 * spec.voxel_size / 2.0;
            spec.dims[k] = MIN_DIM;
        }
    }
    let inside = inside_on_grid(mesh, &spec);
    let bvh = mesh.bvh();
    let [nx, ny, nz] = spec.dims;

    let values: Vec<f32> = (0..nz)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut slab = Vec::with_capacity(nx * ny);
            for j in 0..ny {
                // Distance is 1-Lipschitz, so the previous voxel's distance
                // plus one voxel bounds the next one.
                let mut bound = f64::INFINITY;
                for i in 0..nx {
                    let c = spec.center(i, j, k);
                    let hit = bvh.closest(&c, bound);
                    bound = hit.distance + spec.voxel_size;
                    let signed = if inside[spec.index(i, j, k)] {
                        -hit.distance
                    } else {
                        hit.distance
                    };
                    slab.push(signed as f32);
                }
            }
            slab
        })
        .collect();

    Ok(SdfGrid {
        origin: spec.origin,
        voxel_size: spec.voxel_size,
        dims: spec.dims,
        values,
    })
}

impl SdfGrid {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            origin: self.origin,
            voxel_size: self.voxel_size,
            dims: self.dims,
        }
    }

    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)] as f64
    }

    /// Continuous grid coordinate of `p` (voxel centers at integers).
    fn grid_coord(&self, p: &Point3<f64>) -> Vector3<f64> {
        (p - self.origin) / self.voxel_size - Vector3::repeat(0.5)
    }

    /// Interpolation cell containing `p` (lower voxel-center corner), after
    /// clamping to the grid.
    pub fn cell_of(&self, p: &Point3<f64>) -> [usize; 3] {
        let u = self.grid_coord(p);
        let mut cell = [0; 3];
        for k in 0..3 {
            let hi = (self.dims[k] - 1) as f64;
            let uk = u[k].clamp(0.0, hi);
            cell[k] = (uk.floor() as usize).min(self.dims[k] - 2);
        }
        cell
    }

    /// Trilinear value and gradient. Outside the span of voxel centers the
    /// point is clamped onto it and the distance to the clamped point is added
    /// to the (non-negative) clamped value, so far-away points read positive.
    pub fn query(&self, p: &Point3<f64>) -> SdfSample {
        let u = self.grid_coord(p);
        let mut uc = u;
        for k in 0..3 {
            uc[k] = u[k].clamp(0.0, (self.dims[k] - 1) as f64);
        }
        let (value, grad_u) = self.trilinear(&uc);
        let gradient = grad_u / self.voxel_size;
        if uc == u {
            return SdfSample {
                value,
                gradient,
                clamped: false,
            };
        }
        let offset = (u - uc) * self.voxel_size;
        let dist = offset.norm();
        let bb = self.spec().aabb();
        SdfSample {
            value: value.max(0.0) + dist,
            gradient: offset / dist,
            clamped: bb.distance_squared(p) > 0.0,
        }
    }

    fn trilinear(&self, u: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut i0 = [0usize; 3];
        let mut t = [0.0; 3];
        for k in 0..3 {
            i0[k] = (u[k].floor() as usize).min(self.dims[k] - 2);
            t[k] = u[k] - i0[k] as f64;
        }
        let c = |di: usize, dj: usize, dk: usize| self.value_at(i0[0] + di, i0[1] + dj, i0[2] + dk);
        let (c000, c100, c010, c110) = (c(0, 0, 0), c(1, 0, 0), c(0, 1, 0), c(1, 1, 0));
        let (c001, c101, c011, c111) = (c(0, 0, 1), c(1, 0, 1), c(0, 1, 1), c(1, 1, 1));
        let [tx, ty, tz] = t;

        let c00 = c000 + (c100 - c000) * tx;
        let c10 = c010 + (c110 - c010) * tx;
        let c01 = c001 + (c101 - c001) * tx;
        let c11 = c011 + (c111 - c011) * tx;
        let c0 = c00 + (c10 - c00) * ty;
        let c1 = c01 + (c11 - c01) * ty;
        let value = c0 + (c1 - c0) * tz;

        let dx0 = (c100 - c000) + (c110 - c010 - c100 + c000) * ty;
        let dx1 = (c101 - c001) + (c111 - c011 - c101 + c001) * ty;
        let dx = dx0 + (dx1 - dx0) * tz;
        let dy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * tz;
        let dz = c1 - c0;
        (value, Vector3::new(dx, dy, dz))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(SDF_MAGIC)?;
        w.write_all(&SDF_VERSION.to_le_bytes())?;
        for k in 0..3 {
            w.write_all(&self.origin[k].to_le_bytes())?;
        }
        w.write_all(&self.voxel_size.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read) -> Result<SdfGrid> {
        let bad = |m: &str| Error::Invalid(format!("SDF sidecar: {m}"));
        let io = |e: std::io::Error| bad(&e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != SDF_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != SDF_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut origin = Point3::origin();
        for k in 0..3 {
            r.read_exact(&mut b8).map_err(io)?;
            origin[k] = f64::from_le_bytes(b8);
        }
        r.read_exact(&mut b8).map_err(io)?;
        let voxel_size = f64::from_le_bytes(b8);
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b4).map_err(io)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        if dims.iter().any(|&d| d < 2) || !(voxel_size > 0.0) {
            return Err(bad("invalid dimensions"));
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw).map_err(io)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(SdfGrid {
            origin,
            voxel_size,
            dims,
            values,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SdfGrid> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        SdfGrid::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample_surface, shapes, winding_number};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn sphere_grid() -> &'static (TriMesh, SdfGrid) {
        static GRID: OnceLock<(TriMesh, SdfGrid)> = OnceLock::new();
        GRID.get_or_init(|| {
            let mesh = shapes::icosphere(2.0, 3);
            let grid = build_sdf(&mesh, 64).unwrap();
            (mesh, grid)
        })
    }

    #[test]
    fn matches_analytic_sphere() {
        let (_, grid) = sphere_grid();
        assert!(grid.dims.iter().all(|&d| d >= 8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Stay within the padded grid box; the far-field rule is tested separately.
        let r = grid.spec().aabb().max.x - 0.01;
        for _ in 0..100 {
            let p = Point3::new(
                rng.random_range(-r..r),
                rng.random_range(-r..r),
                rng.random_range(-r..r),
            );
            let s = grid.query(&p);
            let exact = p.coords.norm() - 2.0;
            assert!((s.value - exact).abs() < 1.5 * grid.voxel_size, "{p:?}: {} vs {exact}", s.value);
        }
        let center = grid.query(&Point3::origin());
        assert!((center.value + 2.0).abs() < 1.5 * grid.voxel_size);
    }

    #[test]
    fn surface_is_zero_set() {
        let (mesh, grid) = sphere_grid();
        let samples = sample_surface(mesh, 200, 4).unwrap();
        for p in &samples.points {
            assert!(grid.query(p).value.abs() < grid.voxel_size);
        }
    }

    #[test]
    fn voxel_center_identity() {
        let (_, grid) = sphere_grid();
        for &(i, j, k) in &[(3, 4, 5), (10, 20, 30), (31, 31, 31)] {
            let c = grid.spec().center(i, j, k);
            assert_eq!(grid.query(&c).value, grid.value_at(i, j, k));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (_, grid) = sphere_grid();
        let h = 0.25 * grid.voxel_size;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 50 {
            let p = Point3::new(
                rng.random_range(-2.1..2.1),
                rng.random_range(-2.1..2.1),
                rng.random_range(-2.1..2.1),
            );
            // Stay at least h away from every cell face so the stencil
            // remains inside one trilinear cell.
            let u = grid.grid_coord(&p);
            if (0..3).any(|k| {
                let f = u[k] - u[k].floor();
                !(0.26..=0.74).contains(&f)
            }) {
                continue;
            }
            let g = grid.query(&p).gradient;
            let mut fd = Vector3::zeros();
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = h;
                fd[k] = (grid.query(&(p + e)).value - grid.query(&(p - e)).value) / (2.0 * h);
            }
            let rel = (g - fd).norm() / fd.norm().max(1e-12);
            assert!(rel < 1e-3, "rel error {rel}");
            // Loose eikonal sanity.
            assert!(g.norm() <= 1.1);
            checked += 1;
        }
    }

    #[test]
    fn open_cylinder_is_rejected() {
        let open = shapes::open_cylinder(1.0, 3.0, 16, 3);
        match build_sdf(&open, 32) {
            Err(Error::NotWatertight { open_edges }) => assert!(open_edges > 0),
            other => panic!("expected watertight error, got {other:?}"),
        }
    }

    #[test]
    fn resolution_bounds() {
        let m = shapes::icosphere(1.0, 1);
        assert!(build_sdf(&m, 8).is_err());
        assert!(build_sdf(&m, 1024).is_err());
    }

    #[test]
    fn sign_flips_once_along_a_ray() {
        let (_, grid) = sphere_grid();
        let mut flips = 0;
        let mut prev = grid.query(&Point3::new(-5.0, 0.1, 0.05)).value;
        for s in 1..=500 {
            let x = -5.0 + 5.0 * s as f64 / 500.0;
            let v = grid.query(&Point3::new(x, 0.1, 0.05)).value;
            if (v < 0.0) != (prev < 0.0) {
                flips += 1;
            }
            prev = v;
        }
        assert_eq!(flips, 1);
    }

    #[test]
    fn far_points_read_positive() {
        let (_, grid) = sphere_grid();
        let s = grid.query(&Point3::new(50.0, 0.0, 0.0));
        assert!(s.clamped);
        assert!(s.value > 40.0);
        assert!((s.gradient - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn agrees_with_solid_angle_inside_test() {
        let mesh = shapes::bent_tube();
        let grid = build_sdf(&mesh, 24).unwrap();
        let spec = grid.spec();
        let mut disagree = 0;
        for idx in 0..spec.len() {
            let [i, j, k] = spec.coords_of(idx);
            let inside = winding_number(&mesh, &spec.center(i, j, k)) > 0.5;
            if (grid.value_at(i, j, k) < 0.0) != inside {
                disagree += 1;
            }
        }
        assert!((disagree as f64) <= 0.001 * spec.len() as f64, "{disagree}");
    }

    #[test]
    fn sidecar_round_trip_and_layout() {
        let (_, grid) = sphere_grid();
        let mut buf = Vec::new();
        grid.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"GSDF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        let header = 4 + 4 + 24 + 8 + 12;
        assert_eq!(buf.len(), header + 4 * grid.values.len());
        let first = f32::from_le_bytes(buf[header..header + 4].try_into().unwrap());
        assert_eq!(first, grid.values[0]);
        let back = SdfGrid::read_from(buf.as_slice()).unwrap();
        assert_eq!(&back, grid);
        assert!(SdfGrid::read_from(&b"XXXX"[..]).is_err());
    }
}
