use nalgebra::{Point3, Vector3};

use super::{inside_on_grid, Aabb, TriMesh};
use crate::error::Result;

/// Regular grid of cubic voxels. Voxel `(i, j, k)` has its center at
/// `origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size`; flat indices are
/// x-fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Minimum corner of the grid.
    pub origin: Point3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Grid whose longest axis spans `bb` with `resolution` voxels, other
    /// axes proportional (at least one voxel), plus `pad` voxels on each side.
    /// The grid is centered on the box.
    pub fn covering(bb: &Aabb, resolution: usize, pad: usize) -> GridSpec {
        let ext = bb.extent();
        let longest = ext.max().max(1e-12);
        let voxel_size = longest / resolution.max(1) as f64;
        let mut dims = [0; 3];
        for k in 0..3 {
            let cells = (ext[k] / voxel_size - 1e-9).ceil().max(1.0) as usize;
            dims[k] = cells + 2 * pad;
        }
        let span = Vector3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * voxel_size;
        GridSpec {
            origin: bb.center() - span / 2.0,
            voxel_size,
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords_of(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin
            + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    pub fn center_of(&self, idx: usize) -> Point3<f64> {
        let [i, j, k] = self.coords_of(idx);
        self.center(i, j, k)
    }

    pub fn aabb(&self) -> Aabb {
        let span = Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
            * self.voxel_size;
        Aabb {
            min: self.origin,
            max: self.origin + span,
        }
    }

    pub fn voxel_volume(&self) -> f64 {
        self.voxel_size.powi(3)
    }
}

/// Boolean voxelization: a voxel is occupied iff its center is inside.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&b| b).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.spec.voxel_volume()
    }

    /// Number of voxels occupied in both grids (which must share a spec).
    pub fn intersection_count(&self, other: &OccupancyGrid) -> usize {
        assert_eq!(self.spec, other.spec, "occupancy grids must share a grid");
        self.occupied
            .iter()
            .zip(&other.occupied)
            .filter(|(a, b)| **a && **b)
            .count()
    }
}

/// Voxelizes a watertight mesh over its own bounding box, `resolution`
/// voxels along the longest axis.
pub fn voxelize_occupancy(mesh: &TriMesh, resolution: usize) -> Result<OccupancyGrid> {
    let spec = GridSpec::covering(&mesh.aabb(), resolution, 0);
    voxelize_on_grid(mesh, &spec)
}

pub fn voxelize_on_grid(mesh: &TriMesh, spec: &GridSpec) -> Result<OccupancyGrid> {
    mesh.require_watertight()?;
    Ok(OccupancyGrid {
        spec: *spec,
        occupied: inside_on_grid(mesh, spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use std::f64::consts::PI;

    #[test]
    fn cube_volume() {
        let cube = shapes::box_mesh(Vector3::new(2.0, 2.0, 2.0));
        let occ = voxelize_occupancy(&cube, 8).unwrap();
        let shell = cube.surface_area() * occ.spec.voxel_size;
        assert!((occ.volume() - 8.0).abs() <= shell);
    }

    #[test]
    fn thin_box_does_not_crash() {
        let slab = shapes::box_mesh(Vector3::new(2.0, 2.0, 1e-3));
        let occ = voxelize_occupancy(&slab, 8).unwrap();
        assert_eq!(occ.spec.dims[2], 1);
        // At most a single voxel layer can register.
        assert!(occ.volume() <= 4.0 * occ.spec.voxel_size + 1e-12);
    }

    #[test]
    fn sphere_volume_at_default_resolution() {
        let sphere = shapes::icosphere(1.0, 4);
        let occ = voxelize_occupancy(&sphere, 128).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((occ.volume() - exact).abs() / exact < 0.02, "{}", occ.volume());
    }

    #[test]
    fn open_mesh_rejected() {
        assert!(voxelize_occupancy(&shapes::open_cylinder(1.0, 2.0, 12, 2), 16).is_err());
    }

    #[test]
    fn proportional_dims() {
        let bb = Aabb {
            min: Point3::new(0.0, 0.0, 0.0),
            max: Point3::new(4.0, 2.0, 1.0),
        };
        let g = GridSpec::covering(&bb, 16, 2);
        assert_eq!(g.dims, [20, 12, 8]);
        assert!((g.voxel_size - 0.25).abs() < 1e-15);
        let idx = g.index(3, 4, 5);
        assert_eq!(g.coords_of(idx), [3, 4, 5]);
    }
}
