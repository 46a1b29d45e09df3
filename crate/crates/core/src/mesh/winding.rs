//! Inside/outside classification by generalized winding number.
//!
//! Two routes compute the same quantity. [`winding_number`] sums signed solid
//! angles and works for a single arbitrary point. [`inside_on_grid`] classifies
//! every voxel center of a grid at once by accumulating signed surface
//! crossings along +x scanlines; on a closed mesh the accumulated count is the
//! winding number itself, so both routes threshold the same function at 0.5.

use std::f64::consts::PI;

use nalgebra::Point3;

use super::{GridSpec, TriMesh};

/// Generalized winding number of `mesh` about `p` (1 inside, 0 outside for
/// closed outward-oriented meshes).
pub fn winding_number(mesh: &TriMesh, p: &Point3<f64>) -> f64 {
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let (a, b, c) = (a - p, b - p, c - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let numerator = a.dot(&b.cross(&c));
        let denominator = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
        total += 2.0 * numerator.atan2(denominator);
    }
    total / (4.0 * PI)
}

/// 2D orientation of `q` against the segment `a -> b`, computed from a
/// canonical endpoint order so the two triangles sharing an edge get exactly
/// negated values.
fn edge_function(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> f64 {
    let swap = (b[0], b[1]) < (a[0], a[1]);
    let (lo, hi) = if swap { (b, a) } else { (a, b) };
    let e = (hi[0] - lo[0]) * (q[1] - lo[1]) - (hi[1] - lo[1]) * (q[0] - lo[0]);
    if swap {
        -e
    } else {
        e
    }
}

/// Tie-break for points exactly on an edge of a counterclockwise triangle:
/// the edge owns them iff its direction is lexicographically positive. This
/// equals an infinitesimal perturbation of the query, so shared edges and
/// vertices are counted exactly once.
fn owns_boundary(a: [f64; 2], b: [f64; 2]) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    d[0] > 0.0 || (d[0] == 0.0 && d[1] > 0.0)
}

/// Classifies every voxel center of `grid` as inside (`true`) or outside.
/// Output is x-fastest: index `i + nx * (j + ny * k)`.
pub fn inside_on_grid(mesh: &TriMesh, grid: &GridSpec) -> Vec<bool> {
    let [nx, ny, nz] = grid.dims;
    let v = grid.voxel_size;
    let mut crossings: Vec<Vec<(f64, i32)>> = vec![Vec::new(); ny * nz];

    let col_range = |lo: f64, hi: f64, origin: f64, n: usize| -> (usize, usize) {
        // Columns whose centers origin + (j + 0.5) v fall in [lo, hi].
        let first = ((lo - origin) / v - 0.5).ceil().max(0.0);
        let last = ((hi - origin) / v - 0.5).floor().min(n as f64 - 1.0);
        if last < first {
            (1, 0)
        } else {
            (first as usize, last as usize)
        }
    };

    for f in 0..mesh.faces().len() {
        let tri = mesh.triangle(f);
        let mut p2 = [[tri[0].y, tri[0].z], [tri[1].y, tri[1].z], [tri[2].y, tri[2].z]];
        let mut px = [tri[0].x, tri[1].x, tri[2].x];
        let area2 = (p2[1][0] - p2[0][0]) * (p2[2][1] - p2[0][1])
            - (p2[1][1] - p2[0][1]) * (p2[2][0] - p2[0][0]);
        if area2 == 0.0 {
            continue;
        }
        // Positive projected area means the face normal has +x component:
        // the scanline leaves the solid here.
        let delta = if area2 > 0.0 { -1 } else { 1 };
        if area2 < 0.0 {
            p2.swap(1, 2);
            px.swap(1, 2);
        }
        let ymin = p2[0][0].min(p2[1][0]).min(p2[2][0]);
        let ymax = p2[0][0].max(p2[1][0]).max(p2[2][0]);
        let zmin = p2[0][1].min(p2[1][1]).min(p2[2][1]);
        let zmax = p2[0][1].max(p2[1][1]).max(p2[2][1]);
        let (j0, j1) = col_range(ymin, ymax, grid.origin.y, ny);
        let (k0, k1) = col_range(zmin, zmax, grid.origin.z, nz);
        if j0 > j1 || k0 > k1 {
            continue;
        }
        for k in k0..=k1 {
            let zc = grid.origin.z + (k as f64 + 0.5) * v;
            for j in j0..=j1 {
                let yc = grid.origin.y + (j as f64 + 0.5) * v;
                let q = [yc, zc];
                let mut w = [0.0; 3];
                let mut inside = true;
                for e in 0..3 {
                    let (a, b) = (p2[(e + 1) % 3], p2[(e + 2) % 3]);
                    let val = edge_function(a, b, q);
                    if val < 0.0 || (val == 0.0 && !owns_boundary(a, b)) {
                        inside = false;
                        break;
                    }
                    w[e] = val;
                }
                if !inside {
                    continue;
                }
                let sum = w[0] + w[1] + w[2];
                let x = if sum > 0.0 {
                    (w[0] * px[0] + w[1] * px[1] + w[2] * px[2]) / sum
                } else {
                    px[0]
                };
                crossings[j + ny * k].push((x, delta));
            }
        }
    }

    let mut inside = vec![false; nx * ny * nz];
    for (col, list) in crossings.iter_mut().enumerate() {
        if list.is_empty() {
            continue;
        }
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut winding = 0i32;
        let mut next = 0;
        for i in 0..nx {
            let xc = grid.origin.x + (i as f64 + 0.5) * v;
            while next < list.len() && list[next].0 < xc {
                winding += list[next].1;
                next += 1;
            }
            if winding > 0 {
                inside[i + nx * col] = true;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::Vector3;

    #[test]
    fn solid_angle_route_inside_outside() {
        let sphere = shapes::icosphere(1.0, 2);
        assert!((winding_number(&sphere, &Point3::origin()) - 1.0).abs() < 1e-9);
        assert!(winding_number(&sphere, &Point3::new(2.0, 0.3, 0.1)).abs() < 1e-9);
    }

    #[test]
    fn scanline_matches_solid_angle_route() {
        // Cube corners and edges land exactly on voxel-center lines here,
        // which exercises the shared-edge tie-breaking.
        let cube = shapes::box_mesh(Vector3::new(2.0, 2.0, 2.0));
        let grid = GridSpec {
            origin: Point3::new(-1.5, -1.5, -1.5),
            voxel_size: 0.25,
            dims: [12, 12, 12],
        };
        let fast = inside_on_grid(&cube, &grid);
        let mut mismatches = 0;
        for (idx, &flag) in fast.iter().enumerate() {
            let c = grid.center_of(idx);
            let slow = winding_number(&cube, &c) > 0.5;
            if slow != flag {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
        assert_eq!(fast.iter().filter(|&&b| b).count(), 8 * 8 * 8);
    }

    #[test]
    fn scanline_on_curved_solid() {
        let tube = shapes::bent_tube();
        let bb = tube.aabb();
        let grid = GridSpec::covering(&bb, 24, 1);
        let fast = inside_on_grid(&tube, &grid);
        for (idx, &flag) in fast.iter().enumerate() {
            let c = grid.center_of(idx);
            let w = winding_number(&tube, &c);
            // Skip centers numerically on the surface.
            if (w - 0.5).abs() < 0.45 {
                continue;
            }
            assert_eq!(flag, w > 0.5, "voxel {idx} winding {w}");
        }
    }
}
