//! Procedural closed meshes used as fixtures and as building blocks for the
//! template hand.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Point3, Rotation3, Unit, Vector3};

use super::TriMesh;

/// One cross-section ring of a swept solid: an ellipse with semi-axes `rx`
/// along `u` and `ry` along `v`. A ring with zero radii collapses to a point.
#[derive(Debug, Clone, Copy)]
pub struct Ring {
    pub center: Point3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub rx: f64,
    pub ry: f64,
}

impl Ring {
    fn is_point(&self) -> bool {
        self.rx == 0.0 && self.ry == 0.0
    }
}

/// Closed mesh swept through `rings` (ordered along the sweep direction
/// `u × v`). Zero-radius end rings become apex vertices; other ends are
/// capped with a fan.
pub fn sweep(rings: &[Ring], segments: usize) -> TriMesh {
    assert!(rings.len() >= 2 && segments >= 3);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut ring_start = Vec::with_capacity(rings.len());
    for r in rings {
        ring_start.push(vertices.len());
        if r.is_point() {
            vertices.push(r.center);
        } else {
            for s in 0..segments {
                let a = TAU * s as f64 / segments as f64;
                vertices.push(r.center + r.u * (r.rx * a.cos()) + r.v * (r.ry * a.sin()));
            }
        }
    }
    let idx = |ring: usize, s: usize| -> usize {
        if rings[ring].is_point() {
            ring_start[ring]
        } else {
            ring_start[ring] + s % segments
        }
    };
    let mut faces = Vec::new();
    for i in 0..rings.len() - 1 {
        for s in 0..segments {
            let (a, b) = (idx(i, s), idx(i, s + 1));
            let (c, d) = (idx(i + 1, s + 1), idx(i + 1, s));
            if a != b {
                faces.push([a, b, c]);
            }
            if c != d {
                faces.push([a, c, d]);
            }
        }
    }
    let first = rings[0];
    if !first.is_point() {
        let center = vertices.len();
        vertices.push(first.center);
        for s in 0..segments {
            faces.push([center, idx(0, s + 1), idx(0, s)]);
        }
    }
    let last_i = rings.len() - 1;
    if !rings[last_i].is_point() {
        let center = vertices.len();
        vertices.push(rings[last_i].center);
        for s in 0..segments {
            faces.push([center, idx(last_i, s), idx(last_i, s + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("sweep produces a valid mesh")
}

/// Rings along a polyline path with rotation-minimizing ring frames. The
/// initial `u` axis is the projection of `reference` onto the first normal
/// plane.
pub fn rings_along(
    path: &[Point3<f64>],
    reference: Vector3<f64>,
    radii: impl Fn(usize) -> (f64, f64),
) -> Vec<Ring> {
    let n = path.len();
    let tangents: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let prev = if i > 0 { (path[i] - path[i - 1]).normalize() } else { Vector3::zeros() };
            let next = if i + 1 < n { (path[i + 1] - path[i]).normalize() } else { Vector3::zeros() };
            (prev + next).normalize()
        })
        .collect();
    let mut u = (reference - tangents[0] * reference.dot(&tangents[0])).normalize();
    let mut rings = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            if let Some(rot) = Rotation3::rotation_between(&tangents[i - 1], &tangents[i]) {
                u = rot * u;
            }
            u = (u - tangents[i] * u.dot(&tangents[i])).normalize();
        }
        let v = tangents[i].cross(&u);
        let (rx, ry) = radii(i);
        rings.push(Ring {
            center: path[i],
            u,
            v,
            rx,
            ry,
        });
    }
    rings
}

fn straight_path(from: Point3<f64>, to: Point3<f64>, rings: usize) -> Vec<Point3<f64>> {
    (0..=rings)
        .map(|i| from + (to - from) * (i as f64 / rings as f64))
        .collect()
}

/// Capped cylinder along +z from `z = 0` to `z = height`.
pub fn cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    cylinder_between(
        Point3::origin(),
        Point3::new(0.0, 0.0, height),
        radius,
        segments,
        rings,
    )
}

/// Capped cylinder with its axis from `a` to `b`.
pub fn cylinder_between(a: Point3<f64>, b: Point3<f64>, radius: f64, segments: usize, rings: usize) -> TriMesh {
    let path = straight_path(a, b, rings);
    let axis = (b - a).normalize();
    sweep(&rings_along(&path, least_aligned_axis(&axis), |_| (radius, radius)), segments)
}

/// Cylinder side wall without caps (not watertight).
pub fn open_cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    let mut vertices = Vec::new();
    for i in 0..=rings {
        let z = height * i as f64 / rings as f64;
        for s in 0..segments {
            let a = TAU * s as f64 / segments as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let mut faces = Vec::new();
    for i in 0..rings {
        for s in 0..segments {
            let a = i * segments + s;
            let b = i * segments + (s + 1) % segments;
            let c = (i + 1) * segments + (s + 1) % segments;
            let d = (i + 1) * segments + s;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, faces).expect("valid open cylinder")
}

/// Cone with its apex at the origin widening along +z to `base_radius` at
/// `z = height`, capped at the base.
pub fn cone(base_radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    let path = straight_path(Point3::origin(), Point3::new(0.0, 0.0, height), rings);
    sweep(
        &rings_along(&path, Vector3::x(), |i| {
            let r = base_radius * i as f64 / rings as f64;
            (r, r)
        }),
        segments,
    )
}

/// Centerline of [`bent_tube`]: a quarter circle of radius 5 cm from the
/// origin (heading +z) to (5, 0, 5) (heading +x).
pub fn bent_tube_path(points: usize) -> Vec<Point3<f64>> {
    (0..points)
        .map(|i| {
            let t = FRAC_PI_2 * i as f64 / (points - 1) as f64;
            Point3::new(5.0 - 5.0 * t.cos(), 0.0, 5.0 * t.sin())
        })
        .collect()
}

/// Tube of radius 1 cm bent through 90 degrees.
pub fn bent_tube() -> TriMesh {
    sweep(&rings_along(&bent_tube_path(49), Vector3::y(), |_| (1.0, 1.0)), 48)
}

/// Centerline of [`tapered_handle`]: +z from the origin, 12 cm long.
pub fn tapered_handle_path(points: usize) -> Vec<Point3<f64>> {
    straight_path(Point3::origin(), Point3::new(0.0, 0.0, 12.0), points - 1)
}

/// Cross-section semi-axes of [`tapered_handle`] at fractional length `t`.
pub fn tapered_handle_radii(t: f64) -> (f64, f64) {
    let r = 1.4 - 0.5 * t + 0.25 * (PI * t).sin();
    (r, 0.75 * r)
}

/// A 12 cm handle that tapers, bulges in the middle and has an elliptical
/// (non-circular) cross-section.
pub fn tapered_handle() -> TriMesh {
    let rings = 48;
    sweep(
        &rings_along(&tapered_handle_path(rings + 1), Vector3::x(), |i| {
            tapered_handle_radii(i as f64 / rings as f64)
        }),
        48,
    )
}

/// Capsule (cylinder with hemispherical ends) whose axis runs from `a` to `b`.
pub fn capsule(a: Point3<f64>, b: Point3<f64>, radius: f64, segments: usize, cap_rings: usize) -> TriMesh {
    let axis = (b - a).normalize();
    let mut path = Vec::new();
    let mut radii = Vec::new();
    for k in 0..=cap_rings {
        let theta = FRAC_PI_2 * k as f64 / cap_rings as f64;
        path.push(a - axis * (radius * theta.cos()));
        radii.push(radius * theta.sin());
    }
    for k in (0..=cap_rings).rev() {
        let theta = FRAC_PI_2 * k as f64 / cap_rings as f64;
        path.push(b + axis * (radius * theta.cos()));
        radii.push(radius * theta.sin());
    }
    let u = least_aligned_axis(&axis);
    let u = (u - axis * u.dot(&axis)).normalize();
    let v = axis.cross(&u);
    let rings: Vec<Ring> = path
        .iter()
        .zip(&radii)
        .map(|(&center, &r)| Ring {
            center,
            u,
            v,
            rx: r,
            ry: r,
        })
        .collect();
    sweep(&rings, segments)
}

/// Axis-aligned box with the given full extents, centered at the origin.
pub fn box_mesh(extents: Vector3<f64>) -> TriMesh {
    let h = extents / 2.0;
    let vertices: Vec<Point3<f64>> = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    TriMesh::new(vertices, faces).expect("valid box")
}

/// Geodesic sphere from a subdivided icosahedron.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| Point3::from(v * radius)).collect();
    TriMesh::new(vertices, faces).expect("valid icosphere")
}

/// Global axis least aligned with `dir`.
pub fn least_aligned_axis(dir: &Vector3<f64>) -> Vector3<f64> {
    let a = dir.abs();
    if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    }
}

/// Rotation by `angle` about `axis`.
pub fn rotation(axis: Vector3<f64>, angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle)
}
