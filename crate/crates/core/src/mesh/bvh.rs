//! Bounding volume hierarchy for exact nearest-triangle queries.

use nalgebra::{Point3, Vector3};

use super::{Aabb, TriMesh};

const LEAF_SIZE: usize = 4;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub point: Point3<f64>,
    pub distance: f64,
    pub face: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Median-split BVH over the triangles of a mesh. Triangle corners are copied
/// into leaf order so queries do not chase indices.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    triangles: Vec<[Point3<f64>; 3]>,
    face_ids: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Bvh {
        let n = mesh.faces().len();
        let mut order: Vec<usize> = (0..n).collect();
        let centroids: Vec<Point3<f64>> = (0..n)
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let boxes: Vec<Aabb> = (0..n).map(|f| Aabb::from_points(&mesh.triangle(f))).collect();

        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        build_recursive(&mut nodes, &mut order, 0, &centroids, &boxes);

        let triangles = order.iter().map(|&f| mesh.triangle(f)).collect();
        Bvh {
            nodes,
            triangles,
            face_ids: order,
        }
    }

    /// Closest surface point to `query`. `bound` is an upper bound on the
    /// answer's distance that can be used to prune (pass infinity if unknown);
    /// the result is exact as long as the bound is valid.
    pub fn closest(&self, query: &Point3<f64>, bound: f64) -> ClosestHit {
        let mut best_d2 = if bound.is_finite() {
            // Slightly inflated so a tight bound cannot prune the true answer.
            (bound * (1.0 + 1e-9) + 1e-12).powi(2)
        } else {
            f64::INFINITY
        };
        let mut best: Option<(Point3<f64>, usize)> = None;
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            match &self.nodes[ni] {
                Node::Leaf { bounds, start, end } => {
                    if bounds.distance_squared(query) > best_d2 {
                        continue;
                    }
                    for i in *start..*end {
                        let [a, b, c] = &self.triangles[i];
                        let p = closest_point_on_triangle(query, a, b, c);
                        let d2 = (p - query).norm_squared();
                        if d2 < best_d2 || best.is_none() && d2 <= best_d2 {
                            best_d2 = d2;
                            best = Some((p, i));
                        }
                    }
                }
                Node::Inner { bounds, left, right } => {
                    if bounds.distance_squared(query) > best_d2 {
                        continue;
                    }
                    let dl = self.nodes[*left].bounds().distance_squared(query);
                    let dr = self.nodes[*right].bounds().distance_squared(query);
                    // Push the far child first so the near one is visited first.
                    if dl < dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        match best {
            Some((point, i)) => ClosestHit {
                point,
                distance: best_d2.sqrt(),
                face: self.face_ids[i],
            },
            // The supplied bound was wrong; fall back to an unbounded search.
            None => self.closest(query, f64::INFINITY),
        }
    }
}

fn build_recursive(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    offset: usize,
    centroids: &[Point3<f64>],
    boxes: &[Aabb],
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &f in order.iter() {
        bounds = bounds.union(&boxes[f]);
        cbounds.grow(&centroids[f]);
    }
    let index = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start: offset,
            end: offset + order.len(),
        });
        return index;
    }
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    // Placeholder, patched once children exist.
    nodes.push(Node::Leaf {
        bounds,
        start: 0,
        end: 0,
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_recursive(nodes, lo, offset, centroids, boxes);
    let right = build_recursive(nodes, hi, offset + mid, centroids, boxes);
    nodes[index] = Node::Inner { bounds, left, right };
    index
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab: Vector3<f64> = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mesh: &TriMesh, q: &Point3<f64>) -> f64 {
        (0..mesh.faces().len())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                (closest_point_on_triangle(q, &a, &b, &c) - q).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_brute_force() {
        let mesh = shapes::tapered_handle();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let q = Point3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-3.0..14.0),
            );
            let hit = mesh.closest_point(&q);
            assert!((hit.distance - brute_force(&mesh, &q)).abs() < 1e-12);
            assert!((hit.distance - (hit.point - q).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn tight_bound_is_still_exact() {
        let mesh = shapes::icosphere(1.0, 2);
        let q = Point3::new(0.3, 1.7, -0.2);
        let exact = mesh.closest_point(&q);
        let bounded = mesh.bvh().closest(&q, exact.distance);
        assert_eq!(exact.face, bounded.face);
        // An underestimated bound falls back to the full search.
        let wrong = mesh.bvh().closest(&q, exact.distance * 0.5);
        assert!((wrong.distance - exact.distance).abs() < 1e-12);
    }

    #[test]
    fn triangle_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let cp = |p: Point3<f64>| closest_point_on_triangle(&p, &a, &b, &c);
        assert_eq!(cp(Point3::new(-1.0, -1.0, 0.0)), a);
        assert_eq!(cp(Point3::new(2.0, -0.5, 0.0)), b);
        assert_eq!(cp(Point3::new(0.25, 0.25, 3.0)), Point3::new(0.25, 0.25, 0.0));
        assert!((cp(Point3::new(1.0, 1.0, 0.0)) - Point3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }
}
