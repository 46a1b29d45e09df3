use std::f64::consts::TAU;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::frame::{frames_at, Frame};
use super::section::{self, AbstractionParams, Loop2};
use super::slice::slice_mesh;
use super::Skeleton;
use crate::error::{Error, Result};
use crate::mesh::{Aabb, TriMesh};

pub const GC_SCHEMA: &str = "gcgrasp.gc";
pub const GC_VERSION: u32 = 1;

/// Heights in the precomputed surface-distance table.
pub const TABLE_HEIGHTS: usize = 256;
/// Chord steps per table interval.
const TABLE_SUBSTEPS: usize = 2;
/// Finest step of [`GeneralizedCylinder::surface_distance`] as a fraction of `H`.
const DISTANCE_STEPS: f64 = 256.0;
/// Inward offsets (fractions of `H`) tried when a section plane misses.
const NUDGES: [f64; 3] = [1e-4, 1e-3, 1e-2];
/// Ray-to-skeleton gap, relative to the local mean radius, beyond which
/// projection falls back to the nearest skeleton point.
const FALLBACK_GAP: f64 = 0.25;
/// Normals this aligned with the skeleton tangent at their own section
/// (end caps) make the ray projection ill-conditioned; those also fall back.
const FALLBACK_ALIGNMENT: f64 = 0.9;
const ROOT_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcParams {
    /// Number of cross-sections.
    pub n: usize,
    /// Points per cross-section loop.
    pub m: usize,
    pub smoothing_weight: f64,
    pub concavity_threshold: f64,
    /// Seed for the first section's x-axis; defaults to the global axis
    /// least aligned with the first tangent.
    pub reference_direction: Option<[f64; 3]>,
}

impl Default for GcParams {
    fn default() -> Self {
        let a = AbstractionParams::default();
        GcParams {
            n: 30,
            m: 64,
            smoothing_weight: a.smoothing_weight,
            concavity_threshold: a.concavity_threshold,
            reference_direction: None,
        }
    }
}

impl GcParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 3 {
            problems.push(format!("gc.n must be at least 3 (got {})", self.n));
        }
        if self.m < 8 {
            problems.push(format!("gc.m must be at least 8 (got {})", self.m));
        }
        if !(0.0..=1.0).contains(&self.smoothing_weight) {
            problems.push(format!("gc.smoothing_weight must lie in [0, 1] (got {})", self.smoothing_weight));
        }
        if !(self.concavity_threshold > 0.0) {
            problems.push(format!(
                "gc.concavity_threshold must be positive (got {})",
                self.concavity_threshold
            ));
        }
        if let Some(r) = self.reference_direction {
            if !r.iter().all(|c| c.is_finite()) || Vector3::from(r).norm() < 1e-9 {
                problems.push("gc.reference_direction must be a finite non-zero vector".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn abstraction(&self) -> AbstractionParams {
        AbstractionParams {
            smoothing_weight: self.smoothing_weight,
            concavity_threshold: self.concavity_threshold,
            dense_points: (4 * self.m).max(AbstractionParams::default().dense_points),
        }
    }
}

/// Polar surface coordinates on a generalized cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcCoordinate {
    pub h: f64,
    pub phi: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameterization {
    pub coord: GcCoordinate,
    /// The normal ray missed the skeleton and the nearest skeleton point was
    /// used instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightLookup {
    pub h: f64,
    /// The requested distance exceeded the surface length at this angle.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub h: f64,
    pub center: Point3<f64>,
    pub frame: Frame,
    /// Counterclockwise loop in frame coordinates about `center`.
    pub loop2: Loop2,
    pub mean_radius: f64,
    /// Loop points sorted by polar angle, when the loop is star-shaped about
    /// its center.
    angular: Option<Vec<(f64, Point2<f64>)>>,
}

impl CrossSection {
    pub(super) fn new(h: f64, center: Point3<f64>, frame: Frame, loop2: Loop2) -> CrossSection {
        let mean_radius = loop2.iter().map(|p| p.coords.norm()).sum::<f64>() / loop2.len() as f64;
        let angular = angular_table(&loop2);
        CrossSection {
            h,
            center,
            frame,
            loop2,
            mean_radius,
            angular,
        }
    }

    pub fn is_star(&self) -> bool {
        self.angular.is_some()
    }

    pub fn to_world(&self, q: &Point2<f64>) -> Point3<f64> {
        self.center + self.frame.x * q.x + self.frame.y * q.y
    }

    pub fn points(&self) -> Vec<Point3<f64>> {
        self.loop2.iter().map(|q| self.to_world(q)).collect()
    }

    /// Loop point at polar angle `phi` (in `[0, 2π)`), in frame coordinates.
    pub fn point_at_angle(&self, phi: f64) -> Point2<f64> {
        match &self.angular {
            Some(table) => {
                let n = table.len();
                let j = table.partition_point(|e| e.0 <= phi);
                let (a, b) = if j == 0 {
                    let last = table[n - 1];
                    ((last.0 - TAU, last.1), table[0])
                } else if j == n {
                    let first = table[0];
                    (table[n - 1], (first.0 + TAU, first.1))
                } else {
                    (table[j - 1], table[j])
                };
                let span = b.0 - a.0;
                let t = if span > 0.0 { (phi - a.0) / span } else { 0.0 };
                a.1 + (b.1 - a.1) * t
            }
            None => ray_hit(&self.loop2, phi),
        }
    }
}

fn polar_angle(q: &Point2<f64>) -> f64 {
    wrap_angle(q.y.atan2(q.x))
}

/// Wraps an angle into `[0, 2π)`, never returning `-0.0`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU || w == 0.0 {
        0.0
    } else {
        w
    }
}

/// Angle-sorted loop points if polar angles increase monotonically around
/// the loop (star-shaped about the origin).
fn angular_table(lp: &[Point2<f64>]) -> Option<Vec<(f64, Point2<f64>)>> {
    if lp.iter().any(|q| q.coords.norm() <= 1e-12) {
        return None;
    }
    let n = lp.len();
    let angles: Vec<f64> = lp.iter().map(polar_angle).collect();
    let k0 = (0..n).min_by(|&a, &b| angles[a].total_cmp(&angles[b]))?;
    let table: Vec<(f64, Point2<f64>)> = (0..n)
        .map(|j| {
            let k = (k0 + j) % n;
            (angles[k], lp[k])
        })
        .collect();
    if table.windows(2).all(|w| w[1].0 > w[0].0) {
        Some(table)
    } else {
        None
    }
}

/// Nearest-in-radius intersection of the ray at angle `phi` with the loop.
fn ray_hit(lp: &[Point2<f64>], phi: f64) -> Point2<f64> {
    match ray_crossing(lp, phi) {
        Some((p, _)) => p,
        None => *lp
            .iter()
            .min_by(|a, b| angle_gap(polar_angle(a), phi).total_cmp(&angle_gap(polar_angle(b), phi)))
            .unwrap(),
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

/// Nearest crossing of the ray at angle `phi` from the origin with the loop,
/// and the index of the edge it lies on.
fn ray_crossing(lp: &[Point2<f64>], phi: f64) -> Option<(Point2<f64>, usize)> {
    let d = nalgebra::Vector2::new(phi.cos(), phi.sin());
    let n = lp.len();
    let mut best: Option<(f64, Point2<f64>, usize)> = None;
    for i in 0..n {
        let (a, b) = (lp[i], lp[(i + 1) % n]);
        let e = b - a;
        let denom = d.x * e.y - d.y * e.x;
        if denom == 0.0 {
            continue;
        }
        // Solve r·d = a + s·e.
        let r = (a.x * e.y - a.y * e.x) / denom;
        let s = (a.x * d.y - a.y * d.x) / denom;
        if r > 0.0 && (0.0..=1.0).contains(&s) && best.is_none_or(|(br, _, _)| r < br) {
            best = Some((r, a + e * s, i));
        }
    }
    best.map(|(_, p, i)| (p, i))
}

/// The loop rotated to start where it crosses the positive x-axis.
fn start_on_x_axis(lp: &[Point2<f64>]) -> Loop2 {
    let Some((p0, i)) = ray_crossing(lp, 0.0) else {
        return lp.to_vec();
    };
    let n = lp.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(p0);
    for k in 1..=n {
        let q = lp[(i + k) % n];
        if (q - out[out.len() - 1]).norm() > 1e-12 && (k < n || (q - p0).norm() > 1e-12) {
            out.push(q);
        }
    }
    out
}

/// Notable events while building a cylinder; none are fatal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GcWarnings {
    /// Sections whose slice contained open contours that were closed.
    pub auto_closed: Vec<usize>,
    /// Sections that are not star-shaped about their center.
    pub non_star: Vec<usize>,
    /// Sections whose plane missed the mesh and was moved slightly inward.
    pub nudged: Vec<usize>,
}

/// Generalized cylinder: a skeleton with evenly spaced cross-section loops,
/// plus the surface-distance table used for inverse lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GcFile", into = "GcFile")]
pub struct GeneralizedCylinder {
    skeleton: Skeleton,
    params: GcParams,
    sections: Vec<CrossSection>,
    warnings: GcWarnings,
    /// `table[b * TABLE_HEIGHTS + j]`: surface distance at height
    /// `j·H/(TABLE_HEIGHTS−1)` along angle bucket `b·2π/M`.
    table: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GcFile {
    schema: String,
    version: u32,
    params: GcParams,
    skeleton: Skeleton,
    sections: Vec<SectionFile>,
    warnings: GcWarnings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SectionFile {
    h: f64,
    center: [f64; 3],
    frame: Frame,
    #[serde(rename = "loop")]
    loop2: Vec<[f64; 2]>,
}

impl From<GeneralizedCylinder> for GcFile {
    fn from(gc: GeneralizedCylinder) -> Self {
        GcFile {
            schema: GC_SCHEMA.into(),
            version: GC_VERSION,
            params: gc.params,
            skeleton: gc.skeleton,
            sections: gc
                .sections
                .into_iter()
                .map(|s| SectionFile {
                    h: s.h,
                    center: s.center.coords.into(),
                    frame: s.frame,
                    loop2: s.loop2.iter().map(|q| [q.x, q.y]).collect(),
                })
                .collect(),
            warnings: gc.warnings,
        }
    }
}

impl TryFrom<GcFile> for GeneralizedCylinder {
    type Error = Error;

    fn try_from(f: GcFile) -> Result<Self> {
        if f.schema != GC_SCHEMA || f.version != GC_VERSION {
            return Err(Error::Invalid(format!(
                "expected {GC_SCHEMA} v{GC_VERSION}, found {} v{}",
                f.schema, f.version
            )));
        }
        f.params.validate()?;
        if f.sections.len() != f.params.n || f.sections.iter().any(|s| s.loop2.len() != f.params.m) {
            return Err(Error::Invalid("cylinder sections do not match n and m".into()));
        }
        let sections = f
            .sections
            .into_iter()
            .map(|s| {
                CrossSection::new(
                    s.h,
                    Point3::from(s.center),
                    s.frame,
                    s.loop2.iter().map(|q| Point2::new(q[0], q[1])).collect(),
                )
            })
            .collect();
        Ok(GeneralizedCylinder::assemble(f.skeleton, f.params, sections, f.warnings))
    }
}

/// Builds the cylinder of `mesh` around `skeleton`: `n` sections at heights
/// `i·H/(n−1)`, each the abstracted slice loop nearest the skeleton,
/// resampled to `m` points and carried by rotation-minimizing frames.
pub fn build_gc(mesh: &TriMesh, skeleton: &Skeleton, params: &GcParams) -> Result<GeneralizedCylinder> {
    params.validate()?;
    let n = params.n;
    let height = skeleton.height();
    let heights: Vec<f64> = (0..n).map(|i| i as f64 * height / (n - 1) as f64).collect();
    let reference = params.reference_direction.map(Vector3::from);
    let frames = frames_at(skeleton, &heights, reference);
    let abstraction = params.abstraction();
    let mut warnings = GcWarnings::default();
    let mut sections = Vec::with_capacity(n);

    for (i, (&h, frame)) in heights.iter().zip(&frames).enumerate() {
        let center = skeleton.point_at(h);
        let mut slice = slice_mesh(mesh, &center, frame);
        if slice.loops.is_empty() {
            let directions: &[f64] = match i {
                0 => &[1.0],
                i if i == n - 1 => &[-1.0],
                _ => &[1.0, -1.0],
            };
            'nudge: for &nudge in &NUDGES {
                for &dir in directions {
                    let hn = (h + dir * nudge * height).clamp(0.0, height);
                    let fnudged = frame.transport_along(skeleton, h, hn);
                    let s = slice_mesh(mesh, &skeleton.point_at(hn), &fnudged);
                    if !s.loops.is_empty() {
                        slice = s;
                        warnings.nudged.push(i);
                        break 'nudge;
                    }
                }
            }
        }
        if slice.loops.is_empty() {
            return Err(Error::NoSection { h });
        }
        if slice.auto_closed > 0 {
            warnings.auto_closed.push(i);
        }

        let nearest = slice
            .loops
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = section::centroid(a.1).coords.norm();
                let db = section::centroid(b.1).coords.norm();
                da.total_cmp(&db)
            })
            .map(|(k, _)| k)
            .unwrap();
        // The chosen loop together with every loop nesting it: if the
        // nearest contour is a hole, abstraction keeps its outer boundary.
        let probe = slice.loops[nearest][0];
        let family: Vec<Loop2> = slice
            .loops
            .iter()
            .enumerate()
            .filter(|(k, l)| *k == nearest || section::contains(l, &probe))
            .map(|(_, l)| l.clone())
            .collect();
        let dense = section::abstract_section(&family, &abstraction).map_err(|e| match e {
            Error::DegenerateLoop => {
                log::error!("cross-section at h = {h} degenerated");
                e
            }
            e => e,
        })?;
        let mut lp = section::resample(&start_on_x_axis(&dense), params.m);
        section::make_ccw(&mut lp);
        let cs = CrossSection::new(h, center, *frame, lp);
        if !cs.is_star() {
            warnings.non_star.push(i);
        }
        sections.push(cs);
    }
    if !warnings.non_star.is_empty() {
        log::warn!(
            "{} cross-section(s) are not star-shaped about the skeleton; angle lookup uses the nearest crossing",
            warnings.non_star.len()
        );
    }
    if !warnings.nudged.is_empty() {
        log::info!("sections {:?} were sliced slightly inward of their nominal height", warnings.nudged);
    }
    Ok(GeneralizedCylinder::assemble(skeleton.clone(), params.clone(), sections, warnings))
}

impl GeneralizedCylinder {
    fn assemble(skeleton: Skeleton, params: GcParams, sections: Vec<CrossSection>, warnings: GcWarnings) -> Self {
        let mut gc = GeneralizedCylinder {
            skeleton,
            params,
            sections,
            warnings,
            table: Vec::new(),
        };
        gc.table = gc.build_table();
        gc
    }

    fn build_table(&self) -> Vec<f64> {
        let m = self.params.m;
        let height = self.height();
        let steps = (TABLE_HEIGHTS - 1) * TABLE_SUBSTEPS;
        let mut table = vec![0.0; m * TABLE_HEIGHTS];
        for b in 0..m {
            let phi = TAU * b as f64 / m as f64;
            let mut total = 0.0;
            let mut prev = self.evaluate_surface(0.0, phi);
            for s in 1..=steps {
                let p = self.evaluate_surface(height * s as f64 / steps as f64, phi);
                total += (p - prev).norm();
                prev = p;
                if s % TABLE_SUBSTEPS == 0 {
                    table[b * TABLE_HEIGHTS + s / TABLE_SUBSTEPS] = total;
                }
            }
        }
        table
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn params(&self) -> &GcParams {
        &self.params
    }

    pub fn sections(&self) -> &[CrossSection] {
        &self.sections
    }

    pub fn warnings(&self) -> &GcWarnings {
        &self.warnings
    }

    pub fn height(&self) -> f64 {
        self.skeleton.height()
    }

    /// Surface distances at the table heights for angle bucket `b`.
    pub fn table_row(&self, b: usize) -> &[f64] {
        &self.table[b * TABLE_HEIGHTS..(b + 1) * TABLE_HEIGHTS]
    }

    pub fn aabb(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for s in &self.sections {
            for p in s.points() {
                bb.grow(&p);
            }
        }
        bb
    }

    fn spacing(&self) -> f64 {
        self.height() / (self.sections.len() - 1) as f64
    }

    /// Bracketing section index and blend fraction for a clamped height.
    fn bracket(&self, h: f64) -> (usize, f64) {
        let n = self.sections.len();
        let u = h / self.spacing();
        let i = (u.floor().max(0.0) as usize).min(n - 2);
        (i, (u - i as f64).clamp(0.0, 1.0))
    }

    /// Surface point σ(h, φ); `h` is clamped to `[0, H]`.
    pub fn evaluate_surface(&self, h: f64, phi: f64) -> Point3<f64> {
        self.evaluate_checked(h, phi).0
    }

    /// Like [`Self::evaluate_surface`], also reporting whether `h` was clamped.
    pub fn evaluate_checked(&self, h: f64, phi: f64) -> (Point3<f64>, bool) {
        let height = self.height();
        let hc = h.clamp(0.0, height);
        let phi = wrap_angle(phi);
        let (i, t) = self.bracket(hc);
        let (a, b) = (&self.sections[i], &self.sections[i + 1]);
        let pa = a.to_world(&a.point_at_angle(phi));
        let pb = b.to_world(&b.point_at_angle(phi));
        (pa + (pb - pa) * t, hc != h)
    }

    /// Outward unit normal of σ at `(h, φ)` from central differences. Where
    /// the surface degenerates the radial direction is used.
    pub fn surface_normal(&self, h: f64, phi: f64) -> Vector3<f64> {
        let height = self.height();
        let h = h.clamp(0.0, height);
        let dh = 1e-4 * height;
        let (lo, hi) = ((h - dh).max(0.0), (h + dh).min(height));
        let along = self.evaluate_surface(hi, phi) - self.evaluate_surface(lo, phi);
        let around = self.evaluate_surface(h, phi + 1e-4) - self.evaluate_surface(h, phi - 1e-4);
        let radial = self.evaluate_surface(h, phi) - self.skeleton.point_at(h);
        match around.cross(&along).try_normalize(1e-14) {
            Some(n) if n.dot(&radial) < 0.0 => -n,
            Some(n) => n,
            None => radial.try_normalize(1e-14).unwrap_or_else(|| self.frame_at(h).x),
        }
    }

    /// Rotation-minimizing frame at arbitrary height.
    pub fn frame_at(&self, h: f64) -> Frame {
        let h = h.clamp(0.0, self.height());
        let (i, _) = self.bracket(h);
        let s = &self.sections[i];
        s.frame.transport_along(&self.skeleton, s.h, h)
    }

    /// Mean section radius interpolated at height `h`.
    pub fn mean_radius_at(&self, h: f64) -> f64 {
        let (i, t) = self.bracket(h.clamp(0.0, self.height()));
        self.sections[i].mean_radius * (1.0 - t) + self.sections[i + 1].mean_radius * t
    }

    /// Length of the constant-angle surface curve from height 0 to `h`,
    /// summed over chords no longer than `H/256` in height.
    pub fn surface_distance(&self, h: f64, phi: f64) -> f64 {
        let height = self.height();
        let h = h.clamp(0.0, height);
        let k = ((h * DISTANCE_STEPS / height).ceil() as usize).max(1);
        let mut prev = self.evaluate_surface(0.0, phi);
        let mut total = 0.0;
        for s in 1..=k {
            let p = self.evaluate_surface(h * s as f64 / k as f64, phi);
            total += (p - prev).norm();
            prev = p;
        }
        total
    }

    /// Surface distances along angle `phi` at the table heights, blended
    /// linearly between the two nearest angle buckets.
    fn table_column(&self, phi: f64) -> impl Fn(usize) -> f64 + '_ {
        let m = self.params.m;
        let beta = wrap_angle(phi) / TAU * m as f64;
        let b0 = (beta.floor() as usize).min(m - 1);
        let w = beta - b0 as f64;
        let b1 = (b0 + 1) % m;
        move |j| (1.0 - w) * self.table[b0 * TABLE_HEIGHTS + j] + w * self.table[b1 * TABLE_HEIGHTS + j]
    }

    /// Total surface length along angle `phi`, from the table.
    pub fn max_surface_distance(&self, phi: f64) -> f64 {
        self.table_column(phi)(TABLE_HEIGHTS - 1)
    }

    /// Smallest height whose surface distance along `phi` reaches `l_target`,
    /// by linear scan of the table and one interpolation step. Targets past
    /// the end of the surface return `H` flagged as clamped.
    pub fn invert_surface_distance(&self, phi: f64, l_target: f64) -> HeightLookup {
        let height = self.height();
        let col = self.table_column(phi);
        let dh = height / (TABLE_HEIGHTS - 1) as f64;
        if !(l_target > 0.0) {
            return HeightLookup { h: 0.0, clamped: false };
        }
        let total = col(TABLE_HEIGHTS - 1);
        if l_target >= total {
            return HeightLookup {
                h: height,
                clamped: l_target > total,
            };
        }
        let mut prev = col(0);
        for j in 1..TABLE_HEIGHTS {
            let cur = col(j);
            if cur >= l_target {
                let span = cur - prev;
                let t = if span > 0.0 { (l_target - prev) / span } else { 0.0 };
                return HeightLookup {
                    h: ((j - 1) as f64 + t) * dh,
                    clamped: false,
                };
            }
            prev = cur;
        }
        HeightLookup { h: height, clamped: false }
    }

    /// Polar coordinates of a surface point with outward normal `normal`.
    ///
    /// The ray from `p` against the normal selects a skeleton height (or the
    /// nearest skeleton point if the ray passes too far from the skeleton or
    /// runs nearly along it);
    /// the height is then refined to the section plane through `p` nearest
    /// that seed, so `p` lies in the plane of its own coordinate.
    pub fn parameterize(&self, p: &Point3<f64>, normal: &Vector3<f64>) -> Parameterization {
        let (h_ray, gap) = self.skeleton.closest_to_ray(p, &-normal);
        let mut fallback = !(gap <= FALLBACK_GAP * self.mean_radius_at(h_ray));
        let nearest = || self.plane_height(p, self.skeleton.closest_param(p).0);
        let mut h = if fallback { nearest() } else { self.plane_height(p, h_ray) };
        if normal.normalize().dot(&self.skeleton.tangent_at(h)).abs() > FALLBACK_ALIGNMENT {
            fallback = true;
            h = nearest();
        }
        let frame = self.frame_at(h);
        let local = frame.to_local(&(p - self.skeleton.point_at(h)));
        let phi = wrap_angle(local.y.atan2(local.x));
        Parameterization {
            coord: GcCoordinate {
                h,
                phi,
                l: self.surface_distance(h, phi),
            },
            fallback,
        }
    }

    /// Height whose section plane contains `p`, nearest to `seed`. Points
    /// beyond either end map to that end.
    fn plane_height(&self, p: &Point3<f64>, seed: f64) -> f64 {
        let height = self.height();
        let f = |h: f64| (p - self.skeleton.point_at(h)).dot(&self.skeleton.tangent_at(h));
        let hs: Vec<f64> = (0..=ROOT_SAMPLES).map(|k| height * k as f64 / ROOT_SAMPLES as f64).collect();
        let fs: Vec<f64> = hs.iter().map(|&h| f(h)).collect();
        let mut best: Option<f64> = None;
        for k in 0..ROOT_SAMPLES {
            let (mut lo, mut hi) = (hs[k], hs[k + 1]);
            let (flo, fhi) = (fs[k], fs[k + 1]);
            let root = if flo == 0.0 {
                lo
            } else if fhi == 0.0 || (flo < 0.0) == (fhi < 0.0) {
                continue;
            } else {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (f(mid) < 0.0) == (flo < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            if best.is_none_or(|b| (root - seed).abs() < (b - seed).abs()) {
                best = Some(root);
            }
        }
        if fs[ROOT_SAMPLES] == 0.0 && best.is_none_or(|b| (height - seed).abs() < (b - seed).abs()) {
            best = Some(height);
        }
        best.unwrap_or(if fs[0] < 0.0 { 0.0 } else { height })
    }

    /// Triangulated surface `σ` on a regular (height, angle) grid, for
    /// inspection. Open at both ends.
    pub fn surface_mesh(&self, rings: usize, segments: usize) -> Result<TriMesh> {
        let (rings, segments) = (rings.max(2), segments.max(3));
        let mut vertices = Vec::with_capacity(rings * segments);
        for r in 0..rings {
            let h = self.height() * r as f64 / (rings - 1) as f64;
            for s in 0..segments {
                vertices.push(self.evaluate_surface(h, TAU * s as f64 / segments as f64));
            }
        }
        let mut faces = Vec::with_capacity(2 * (rings - 1) * segments);
        for r in 0..rings - 1 {
            for s in 0..segments {
                let a = r * segments + s;
                let b = r * segments + (s + 1) % segments;
                let c = (r + 1) * segments + (s + 1) % segments;
                let d = (r + 1) * segments + s;
                for f in [[a, b, c], [a, c, d]] {
                    let [p, q, w] = f.map(|i| vertices[i]);
                    if crate::mesh::triangle_area(&p, &q, &w) > crate::mesh::DEGENERATE_AREA {
                        faces.push(f);
                    }
                }
            }
        }
        TriMesh::new(vertices, faces)
    }
}
