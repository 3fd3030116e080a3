//! Numerical checks of the arc identities and flux inequalities on traced
//! leaves of `F(f)`, the vertical-ray property of half-leaves, and a probe
//! of injectivity outside a disk.
//!
//! Orientation convention for the arc integrals: `dt` is Hamiltonian time
//! along the clockwise boundary of the region below the arc, so the leaf
//! term `∫⟨F, ∇f⟩ dt` equals `∫ g dx` taken from left to right. Along an arc
//! traversed in its own order this is `dτ = ⟨dγ, (f_y, -f_x)⟩ / |∇f|²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::spectrum::spectrum;
use crate::field::{Component, VectorField};
use crate::foliation::leaf::{trace_leaf, Extent, LeafArc, LeafControls, LeafEnd, MIN_GRADIENT};
use crate::geom::{Rect, Vec2};
use crate::quadrature::Composite;

pub const IDENTITY_TOL: f64 = 1e-6;
pub const NUMERICAL_SLACK: f64 = 1e-8;
pub const COLLISION_TOL_REL: f64 = 1e-9;
pub const SEPARATION_FLOOR: f64 = 1e-3;
/// Gauss-Legendre order on each traced segment.
pub const ARC_GL_ORDER: usize = 8;
/// Longest panel of the vertical strip and baseline quadratures.
const PANEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxVariant {
    /// Arc starts the positive half-leaf of `p` and `Π(p) ≤ Π(q)`.
    Positive,
    /// Arc ends the negative half-leaf of `q` and `Π(q) ≤ Π(p)`.
    Negative,
}

impl FluxVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FluxVariant::Positive => "positive",
            FluxVariant::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcCheck {
    Green,
    FluxPositive,
    FluxNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcIntegralReport {
    pub check: ArcCheck,
    pub arc: LeafArc,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// `|Π(q) - Π(p)|`.
    pub span: f64,
    /// Pieces between consecutive critical points of `Π` on the arc.
    pub pieces: usize,
}

impl ArcIntegralReport {
    pub fn relative_slack(&self) -> f64 {
        self.slack / (1.0 + self.lhs.abs())
    }
}

/// Cubic Hermite segment through two leaf points with unit tangents scaled
/// by the chord, `O(h⁴)` off the leaf.
#[derive(Clone, Copy)]
struct Hermite {
    p0: Vec2,
    p1: Vec2,
    m0: Vec2,
    m1: Vec2,
}

impl Hermite {
    fn eval(&self, u: f64) -> (Vec2, Vec2) {
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        (
            self.p0 * h00 + self.m0 * h10 + self.p1 * h01 + self.m1 * h11,
            self.p0 * d00 + self.m0 * d10 + self.p1 * d01 + self.m1 * d11,
        )
    }
}

fn hermite_segments(field: &VectorField, points: &[Vec2]) -> Result<Vec<Hermite>> {
    let n = points.len();
    let mut tangents = Vec::with_capacity(n);
    for (i, &p) in points.iter().enumerate() {
        let t = field.leaf_tangent(Component::F, p);
        if !(t.norm() >= MIN_GRADIENT) {
            return Err(Error::VanishingGradient { point: p });
        }
        let chord = points[(i + 1).min(n - 1)] - points[i.saturating_sub(1)];
        let t = t.normalized();
        tangents.push(if t.dot(chord) < 0.0 { -t } else { t });
    }
    Ok(points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, w)| {
            let len = w[0].dist(w[1]);
            Hermite { p0: w[0], p1: w[1], m0: tangents[i] * len, m1: tangents[i + 1] * len }
        })
        .collect())
}

/// Quadrature nodes along the arc: point, derivative in the segment
/// parameter, weight.
fn arc_nodes(field: &VectorField, points: &[Vec2]) -> Result<Vec<(Vec2, Vec2, f64)>> {
    let rule = Composite::new(ARC_GL_ORDER).nodes(&[0.0, 1.0]);
    let segs = hermite_segments(field, points)?;
    let mut out = Vec::with_capacity(segs.len() * rule.len());
    for s in &segs {
        for &(u, w) in &rule {
            let (z, dz) = s.eval(u);
            out.push((z, dz, w));
        }
    }
    Ok(out)
}

/// `∫ h dτ` along the arc in its stored order. Terms are summed serially so
/// the result does not depend on the thread count.
fn tau_integral(field: &VectorField, nodes: &[(Vec2, Vec2, f64)], h: impl Fn(Vec2, Vec2, Vec2) -> f64 + Sync) -> f64 {
    nodes
        .par_iter()
        .map(|&(z, dz, w)| {
            let grad = field.gradient(Component::F, z);
            let dtau = dz.dot(Vec2::new(grad.y, -grad.x)) / grad.norm_sq();
            w * h(z, field.value(z), grad) * dtau
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Number of maximal runs on which `x` moves in one direction.
fn monotone_pieces(points: &[Vec2]) -> usize {
    let mut pieces = 0;
    let mut last = 0.0f64;
    for w in points.windows(2) {
        let dx = w[1].x - w[0].x;
        let s = if dx.abs() <= 1e-14 * (1.0 + w[0].x.abs()) { 0.0 } else { dx.signum() };
        if s != 0.0 && s != last {
            pieces += 1;
            last = s;
        }
    }
    pieces.max(1)
}

fn panels(len: f64) -> usize {
    ((len.abs() / PANEL).ceil() as usize).max(1)
}

fn require_f_arc(field: &VectorField, arc: &LeafArc) -> Result<()> {
    if arc.component != Component::F {
        return Err(Error::Precondition("arc must be a leaf of F(f)".into()));
    }
    if arc.points.len() < 2 {
        return Err(Error::Precondition("arc needs at least two points".into()));
    }
    let sigma = field.sigma();
    if let Some(p) = arc.points.iter().find(|p| !(p.x > sigma)) {
        return Err(Error::Precondition(format!(
            "arc leaves the half-plane x > {sigma} at ({}, {})",
            p.x, p.y
        )));
    }
    Ok(())
}

/// Area integral of `g_y` over the region between the arc, the two
/// vertical segments through its end points and the horizontal line
/// `y = c`, against the boundary decomposition.
pub fn green_identity_check(field: &VectorField, arc: &LeafArc, c: f64) -> Result<ArcIntegralReport> {
    require_f_arc(field, arc).map_err(|e| Error::RegionConstruction(e.to_string()))?;
    let y_min = arc.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    if !(c < y_min) {
        return Err(Error::RegionConstruction(format!("baseline y = {c} is not below the arc (min y = {y_min})")));
    }
    let nodes = arc_nodes(field, &arc.points)?;
    let p = arc.points[0];
    let q = *arc.points.last().unwrap();
    let strip = Composite::new(ARC_GL_ORDER);

    // Signed vertical strips under each arc node; dx carries the sign, so
    // folds at critical points of Π subtract the doubly covered part.
    let area: f64 = nodes
        .par_iter()
        .map(|&(z, dz, w)| {
            let inner = strip.integrate(c, z.y, panels(z.y - c), |y| field.jacobian_unchecked(Vec2::new(z.x, y)).d);
            w * inner * dz.x
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();

    let f_p = field.scalar(Component::F, p);
    let leaf = tau_integral(field, &nodes, |_, x, grad| (x.x - f_p) * grad.x + x.y * grad.y);
    let base = strip.integrate(p.x, q.x, panels(q.x - p.x), |a| field.value(Vec2::new(a, c)).y);
    let boundary = leaf - base;
    let slack = area - boundary;
    let tolerance = IDENTITY_TOL * (1.0 + area.abs());
    Ok(ArcIntegralReport {
        check: ArcCheck::Green,
        arc: arc.clone(),
        lhs: area,
        rhs: boundary,
        slack,
        tolerance,
        passed: slack.abs() <= tolerance,
        span: (q.x - p.x).abs(),
        pieces: monotone_pieces(&arc.points),
    })
}

fn spectral_ok(field: &VectorField, p: Vec2) -> bool {
    spectrum(&field.jacobian_unchecked(p)).map(|s| s.no_nonneg_real()).unwrap_or(false)
}

fn x_tol(x: f64) -> f64 {
    1e-9 * (1.0 + x.abs())
}

/// Checks the variant's ordering and half-leaf hypotheses on the arc from
/// its first point `p` to its last point `q`.
fn check_flux_preconditions(field: &VectorField, arc: &LeafArc, variant: FluxVariant) -> Result<()> {
    require_f_arc(field, arc)?;
    let p = arc.points[0];
    let q = *arc.points.last().unwrap();
    let (lo, hi) = match variant {
        FluxVariant::Positive => (p.x, q.x),
        FluxVariant::Negative => (q.x, p.x),
    };
    if lo > hi + x_tol(hi) {
        return Err(Error::Precondition(format!(
            "{} variant needs Π-ordered end points, got Π(p) = {}, Π(q) = {}",
            variant.as_str(),
            p.x,
            q.x
        )));
    }
    if let Some(z) = arc.points.iter().find(|z| z.x < lo - x_tol(lo) || z.x > hi + x_tol(hi)) {
        return Err(Error::Precondition(format!(
            "arc leaves the strip {lo} ≤ x ≤ {hi} at ({}, {})",
            z.x, z.y
        )));
    }
    let g_ref = match variant {
        FluxVariant::Positive => field.scalar(Component::G, p),
        FluxVariant::Negative => field.scalar(Component::G, q),
    };
    let tol = 1e-9 * (1.0 + g_ref.abs());
    for z in &arc.points {
        let g = field.scalar(Component::G, *z);
        let inside = match variant {
            FluxVariant::Positive => g >= g_ref - tol,
            FluxVariant::Negative => g <= g_ref + tol,
        };
        if !inside {
            return Err(Error::Precondition(format!("arc leaves the {} half-leaf at ({}, {})", variant.as_str(), z.x, z.y)));
        }
        if !spectral_ok(field, *z) {
            return Err(Error::Precondition(format!(
                "a Jacobian eigenvalue is real and nonnegative at ({}, {})",
                z.x, z.y
            )));
        }
    }
    Ok(())
}

/// `∫⟨X, ∇f⟩ dt` against `f(endpoint) ∫ f_x dt + g(p) · span`.
pub fn flux_inequality_check(field: &VectorField, arc: &LeafArc, variant: FluxVariant) -> Result<ArcIntegralReport> {
    check_flux_preconditions(field, arc, variant)?;
    let p = arc.points[0];
    let q = *arc.points.last().unwrap();
    let nodes = arc_nodes(field, &arc.points)?;
    // Left to right is p → q for the positive variant and q → p otherwise.
    let (s, end) = match variant {
        FluxVariant::Positive => (1.0, p),
        FluxVariant::Negative => (-1.0, q),
    };
    let a = s * tau_integral(field, &nodes, |_, x, grad| x.dot(grad));
    let b = s * tau_integral(field, &nodes, |_, _, grad| grad.x);
    let span = (q.x - p.x).abs();
    let rhs = field.scalar(Component::F, end) * b + field.scalar(Component::G, p) * span;
    let slack = a - rhs;
    let tolerance = NUMERICAL_SLACK * (1.0 + a.abs());
    Ok(ArcIntegralReport {
        check: match variant {
            FluxVariant::Positive => ArcCheck::FluxPositive,
            FluxVariant::Negative => ArcCheck::FluxNegative,
        },
        arc: arc.clone(),
        lhs: a,
        rhs,
        slack,
        tolerance,
        passed: slack >= -tolerance,
        span,
        pieces: monotone_pieces(&arc.points),
    })
}

/// Where random flux arcs are seeded and how far they are traced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSampling {
    pub r_min: f64,
    pub r_max: f64,
    pub max_length: f64,
    pub step: f64,
    /// Candidate seeds allowed per requested arc.
    pub attempts_per_arc: usize,
}

impl Default for ArcSampling {
    fn default() -> Self {
        Self { r_min: 3.0, r_max: 30.0, max_length: 10.0, step: 0.01, attempts_per_arc: 20 }
    }
}

impl ArcSampling {
    fn validate(&self, sigma: f64) -> Result<()> {
        if !(self.r_min > sigma && self.r_max > self.r_min && self.step > 0.0 && self.max_length > self.step) {
            return Err(Error::Precondition(format!(
                "arc sampling needs σ = {sigma} < r_min < r_max and 0 < step < max_length"
            )));
        }
        Ok(())
    }
}

/// Seed uniformly distributed over the part of the annulus with `x > σ`.
fn annulus_seed(rng: &mut ChaCha8Rng, r_min: f64, r_max: f64, sigma: f64) -> Vec2 {
    loop {
        let r = (r_min * r_min + rng.gen::<f64>() * (r_max * r_max - r_min * r_min)).sqrt();
        let p = Vec2::polar(r, std::f64::consts::TAU * rng.gen::<f64>());
        if p.x > sigma {
            return p;
        }
    }
}

/// Longest prefix of the positive half-leaf from `seed` satisfying the
/// variant's ordering, cut at the extreme point of `Π`.
fn arc_from_seed(field: &VectorField, seed: Vec2, variant: FluxVariant, sampling: &ArcSampling) -> Option<LeafArc> {
    let h = 1.5 * sampling.r_max;
    let controls = LeafControls {
        step: sampling.step,
        max_length: sampling.max_length,
        window: Some(Rect::new(field.sigma(), h, -h, h)),
        extent: Extent::Positive,
    };
    let traced = trace_leaf(field, seed, Component::F, &controls).ok()?;
    let pts = &traced.points;
    let x0 = pts[0].x;
    let tol = x_tol(x0);
    let keep = |x: f64| match variant {
        FluxVariant::Positive => x >= x0 - tol,
        FluxVariant::Negative => x <= x0 + tol,
    };
    let prefix = pts.iter().take_while(|p| keep(p.x)).count();
    let mut best = 0;
    for (i, p) in pts[..prefix].iter().enumerate() {
        let better = match variant {
            FluxVariant::Positive => p.x >= pts[best].x - x_tol(p.x),
            FluxVariant::Negative => p.x <= pts[best].x + x_tol(p.x),
        };
        if better {
            best = i;
        }
    }
    if best == 0 {
        return None;
    }
    let end = if best + 1 == pts.len() { traced.ends[1] } else { LeafEnd::LengthBudget };
    Some(LeafArc {
        component: Component::F,
        level: traced.level,
        points: pts[..=best].to_vec(),
        start_index: 0,
        ends: [LeafEnd::Start, end],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSweep {
    pub variant: FluxVariant,
    pub requested: usize,
    pub attempts: usize,
    pub reports: Vec<ArcIntegralReport>,
    /// Smallest relative slack `slack / (1 + |lhs|)`.
    pub min_relative_slack: Option<f64>,
    pub min_slack: Option<f64>,
    pub all_passed: bool,
}

impl FluxSweep {
    pub fn arcs(&self) -> usize {
        self.reports.len()
    }

    pub fn complete(&self) -> bool {
        self.reports.len() == self.requested
    }
}

/// Traces up to `n` arcs meeting the variant's hypotheses from random seeds
/// and checks each. Seeds whose half-leaf never satisfies the ordering are
/// skipped; `attempts` records how many were drawn.
pub fn flux_inequality_sweep(
    field: &VectorField,
    variant: FluxVariant,
    n: usize,
    sampling: &ArcSampling,
    seed: u64,
) -> Result<FluxSweep> {
    sampling.validate(field.sigma())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = n.saturating_mul(sampling.attempts_per_arc.max(1));
    let mut arcs = Vec::with_capacity(n);
    let mut attempts = 0;
    while arcs.len() < n && attempts < budget {
        let batch = (n - arcs.len()).max(8).min(budget - attempts);
        let seeds: Vec<Vec2> = (0..batch).map(|_| annulus_seed(&mut rng, sampling.r_min, sampling.r_max, field.sigma())).collect();
        let found: Vec<Option<LeafArc>> = seeds.par_iter().map(|&s| arc_from_seed(field, s, variant, sampling)).collect();
        for arc in found {
            attempts += 1;
            if let Some(a) = arc {
                if arcs.len() < n {
                    arcs.push(a);
                }
            }
        }
    }
    let reports = arcs
        .par_iter()
        .map(|a| flux_inequality_check(field, a, variant))
        .collect::<Result<Vec<_>>>()?;
    let min_relative_slack = reports.iter().map(|r| r.relative_slack()).reduce(f64::min);
    let min_slack = reports.iter().map(|r| r.slack).reduce(f64::min);
    let all_passed = reports.iter().all(|r| r.passed);
    Ok(FluxSweep { variant, requested: n, attempts, reports, min_relative_slack, min_slack, all_passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayDirection {
    /// Positive half-leaf against the ray above the seed.
    Up,
    /// Negative half-leaf against the ray below the seed.
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayControls {
    pub step: f64,
    pub max_length: f64,
    pub window: Option<Rect>,
    /// Closest approach is measured once the leaf has left this ball
    /// around the seed.
    pub exit_radius: f64,
}

impl Default for RayControls {
    fn default() -> Self {
        Self { step: 0.01, max_length: 40.0, window: None, exit_radius: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayEntry {
    pub seed: Vec2,
    pub direction: RayDirection,
    pub hits: usize,
    pub first_hit: Option<Vec2>,
    pub closest_approach: Option<f64>,
    pub traced_length: f64,
    pub end: Option<LeafEnd>,
    /// No real nonnegative eigenvalue along the traced half-leaf.
    pub spectral_ok: bool,
    pub note: Option<String>,
}

impl RayEntry {
    pub fn compliant(&self) -> bool {
        self.spectral_ok && self.note.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalRayReport {
    pub entries: Vec<RayEntry>,
    pub compliant: usize,
    pub hits: usize,
    /// No compliant entry re-meets its ray.
    pub passed: bool,
}

fn ray_entry(field: &VectorField, seed: Vec2, direction: RayDirection, controls: &RayControls) -> RayEntry {
    let mut entry = RayEntry {
        seed,
        direction,
        hits: 0,
        first_hit: None,
        closest_approach: None,
        traced_length: 0.0,
        end: None,
        spectral_ok: true,
        note: None,
    };
    if !(seed.norm() > field.sigma()) {
        entry.note = Some("seed inside the excluded disk".into());
        return entry;
    }
    let leaf = LeafControls {
        step: controls.step,
        max_length: controls.max_length,
        window: controls.window,
        extent: match direction {
            RayDirection::Up => Extent::Positive,
            RayDirection::Down => Extent::Negative,
        },
    };
    let arc = match trace_leaf(field, seed, Component::F, &leaf) {
        Ok(a) => a,
        Err(e) => {
            entry.note = Some(e.to_string());
            return entry;
        }
    };
    // Points in tracing order starting at the seed.
    let mut pts = arc.points.clone();
    if direction == RayDirection::Down {
        pts.reverse();
    }
    entry.end = Some(arc.ends[if direction == RayDirection::Up { 1 } else { 0 }]);
    entry.traced_length = arc.length();
    entry.spectral_ok = pts.iter().all(|&p| spectral_ok(field, p));

    let (a, c) = (seed.x, seed.y);
    let on_ray = |y: f64| match direction {
        RayDirection::Up => y >= c,
        RayDirection::Down => y <= c,
    };
    let tol = 1e-12 * (1.0 + a.abs());
    let mut left_ball = false;
    let mut closest = f64::INFINITY;
    for (i, w) in pts.windows(2).enumerate() {
        let (z0, z1) = (w[0], w[1]);
        let (d0, d1) = (z0.x - a, z1.x - a);
        let hit = if d0 * d1 < 0.0 {
            let y = z0.y + (z1.y - z0.y) * d0 / (d0 - d1);
            on_ray(y).then_some(Vec2::new(a, y))
        } else if d1.abs() <= tol && z1.dist(seed) > tol && on_ray(z1.y) && (i > 0 || z1.y != c) {
            Some(z1)
        } else {
            None
        };
        if let Some(h) = hit {
            entry.hits += 1;
            entry.first_hit.get_or_insert(h);
        }
        if z1.dist(seed) > controls.exit_radius {
            left_ball = true;
        }
        if left_ball {
            let d = if on_ray(z1.y) { d1.abs() } else { z1.dist(seed) };
            closest = closest.min(d);
        }
    }
    entry.closest_approach = left_ball.then_some(closest);
    entry
}

/// Traces `L_p⁺` and `L_p⁻` from every seed and counts returns to the
/// vertical rays above and below it.
pub fn vertical_ray_check(field: &VectorField, seeds: &[Vec2], controls: &RayControls) -> VerticalRayReport {
    let entries: Vec<RayEntry> = seeds
        .par_iter()
        .flat_map_iter(|&s| [RayDirection::Up, RayDirection::Down].map(|d| (s, d)))
        .map(|(s, d)| ray_entry(field, s, d, controls))
        .collect();
    let compliant = entries.iter().filter(|e| e.compliant()).count();
    let hits = entries.iter().filter(|e| e.compliant()).map(|e| e.hits).sum();
    VerticalRayReport { entries, compliant, hits, passed: hits == 0 }
}

/// Uniform seeds in the annulus `[r_min, r_max]`.
pub fn annulus_seeds(n: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = (r_min * r_min + rng.gen::<f64>() * (r_max * r_max - r_min * r_min)).sqrt();
            Vec2::polar(r, std::f64::consts::TAU * rng.gen::<f64>())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityControls {
    /// Outer radius of the scanned annulus, default `8 s`.
    pub r_max: Option<f64>,
    pub n_pairs: usize,
    pub grid_radial: usize,
    /// Rounded up to an even count so antipodal nodes are both sampled.
    pub grid_angular: usize,
    pub collision_tol_rel: f64,
    pub separation_floor: f64,
    pub max_reported: usize,
    pub seed: u64,
}

impl Default for InjectivityControls {
    fn default() -> Self {
        Self {
            r_max: None,
            n_pairs: 100_000,
            grid_radial: 1000,
            grid_angular: 1000,
            collision_tol_rel: COLLISION_TOL_REL,
            separation_floor: SEPARATION_FLOOR,
            max_reported: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub p: Vec2,
    pub q: Vec2,
    pub image_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityScanReport {
    pub s: f64,
    pub r_max: f64,
    pub pairs_tested: usize,
    pub grid_points: usize,
    pub image_scale: f64,
    pub collision_tol: f64,
    pub pair_collisions: usize,
    pub grid_collisions: usize,
    /// The first `max_reported` collisions, pairs before grid.
    pub collisions: Vec<Collision>,
    pub passed: bool,
}

impl InjectivityScanReport {
    pub fn collision_count(&self) -> usize {
        self.pair_collisions + self.grid_collisions
    }

    /// Rows `px,py,qx,qy,image_gap`.
    pub fn collisions_csv(&self) -> String {
        let mut out = String::from("px,py,qx,qy,image_gap\n");
        for c in &self.collisions {
            out.push_str(&format!("{},{},{},{},{}\n", c.p.x, c.p.y, c.q.x, c.q.y, c.image_gap));
        }
        out
    }
}

pub fn injectivity_scan(field: &VectorField, s: f64, n_pairs: usize, rng_seed: u64) -> Result<InjectivityScanReport> {
    injectivity_scan_with(field, s, &InjectivityControls { n_pairs, seed: rng_seed, ..InjectivityControls::default() })
}

const PAIR_CHUNK: usize = 4096;

/// Random pairs in the annulus plus a hash grid over a polar lattice of
/// images with cell size equal to the collision tolerance.
pub fn injectivity_scan_with(field: &VectorField, s: f64, controls: &InjectivityControls) -> Result<InjectivityScanReport> {
    if !(s >= field.sigma()) {
        return Err(Error::Precondition(format!("exclusion radius {s} is below σ = {}", field.sigma())));
    }
    let r_max = controls.r_max.unwrap_or(8.0 * s);
    if !(r_max > s) || controls.grid_radial == 0 || controls.grid_angular == 0 {
        return Err(Error::Precondition("injectivity scan needs r_max > s and a nonempty grid".into()));
    }
    let n_r = controls.grid_radial;
    let n_t = controls.grid_angular + controls.grid_angular % 2;
    let lattice: Vec<Vec2> = (0..n_r * n_t)
        .into_par_iter()
        .map(|k| {
            let r = s + (r_max - s) * ((k / n_t) as f64 + 0.5) / n_r as f64;
            Vec2::polar(r, std::f64::consts::TAU * (k % n_t) as f64 / n_t as f64)
        })
        .collect();
    let images: Vec<Vec2> = lattice.par_iter().map(|&p| field.value(p)).collect();
    let image_scale = images.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = controls.collision_tol_rel * (1.0 + image_scale);
    let floor = controls.separation_floor;
    let collide = |p: Vec2, q: Vec2, xp: Vec2, xq: Vec2| {
        let gap = xp.dist(xq);
        (p.dist(q) > floor && gap <= tol).then_some(Collision { p, q, image_gap: gap })
    };

    let chunks = controls.n_pairs.div_ceil(PAIR_CHUNK);
    let pair_hits: Vec<Collision> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);
            rng.set_stream(k as u64);
            let len = PAIR_CHUNK.min(controls.n_pairs - k * PAIR_CHUNK);
            let mut out = Vec::new();
            for _ in 0..len {
                let mut draw = || {
                    let r = (s * s + rng.gen::<f64>() * (r_max * r_max - s * s)).sqrt();
                    Vec2::polar(r, std::f64::consts::TAU * rng.gen::<f64>())
                };
                let (p, q) = (draw(), draw());
                out.extend(collide(p, q, field.value(p), field.value(q)));
            }
            out
        })
        .collect();

    let key = |v: Vec2| ((v.x / tol).floor() as i64, (v.y / tol).floor() as i64);
    let mut keyed: Vec<((i64, i64), u32)> = images.par_iter().enumerate().map(|(i, &v)| (key(v), i as u32)).collect();
    keyed.par_sort_unstable();
    let grid_hits: Vec<Collision> = (0..images.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (kx, ky) = key(images[i]);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let cell = (kx + dx, ky + dy);
                    let start = keyed.partition_point(|e| e.0 < cell);
                    for &(k, j) in keyed[start..].iter().take_while(|e| e.0 == cell) {
                        debug_assert_eq!(k, cell);
                        let j = j as usize;
                        if j > i {
                            out.extend(collide(lattice[i], lattice[j], images[i], images[j]));
                        }
                    }
                }
            }
            out
        })
        .collect();

    let pair_collisions = pair_hits.len();
    let grid_collisions = grid_hits.len();
    let collisions = pair_hits.into_iter().chain(grid_hits).take(controls.max_reported).collect();
    Ok(InjectivityScanReport {
        s,
        r_max,
        pairs_tested: controls.n_pairs,
        grid_points: lattice.len(),
        image_scale,
        collision_tol: tol,
        pair_collisions,
        grid_collisions,
        collisions,
        passed: pair_collisions + grid_collisions == 0,
    })
}
