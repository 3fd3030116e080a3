//! Tangencies of the `f`-foliation with closed curves, the curve index of
//! `X_f` and the internal-tangency sweep over growing radii.

mod curve;

pub use curve::ClosedCurve;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Component, VectorField};
use crate::foliation::leaf::MIN_GRADIENT;
use crate::foliation::{trace_leaf, Extent, LeafControls};
use crate::geom::{point_segment_distance, Vec2};

pub const DEFAULT_SAMPLES: usize = 1 << 14;
pub const ANGLE_TOL: f64 = 1e-10;
pub const PARAM_TOL: f64 = 1e-12;
/// Partition used by the winding sum before its one refinement.
pub const WINDING_SAMPLES: usize = 4096;
pub const JITTER_RETRIES: usize = 8;
pub const JITTER_REL_AMPLITUDE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangencyClass {
    Internal,
    External,
    Degenerate,
}

impl TangencyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TangencyClass::Internal => "internal",
            TangencyClass::External => "external",
            TangencyClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyPoint {
    pub theta: f64,
    pub position: Vec2,
    pub klass: TangencyClass,
    /// `f` at the tangency.
    pub level: f64,
    /// Sine of the angle between `X_f` and the curve tangent.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyControls {
    pub samples: usize,
    pub param_tol: f64,
    pub angle_tol: f64,
    /// Trace leaves between tangencies at a common level.
    pub leaf_check: bool,
}

impl Default for TangencyControls {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, param_tol: PARAM_TOL, angle_tol: ANGLE_TOL, leaf_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub curve: ClosedCurve,
    pub points: Vec<TangencyPoint>,
    pub n_ext: usize,
    pub n_int: usize,
    pub n_degenerate: usize,
    pub index_formula: f64,
    pub index_winding: i64,
    pub formula_holds: bool,
    pub general_position: bool,
    /// Index pairs of tangencies found on one traced leaf.
    pub shared_leaf_pairs: Vec<(usize, usize)>,
    /// The tangencies at `min f|_C` and `max f|_C` are distinct and external.
    pub extrema_external: bool,
}

impl TangencyReport {
    /// Rows `theta,x,y,class`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,x,y,class\n");
        for t in &self.points {
            out.push_str(&format!("{},{},{},{}\n", t.theta, t.position.x, t.position.y, t.klass.as_str()));
        }
        out
    }
}

fn check_curve(field: &VectorField, curve: &ClosedCurve) -> Result<()> {
    curve.validate(field.sigma())
}

/// `X_f(c(θ)) × c'(θ)` and the norms entering the angle.
fn cross_at(field: &VectorField, curve: &ClosedCurve, theta: f64) -> Result<(f64, f64)> {
    let p = curve.point(theta);
    let x = field.leaf_tangent(Component::F, p);
    let nx = x.norm();
    if !(nx >= MIN_GRADIENT) {
        return Err(Error::VanishingGradient { point: p });
    }
    let t = curve.tangent(theta);
    let c = x.cross(t);
    Ok((c, c / (nx * t.norm())))
}

/// Sign of `f(c(θ)) - f(c(θ*))` on each side, or `None` when they differ.
fn contact_sign(field: &VectorField, curve: &ClosedCurve, theta: f64, delta: f64) -> Option<f64> {
    let f0 = field.scalar(Component::F, curve.point(theta));
    let lo = field.scalar(Component::F, curve.point(theta - delta)) - f0;
    let hi = field.scalar(Component::F, curve.point(theta + delta)) - f0;
    if lo > 0.0 && hi > 0.0 {
        Some(1.0)
    } else if lo < 0.0 && hi < 0.0 {
        Some(-1.0)
    } else {
        None
    }
}

/// Leaf outside the curve near the contact means external. With `∇f`
/// pointing inward a local minimum of `f|_C` puts the curve on the high side
/// of the leaf, so the leaf is outside; every sign flip swaps the answer.
fn classify(field: &VectorField, curve: &ClosedCurve, theta: f64, delta: f64) -> TangencyClass {
    let Some(m) = contact_sign(field, curve, theta, delta) else {
        return TangencyClass::Degenerate;
    };
    let p = curve.point(theta);
    let s = field.gradient(Component::F, p).dot(curve.inward_normal(theta));
    if s == 0.0 {
        return TangencyClass::Degenerate;
    }
    if s.signum() * m > 0.0 {
        TangencyClass::External
    } else {
        TangencyClass::Internal
    }
}

fn bisect(field: &VectorField, curve: &ClosedCurve, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = cross_at(field, curve, lo)?.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = cross_at(field, curve, mid)?.0;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section minimum of `|sin angle|` on `[lo, hi]`.
fn touch_minimum(field: &VectorField, curve: &ClosedCurve, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |t: f64| cross_at(field, curve, t).map(|v| v.1.abs());
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (eval(a)?, eval(b)?);
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = eval(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = eval(b)?;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok((t, eval(t)?))
}

/// Tangency parameters with their class; degenerate contacts are kept.
fn scan(field: &VectorField, curve: &ClosedCurve, controls: &TangencyControls) -> Result<Vec<TangencyPoint>> {
    check_curve(field, curve)?;
    let n = controls.samples.max(16);
    let dt = TAU / n as f64;
    let vals: Vec<(f64, f64)> = (0..n).map(|k| cross_at(field, curve, k as f64 * dt)).collect::<Result<_>>()?;
    let mut thetas = Vec::new();
    let mut touches = Vec::new();
    for k in 0..n {
        let (c0, s0) = vals[k];
        let (c1, _) = vals[(k + 1) % n];
        let t0 = k as f64 * dt;
        if c0 == 0.0 {
            thetas.push(t0);
        } else if c1 != 0.0 && (c0 > 0.0) != (c1 > 0.0) {
            thetas.push(bisect(field, curve, t0, t0 + dt, controls.param_tol)?);
        } else {
            // A zero of even order never changes sign: look for a dip of |sin|.
            let sp = vals[(k + n - 1) % n].1.abs();
            let sn = vals[(k + 1) % n].1.abs();
            let cp = vals[(k + n - 1) % n].0;
            if s0.abs() < sp && s0.abs() <= sn && (cp > 0.0) == (c0 > 0.0) && (c1 > 0.0) == (c0 > 0.0) {
                let (t, s) = touch_minimum(field, curve, t0 - dt, t0 + dt, controls.param_tol)?;
                if s < controls.angle_tol {
                    touches.push(t.rem_euclid(TAU));
                }
            }
        }
    }
    let mut points: Vec<(f64, bool)> =
        thetas.into_iter().map(|t| (t.rem_euclid(TAU), false)).chain(touches.into_iter().map(|t| (t, true))).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.dedup_by(|a, b| (a.0 - b.0).abs() < 4.0 * controls.param_tol);

    let m = points.len();
    let mut out = Vec::with_capacity(m);
    for (i, &(theta, touch)) in points.iter().enumerate() {
        let gap = if m > 1 {
            let prev = points[(i + m - 1) % m].0;
            let next = points[(i + 1) % m].0;
            (theta - prev).rem_euclid(TAU).min((next - theta).rem_euclid(TAU))
        } else {
            PI
        };
        let delta = 1e-4f64.min(0.25 * gap).max(64.0 * controls.param_tol);
        let klass = if touch { TangencyClass::Degenerate } else { classify(field, curve, theta, delta) };
        let position = curve.point(theta);
        out.push(TangencyPoint {
            theta,
            position,
            klass,
            level: field.scalar(Component::F, position),
            angle: cross_at(field, curve, theta)?.1.abs(),
        });
    }
    Ok(out)
}

pub fn find_tangencies(field: &VectorField, curve: &ClosedCurve, controls: &TangencyControls) -> Result<Vec<TangencyPoint>> {
    let points = scan(field, curve, controls)?;
    if let Some(t) = points.iter().find(|t| t.klass == TangencyClass::Degenerate) {
        return Err(Error::DegenerateTangency { theta: t.theta });
    }
    Ok(points)
}

fn winding_sum(field: &VectorField, curve: &ClosedCurve, n: usize) -> Result<(f64, f64)> {
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        let p = curve.point(TAU * (k % n) as f64 / n as f64);
        let x = field.leaf_tangent(Component::F, p);
        if !(x.norm() >= MIN_GRADIENT) {
            return Err(Error::VanishingGradient { point: p });
        }
        let a = x.angle();
        if let Some(b) = prev {
            let d = (a - b + PI).rem_euclid(TAU) - PI;
            worst = worst.max(d.abs());
            total += d;
        }
        prev = Some(a);
    }
    Ok((total, worst))
}

/// Winding number of `θ ↦ X_f(c(θ))` around the origin.
pub fn curve_index(field: &VectorField, curve: &ClosedCurve) -> Result<i64> {
    check_curve(field, curve)?;
    let mut n = WINDING_SAMPLES;
    for attempt in 0..2 {
        let (total, worst) = winding_sum(field, curve, n)?;
        if worst < FRAC_PI_2 {
            let w = total / TAU;
            let r = w.round();
            if (w - r).abs() > 1e-6 {
                return Err(Error::Inconsistency(format!("winding sum {w} is not an integer")));
            }
            return Ok(r as i64);
        }
        if attempt == 1 {
            return Err(Error::StepResolution { increment: worst });
        }
        n *= 16;
    }
    unreachable!()
}

/// Pairs of tangencies at one level that a traced leaf joins.
fn shared_leaves(field: &VectorField, curve: &ClosedCurve, points: &[TangencyPoint]) -> Result<Vec<(usize, usize)>> {
    let perimeter = curve.perimeter();
    let step = perimeter / 4000.0;
    let mut pairs = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (a, b) = (&points[i], &points[j]);
            if (a.level - b.level).abs() > 1e-9 * (1.0 + a.level.abs()) {
                continue;
            }
            let controls = LeafControls { step, max_length: 4.0 * perimeter, window: None, extent: Extent::Both };
            let arc = trace_leaf(field, a.position, Component::F, &controls)?;
            let near = arc.points.windows(2).any(|w| point_segment_distance(b.position, w[0], w[1]) < 2.0 * step);
            if near {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Whether the extrema of `f|_C` sit at distinct external tangencies.
fn extrema_check(field: &VectorField, curve: &ClosedCurve, points: &[TangencyPoint]) -> bool {
    let n = 4096;
    let vals: Vec<f64> = (0..n).map(|k| field.scalar(Component::F, curve.point(TAU * k as f64 / n as f64))).collect();
    let arg = |better: fn(f64, f64) -> bool| {
        let mut k = 0;
        for i in 1..n {
            if better(vals[i], vals[k]) {
                k = i;
            }
        }
        TAU * k as f64 / n as f64
    };
    let nearest = |th: f64| {
        points.iter().enumerate().min_by(|a, b| {
            let da = (a.1.theta - th + PI).rem_euclid(TAU) - PI;
            let db = (b.1.theta - th + PI).rem_euclid(TAU) - PI;
            da.abs().total_cmp(&db.abs())
        })
    };
    let (Some(lo), Some(hi)) = (nearest(arg(|a, b| a < b)), nearest(arg(|a, b| a > b))) else {
        return false;
    };
    lo.0 != hi.0 && lo.1.klass == TangencyClass::External && hi.1.klass == TangencyClass::External
}

pub fn tangency_report_with(field: &VectorField, curve: &ClosedCurve, controls: &TangencyControls) -> Result<TangencyReport> {
    let points = scan(field, curve, controls)?;
    let index_winding = curve_index(field, curve)?;
    let count = |k: TangencyClass| points.iter().filter(|t| t.klass == k).count();
    let (n_ext, n_int, n_degenerate) =
        (count(TangencyClass::External), count(TangencyClass::Internal), count(TangencyClass::Degenerate));
    let index_formula = (2.0 - n_ext as f64 + n_int as f64) / 2.0;
    let shared_leaf_pairs = if controls.leaf_check && n_degenerate == 0 {
        shared_leaves(field, curve, &points)?
    } else {
        Vec::new()
    };
    let general_position = n_degenerate == 0 && shared_leaf_pairs.is_empty();
    let extrema_external = extrema_check(field, curve, &points);
    Ok(TangencyReport {
        curve: curve.clone(),
        points,
        n_ext,
        n_int,
        n_degenerate,
        index_formula,
        index_winding,
        formula_holds: index_formula == index_winding as f64,
        general_position,
        shared_leaf_pairs,
        extrema_external,
    })
}

pub fn tangency_report(field: &VectorField, curve: &ClosedCurve) -> Result<TangencyReport> {
    tangency_report_with(field, curve, &TangencyControls::default())
}

/// Report for `curve`, or for a jittered copy when `curve` is not in general
/// position. Returns the number of jitters applied.
pub fn general_position_report(
    field: &VectorField,
    curve: &ClosedCurve,
    controls: &TangencyControls,
    seed: u64,
) -> Result<(TangencyReport, usize)> {
    let mut report = tangency_report_with(field, curve, controls)?;
    let amp = JITTER_REL_AMPLITUDE * curve.min_rho();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut retries = 0;
    while !report.general_position && retries < JITTER_RETRIES {
        retries += 1;
        let jittered = curve.jittered(&mut rng, amp, 3);
        report = tangency_report_with(field, &jittered, controls)?;
    }
    Ok((report, retries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveFamily {
    Circles,
    StarShaped { perturbations: usize, seed: u64 },
}

impl Default for CurveFamily {
    fn default() -> Self {
        CurveFamily::StarShaped { perturbations: 32, seed: 0 }
    }
}

/// Family curves hug `D_r` from outside with this relative clearance.
const FAMILY_CLEARANCE: f64 = 0.01;
const STAR_HARMONICS: usize = 4;
const STAR_AMPLITUDE: f64 = 0.05;

impl CurveFamily {
    /// Curves of the family built for radius `r`; each encloses `D_r`.
    /// The same seed gives the same shapes, scaled, at every radius.
    pub fn curves(&self, r: f64) -> Vec<ClosedCurve> {
        let base = r * (1.0 + FAMILY_CLEARANCE);
        let mut out = vec![ClosedCurve::circle(base)];
        if let CurveFamily::StarShaped { perturbations, seed } = *self {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..perturbations {
                let mut cos = Vec::with_capacity(STAR_HARMONICS);
                let mut sin = Vec::with_capacity(STAR_HARMONICS);
                for _ in 0..STAR_HARMONICS {
                    cos.push(r * STAR_AMPLITUDE * rng.gen_range(-1.0..1.0));
                    sin.push(r * STAR_AMPLITUDE * rng.gen_range(-1.0..1.0));
                }
                let lift: f64 = cos.iter().chain(&sin).map(|v: &f64| v.abs()).sum();
                out.push(ClosedCurve::star(base + lift, cos, sin));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub radius: f64,
    /// Minimum of `n^i` over usable curves enclosing `D_radius`; an upper
    /// bound for the true minimum over all general-position curves.
    pub n_int_min: Option<usize>,
    pub upper_bound: bool,
    pub curves: usize,
    pub general_position: usize,
    pub formula_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSweep {
    pub family: CurveFamily,
    pub rows: Vec<EtaRow>,
    pub monotone: bool,
    /// Row indices whose minimum drops below the previous row's.
    pub violations: Vec<usize>,
}

/// Minimal internal-tangency counts over a finite curve family. A curve
/// built for radius `r'` also encloses `D_r` for `r < r'`, so the candidates
/// at `r` are all curves built for radii `≥ r`.
pub fn eta_sweep(field: &VectorField, radii: &[f64], family: CurveFamily) -> Result<EtaSweep> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r >= field.sigma())) {
        return Err(Error::Precondition(format!("radii must be finite and at least {}", field.sigma())));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("radii must be strictly increasing".into()));
    }
    let seed = match family {
        CurveFamily::StarShaped { seed, .. } => seed,
        CurveFamily::Circles => 0,
    };
    let jobs: Vec<(usize, usize, ClosedCurve)> = radii
        .iter()
        .enumerate()
        .flat_map(|(i, &r)| family.curves(r).into_iter().enumerate().map(move |(k, c)| (i, k, c)))
        .collect();
    let controls = TangencyControls::default();
    // Curves the analysis cannot handle are dropped from the family.
    let reports: Vec<(usize, Option<TangencyReport>)> = jobs
        .par_iter()
        .map(|(i, k, c)| {
            let jitter_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add((*i as u64) << 32 | *k as u64);
            match general_position_report(field, c, &controls, jitter_seed) {
                Ok((rep, _)) => Ok((*i, Some(rep))),
                Err(Error::VanishingGradient { .. } | Error::StepResolution { .. } | Error::Precondition(_)) => {
                    Ok((*i, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(radii.len());
    for (i, &radius) in radii.iter().enumerate() {
        let own = reports.iter().filter(|(j, _)| *j == i);
        let curves = own.clone().count();
        let general_position = own.clone().filter(|(_, r)| r.as_ref().is_some_and(|r| r.general_position)).count();
        let formula_failures = own.filter(|(_, r)| r.as_ref().is_some_and(|r| !r.formula_holds)).count();
        let n_int_min = reports
            .iter()
            .filter(|(j, _)| *j >= i)
            .filter_map(|(_, r)| r.as_ref())
            .filter(|r| r.general_position)
            .map(|r| r.n_int)
            .min();
        rows.push(EtaRow { radius, n_int_min, upper_bound: true, curves, general_position, formula_failures });
    }
    let violations: Vec<usize> = (1..rows.len())
        .filter(|&i| match (rows[i - 1].n_int_min, rows[i].n_int_min) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        })
        .collect();
    Ok(EtaSweep { family, rows, monotone: violations.is_empty(), violations })
}
