//! Attractor/repellor classification of the point at infinity through a
//! ladder of transversal curves and escape of the trajectories crossing it.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Translated, VectorField};
use crate::flow::{self, classify_limit, Direction, LimitKind, Trajectory};
use crate::geom::Vec2;
use crate::index::{compute_index, IndexControls, IndexEstimate, IndexValue};
use crate::tangency::ClosedCurve;

pub const ZERO_MARGIN_REL: f64 = 1e-4;
pub const TRANSVERSALITY_REL: f64 = 1e-6;
pub const PERIODICITY_TOL: f64 = 1e-6;
pub const MIN_RUNGS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationControls {
    /// Annulus `[r_inner, r_outer]`; both default from the ladder radii.
    pub r_inner: Option<f64>,
    pub r_outer: Option<f64>,
    pub radial_samples: usize,
    pub angular_samples: usize,
    /// Half-width of the search grid around `-mean(X)`, in grid steps.
    pub grid_half_width: usize,
}

impl Default for TranslationControls {
    fn default() -> Self {
        Self { r_inner: None, r_outer: None, radial_samples: 64, angular_samples: 512, grid_half_width: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationChoice {
    pub v: Vec2,
    /// Smallest `|X + v| / (1e-4 |p|)` over the samples; above 1 clears.
    pub clearance: f64,
    pub candidates_tried: usize,
}

fn annulus_points(r_inner: f64, r_outer: f64, nr: usize, na: usize) -> Vec<Vec2> {
    let nr = nr.max(2);
    let mut out = Vec::with_capacity(nr * na);
    for i in 0..nr {
        let r = r_inner * (r_outer / r_inner).powf(i as f64 / (nr - 1) as f64);
        for j in 0..na {
            // Stagger rings so the angular grid does not line up radially.
            out.push(Vec2::polar(r, TAU * (j as f64 + 0.5 * (i % 2) as f64) / na as f64));
        }
    }
    out
}

fn clearance(field: &VectorField, v: Vec2, pts: &[Vec2]) -> f64 {
    pts.iter().map(|&p| (field.value(p) + v).norm() / (ZERO_MARGIN_REL * p.norm())).fold(f64::INFINITY, f64::min)
}

/// Winding of `X + v` along the circle of radius `r`, or `None` if the
/// increments stay too coarse after one refinement.
fn circle_winding(field: &VectorField, v: Vec2, r: f64) -> Option<i64> {
    for n in [4096usize, 65536] {
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        let mut prev = (field.value(Vec2::polar(r, 0.0)) + v).angle();
        for k in 1..=n {
            let a = (field.value(Vec2::polar(r, TAU * (k % n) as f64 / n as f64)) + v).angle();
            let d = (a - prev + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
            worst = worst.max(d.abs());
            total += d;
            prev = a;
        }
        if worst < std::f64::consts::FRAC_PI_2 {
            return Some((total / TAU).round() as i64);
        }
    }
    None
}

/// Sampled margin plus a degree check: a zero between the two boundary
/// circles changes the winding even when no sample lands near it.
fn clears(field: &VectorField, v: Vec2, pts: &[Vec2], r_inner: f64, r_outer: f64) -> (bool, f64) {
    let c = clearance(field, v, pts);
    if c <= 1.0 {
        return (false, c);
    }
    match (circle_winding(field, v, r_inner), circle_winding(field, v, r_outer)) {
        (Some(a), Some(b)) if a == b => (true, c),
        _ => (false, c.min(1.0)),
    }
}

/// A translation `v` for which `X + v` clears the zero margin on the
/// annulus. `v = 0` is preferred; otherwise a grid around minus the mean
/// of `X` on the inner circle is searched, nearest candidates first.
pub fn choose_translation(field: &VectorField, radii: &[f64], controls: &TranslationControls) -> Result<TranslationChoice> {
    let sigma = field.sigma();
    let r_inner = controls.r_inner.or_else(|| radii.first().copied()).unwrap_or(1.5 * sigma);
    let r_outer = controls.r_outer.or_else(|| radii.last().copied()).unwrap_or(8.0 * sigma);
    if !(r_inner > sigma && r_outer >= r_inner && r_outer.is_finite()) {
        return Err(Error::Precondition(format!("translation annulus [{r_inner}, {r_outer}] must lie outside radius {sigma}")));
    }
    let pts = annulus_points(r_inner, r_outer, controls.radial_samples, controls.angular_samples);
    let (ok, c0) = clears(field, Vec2::ZERO, &pts, r_inner, r_outer);
    if ok {
        return Ok(TranslationChoice { v: Vec2::ZERO, clearance: c0, candidates_tried: 1 });
    }
    let n = controls.angular_samples;
    let mean = (0..n).map(|k| field.value(Vec2::polar(r_inner, TAU * k as f64 / n as f64))).fold(Vec2::ZERO, |a, b| a + b)
        * (1.0 / n as f64);
    let center = -mean;
    let step = 0.25 * (1.0 + mean.norm());
    let g = controls.grid_half_width as i64;
    let mut offsets: Vec<(i64, i64)> = (-g..=g).flat_map(|i| (-g..=g).map(move |j| (i, j))).collect();
    offsets.sort_by_key(|&(i, j)| (i * i + j * j, i, j));
    let mut best = c0;
    for (tried, (i, j)) in (2..).zip(offsets) {
        let v = center + Vec2::new(i as f64, j as f64) * step;
        let (ok, c) = clears(field, v, &pts, r_inner, r_outer);
        if ok {
            return Ok(TranslationChoice { v, clearance: c, candidates_tried: tried });
        }
        best = best.max(c);
    }
    Err(Error::SearchFailure { best_clearance: best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSearch {
    pub samples: usize,
    /// Trig-polynomial coefficients (cosine and sine terms together).
    pub coefficients: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for CurveSearch {
    fn default() -> Self {
        Self { samples: 4096, coefficients: 8, iterations: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub radius: f64,
    pub curve: ClosedCurve,
    /// `min |⟨X+v, η⟩|` over the samples.
    pub min_normal: f64,
    pub margin: f64,
    /// `+1` when the flow crosses outward, `-1` inward, `0` when mixed.
    pub sign: i8,
    pub accepted: bool,
    pub round: bool,
    pub search_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalLadder {
    pub v: Vec2,
    pub rungs: Vec<Rung>,
    /// Radii of the accepted rungs.
    pub radii: Vec<f64>,
    pub sign_coherent: bool,
}

impl TransversalLadder {
    pub fn accepted(&self) -> impl Iterator<Item = &Rung> {
        self.rungs.iter().filter(|r| r.accepted)
    }

    /// Common crossing direction of the accepted rungs.
    pub fn sign(&self) -> i8 {
        if self.sign_coherent {
            self.accepted().next().map_or(0, |r| r.sign)
        } else {
            0
        }
    }

    /// Rows `rung,radius,theta,x,y`.
    pub fn to_csv(&self, samples: usize) -> String {
        let mut out = String::from("rung,radius,theta,x,y\n");
        for (k, r) in self.accepted().enumerate() {
            for j in 0..samples {
                let th = TAU * j as f64 / samples as f64;
                let p = r.curve.point(th);
                out.push_str(&format!("{},{},{},{},{}\n", k, r.radius, th, p.x, p.y));
            }
        }
        out
    }
}

/// Normal components `⟨Y, η⟩` (outward `η`) at `n` samples, with the
/// transversality margin `1e-6 (1 + max |Y|)`.
fn normal_profile(y: &VectorField, curve: &ClosedCurve, n: usize) -> (Vec<f64>, f64) {
    let mut max_norm: f64 = 0.0;
    let vals = (0..n)
        .map(|k| {
            let th = TAU * k as f64 / n as f64;
            let val = y.value(curve.point(th));
            max_norm = max_norm.max(val.norm());
            -val.dot(curve.inward_normal(th))
        })
        .collect();
    (vals, TRANSVERSALITY_REL * (1.0 + max_norm))
}

/// `(min |n|, sign, transversal)` of a profile.
fn judge(vals: &[f64], margin: f64) -> (f64, i8, bool) {
    let min_abs = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let sign = if vals.iter().all(|&v| v > 0.0) {
        1
    } else if vals.iter().all(|&v| v < 0.0) {
        -1
    } else {
        0
    };
    (min_abs, sign, sign != 0 && min_abs > margin)
}

fn star_from(r: f64, params: &[f64]) -> ClosedCurve {
    let h = params.len() / 2;
    let cos = params[..h].iter().map(|c| c * r).collect::<Vec<_>>();
    let sin = params[h..2 * h].iter().map(|c| c * r).collect::<Vec<_>>();
    let lift: f64 = cos.iter().chain(&sin).map(|c: &f64| c.abs()).sum();
    // Keeping ρ above r·1.001 keeps D_r inside the curve.
    ClosedCurve::star(r * 1.001 + lift, cos, sin)
}

/// Maximizes `min_θ s·⟨Y, η⟩ / margin` over star curves around `D_r` by a
/// seeded (1+1) local search with step adaptation.
fn search_star(y: &VectorField, r: f64, sign: f64, search: &CurveSearch, rng: &mut ChaCha8Rng) -> (ClosedCurve, usize) {
    let probe = 512.min(search.samples);
    let score = |c: &ClosedCurve| {
        let (vals, margin) = normal_profile(y, c, probe);
        vals.iter().map(|v| sign * v).fold(f64::INFINITY, f64::min) / margin
    };
    let dim = search.coefficients.max(2) & !1;
    let mut best = vec![0.0; dim];
    let mut best_curve = star_from(r, &best);
    let mut best_score = score(&best_curve);
    let mut step = 0.05;
    for it in 0..search.iterations {
        if best_score > 2.0 {
            return (best_curve, it);
        }
        let cand: Vec<f64> = best.iter().map(|c| c + step * rng.gen_range(-1.0..1.0)).collect();
        let curve = star_from(r, &cand);
        let s = score(&curve);
        if s > best_score {
            best = cand;
            best_curve = curve;
            best_score = s;
            step *= 1.5;
        } else {
            step *= 0.9;
        }
    }
    (best_curve, search.iterations)
}

pub fn find_transversal_ladder(field: &VectorField, v: Vec2, radii: &[f64], search: &CurveSearch) -> Result<TransversalLadder> {
    if radii.iter().any(|r| !(r.is_finite() && *r > field.sigma())) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(format!(
            "ladder radii must increase strictly and exceed {}",
            field.sigma()
        )));
    }
    let y = VectorField::new(std::sync::Arc::new(Translated::new(field.clone(), v)));
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut rungs = Vec::with_capacity(radii.len());
    for &r in radii {
        let circle = ClosedCurve::circle(r);
        let (vals, margin) = normal_profile(&y, &circle, search.samples);
        let (min_normal, sign, ok) = judge(&vals, margin);
        if ok {
            rungs.push(Rung { radius: r, curve: circle, min_normal, margin, sign, accepted: true, round: true, search_iterations: 0 });
            continue;
        }
        let mean = vals.iter().sum::<f64>();
        let mut found = None;
        let mut last = None;
        let order = if mean >= 0.0 { [1.0, -1.0] } else { [-1.0, 1.0] };
        for s in order {
            let (curve, its) = search_star(&y, r, s, search, &mut rng);
            let (vals, margin) = normal_profile(&y, &curve, search.samples);
            let (min_normal, sign, ok) = judge(&vals, margin);
            let rung = Rung { radius: r, curve, min_normal, margin, sign, accepted: ok, round: false, search_iterations: its };
            if ok {
                found = Some(rung);
                break;
            }
            last = Some(rung);
        }
        rungs.push(found.or(last).expect("at least one search ran"));
    }
    let accepted: Vec<&Rung> = rungs.iter().filter(|r| r.accepted).collect();
    let sign_coherent = accepted.windows(2).all(|w| w[0].sign == w[1].sign);
    let radii_ok = accepted.iter().map(|r| r.radius).collect::<Vec<_>>();
    Ok(TransversalLadder { v, rungs, radii: radii_ok, sign_coherent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Attractor,
    Repellor,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    pub seeds: usize,
    pub forward_escapes: usize,
    pub backward_escapes: usize,
    pub forward_fraction: f64,
    pub backward_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfinityControls {
    /// Ladder radii; default `σ · (1.5, 2, 4, 8)`. Slowly drifting fields
    /// lose transversality against the scale-aware margin at large radii.
    pub radii: Option<Vec<f64>>,
    pub seeds: usize,
    pub translation: TranslationControls,
    pub curve_search: CurveSearch,
    pub flow: flow::Controls,
    pub index: IndexControls,
    /// Index values within this of zero count as `I ≥ 0`.
    pub index_zero_tol: f64,
}

impl Default for InfinityControls {
    fn default() -> Self {
        Self {
            radii: None,
            seeds: 64,
            translation: TranslationControls::default(),
            curve_search: CurveSearch::default(),
            flow: flow::Controls::default(),
            index: IndexControls::default(),
            index_zero_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfinityVerdict {
    pub verdict: Verdict,
    pub v: Vec2,
    pub ladder: TransversalLadder,
    pub ladder_ok: bool,
    pub escape_stats: EscapeStats,
    pub periodicity_flag: bool,
    /// Smallest first-return distance seen, if any orbit completed a turn.
    pub closest_return: Option<f64>,
    pub index: IndexEstimate,
    pub index_sign_consistent: bool,
}

pub fn default_radii(sigma: f64) -> Vec<f64> {
    [1.5, 2.0, 4.0, 8.0].iter().map(|k| k * sigma).collect()
}

fn returns_periodically(traj: &Trajectory, inner: f64) -> Option<f64> {
    let fr = traj.first_return.as_ref()?;
    let outside = traj.samples.iter().take_while(|s| s.t.abs() <= fr.t.abs()).all(|s| s.p.norm() >= inner);
    outside.then_some(fr.distance)
}

pub fn classify_infinity(field: &VectorField, controls: &InfinityControls) -> Result<InfinityVerdict> {
    let sigma = field.sigma();
    let radii = controls.radii.clone().unwrap_or_else(|| default_radii(sigma));
    let choice = choose_translation(field, &radii, &controls.translation)?;
    let ladder = find_transversal_ladder(field, choice.v, &radii, &controls.curve_search)?;
    let ladder_ok = ladder.radii.len() >= MIN_RUNGS && ladder.sign_coherent;
    let y = VectorField::new(std::sync::Arc::new(Translated::new(field.clone(), choice.v)));

    let outer = ladder.accepted().last().map(|r| r.curve.clone()).unwrap_or_else(|| ClosedCurve::circle(radii[radii.len() - 1]));
    let inner = ladder.accepted().next().map_or(radii[0], |r| r.curve.min_rho());
    let n = controls.seeds.max(1);
    let seeds: Vec<Vec2> = (0..n).map(|k| outer.point(TAU * k as f64 / n as f64)).collect();
    let far = seeds.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let escape = flow::Ladder { r0: 2.0 * far, factor: 2.0, rungs: 4 };
    let fc = flow::Controls { r_max: Some(escape.top() * 1.001), ..controls.flow.clone() };
    let fwd = flow::integrate_batch(&y, &seeds, Direction::Forward, &fc)?;
    let bwd = flow::integrate_batch(&y, &seeds, Direction::Backward, &fc)?;
    let escapes = |ts: &[Trajectory]| ts.iter().filter(|t| classify_limit(t, &escape).kind == LimitKind::GoesToInfinity).count();
    let (fe, be) = (escapes(&fwd), escapes(&bwd));
    let escape_stats = EscapeStats {
        seeds: n,
        forward_escapes: fe,
        backward_escapes: be,
        forward_fraction: fe as f64 / n as f64,
        backward_fraction: be as f64 / n as f64,
    };
    let closest_return =
        fwd.iter().chain(&bwd).filter_map(|t| returns_periodically(t, inner)).fold(None, |a: Option<f64>, d| Some(a.map_or(d, |a| a.min(d))));
    let periodicity_flag = closest_return.is_some_and(|d| d < PERIODICITY_TOL);

    let verdict = if !ladder_ok || periodicity_flag {
        Verdict::Inconclusive
    } else if fe == n && be < n {
        Verdict::Attractor
    } else if be == n && fe < n {
        Verdict::Repellor
    } else {
        Verdict::Inconclusive
    };

    let index = compute_index(field, &controls.index)?;
    let nonneg = match index.value {
        IndexValue::Finite(v) => Some(v >= -controls.index_zero_tol),
        IndexValue::PlusInfinity => Some(true),
        IndexValue::MinusInfinity => Some(false),
        IndexValue::Unreliable => None,
    };
    let index_sign_consistent = matches!((verdict, nonneg), (Verdict::Attractor, Some(true)) | (Verdict::Repellor, Some(false)));
    Ok(InfinityVerdict {
        verdict,
        v: choice.v,
        ladder,
        ladder_ok,
        escape_stats,
        periodicity_flag,
        closest_return,
        index,
        index_sign_consistent,
    })
}
