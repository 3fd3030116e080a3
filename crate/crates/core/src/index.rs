//! Index of a field at infinity: integral of the trace of a C¹ extension
//! over the plane, evaluated as outward flux on a geometric ladder of circles.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};
use crate::quadrature::{geometric_breaks, periodic_trapezoid, Composite};
use crate::VectorField;

pub const SEAM_H: f64 = 1e-6;
pub const SEAM_TOL: f64 = 1e-4;
const SEAM_SAMPLES: usize = 64;
const MAX_DOUBLINGS: usize = 3;

/// `X̂ = (1 - β) M + β X` with `M(z) = -k z` and `β` the C¹ smoothstep of
/// `(|z| - s)/s`, so `X̂ = M` on `D_s` and `X̂ = X` outside `D_{2s}`.
#[derive(Debug, Clone)]
pub struct ExtensionBlend {
    field: VectorField,
    pub s: f64,
    pub outer: f64,
    pub k: f64,
    /// Times `s` was doubled before the seam check passed.
    pub doublings: usize,
    pub seam_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionInfo {
    pub s: f64,
    pub outer: f64,
    pub k: f64,
    pub doublings: usize,
    pub seam_discrepancy: f64,
}

impl ExtensionBlend {
    fn ramp(&self, r: f64) -> (f64, f64) {
        if r <= self.s {
            return (0.0, 0.0);
        }
        if r >= self.outer {
            return (1.0, 0.0);
        }
        let t = (r - self.s) / (self.outer - self.s);
        (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / (self.outer - self.s))
    }

    pub fn value(&self, p: Vec2) -> Vec2 {
        let r = p.norm();
        let (b, _) = self.ramp(r);
        let m = p * (-self.k);
        if b == 0.0 {
            m
        } else if b == 1.0 {
            self.field.value(p)
        } else {
            m * (1.0 - b) + self.field.value(p) * b
        }
    }

    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        let r = p.norm();
        let (b, db) = self.ramp(r);
        let jm = Mat2::scaled(-self.k);
        if r <= self.s {
            return jm;
        }
        if r >= self.outer {
            return self.field.jacobian_unchecked(p);
        }
        let x = self.field.value(p);
        let grad_b = p * (db / r);
        jm.scale(1.0 - b).add(&self.field.jacobian_unchecked(p).scale(b)).add(&Mat2::outer(x - p * (-self.k), grad_b))
    }

    pub fn trace(&self, p: Vec2) -> f64 {
        self.jacobian(p).trace()
    }

    pub fn info(&self) -> ExtensionInfo {
        ExtensionInfo {
            s: self.s,
            outer: self.outer,
            k: self.k,
            doublings: self.doublings,
            seam_discrepancy: self.seam_discrepancy,
        }
    }

    /// Largest Jacobian jump across either seam circle, or infinity when
    /// the determinant is not positive on a seam.
    fn seam_check(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in [self.s, self.outer] {
            for k in 0..SEAM_SAMPLES {
                let u = Vec2::polar(1.0, TAU * k as f64 / SEAM_SAMPLES as f64);
                let inside = self.jacobian(u * (r - SEAM_H));
                let outside = self.jacobian(u * (r + SEAM_H));
                if !(inside.det() > 0.0 && outside.det() > 0.0) {
                    return f64::INFINITY;
                }
                worst = worst.max(inside.add(&outside.scale(-1.0)).max_abs());
            }
        }
        worst
    }
}

/// Blend with interior model `-k z`; doubles `s` up to three times when
/// the seam check fails.
pub fn build_extension(field: &VectorField, s: f64, k: f64) -> Result<ExtensionBlend> {
    if !(s.is_finite() && s >= field.sigma()) {
        return Err(Error::Precondition(format!("blend radius {s} must be at least {}", field.sigma())));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Precondition(format!("interior model scale {k} must be positive")));
    }
    let mut s = s;
    for doublings in 0..=MAX_DOUBLINGS {
        let mut blend =
            ExtensionBlend { field: field.clone(), s, outer: 2.0 * s, k, doublings, seam_discrepancy: 0.0 };
        blend.seam_discrepancy = blend.seam_check();
        if blend.seam_discrepancy <= SEAM_TOL {
            return Ok(blend);
        }
        s *= 2.0;
    }
    Err(Error::RegionConstruction(format!("blend seam check failed up to radius {}", s / 2.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexControls {
    /// Blend radius; defaults to `σ`.
    pub s: Option<f64>,
    /// Interior model `-k z`.
    pub k: f64,
    /// Ladder `R_j = base · 2^j`; base defaults to `4σ`.
    pub base: Option<f64>,
    pub rungs: usize,
    pub tol: f64,
    pub quad_tol: f64,
    pub circle_points: usize,
    pub area_check: bool,
    pub area_angles: usize,
    pub gl_order: usize,
}

impl Default for IndexControls {
    fn default() -> Self {
        Self {
            s: None,
            k: 1.0,
            base: None,
            rungs: 13,
            tol: 1e-6,
            quad_tol: 1e-7,
            circle_points: 4096,
            area_check: true,
            area_angles: 512,
            gl_order: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum IndexValue {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
    Unreliable,
}

impl IndexValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            IndexValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Finite values as is, divergent ones as `±∞`, unreliable as NaN.
    pub fn as_f64(self) -> f64 {
        match self {
            IndexValue::Finite(v) => v,
            IndexValue::PlusInfinity => f64::INFINITY,
            IndexValue::MinusInfinity => f64::NEG_INFINITY,
            IndexValue::Unreliable => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub value: IndexValue,
    pub radii: Vec<f64>,
    pub flux: Vec<f64>,
    /// `∮ |X̂| ds` per rung; sets the rounding floor of `flux`.
    pub flux_scale: Vec<f64>,
    /// Polar area quadrature of the trace over each `D_{R_j}`.
    pub area: Vec<f64>,
    /// Largest `|area - flux| / (1 + ∫|trace|)` over the ladder.
    pub max_area_gap: f64,
    /// Trace integral over `D_{2s}`.
    pub interior_contribution: f64,
    /// Slope of `log|flux|` against `log R` over the last four rungs.
    pub growth_exponent: f64,
    /// Decay order `q` in `flux(R) - I ~ R^-q`, when it can be fitted.
    pub convergence_order: Option<f64>,
    /// Last rung plus the Richardson correction for that order.
    pub extrapolated: Option<f64>,
    pub flux_decreasing: bool,
    pub extension: ExtensionInfo,
}

fn flux_at(blend: &ExtensionBlend, r: f64, n: usize) -> (f64, f64) {
    let mut abs = 0.0;
    let v = periodic_trapezoid(n, |t| {
        let u = Vec2::polar(1.0, t);
        let x = blend.value(u * r);
        abs += x.norm() * r;
        x.dot(u) * r
    });
    (v, abs * TAU / n as f64)
}

/// Cumulative `∫ trace` and `∫ |trace|` over each disk in `radii`.
fn area_ladder(blend: &ExtensionBlend, radii: &[f64], c: &IndexControls) -> (Vec<f64>, Vec<f64>) {
    let mut cuts: Vec<f64> = vec![blend.s, blend.outer];
    cuts.extend_from_slice(radii);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let mut breaks = vec![0.0];
    let mut prev = 0.0;
    for &b in &cuts {
        if prev == 0.0 {
            breaks.extend([0.5 * b, b]);
        } else {
            let m = ((b / prev).log2() * 4.0).ceil().max(1.0) as usize;
            breaks.extend(geometric_breaks(prev, b, m).into_iter().skip(1));
        }
        prev = b;
    }
    let rule = Composite::new(c.gl_order);
    let nodes = rule.nodes(&breaks);
    let rings: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&(r, w)| {
            let mut abs = 0.0;
            let v = periodic_trapezoid(c.area_angles, |t| {
                let tr = blend.trace(Vec2::polar(r, t));
                abs += tr.abs();
                tr
            });
            (w * r * v, w * r * abs * TAU / c.area_angles as f64)
        })
        .collect();
    let per_panel = c.gl_order.max(1);
    let mut area = Vec::with_capacity(radii.len());
    let mut area_abs = Vec::with_capacity(radii.len());
    let (mut acc, mut acc_abs) = (0.0, 0.0);
    let mut next = 0;
    for (p, w) in breaks.windows(2).enumerate() {
        for (v, a) in &rings[p * per_panel..(p + 1) * per_panel] {
            acc += v;
            acc_abs += a;
        }
        while next < radii.len() && (w[1] - radii[next]).abs() <= 1e-12 * radii[next] {
            area.push(acc);
            area_abs.push(acc_abs);
            next += 1;
        }
    }
    (area, area_abs)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn compute_index(field: &VectorField, controls: &IndexControls) -> Result<IndexEstimate> {
    let sigma = field.sigma();
    let blend = build_extension(field, controls.s.unwrap_or(sigma), controls.k)?;
    let base = controls.base.unwrap_or(4.0 * sigma);
    if !(base.is_finite() && base > 0.0) || controls.rungs < 5 || controls.circle_points < 16 {
        return Err(Error::Precondition("ladder needs a positive base, at least 5 rungs and 16 circle points".into()));
    }
    let radii: Vec<f64> = (0..controls.rungs).map(|j| base * 2f64.powi(j as i32)).collect();
    let fluxes: Vec<(f64, f64)> = radii.par_iter().map(|&r| flux_at(&blend, r, controls.circle_points)).collect();
    let flux: Vec<f64> = fluxes.iter().map(|v| v.0).collect();
    let flux_scale: Vec<f64> = fluxes.iter().map(|v| v.1).collect();
    let interior_contribution = flux_at(&blend, blend.outer, controls.circle_points).0;

    let (area, max_area_gap) = if controls.area_check {
        let (area, area_abs) = area_ladder(&blend, &radii, controls);
        let gap = area
            .iter()
            .zip(&flux)
            .zip(&area_abs)
            .map(|((a, f), s)| (a - f).abs() / (1.0 + s))
            .fold(0.0, f64::max);
        if gap > 10.0 * controls.quad_tol {
            return Err(Error::Inconsistency(format!(
                "flux and area quadrature of the trace disagree by {gap:.3e} (relative); the trace may not be integrable"
            )));
        }
        (area, gap)
    } else {
        (Vec::new(), 0.0)
    };

    let n = radii.len();
    let floor: Vec<f64> = flux_scale.iter().map(|a| 64.0 * f64::EPSILON * a).collect();
    let tail = n - 4..n;
    let significant = tail.clone().all(|j| flux[j].abs() > floor[j]);
    let same_sign = tail.clone().all(|j| flux[j] > 0.0) || tail.clone().all(|j| flux[j] < 0.0);
    let growth_exponent = if significant {
        let xs: Vec<f64> = tail.clone().map(|j| radii[j].ln()).collect();
        let ys: Vec<f64> = tail.clone().map(|j| flux[j].abs().ln()).collect();
        slope(&xs, &ys)
    } else {
        f64::NEG_INFINITY
    };
    let diffs: Vec<f64> = flux.windows(2).map(|w| w[1] - w[0]).collect();
    let last = flux[n - 1];
    let d_last = diffs[n - 2];
    let noise = floor[n - 1] + floor[n - 2];

    // Order fit from ratios of successive differences on the doubling ladder.
    let fit: Vec<f64> = diffs[diffs.len() - 3..]
        .windows(2)
        .filter(|w| w[0].abs() > noise && w[1].abs() > noise)
        .map(|w| (w[0].abs() / w[1].abs()).log2())
        .collect();
    let convergence_order = (fit.len() == 2).then(|| 0.5 * (fit[0] + fit[1]));
    let steady = fit.len() == 2 && (fit[0] - fit[1]).abs() < 0.25;
    let extrapolated = match convergence_order {
        Some(q) if steady && q >= 1.0 => Some(last + d_last / (2f64.powf(q) - 1.0)),
        _ => None,
    };

    let value = if significant && same_sign && growth_exponent > 0.5 {
        if last > 0.0 {
            IndexValue::PlusInfinity
        } else {
            IndexValue::MinusInfinity
        }
    } else if d_last.abs() <= controls.tol * (1.0 + last.abs()) + noise
        && (d_last.abs() <= diffs[n - 3].abs() || d_last.abs() <= noise)
    {
        IndexValue::Finite(extrapolated.unwrap_or(last))
    } else {
        IndexValue::Unreliable
    };
    let flux_decreasing = flux.windows(2).all(|w| w[1] < w[0]);

    Ok(IndexEstimate {
        value,
        radii,
        flux,
        flux_scale,
        area,
        max_area_gap,
        interior_contribution,
        growth_exponent,
        convergence_order,
        extrapolated,
        flux_decreasing,
        extension: blend.info(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub s: f64,
    pub k: f64,
    pub value: IndexValue,
    pub interior_contribution: f64,
    pub max_area_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionProbe {
    pub runs: Vec<ProbeRun>,
    /// Largest pairwise gap between finite values.
    pub max_discrepancy: Option<f64>,
    /// Every run gave the same class (finite, `+∞`, `-∞` or unreliable).
    pub consistent_class: bool,
}

pub const PROBE_MODELS: [f64; 2] = [1.0, 2.0];

/// Recomputes the index for every blend radius and the interior models
/// `-z` and `-2z`.
pub fn extension_independence_probe(field: &VectorField, s_values: &[f64], controls: &IndexControls) -> Result<ExtensionProbe> {
    if s_values.is_empty() || s_values.iter().any(|s| !(*s >= field.sigma())) {
        return Err(Error::Precondition(format!("blend radii must be at least {}", field.sigma())));
    }
    let mut runs = Vec::new();
    for &s in s_values {
        for k in PROBE_MODELS {
            let est = compute_index(field, &IndexControls { s: Some(s), k, ..controls.clone() })?;
            runs.push(ProbeRun {
                s,
                k,
                value: est.value,
                interior_contribution: est.interior_contribution,
                max_area_gap: est.max_area_gap,
            });
        }
    }
    let finite: Vec<f64> = runs.iter().filter_map(|r| r.value.finite()).collect();
    let max_discrepancy = (!finite.is_empty()).then(|| {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    });
    let class = |v: &IndexValue| std::mem::discriminant(v);
    let consistent_class = runs.iter().all(|r| class(&r.value) == class(&runs[0].value));
    Ok(ExtensionProbe { runs, max_discrepancy, consistent_class })
}
