//! Leaf tracing for the foliations by level sets of `f` and `g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Component, VectorField};
use crate::geom::{Rect, Vec2};

/// Gradients below this norm make the leaf direction undefined.
pub const MIN_GRADIENT: f64 = 1e-12;

pub fn leaf_tol(level: f64) -> f64 {
    1e-8 * (1.0 + level.abs())
}

pub const MONOTONICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extent {
    Both,
    /// The half-leaf on which the transverse coordinate grows.
    Positive,
    /// The half-leaf on which the transverse coordinate decreases.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafEnd {
    /// Stopped at the start point (only for the side not traced).
    Start,
    Window,
    InnerDisk,
    LengthBudget,
    Closed,
    /// Crossed the stop segment supplied by the caller.
    Crossed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafControls {
    pub step: f64,
    /// Arc-length budget per direction.
    pub max_length: f64,
    pub window: Option<Rect>,
    pub extent: Extent,
}

impl Default for LeafControls {
    fn default() -> Self {
        Self { step: 0.01, max_length: 20.0, window: None, extent: Extent::Both }
    }
}

/// An arc of `{h = c}` ordered so that the other coordinate increases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafArc {
    pub component: Component,
    pub level: f64,
    pub points: Vec<Vec2>,
    pub start_index: usize,
    /// How the arc ends before its first point and after its last point.
    pub ends: [LeafEnd; 2],
}

impl LeafArc {
    pub fn start(&self) -> Vec2 {
        self.points[self.start_index]
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Largest `|h - c|` over the stored points.
    pub fn max_residual(&self, field: &VectorField) -> f64 {
        self.points
            .iter()
            .map(|&p| (field.scalar(self.component, p) - self.level).abs())
            .fold(0.0, f64::max)
    }

    /// Rows `x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.x, p.y));
        }
        out
    }
}

/// Result of tracing in one direction.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Points after the start, in tracing order.
    pub points: Vec<Vec2>,
    pub end: LeafEnd,
    pub crossing: Option<Vec2>,
}

/// Unit leaf direction at `p`, times `dir`.
fn unit_tangent(field: &VectorField, comp: Component, p: Vec2, dir: f64) -> Result<Vec2> {
    let t = field.leaf_tangent(comp, p);
    let n = t.norm();
    if !(n >= MIN_GRADIENT) {
        return Err(Error::VanishingGradient { point: p });
    }
    Ok(t * (dir / n))
}

/// Newton steps along the gradient back onto `{h = level}`.
pub fn project(field: &VectorField, comp: Component, mut p: Vec2, level: f64) -> Result<Vec2> {
    let tol = 1e-13 * (1.0 + level.abs());
    for _ in 0..8 {
        let r = field.scalar(comp, p) - level;
        if r.abs() <= tol {
            break;
        }
        let grad = field.gradient(comp, p);
        let g2 = grad.norm_sq();
        if !(g2.sqrt() >= MIN_GRADIENT) {
            return Err(Error::VanishingGradient { point: p });
        }
        p -= grad * (r / g2);
    }
    Ok(p)
}

pub(crate) fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> Option<Vec2> {
    let r = b - a;
    let s = d - c;
    let den = r.cross(s);
    if den == 0.0 {
        return None;
    }
    let t = (c - a).cross(s) / den;
    let u = (c - a).cross(r) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| a + r * t)
}

/// Traces `{h = level}` from `start` along `dir · tangent` with RK4 in arc
/// length, projecting back onto the level after every step.
#[allow(clippy::too_many_arguments)]
pub fn trace_direction(
    field: &VectorField,
    comp: Component,
    start: Vec2,
    level: f64,
    dir: f64,
    step: f64,
    max_length: f64,
    window: Option<&Rect>,
    stop_segment: Option<(Vec2, Vec2)>,
) -> Result<Trace> {
    let sigma = field.sigma();
    let mut points = Vec::new();
    let mut p = start;
    let mut travelled = 0.0;
    let end = loop {
        if travelled >= max_length {
            break LeafEnd::LengthBudget;
        }
        let h = step.min(max_length - travelled);
        let k1 = unit_tangent(field, comp, p, dir)?;
        let k2 = unit_tangent(field, comp, p + k1 * (0.5 * h), dir)?;
        let k3 = unit_tangent(field, comp, p + k2 * (0.5 * h), dir)?;
        let k4 = unit_tangent(field, comp, p + k3 * h, dir)?;
        let q = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if q.norm() < sigma {
            break LeafEnd::InnerDisk;
        }
        let q = project(field, comp, q, level)?;
        if q.norm() < sigma {
            break LeafEnd::InnerDisk;
        }
        if let Some(w) = window {
            if !w.contains(q) {
                break LeafEnd::Window;
            }
        }
        if let Some((a, b)) = stop_segment {
            if travelled > 0.0 {
                if let Some(x) = segments_cross(p, q, a, b) {
                    points.push(q);
                    return Ok(Trace { points, end: LeafEnd::Crossed, crossing: Some(x) });
                }
            }
        }
        travelled += h;
        if travelled > 4.0 * step && q.dist(start) < 0.75 * step {
            points.push(start);
            break LeafEnd::Closed;
        }
        p = q;
        points.push(p);
    };
    Ok(Trace { points, end, crossing: None })
}

/// Sign of the tangent direction along which the other coordinate grows.
fn increasing_direction(field: &VectorField, comp: Component, p: Vec2) -> f64 {
    let t = field.leaf_tangent(comp, p);
    let d = field.gradient(comp.other(), p).dot(t);
    if d >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn trace_leaf(field: &VectorField, start: Vec2, comp: Component, controls: &LeafControls) -> Result<LeafArc> {
    if !(start.norm() > field.sigma()) {
        return Err(Error::Precondition(format!(
            "leaf start ({}, {}) must lie outside the disk of radius {}",
            start.x,
            start.y,
            field.sigma()
        )));
    }
    if field.gradient(comp, start).norm() < MIN_GRADIENT {
        return Err(Error::VanishingGradient { point: start });
    }
    let level = field.scalar(comp, start);
    let up = increasing_direction(field, comp, start);
    let run = |sign: f64| {
        trace_direction(field, comp, start, level, sign, controls.step, controls.max_length, controls.window.as_ref(), None)
    };
    let (fwd, bwd) = match controls.extent {
        Extent::Both => (Some(run(up)?), Some(run(-up)?)),
        Extent::Positive => (Some(run(up)?), None),
        Extent::Negative => (None, Some(run(-up)?)),
    };
    let mut points = Vec::new();
    let mut ends = [LeafEnd::Start, LeafEnd::Start];
    if let Some(b) = &bwd {
        points.extend(b.points.iter().rev().copied());
        ends[0] = b.end;
    }
    let start_index = points.len();
    points.push(start);
    if let Some(f) = &fwd {
        points.extend(f.points.iter().copied());
        ends[1] = f.end;
    }
    Ok(LeafArc { component: comp, level, points, start_index, ends })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin::{LinearHurwitz, ModelReeb};

    #[test]
    fn vertical_leaf_of_linear_field_points_down() {
        let f = VectorField::from_field(LinearHurwitz::new());
        let c = LeafControls { max_length: 2.0, ..LeafControls::default() };
        let arc = trace_leaf(&f, Vec2::new(3.0, 1.0), Component::F, &c).unwrap();
        assert!(arc.points.iter().all(|p| (p.x - 3.0).abs() < 1e-12));
        assert!(arc.points.windows(2).all(|w| w[1].y < w[0].y));
        assert!((arc.length() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn hyperbola_leaf() {
        let f = VectorField::from_field(ModelReeb::new());
        let c = LeafControls { max_length: 3.0, ..LeafControls::default() };
        let arc = trace_leaf(&f, Vec2::new(1.0, 1.0), Component::F, &c).unwrap();
        assert!(arc.points.iter().all(|p| (p.x * p.y - 1.0).abs() < 1e-12 && p.x > 0.0));
    }

    #[test]
    fn crossing_detection() {
        let x = segments_cross(Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0), Vec2::new(2.0, 0.0));
        assert_eq!(x, Some(Vec2::new(1.0, 1.0)));
        assert!(segments_cross(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0))
            .is_none());
    }
}
