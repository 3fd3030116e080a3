//! Closed star-shaped curves parameterized by the polar angle.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Samples used for the geometric validity checks.
const CHECK_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedCurve {
    Circle {
        center: Vec2,
        radius: f64,
    },
    /// `c(θ) = center + ρ(θ)(cos θ, sin θ)` with
    /// `ρ(θ) = a0 + Σ_k (a_k cos kθ + b_k sin kθ)`.
    Star {
        center: Vec2,
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
}

impl ClosedCurve {
    pub fn circle(radius: f64) -> Self {
        ClosedCurve::Circle { center: Vec2::ZERO, radius }
    }

    pub fn circle_at(center: Vec2, radius: f64) -> Self {
        ClosedCurve::Circle { center, radius }
    }

    pub fn star(a0: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        ClosedCurve::Star { center: Vec2::ZERO, a0, cos, sin }
    }

    pub fn center(&self) -> Vec2 {
        match self {
            ClosedCurve::Circle { center, .. } | ClosedCurve::Star { center, .. } => *center,
        }
    }

    /// `(ρ, ρ', ρ'')` at `θ`.
    fn rho(&self, theta: f64) -> (f64, f64, f64) {
        match self {
            ClosedCurve::Circle { radius, .. } => (*radius, 0.0, 0.0),
            ClosedCurve::Star { a0, cos, sin, .. } => {
                let (mut r, mut d, mut dd) = (*a0, 0.0, 0.0);
                for (k, (a, b)) in cos.iter().zip(sin).enumerate() {
                    let k = (k + 1) as f64;
                    let (s, c) = (k * theta).sin_cos();
                    r += a * c + b * s;
                    d += k * (-a * s + b * c);
                    dd += -k * k * (a * c + b * s);
                }
                (r, d, dd)
            }
        }
    }

    pub fn point(&self, theta: f64) -> Vec2 {
        let (r, _, _) = self.rho(theta);
        self.center() + Vec2::polar(r, theta)
    }

    /// `c'(θ)`; points counterclockwise.
    pub fn tangent(&self, theta: f64) -> Vec2 {
        let (r, d, _) = self.rho(theta);
        let (s, c) = theta.sin_cos();
        Vec2::new(d * c - r * s, d * s + r * c)
    }

    /// Inward normal: the tangent rotated counterclockwise.
    pub fn inward_normal(&self, theta: f64) -> Vec2 {
        self.tangent(theta).perp().normalized()
    }

    pub fn min_rho(&self) -> f64 {
        (0..CHECK_SAMPLES).map(|k| self.rho(TAU * k as f64 / CHECK_SAMPLES as f64).0).fold(f64::INFINITY, f64::min)
    }

    /// Largest `s` (sampled) with `D_s` inside the region the curve bounds.
    pub fn encloses_radius(&self) -> f64 {
        (self.min_rho() - self.center().norm()).max(0.0)
    }

    pub fn min_origin_distance(&self) -> f64 {
        (0..CHECK_SAMPLES).map(|k| self.point(TAU * k as f64 / CHECK_SAMPLES as f64).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Arc length by the trapezoid rule.
    pub fn perimeter(&self) -> f64 {
        let n = CHECK_SAMPLES;
        (0..n).map(|k| self.tangent(TAU * k as f64 / n as f64).norm()).sum::<f64>() * TAU / n as f64
    }

    /// Checks `ρ > 0` (a polar graph with positive radius is simple) and that
    /// the curve stays strictly outside the closed disk of radius `sigma`.
    pub fn validate(&self, sigma: f64) -> Result<()> {
        let params_ok = match self {
            ClosedCurve::Circle { center, radius } => center.is_finite() && radius.is_finite(),
            ClosedCurve::Star { center, a0, cos, sin } => {
                center.is_finite() && a0.is_finite() && cos.len() == sin.len()
                    && cos.iter().chain(sin).all(|v| v.is_finite())
            }
        };
        if !params_ok {
            return Err(Error::Precondition("curve parameters must be finite".into()));
        }
        if !(self.min_rho() > 0.0) {
            return Err(Error::Precondition("curve radius function must stay positive".into()));
        }
        let d = self.min_origin_distance();
        if !(d > sigma) {
            return Err(Error::Precondition(format!("curve comes within {d} of the origin; it must stay outside radius {sigma}")));
        }
        Ok(())
    }

    /// Same curve with extra low-order terms of amplitude `amp` in `ρ`.
    pub fn jittered<R: Rng>(&self, rng: &mut R, amp: f64, harmonics: usize) -> ClosedCurve {
        let (center, a0, mut cos, mut sin) = match self {
            ClosedCurve::Circle { center, radius } => (*center, *radius, Vec::new(), Vec::new()),
            ClosedCurve::Star { center, a0, cos, sin } => (*center, *a0, cos.clone(), sin.clone()),
        };
        cos.resize(cos.len().max(harmonics), 0.0);
        sin.resize(sin.len().max(harmonics), 0.0);
        for k in 0..harmonics {
            cos[k] += amp * rng.gen_range(-1.0..1.0);
            sin[k] += amp * rng.gen_range(-1.0..1.0);
        }
        ClosedCurve::Star { center, a0, cos, sin }
    }

    /// Rows `theta,x,y` over `n` samples.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("theta,x,y\n");
        for k in 0..n {
            let th = TAU * k as f64 / n as f64;
            let p = self.point(th);
            out.push_str(&format!("{},{},{}\n", th, p.x, p.y));
        }
        out
    }
}
