//! Closed-form fields used by the registry.

use crate::field::PlanarField;
use crate::geom::{Mat2, Vec2};

/// `X(z) = -z`.
#[derive(Debug, Clone)]
pub struct LinearHurwitz {
    pub sigma: f64,
    /// Multiplier `k` in `-k z`; the registry uses 1.
    pub scale: f64,
}

impl LinearHurwitz {
    pub fn new() -> Self {
        Self { sigma: 1.0, scale: 1.0 }
    }
}

impl Default for LinearHurwitz {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanarField for LinearHurwitz {
    fn name(&self) -> &str {
        "linear_hurwitz"
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, p: Vec2) -> Vec2 {
        -self.scale * p
    }

    fn analytic_jacobian(&self, _p: Vec2) -> Option<Mat2> {
        Some(Mat2::scaled(-self.scale))
    }
}

/// Rotation plus a decaying inward push: `(-y, x) + ε(-x, -y)/(1+r²)`.
#[derive(Debug, Clone)]
pub struct RotDecayRepel {
    pub epsilon: f64,
}

impl RotDecayRepel {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon }
    }
}

impl PlanarField for RotDecayRepel {
    fn name(&self) -> &str {
        "rot_decay_repel"
    }

    fn sigma(&self) -> f64 {
        1.0
    }

    fn value(&self, p: Vec2) -> Vec2 {
        let w = 1.0 / (1.0 + p.norm_sq());
        Vec2::new(-p.y - self.epsilon * p.x * w, p.x - self.epsilon * p.y * w)
    }

    fn analytic_jacobian(&self, p: Vec2) -> Option<Mat2> {
        let (x, y, e) = (p.x, p.y, self.epsilon);
        let w = 1.0 / (1.0 + p.norm_sq());
        let w2 = w * w;
        Some(Mat2::new(
            -e * (w - 2.0 * x * x * w2),
            -1.0 + 2.0 * e * x * y * w2,
            1.0 + 2.0 * e * x * y * w2,
            -e * (w - 2.0 * y * y * w2),
        ))
    }
}

/// Rotation plus a decaying outward push: `(-y, x) + ε(x, y)/(1+r²)²`.
#[derive(Debug, Clone)]
pub struct RotFeedAttract {
    pub epsilon: f64,
}

impl RotFeedAttract {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon }
    }
}

impl PlanarField for RotFeedAttract {
    fn name(&self) -> &str {
        "rot_feed_attract"
    }

    fn sigma(&self) -> f64 {
        2.0
    }

    fn value(&self, p: Vec2) -> Vec2 {
        let q = 1.0 + p.norm_sq();
        let u = 1.0 / (q * q);
        Vec2::new(-p.y + self.epsilon * p.x * u, p.x + self.epsilon * p.y * u)
    }

    fn analytic_jacobian(&self, p: Vec2) -> Option<Mat2> {
        let (x, y, e) = (p.x, p.y, self.epsilon);
        let q = 1.0 + p.norm_sq();
        let u = 1.0 / (q * q);
        let v = u / q;
        Some(Mat2::new(
            e * (u - 4.0 * x * x * v),
            -1.0 - 4.0 * e * x * y * v,
            1.0 - 4.0 * e * x * y * v,
            e * (u - 4.0 * y * y * v),
        ))
    }
}

/// `X(z) = -z/√(1+r²)`: radial, with speed tending to 1.
#[derive(Debug, Clone, Default)]
pub struct RadialSlow;

impl PlanarField for RadialSlow {
    fn name(&self) -> &str {
        "radial_slow"
    }

    fn sigma(&self) -> f64 {
        1.0
    }

    fn value(&self, p: Vec2) -> Vec2 {
        -(1.0 / (1.0 + p.norm_sq()).sqrt()) * p
    }

    fn analytic_jacobian(&self, p: Vec2) -> Option<Mat2> {
        let h = 1.0 / (1.0 + p.norm_sq()).sqrt();
        let h3 = h * h * h;
        Some(Mat2::new(
            -(h - p.x * p.x * h3),
            p.x * p.y * h3,
            p.x * p.y * h3,
            -(h - p.y * p.y * h3),
        ))
    }
}

/// `f = xy`, `g = (y² - x²)/2`: the saddle foliation of the half-Reeb model.
#[derive(Debug, Clone)]
pub struct ModelReeb {
    pub sigma: f64,
}

impl ModelReeb {
    pub fn new() -> Self {
        Self { sigma: 0.1 }
    }
}

impl Default for ModelReeb {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanarField for ModelReeb {
    fn name(&self) -> &str {
        "model_reeb"
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x * p.y, 0.5 * (p.y * p.y - p.x * p.x))
    }

    fn analytic_jacobian(&self, p: Vec2) -> Option<Mat2> {
        Some(Mat2::new(p.y, p.x, -p.x, p.y))
    }
}

/// `X(z) = -(z - z₀)`, a linear field whose zero sits at `z₀` outside the disk.
#[derive(Debug, Clone)]
pub struct ShiftedZero {
    pub zero: Vec2,
}

impl ShiftedZero {
    pub fn new() -> Self {
        Self { zero: Vec2::new(10.0, 0.0) }
    }
}

impl Default for ShiftedZero {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanarField for ShiftedZero {
    fn name(&self) -> &str {
        "shifted_zero"
    }

    fn sigma(&self) -> f64 {
        1.0
    }

    fn value(&self, p: Vec2) -> Vec2 {
        -(p - self.zero)
    }

    fn analytic_jacobian(&self, _p: Vec2) -> Option<Mat2> {
        Some(Mat2::scaled(-1.0))
    }
}
