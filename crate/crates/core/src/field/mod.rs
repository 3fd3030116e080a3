//! Planar vector fields on the exterior of a disk.
//!
//! Every field family implements [`PlanarField`] and is wrapped in a
//! [`VectorField`], which enforces the exterior-domain contract and picks the
//! Jacobian strategy. Named fields live in the [`registry`]; ad hoc fields
//! come from the expression language in [`dsl`].

pub mod builtin;
pub mod dsl;
pub mod registry;
pub mod spectrum;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};

pub use registry::{FieldInfo, FieldParams, FieldRegistry, FieldSpec};
pub use spectrum::{scan_region, spectrum, RegionSpectrumReport, ScanGrid, Spectrum2};

/// A concrete field family: the pair `(f, g)` and optionally its derivatives.
///
/// `value` may be called slightly inside the excluded disk by numerical
/// stencils; implementations should return non-finite values rather than
/// panic where they are undefined.
pub trait PlanarField: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn sigma(&self) -> f64;

    fn value(&self, p: Vec2) -> Vec2;

    fn analytic_jacobian(&self, _p: Vec2) -> Option<Mat2> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    #[serde(rename = "fd")]
    FiniteDifference,
}

/// Which coordinate function generates a foliation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    F,
    G,
}

impl Component {
    pub fn other(self) -> Component {
        match self {
            Component::F => Component::G,
            Component::G => Component::F,
        }
    }

    pub fn pick(self, v: Vec2) -> f64 {
        match self {
            Component::F => v.x,
            Component::G => v.y,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::F => "f",
            Component::G => "g",
        })
    }
}

/// Central-difference step used by the finite-difference Jacobian.
pub fn fd_step(p: Vec2) -> f64 {
    1e-5 * p.norm().max(1.0)
}

/// A field together with its Jacobian strategy.
#[derive(Clone)]
pub struct VectorField {
    inner: Arc<dyn PlanarField>,
    mode: JacobianMode,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.inner.name())
            .field("sigma", &self.inner.sigma())
            .field("mode", &self.mode)
            .finish()
    }
}

impl VectorField {
    /// Wraps a field, preferring its analytic Jacobian when it has one.
    pub fn new(inner: Arc<dyn PlanarField>) -> Self {
        let probe = Vec2::new(inner.sigma().max(1e-3) * 2.0, 0.0);
        let mode = if inner.analytic_jacobian(probe).is_some() {
            JacobianMode::Analytic
        } else {
            JacobianMode::FiniteDifference
        };
        Self { inner, mode }
    }

    pub fn with_mode(inner: Arc<dyn PlanarField>, mode: JacobianMode) -> Result<Self> {
        let probe = Vec2::new(inner.sigma().max(1e-3) * 2.0, 0.0);
        if mode == JacobianMode::Analytic && inner.analytic_jacobian(probe).is_none() {
            return Err(Error::Precondition(format!(
                "field `{}` has no analytic Jacobian",
                inner.name()
            )));
        }
        Ok(Self { inner, mode })
    }

    pub fn from_field<F: PlanarField + 'static>(field: F) -> Self {
        Self::new(Arc::new(field))
    }

    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    pub fn mode(&self) -> JacobianMode {
        self.mode
    }

    pub fn inner(&self) -> &Arc<dyn PlanarField> {
        &self.inner
    }

    /// Same field, different Jacobian strategy.
    pub fn switched(&self, mode: JacobianMode) -> Result<Self> {
        Self::with_mode(self.inner.clone(), mode)
    }

    pub fn in_domain(&self, p: Vec2) -> bool {
        p.norm() >= self.sigma()
    }

    fn check_domain(&self, p: Vec2) -> Result<()> {
        if !p.is_finite() {
            return Err(Error::NonFinite { what: "query point", point: p });
        }
        if p.norm() < self.sigma() {
            return Err(Error::InteriorPoint { point: p, sigma: self.sigma() });
        }
        Ok(())
    }

    /// `(f(p), g(p))`, rejecting points inside the excluded disk.
    pub fn evaluate(&self, p: Vec2) -> Result<Vec2> {
        self.check_domain(p)?;
        let v = self.inner.value(p);
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "field", point: p });
        }
        Ok(v)
    }

    /// Raw evaluation with no domain check.
    pub fn value(&self, p: Vec2) -> Vec2 {
        self.inner.value(p)
    }

    pub fn jacobian(&self, p: Vec2) -> Result<Mat2> {
        self.check_domain(p)?;
        if self.mode == JacobianMode::FiniteDifference && p.norm() < self.sigma() + fd_step(p) {
            return Err(Error::InteriorPoint { point: p, sigma: self.sigma() + fd_step(p) });
        }
        let j = self.jacobian_unchecked(p);
        if !j.is_finite() {
            return Err(Error::NonFinite { what: "jacobian", point: p });
        }
        Ok(j)
    }

    /// Jacobian with no domain check; analytic or central differences per the mode.
    pub fn jacobian_unchecked(&self, p: Vec2) -> Mat2 {
        match self.mode {
            JacobianMode::Analytic => self
                .inner
                .analytic_jacobian(p)
                .unwrap_or_else(|| self.fd_jacobian(p, fd_step(p))),
            JacobianMode::FiniteDifference => self.fd_jacobian(p, fd_step(p)),
        }
    }

    pub fn fd_jacobian(&self, p: Vec2, h: f64) -> Mat2 {
        let dx = (self.inner.value(p + Vec2::new(h, 0.0)) - self.inner.value(p - Vec2::new(h, 0.0)))
            * (0.5 / h);
        let dy = (self.inner.value(p + Vec2::new(0.0, h)) - self.inner.value(p - Vec2::new(0.0, h)))
            * (0.5 / h);
        Mat2::from_cols(dx, dy)
    }

    pub fn scalar(&self, component: Component, p: Vec2) -> f64 {
        component.pick(self.inner.value(p))
    }

    pub fn gradient(&self, component: Component, p: Vec2) -> Vec2 {
        let j = self.jacobian_unchecked(p);
        match component {
            Component::F => Vec2::new(j.a, j.b),
            Component::G => Vec2::new(j.c, j.d),
        }
    }

    /// Tangent field of the foliation by level sets of `component`:
    /// `X_f = (-f_y, f_x)` or `X̃_g = (g_y, -g_x)`.
    pub fn leaf_tangent(&self, component: Component, p: Vec2) -> Vec2 {
        let grad = self.gradient(component, p);
        match component {
            Component::F => grad.perp(),
            Component::G => -grad.perp(),
        }
    }
}

/// `A ∘ X ∘ A⁻¹` for an invertible linear map `A`; the spectrum is unchanged.
#[derive(Debug)]
pub struct Conjugated {
    name: String,
    inner: VectorField,
    a: Mat2,
    a_inv: Mat2,
}

impl Conjugated {
    pub fn new(inner: VectorField, a: Mat2) -> Result<Self> {
        let det = a.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Precondition("conjugating map must be invertible".into()));
        }
        let a_inv = Mat2::new(a.d / det, -a.b / det, -a.c / det, a.a / det);
        Ok(Self { name: format!("{}@conj", inner.name()), inner, a, a_inv })
    }

    /// Conjugation by the reflection `(x, y) ↦ (x, -y)`.
    pub fn reflected(inner: VectorField) -> Self {
        let a = Mat2::new(1.0, 0.0, 0.0, -1.0);
        Self { name: format!("{}@reflected", inner.name()), inner, a, a_inv: a }
    }

    pub fn rotated(inner: VectorField, theta: f64) -> Self {
        Self {
            name: format!("{}@rot", inner.name()),
            inner,
            a: Mat2::rotation(theta),
            a_inv: Mat2::rotation(-theta),
        }
    }
}

impl PlanarField for Conjugated {
    fn name(&self) -> &str {
        &self.name
    }

    fn sigma(&self) -> f64 {
        // Orthogonal maps keep the disk; otherwise scale by the largest stretch.
        let stretch = self.a.spectral_norm();
        self.inner.sigma() * stretch.max(1.0 / self.a_inv.spectral_norm())
    }

    fn value(&self, p: Vec2) -> Vec2 {
        self.a.apply(self.inner.value(self.a_inv.apply(p)))
    }

    fn analytic_jacobian(&self, p: Vec2) -> Option<Mat2> {
        let q = self.a_inv.apply(p);
        let j = match self.inner.mode() {
            JacobianMode::Analytic => self.inner.inner().analytic_jacobian(q)?,
            JacobianMode::FiniteDifference => return None,
        };
        Some(self.a.mul(&j).mul(&self.a_inv))
    }
}

/// `X + v` for a constant translation vector `v`.
#[derive(Debug)]
pub struct Translated {
    name: String,
    inner: VectorField,
    v: Vec2,
}

impl Translated {
    pub fn new(inner: VectorField, v: Vec2) -> Self {
        Self { name: format!("{}+v", inner.name()), inner, v }
    }
}

impl PlanarField for Translated {
    fn name(&self) -> &str {
        &self.name
    }

    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn value(&self, p: Vec2) -> Vec2 {
        self.inner.value(p) + self.v
    }

    fn analytic_jacobian(&self, p: Vec2) -> Option<Mat2> {
        match self.inner.mode() {
            JacobianMode::Analytic => self.inner.inner().analytic_jacobian(p),
            JacobianMode::FiniteDifference => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::{LinearHurwitz, ModelReeb, RotDecayRepel};
    use super::*;

    #[test]
    fn evaluate_linear() {
        let x = VectorField::from_field(LinearHurwitz::new());
        assert_eq!(x.evaluate(Vec2::new(2.0, 0.0)).unwrap(), Vec2::new(-2.0, 0.0));
    }

    #[test]
    fn evaluate_rejects_interior() {
        let x = VectorField::from_field(RotDecayRepel::new(0.5));
        let err = x.evaluate(Vec2::new(0.5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InteriorPoint { .. }));
    }

    #[test]
    fn rot_decay_repel_hand_value() {
        let x = VectorField::from_field(RotDecayRepel::new(0.5));
        let v = x.evaluate(Vec2::new(1.0, 0.0)).unwrap();
        assert!((v.x + 0.25).abs() < 1e-15);
        assert!((v.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model_reeb_jacobian_by_hand() {
        let x = VectorField::from_field(ModelReeb::new());
        let j = x.jacobian(Vec2::new(1.0, 2.0)).unwrap();
        assert_eq!(j.rows(), [[2.0, 1.0], [-1.0, 2.0]]);
    }

    #[test]
    fn fd_jacobian_requires_margin() {
        let x = VectorField::from_field(LinearHurwitz::new())
            .switched(JacobianMode::FiniteDifference)
            .unwrap();
        assert!(x.jacobian(Vec2::new(1.0, 0.0)).is_err());
        let j = x.jacobian(Vec2::new(2.0, 0.0)).unwrap();
        assert!((j.a + 1.0).abs() < 1e-9 && j.b.abs() < 1e-9);
    }

    #[test]
    fn leaf_tangents_follow_hamiltonian_convention() {
        let x = VectorField::from_field(LinearHurwitz::new());
        // f = -x: X_f = (-f_y, f_x) = (0, -1); g = -y: X̃_g = (g_y, -g_x) = (-1, 0)
        assert_eq!(x.leaf_tangent(Component::F, Vec2::new(3.0, 1.0)), Vec2::new(0.0, -1.0));
        assert_eq!(x.leaf_tangent(Component::G, Vec2::new(3.0, 1.0)), Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn reflection_keeps_spectrum() {
        let x = VectorField::from_field(RotDecayRepel::new(0.5));
        let r = VectorField::from_field(Conjugated::reflected(x.clone()));
        let p = Vec2::new(2.0, 3.0);
        let j0 = x.jacobian(Vec2::new(2.0, -3.0)).unwrap();
        let j1 = r.jacobian(p).unwrap();
        assert!((j0.trace() - j1.trace()).abs() < 1e-14);
        assert!((j0.det() - j1.det()).abs() < 1e-14);
    }
}
