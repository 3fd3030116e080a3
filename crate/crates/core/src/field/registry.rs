//! Named example fields and the serializable field specification.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::builtin::{LinearHurwitz, ModelReeb, RadialSlow, RotDecayRepel, RotFeedAttract, ShiftedZero};
use crate::field::dsl::DslField;
use crate::field::{JacobianMode, PlanarField, VectorField};

pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub epsilon: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON }
    }
}

/// Oracle facts attached to a registry entry. Tests read these instead of
/// hard-coding expectations twice.
#[derive(Debug, Clone, Serialize)]
pub struct FieldInfo {
    pub name: &'static str,
    pub sigma: f64,
    pub formula: &'static str,
    pub trace_formula: &'static str,
    pub radial_component: &'static str,
    /// Every Jacobian outside the disk has eigenvalues with negative real part.
    pub hurwitz: bool,
    /// No Jacobian outside the disk has a real eigenvalue in `[0, ∞)`.
    pub no_nonneg_real: bool,
    pub expected_verdict: Option<&'static str>,
    pub expected_index: &'static str,
    pub uses_epsilon: bool,
}

pub type Builder = fn(&FieldParams) -> Arc<dyn PlanarField>;

#[derive(Clone)]
pub struct RegistryEntry {
    pub info: FieldInfo,
    pub build: Builder,
}

/// Name-indexed field constructors, kept in registration order.
#[derive(Clone, Default)]
pub struct FieldRegistry {
    entries: Vec<RegistryEntry>,
}

impl FieldRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(
            FieldInfo {
                name: "linear_hurwitz",
                sigma: 1.0,
                formula: "X(z) = -z",
                trace_formula: "-2",
                radial_component: "-r",
                hurwitz: true,
                no_nonneg_real: true,
                expected_verdict: Some("repellor"),
                expected_index: "-inf (flux = -2 pi R^2)",
                uses_epsilon: false,
            },
            |_| Arc::new(LinearHurwitz::new()),
        );
        r.register(
            FieldInfo {
                name: "rot_decay_repel",
                sigma: 1.0,
                formula: "(-y, x) + eps (-x, -y)/(1+r^2)",
                trace_formula: "-2 eps/(1+r^2)^2",
                radial_component: "-eps r/(1+r^2)",
                hurwitz: true,
                no_nonneg_real: true,
                expected_verdict: Some("repellor"),
                expected_index: "-2 pi eps (flux = -2 pi eps R^2/(1+R^2))",
                uses_epsilon: true,
            },
            |p| Arc::new(RotDecayRepel::new(p.epsilon)),
        );
        r.register(
            FieldInfo {
                name: "rot_feed_attract",
                sigma: 2.0,
                formula: "(-y, x) + eps (x, y)/(1+r^2)^2",
                trace_formula: "2 eps (1-r^2)/(1+r^2)^3",
                radial_component: "eps r/(1+r^2)^2",
                hurwitz: true,
                no_nonneg_real: true,
                expected_verdict: Some("attractor"),
                expected_index: "0 (flux = 2 pi eps R^2/(1+R^2)^2)",
                uses_epsilon: true,
            },
            |p| Arc::new(RotFeedAttract::new(p.epsilon)),
        );
        r.register(
            FieldInfo {
                name: "radial_slow",
                sigma: 1.0,
                formula: "-z/sqrt(1+r^2)",
                trace_formula: "-(1+r^2)^(-3/2) - (1+r^2)^(-1/2)",
                radial_component: "-r/sqrt(1+r^2)",
                hurwitz: true,
                no_nonneg_real: true,
                expected_verdict: Some("repellor"),
                expected_index: "-inf (flux = -2 pi R^2/sqrt(1+R^2))",
                uses_epsilon: false,
            },
            |_| Arc::new(RadialSlow),
        );
        r.register(
            FieldInfo {
                name: "model_reeb",
                sigma: 0.1,
                formula: "f = xy, g = (y^2-x^2)/2",
                trace_formula: "2y",
                radial_component: "y r/2",
                hurwitz: false,
                no_nonneg_real: false,
                expected_verdict: None,
                expected_index: "not applicable (eigenvalues y +- ix)",
                uses_epsilon: false,
            },
            |_| Arc::new(ModelReeb::new()),
        );
        r.register(
            FieldInfo {
                name: "shifted_zero",
                sigma: 1.0,
                formula: "-(z - (10, 0))",
                trace_formula: "-2",
                radial_component: "-r + 10 cos(theta)",
                // Spectrally Hurwitz, but the rest point at (10, 0) makes it
                // the control case for the translation search.
                hurwitz: true,
                no_nonneg_real: true,
                expected_verdict: None,
                expected_index: "-inf",
                uses_epsilon: false,
            },
            |_| Arc::new(ShiftedZero::new()),
        );
        r
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, info: FieldInfo, build: Builder) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.info.name == info.name) {
            *e = RegistryEntry { info, build };
        } else {
            self.entries.push(RegistryEntry { info, build });
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.info.name).collect()
    }

    pub fn info(&self, name: &str) -> Result<&FieldInfo> {
        self.entry(name).map(|e| &e.info)
    }

    fn entry(&self, name: &str) -> Result<&RegistryEntry> {
        self.entries
            .iter()
            .find(|e| e.info.name == name)
            .ok_or_else(|| Error::Unknown { kind: "field", name: name.to_string() })
    }

    pub fn build(&self, name: &str, params: &FieldParams) -> Result<VectorField> {
        let e = self.entry(name)?;
        Ok(VectorField::new((e.build)(params)))
    }

    /// Entries the tests treat as the Hurwitz class; the translation control
    /// is excluded because its rest point lies outside the disk.
    pub fn hurwitz_names(&self) -> Vec<&'static str> {
        self.entries
            .iter()
            .filter(|e| e.info.hurwitz && e.info.expected_verdict.is_some())
            .map(|e| e.info.name)
            .collect()
    }
}

/// How a run config names its field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Named {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    Expr {
        f_expr: String,
        g_expr: String,
        sigma: f64,
        #[serde(default)]
        jacobian: JacobianMode,
    },
}

impl FieldSpec {
    pub fn named(name: &str) -> Self {
        FieldSpec::Named { name: name.to_string(), epsilon: None }
    }

    pub fn build(&self, registry: &FieldRegistry) -> Result<VectorField> {
        match self {
            FieldSpec::Named { name, epsilon } => {
                let params = FieldParams { epsilon: epsilon.unwrap_or(DEFAULT_EPSILON) };
                registry.build(name, &params)
            }
            FieldSpec::Expr { f_expr, g_expr, sigma, jacobian } => {
                let field = DslField::new(f_expr, g_expr, *sigma)?;
                VectorField::with_mode(Arc::new(field), *jacobian)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;

    #[test]
    fn builtin_names_and_sigmas() {
        let r = FieldRegistry::builtin();
        assert_eq!(
            r.names(),
            vec!["linear_hurwitz", "rot_decay_repel", "rot_feed_attract", "radial_slow", "model_reeb", "shifted_zero"]
        );
        for name in r.names() {
            let f = r.build(name, &FieldParams::default()).unwrap();
            assert_eq!(f.sigma(), r.info(name).unwrap().sigma);
            assert_eq!(f.name(), name);
        }
    }

    #[test]
    fn unknown_name_is_an_error() {
        let r = FieldRegistry::builtin();
        assert!(matches!(r.build("nope", &FieldParams::default()), Err(Error::Unknown { .. })));
    }

    #[test]
    fn spec_roundtrip_json() {
        let a: FieldSpec = serde_json::from_str(r#"{"name":"rot_decay_repel","epsilon":0.25}"#).unwrap();
        assert_eq!(a, FieldSpec::Named { name: "rot_decay_repel".into(), epsilon: Some(0.25) });
        let b: FieldSpec =
            serde_json::from_str(r#"{"f_expr":"-x","g_expr":"-y","sigma":1,"jacobian":"fd"}"#).unwrap();
        let f = b.build(&FieldRegistry::builtin()).unwrap();
        assert_eq!(f.mode(), JacobianMode::FiniteDifference);
        assert_eq!(f.evaluate(Vec2::new(2.0, 0.0)).unwrap(), Vec2::new(-2.0, 0.0));
    }

    #[test]
    fn epsilon_reaches_the_field() {
        let r = FieldRegistry::builtin();
        let f = r.build("rot_decay_repel", &FieldParams { epsilon: 1.0 }).unwrap();
        assert_eq!(f.evaluate(Vec2::new(1.0, 0.0)).unwrap(), Vec2::new(-0.5, 1.0));
    }
}
