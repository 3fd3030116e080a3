//! Run configuration and the `key = value` config file format.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Keys are the long flag names without the leading dashes, for example
//!
//! ```text
//! field = rot_decay_repel
//! epsilon = 0.5
//! radii = 2, 4, 8, 16, 32
//! seed = 7
//! ```
//!
//! Flags given on the command line override keys read from the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, JacobianMode};
use crate::geom::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Spectrum,
    Flow,
    Foliation,
    Tangency,
    Index,
    Classify,
    Verify,
    All,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Spectrum,
        Subcommand::Flow,
        Subcommand::Foliation,
        Subcommand::Tangency,
        Subcommand::Index,
        Subcommand::Classify,
        Subcommand::Verify,
        Subcommand::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Spectrum => "spectrum",
            Subcommand::Flow => "flow",
            Subcommand::Foliation => "foliation",
            Subcommand::Tangency => "tangency",
            Subcommand::Index => "index",
            Subcommand::Classify => "classify",
            Subcommand::Verify => "verify",
            Subcommand::All => "all",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Unknown { kind: "subcommand", name: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Circles,
    Star,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Ladder convergence tolerance of the index.
    pub index: f64,
    /// Quadrature tolerance of the index flux and area integrals.
    pub quad: f64,
    pub flow_rel: f64,
    pub flow_abs: f64,
    /// Angle below which a curve point counts as a tangency.
    pub angle: f64,
    /// Relative image distance counted as a collision.
    pub collision: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { index: 1e-6, quad: 1e-7, flow_rel: 1e-9, flow_abs: 1e-12, angle: 1e-10, collision: 1e-9 }
    }
}

/// Per-module knobs. `None` means the module default, which usually
/// scales with `σ`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub seeds: Option<usize>,
    pub arcs: Option<usize>,
    pub pairs: Option<usize>,
    pub grid: Option<usize>,
    pub s: Option<f64>,
    pub window: Option<Rect>,
    pub family: Option<FamilyKind>,
    pub perturbations: Option<usize>,
    pub samples: Option<usize>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub field: FieldSpec,
    pub radius: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub options: Options,
    /// Not part of the report, so runs into different directories match.
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(field: FieldSpec) -> Self {
        Self {
            field,
            radius: None,
            radii: None,
            seed: 0,
            tolerances: Tolerances::default(),
            options: Options::default(),
            out: PathBuf::from("out"),
        }
    }

    /// Builds a config from flag-named pairs.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        for k in pairs.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let field = match (get("field"), get("f-expr"), get("g-expr")) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::Config("give either `field` or `f-expr`/`g-expr`, not both".into()))
            }
            (Some(name), None, None) => {
                if get("sigma").is_some() || get("jacobian").is_some() {
                    return Err(Error::Config("`sigma` and `jacobian` only apply to expression fields".into()));
                }
                FieldSpec::Named { name: name.to_string(), epsilon: opt(pairs, "epsilon")? }
            }
            (None, Some(f), Some(g)) => {
                if get("epsilon").is_some() {
                    return Err(Error::Config("`epsilon` only applies to registry fields".into()));
                }
                let sigma = opt(pairs, "sigma")?.ok_or_else(|| Error::Config("expression fields need `sigma`".into()))?;
                let jacobian = match get("jacobian") {
                    None | Some("analytic") => JacobianMode::Analytic,
                    Some("fd") => JacobianMode::FiniteDifference,
                    Some(o) => return Err(Error::Config(format!("`jacobian` must be analytic or fd, got `{o}`"))),
                };
                FieldSpec::Expr { f_expr: f.to_string(), g_expr: g.to_string(), sigma, jacobian }
            }
            (None, _, _) if get("f-expr").is_some() || get("g-expr").is_some() => {
                return Err(Error::Config("`f-expr` and `g-expr` must be given together".into()))
            }
            _ => return Err(Error::Config("no field given; use `field` or `f-expr`/`g-expr`".into())),
        };

        let mut c = RunConfig::new(field);
        c.radius = opt(pairs, "radius")?;
        c.radii = get("radii").map(parse_list).transpose()?;
        c.seed = opt(pairs, "seed")?.unwrap_or(0);
        if let Some(o) = get("out") {
            c.out = PathBuf::from(o);
        }
        let t = &mut c.tolerances;
        for (key, slot) in [
            ("tol-index", &mut t.index),
            ("tol-quad", &mut t.quad),
            ("tol-flow-rel", &mut t.flow_rel),
            ("tol-flow-abs", &mut t.flow_abs),
            ("tol-angle", &mut t.angle),
            ("tol-collision", &mut t.collision),
        ] {
            if let Some(v) = opt::<f64>(pairs, key)? {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("`{key}` must be positive, got {v}")));
                }
                *slot = v;
            }
        }
        let o = &mut c.options;
        o.seeds = opt(pairs, "seeds")?;
        o.arcs = opt(pairs, "arcs")?;
        o.pairs = opt(pairs, "pairs")?;
        o.grid = opt(pairs, "grid")?;
        o.s = opt(pairs, "s")?;
        o.window = get("window").map(parse_window).transpose()?;
        o.family = match get("family") {
            None => None,
            Some("circles") => Some(FamilyKind::Circles),
            Some("star") => Some(FamilyKind::Star),
            Some(v) => return Err(Error::Config(format!("`family` must be circles or star, got `{v}`"))),
        };
        o.perturbations = opt(pairs, "perturbations")?;
        o.samples = opt(pairs, "samples")?;
        o.t_max = opt(pairs, "t-max")?;
        Ok(c)
    }
}

/// Every key the config format accepts.
pub const KEYS: &[&str] = &[
    "field",
    "f-expr",
    "g-expr",
    "sigma",
    "jacobian",
    "epsilon",
    "radius",
    "radii",
    "seed",
    "out",
    "tol-index",
    "tol-quad",
    "tol-flow-rel",
    "tol-flow-abs",
    "tol-angle",
    "tol-collision",
    "seeds",
    "arcs",
    "pairs",
    "grid",
    "s",
    "window",
    "family",
    "perturbations",
    "samples",
    "t-max",
];

fn opt<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    pairs
        .get(key)
        .map(|v| v.trim().parse::<T>().map_err(|_| Error::Config(format!("cannot parse `{key}` value `{v}`"))))
        .transpose()
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("cannot parse radius `{}`", t.trim()))))
        .collect()
}

/// One number `h` for `[-h, h]²`, or `x_min, x_max, y_min, y_max`.
fn parse_window(s: &str) -> Result<Rect> {
    let v = parse_list(s).map_err(|_| Error::Config(format!("cannot parse window `{s}`")))?;
    let r = match v[..] {
        [h] => Rect::centered_square(h),
        [a, b, c, d] => Rect::new(a, b, c, d),
        _ => return Err(Error::Config(format!("window needs 1 or 4 numbers, got `{s}`"))),
    };
    if !r.is_valid() {
        return Err(Error::Config(format!("empty window `{s}`")));
    }
    Ok(r)
}

/// Parses the `key = value` format; later lines win.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{}`", n + 1, raw.trim())))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}
