//! Eigenvalues of 2×2 Jacobians and region scans of the spectral conditions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geom::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eigenvalues {
    Real { l1: f64, l2: f64 },
    Complex { re: f64, im: f64 },
}

impl Eigenvalues {
    pub fn max_real_part(&self) -> f64 {
        match *self {
            Eigenvalues::Real { l1, l2 } => l1.max(l2),
            Eigenvalues::Complex { re, .. } => re,
        }
    }

    pub fn min_real_part(&self) -> f64 {
        match *self {
            Eigenvalues::Real { l1, l2 } => l1.min(l2),
            Eigenvalues::Complex { re, .. } => re,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum2 {
    pub trace: f64,
    pub det: f64,
    pub discriminant: f64,
    pub eigenvalues: Eigenvalues,
}

impl Spectrum2 {
    /// Both eigenvalues have negative real part.
    pub fn hurwitz(&self) -> bool {
        self.trace < 0.0 && self.det > 0.0
    }

    /// No eigenvalue is a real number in `[0, ∞)`.
    pub fn no_nonneg_real(&self) -> bool {
        match self.eigenvalues {
            Eigenvalues::Complex { .. } => true,
            Eigenvalues::Real { l1, l2 } => l1 < 0.0 && l2 < 0.0,
        }
    }

    pub fn det_positive(&self) -> bool {
        self.det > 0.0
    }
}

/// Closed-form spectrum `(T ± √Δ)/2`.
pub fn spectrum(jac: &Mat2) -> Result<Spectrum2> {
    if !jac.is_finite() {
        return Err(Error::NonFinite { what: "jacobian", point: Vec2::new(f64::NAN, f64::NAN) });
    }
    let t = jac.trace();
    let d = jac.det();
    // Δ = (a-d)² + 4bc avoids the cancellation in T² - 4D.
    let disc = (jac.a - jac.d) * (jac.a - jac.d) + 4.0 * jac.b * jac.c;
    let eigenvalues = if disc < 0.0 {
        Eigenvalues::Complex { re: 0.5 * t, im: 0.5 * (-disc).sqrt() }
    } else {
        let s = disc.sqrt();
        // Larger-magnitude root first, the other from the product.
        let big = if t >= 0.0 { 0.5 * (t + s) } else { 0.5 * (t - s) };
        let small = if big != 0.0 { d / big } else { 0.5 * (t - s) };
        if big >= small {
            Eigenvalues::Real { l1: big, l2: small }
        } else {
            Eigenvalues::Real { l1: small, l2: big }
        }
    };
    Ok(Spectrum2 { trace: t, det: d, discriminant: disc, eigenvalues })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub n_radii: usize,
    pub n_angles: usize,
    pub n_quasi: usize,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self { n_radii: 64, n_angles: 256, n_quasi: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec2,
    pub jacobian: [[f64; 2]; 2],
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    All,
    Violations(Vec<Violation>),
}

impl Outcome {
    pub fn is_all(&self) -> bool {
        matches!(self, Outcome::All)
    }

    pub fn count(&self) -> usize {
        match self {
            Outcome::All => 0,
            Outcome::Violations(v) => v.len(),
        }
    }

    fn from_list(v: Vec<Violation>) -> Self {
        if v.is_empty() {
            Outcome::All
        } else {
            Outcome::Violations(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpectrumReport {
    pub annulus: [f64; 2],
    pub samples: usize,
    pub hurwitz: Outcome,
    pub no_nonneg_real: Outcome,
    pub det_positive: Outcome,
    /// Largest real part of any sampled eigenvalue (the spectral abscissa).
    pub max_real_part: f64,
    /// Smallest real part of any sampled eigenvalue.
    pub min_real_part: f64,
}

/// Radical inverse of `i` in the given base (van der Corput).
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut acc = 0.0;
    let mut f = inv;
    while i > 0 {
        acc += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    inv = acc;
    inv
}

/// Polar grid with geometric radii, then Halton points with log-uniform radius.
pub fn annulus_samples(r_min: f64, r_max: f64, grid: &ScanGrid) -> Vec<Vec2> {
    let mut pts = Vec::with_capacity(grid.n_radii * grid.n_angles + grid.n_quasi);
    let ratio = r_max / r_min;
    for i in 0..grid.n_radii {
        let t = if grid.n_radii > 1 { i as f64 / (grid.n_radii - 1) as f64 } else { 0.0 };
        let r = r_min * ratio.powf(t);
        for j in 0..grid.n_angles {
            let th = std::f64::consts::TAU * j as f64 / grid.n_angles as f64;
            pts.push(Vec2::polar(r, th));
        }
    }
    for k in 1..=grid.n_quasi as u64 {
        let r = r_min * ratio.powf(radical_inverse(k, 2));
        let th = std::f64::consts::TAU * radical_inverse(k, 3);
        pts.push(Vec2::polar(r, th));
    }
    pts
}

/// `Δ` within this fraction of `‖J‖²_F` of zero counts as a double real root.
pub const TOUCH_TOL: f64 = 1e-10;

fn discriminant_at(field: &VectorField, p: Vec2) -> (f64, Mat2) {
    let j = field.jacobian_unchecked(p);
    ((j.a - j.d) * (j.a - j.d) + 4.0 * j.b * j.c, j)
}

/// Real eigenvalues can live on a curve where `Δ` touches zero from below,
/// which point samples never hit exactly. On each grid ring, every strict
/// local maximum of a negative `Δ` is refined by golden-section search; a
/// maximum within `TOUCH_TOL` of zero is a double real root `T/2`.
fn ring_touches(field: &VectorField, r_min: f64, r_max: f64, grid: &ScanGrid, pts: &[Vec2]) -> Vec<Violation> {
    let na = grid.n_angles;
    if na < 3 {
        return Vec::new();
    }
    let ratio = r_max / r_min;
    let rings: Vec<Vec<Violation>> = (0..grid.n_radii)
        .into_par_iter()
        .map(|i| {
            let t = if grid.n_radii > 1 { i as f64 / (grid.n_radii - 1) as f64 } else { 0.0 };
            let r = r_min * ratio.powf(t);
            let ring = &pts[i * na..(i + 1) * na];
            let disc: Vec<f64> = ring.iter().map(|&p| discriminant_at(field, p).0).collect();
            let h = std::f64::consts::TAU / na as f64;
            let mut out = Vec::new();
            for j in 0..na {
                let (prev, cur, next) = (disc[(j + na - 1) % na], disc[j], disc[(j + 1) % na]);
                if !(cur < 0.0 && cur > prev && cur >= next) {
                    continue;
                }
                let th = golden_max(|th| discriminant_at(field, Vec2::polar(r, th)).0, (j as f64 - 1.0) * h, (j as f64 + 1.0) * h);
                let p = Vec2::polar(r, th);
                let (d, jac) = discriminant_at(field, p);
                let scale = jac.a * jac.a + jac.b * jac.b + jac.c * jac.c + jac.d * jac.d;
                let top = if d >= 0.0 { 0.5 * (jac.trace() + d.sqrt()) } else { 0.5 * jac.trace() };
                if d >= -TOUCH_TOL * scale && top >= 0.0 {
                    out.push(Violation { point: p, jacobian: jac.rows(), predicate: "no_nonneg_real_touch".into() });
                }
            }
            out
        })
        .collect();
    rings.into_iter().flatten().collect()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const G: f64 = 0.618_033_988_749_894_8;
    let mut c = b - G * (b - a);
    let mut d = a + G * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - G * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + G * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

pub fn scan_region(field: &VectorField, annulus: [f64; 2], grid: &ScanGrid) -> Result<RegionSpectrumReport> {
    let [r_min, r_max] = annulus;
    if !(r_min >= field.sigma()) || !(r_max >= r_min) || !r_max.is_finite() {
        return Err(Error::Precondition(format!(
            "scan annulus [{r_min}, {r_max}] must satisfy sigma = {} <= r_min <= r_max",
            field.sigma()
        )));
    }
    let pts = annulus_samples(r_min, r_max, grid);
    let per_point: Vec<(Vec2, Mat2, Option<Spectrum2>)> = pts
        .par_iter()
        .map(|&p| {
            let j = field.jacobian_unchecked(p);
            (p, j, spectrum(&j).ok())
        })
        .collect();

    let mut hurwitz = Vec::new();
    let mut no_nonneg = Vec::new();
    let mut det_pos = Vec::new();
    let mut max_re = f64::NEG_INFINITY;
    let mut min_re = f64::INFINITY;
    for (p, j, s) in per_point {
        let violation = |predicate: &str| Violation { point: p, jacobian: j.rows(), predicate: predicate.into() };
        match s {
            None => {
                hurwitz.push(violation("non_finite"));
                no_nonneg.push(violation("non_finite"));
                det_pos.push(violation("non_finite"));
            }
            Some(s) => {
                max_re = max_re.max(s.eigenvalues.max_real_part());
                min_re = min_re.min(s.eigenvalues.min_real_part());
                if !s.hurwitz() {
                    hurwitz.push(violation("hurwitz"));
                }
                if !s.no_nonneg_real() {
                    no_nonneg.push(violation("no_nonneg_real"));
                }
                if !s.det_positive() {
                    det_pos.push(violation("det_positive"));
                }
            }
        }
    }
    no_nonneg.extend(ring_touches(field, r_min, r_max, grid, &pts));
    Ok(RegionSpectrumReport {
        annulus,
        samples: pts.len(),
        hurwitz: Outcome::from_list(hurwitz),
        no_nonneg_real: Outcome::from_list(no_nonneg),
        det_positive: Outcome::from_list(det_pos),
        max_real_part: max_re,
        min_real_part: min_re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_matrix() {
        let s = spectrum(&Mat2::scaled(-1.0)).unwrap();
        assert_eq!(s.eigenvalues, Eigenvalues::Real { l1: -1.0, l2: -1.0 });
        assert!(s.hurwitz());
    }

    #[test]
    fn pure_rotation() {
        let s = spectrum(&Mat2::new(0.0, -1.0, 1.0, 0.0)).unwrap();
        assert_eq!(s.eigenvalues, Eigenvalues::Complex { re: 0.0, im: 1.0 });
        assert!(!s.hurwitz());
        assert!(s.no_nonneg_real());
    }

    #[test]
    fn touching_real_set_is_found_between_samples() {
        // DX = [[y, x], [-x, y]] has Δ = -4x²: real eigenvalue y only on x = 0.
        let f = crate::field::VectorField::from_field(crate::field::dsl::DslField::new("x*y", "(y^2 - x^2)/2", 1.0).unwrap());
        let rep = scan_region(&f, [1.0, 4.0], &ScanGrid { n_radii: 8, n_angles: 64, n_quasi: 0 }).unwrap();
        let Outcome::Violations(v) = &rep.no_nonneg_real else { panic!("touch missed") };
        assert_eq!(v.len(), 8);
        for w in v {
            assert!(w.point.x.abs() < 1e-7 && w.point.y > 0.0, "{:?}", w.point);
        }
        assert!(rep.hurwitz.count() > 0);
    }

    #[test]
    fn model_saddle_jacobian() {
        let s = spectrum(&Mat2::new(2.0, 1.0, -1.0, 2.0)).unwrap();
        assert_eq!(s.eigenvalues, Eigenvalues::Complex { re: 2.0, im: 1.0 });
        assert!(!s.hurwitz());
    }

    #[test]
    fn real_roots_of_mixed_sign() {
        let s = spectrum(&Mat2::new(1.0, 0.0, 0.0, -3.0)).unwrap();
        assert_eq!(s.eigenvalues, Eigenvalues::Real { l1: 1.0, l2: -3.0 });
        assert!(!s.no_nonneg_real());
        assert!(!s.det_positive());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(spectrum(&Mat2::new(f64::NAN, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn halton_is_in_unit_interval() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }
}
