//! Composite Gauss-Legendre rules and the periodic trapezoid rule.

use std::f64::consts::TAU;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

#[derive(Debug, Clone)]
pub struct Composite {
    rule: GaussLegendre,
}

impl Composite {
    pub fn new(order: usize) -> Self {
        Self { rule: GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("order is positive")) }
    }

    /// Nodes and weights over the panels between consecutive `breaks`.
    pub fn nodes(&self, breaks: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(breaks.len().saturating_sub(1) * self.rule.as_node_weight_pairs().len());
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for &(x, wt) in self.rule.as_node_weight_pairs() {
                out.push((mid + half * x, half * wt));
            }
        }
        out
    }

    /// Integral over `[a, b]` split into `panels` equal panels.
    pub fn integrate(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let panels = panels.max(1);
        let breaks: Vec<f64> = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
        self.nodes(&breaks).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Trapezoid rule for a `2π`-periodic integrand with `n` points.
pub fn periodic_trapezoid(n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = TAU / n as f64;
    (0..n).map(|k| f(k as f64 * h)).sum::<f64>() * h
}

/// `m` geometric panels on `[a, b]`, `0 < a < b`.
pub fn geometric_breaks(a: f64, b: f64, m: usize) -> Vec<f64> {
    let m = m.max(1);
    let mut v: Vec<f64> = (0..=m).map(|k| a * (b / a).powf(k as f64 / m as f64)).collect();
    v[m] = b;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let q = Composite::new(4);
        let v = q.integrate(0.0, 2.0, 3, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_is_spectral() {
        let v = periodic_trapezoid(64, |t| (t.cos()).exp());
        // 2π I_0(1)
        assert!((v - TAU * 1.266_065_877_752_008_4).abs() < 1e-13);
    }
}
