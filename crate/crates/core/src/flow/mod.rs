//! Trajectories of `X` and their limit behaviour.

pub mod dopri;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: f64,
    /// Escape radius; `None` means 128σ.
    pub r_max: Option<f64>,
    pub max_steps: usize,
    pub strategy: String,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            t_max: 1e12,
            r_max: None,
            max_steps: 200_000,
            strategy: "auto".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub p: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Escaped { r_exit: f64, t_exit: f64 },
    Bounded { t_max: f64 },
    LeftDomain { t: f64, point: Vec2 },
    StepFailure { reason: String },
}

/// Where the orbit first completed a full turn about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstReturn {
    pub t: f64,
    pub point: Vec2,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: Vec2,
    pub direction: Direction,
    pub strategy: String,
    pub samples: Vec<Sample>,
    pub terminal: Terminal,
    pub max_radius: f64,
    pub steps: usize,
    pub first_return: Option<FirstReturn>,
}

impl Trajectory {
    pub fn last(&self) -> Sample {
        *self.samples.last().expect("trajectory has its seed sample")
    }

    /// Rows `t,x,y,r`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,r\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{}\n", s.t, s.p.x, s.p.y, s.p.norm()));
        }
        out
    }
}

/// An integration scheme selectable by name.
pub trait Integrator: Send + Sync {
    fn name(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn integrate(&self, field: &VectorField, seed: Vec2, direction: Direction, controls: &Controls) -> Trajectory;
}

/// Plain adaptive DOPRI5 in time.
pub struct Dopri5;

impl Integrator for Dopri5 {
    fn name(&self) -> &'static str {
        "dopri5"
    }

    fn describe(&self) -> &'static str {
        "Dormand-Prince 5(4) in Cartesian coordinates"
    }

    fn integrate(&self, field: &VectorField, seed: Vec2, direction: Direction, controls: &Controls) -> Trajectory {
        dopri::run(field, seed, direction, controls, false, self.name())
    }
}

/// DOPRI5 that switches to polar-angle stepping on near-rotational stretches.
pub struct AutoSwitching;

impl Integrator for AutoSwitching {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn describe(&self) -> &'static str {
        "Dormand-Prince 5(4), stepping in polar angle where the flow is nearly circular"
    }

    fn integrate(&self, field: &VectorField, seed: Vec2, direction: Direction, controls: &Controls) -> Trajectory {
        dopri::run(field, seed, direction, controls, true, self.name())
    }
}

pub struct IntegratorRegistry {
    entries: Vec<Box<dyn Integrator>>,
}

impl IntegratorRegistry {
    pub fn builtin() -> Self {
        Self { entries: vec![Box::new(AutoSwitching), Box::new(Dopri5)] }
    }

    pub fn register(&mut self, integrator: Box<dyn Integrator>) {
        self.entries.retain(|e| e.name() != integrator.name());
        self.entries.push(integrator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Integrator> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "integrator", name: name.into() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

/// Integrates with the strategy named in `controls`.
pub fn integrate(field: &VectorField, seed: Vec2, direction: Direction, controls: &Controls) -> Result<Trajectory> {
    if !(seed.norm() > field.sigma()) {
        return Err(Error::Precondition(format!(
            "seed ({}, {}) must lie strictly outside the disk of radius {}",
            seed.x,
            seed.y,
            field.sigma()
        )));
    }
    let registry = IntegratorRegistry::builtin();
    Ok(registry.get(&controls.strategy)?.integrate(field, seed, direction, controls))
}

/// Integrates many seeds in parallel; output order follows `seeds`.
pub fn integrate_batch(
    field: &VectorField,
    seeds: &[Vec2],
    direction: Direction,
    controls: &Controls,
) -> Result<Vec<Trajectory>> {
    seeds.par_iter().map(|&s| integrate(field, s, direction, controls)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub r0: f64,
    pub factor: f64,
    pub rungs: usize,
}

impl Ladder {
    /// `R₀ = 4σ`, doubling, six rungs.
    pub fn default_for(sigma: f64) -> Self {
        Self { r0: 4.0 * sigma, factor: 2.0, rungs: 6 }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.rungs).map(|k| self.r0 * self.factor.powi(k as i32)).collect()
    }

    pub fn top(&self) -> f64 {
        self.r0 * self.factor.powi(self.rungs as i32 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    GoesToInfinity,
    StaysBounded,
    EntersInnerDisk,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEvidence {
    pub rungs: Vec<f64>,
    /// Time at which each rung was first crossed, if it was.
    pub crossing_times: Vec<Option<f64>>,
    pub rungs_crossed: usize,
    /// The orbit fell back below the previous rung after crossing one.
    pub returned_below: bool,
    pub max_radius: f64,
    pub final_radius: f64,
    pub terminal: Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitVerdict {
    pub kind: LimitKind,
    pub evidence: LimitEvidence,
}

pub fn classify_limit(traj: &Trajectory, ladder: &Ladder) -> LimitVerdict {
    let rungs = ladder.radii();
    let mut crossing_times: Vec<Option<f64>> = vec![None; rungs.len()];
    let mut returned_below = false;
    // index of the highest rung crossed so far
    let mut top: Option<usize> = None;
    for s in &traj.samples {
        let r = s.p.norm();
        for (k, &rk) in rungs.iter().enumerate() {
            if crossing_times[k].is_none() && r >= rk {
                crossing_times[k] = Some(s.t);
                top = Some(top.map_or(k, |t: usize| t.max(k)));
            }
        }
        if let Some(t) = top {
            if t >= 1 && r < rungs[t - 1] {
                returned_below = true;
            }
        }
    }
    let rungs_crossed = crossing_times.iter().filter(|c| c.is_some()).count();
    let final_radius = traj.last().p.norm();
    let kind = match &traj.terminal {
        Terminal::LeftDomain { .. } => LimitKind::EntersInnerDisk,
        _ if rungs_crossed == rungs.len() && !returned_below => LimitKind::GoesToInfinity,
        Terminal::Bounded { .. } if traj.max_radius < ladder.r0 => LimitKind::StaysBounded,
        _ => LimitKind::Inconclusive,
    };
    LimitVerdict {
        kind,
        evidence: LimitEvidence {
            rungs,
            crossing_times,
            rungs_crossed,
            returned_below,
            max_radius: traj.max_radius,
            final_radius,
            terminal: traj.terminal.clone(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub seed: Vec2,
    pub delta: f64,
    pub n_perturbations: usize,
    pub times: Vec<f64>,
    /// Largest distance from the reference orbit at each time.
    pub max_divergence: Vec<f64>,
    /// Least-squares slope of `ln(divergence/δ)` against time.
    pub fitted_rate: f64,
    /// Largest Jacobian spectral norm seen along the reference orbit.
    pub lipschitz_bound: f64,
    /// Divergence stayed below `δ e^{Lt}` at every checkpoint.
    pub within_lipschitz_bound: bool,
    /// Perturbed orbits that left the domain or failed before the window ended.
    pub lost_orbits: usize,
}

/// Fixed-window DOPRI5 integration, stopping exactly at `duration`.
fn flow_for(field: &VectorField, z: Vec2, duration: f64) -> Option<(Vec2, f64)> {
    let c = Controls { t_max: duration, r_max: Some(f64::INFINITY), strategy: "dopri5".into(), ..Controls::default() };
    let tr = Dopri5.integrate(field, z, Direction::Forward, &c);
    match tr.terminal {
        Terminal::Bounded { .. } => {
            let l = tr
                .samples
                .iter()
                .map(|s| field.jacobian_unchecked(s.p).spectral_norm())
                .fold(0.0, f64::max);
            Some((tr.last().p, l))
        }
        _ => None,
    }
}

pub fn semi_trajectory_uniqueness_probe(
    field: &VectorField,
    seed: Vec2,
    n_perturbations: usize,
    delta: f64,
    window: f64,
    checkpoints: usize,
) -> Result<UniquenessReport> {
    if !(seed.norm() > field.sigma()) {
        return Err(Error::Precondition(format!(
            "seed ({}, {}) must lie strictly outside the disk of radius {}",
            seed.x,
            seed.y,
            field.sigma()
        )));
    }
    let checkpoints = checkpoints.max(1);
    let dt = window / checkpoints as f64;
    let starts: Vec<Vec2> = (0..n_perturbations)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n_perturbations as f64;
            seed + Vec2::polar(delta, a)
        })
        .collect();

    let mut reference = Some(seed);
    let mut others: Vec<Option<Vec2>> = starts.iter().map(|&p| Some(p)).collect();
    let mut times = Vec::new();
    let mut divergence = Vec::new();
    let mut lipschitz: f64 = field.jacobian_unchecked(seed).spectral_norm();
    for k in 1..=checkpoints {
        let Some(z) = reference else { break };
        match flow_for(field, z, dt) {
            Some((next, l)) => {
                reference = Some(next);
                lipschitz = lipschitz.max(l);
            }
            None => break,
        }
        others = others
            .par_iter()
            .map(|o| o.and_then(|p| flow_for(field, p, dt).map(|(q, _)| q)))
            .collect();
        let r = reference.unwrap();
        let d = others.iter().flatten().map(|p| p.dist(r)).fold(0.0, f64::max);
        times.push(k as f64 * dt);
        divergence.push(d);
    }

    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&divergence)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&t, &d)| (t, (d / delta).ln()))
        .collect();
    for &(x, y) in &pts {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let n = pts.len() as f64;
    let fitted_rate = if pts.len() >= 2 { (n * sxy - sx * sy) / (n * sxx - sx * sx) } else { 0.0 };
    let within = times
        .iter()
        .zip(&divergence)
        .all(|(&t, &d)| d <= delta * (lipschitz * t).exp() * (1.0 + 1e-6) + 1e-12);
    Ok(UniquenessReport {
        seed,
        delta,
        n_perturbations,
        times,
        max_divergence: divergence,
        fitted_rate,
        lipschitz_bound: lipschitz,
        within_lipschitz_bound: within,
        lost_orbits: others.iter().filter(|o| o.is_none()).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin::LinearHurwitz;

    fn linear() -> VectorField {
        VectorField::from_field(LinearHurwitz::new())
    }

    #[test]
    fn registry_lists_strategies() {
        let r = IntegratorRegistry::builtin();
        assert_eq!(r.names(), vec!["auto", "dopri5"]);
        assert!(r.get("rk2").is_err());
    }

    #[test]
    fn seed_inside_disk_is_rejected() {
        assert!(integrate(&linear(), Vec2::new(0.5, 0.0), Direction::Forward, &Controls::default()).is_err());
    }

    #[test]
    fn linear_forward_enters_disk_backward_escapes() {
        let f = linear();
        let fw = integrate(&f, Vec2::new(10.0, 0.0), Direction::Forward, &Controls::default()).unwrap();
        match fw.terminal {
            Terminal::LeftDomain { t, point } => {
                assert!((t - 10f64.ln()).abs() < 1e-7, "{t}");
                assert!((point.norm() - 1.0).abs() < 1e-9);
            }
            ref other => panic!("{other:?}"),
        }
        let bw = integrate(&f, Vec2::new(10.0, 0.0), Direction::Backward, &Controls::default()).unwrap();
        match bw.terminal {
            Terminal::Escaped { r_exit, t_exit } => {
                assert_eq!(r_exit, 128.0);
                assert!((t_exit + (12.8f64).ln()).abs() < 1e-7, "{t_exit}");
            }
            ref other => panic!("{other:?}"),
        }
        assert!(bw.samples.windows(2).all(|w| w[1].t < w[0].t));
    }

    #[test]
    fn ladder_classification() {
        let f = linear();
        let lad = Ladder::default_for(1.0);
        let bw = integrate(&f, Vec2::new(10.0, 0.0), Direction::Backward, &Controls::default()).unwrap();
        assert_eq!(classify_limit(&bw, &lad).kind, LimitKind::GoesToInfinity);
        let fw = integrate(&f, Vec2::new(10.0, 0.0), Direction::Forward, &Controls::default()).unwrap();
        assert_eq!(classify_limit(&fw, &lad).kind, LimitKind::EntersInnerDisk);
    }

    #[test]
    fn csv_header_and_rows() {
        let tr = integrate(&linear(), Vec2::new(3.0, 4.0), Direction::Forward, &Controls::default()).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x,y,r\n0,3,4,5\n"));
        assert_eq!(csv.lines().count(), tr.samples.len() + 1);
    }
}
