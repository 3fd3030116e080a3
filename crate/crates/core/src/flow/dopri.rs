//! Dormand–Prince 5(4) stepping, in Cartesian time or in polar angle.
//!
//! Near-rotational flows creep outward or inward over millions of turns, so
//! stepping in time is hopeless there. When the field is almost tangential to
//! circles the engine switches to the angle θ as independent variable and
//! integrates `(r, t)` with `dr/dθ = ṙ/ω`, `dt/dθ = 1/ω`, where `ω = θ̇`.

use std::f64::consts::TAU;

use crate::field::VectorField;
use crate::flow::{Controls, Direction, FirstReturn, Sample, Terminal, Trajectory};
use crate::geom::Vec2;

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// b - b̂, the embedded error weights (seven stages, FSAL)
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Fraction of the velocity that is tangential to the circle through `z`
/// at which the engine switches to angle stepping, and back.
pub const ENTER_ANGULAR: f64 = 0.995;
pub const LEAVE_ANGULAR: f64 = 0.98;

type State = [f64; 2];

pub struct Step {
    pub y: State,
    /// Derivative at the new point (first stage of the next step).
    pub k_end: State,
    pub err: f64,
}

fn comb(y: State, h: f64, ks: &[State], ws: &[f64]) -> State {
    let mut out = y;
    for (k, w) in ks.iter().zip(ws) {
        out[0] += h * w * k[0];
        out[1] += h * w * k[1];
    }
    out
}

/// One DOPRI5 step from `(u, y)` with size `h`; `None` when the right-hand
/// side is undefined at a stage.
pub fn dopri_step<F>(rhs: &F, u: f64, y: State, k1: State, h: f64, rel: f64, abs: f64) -> Option<Step>
where
    F: Fn(f64, State) -> Option<State>,
{
    let k2 = rhs(u + C[0] * h, comb(y, h, &[k1], &A2))?;
    let k3 = rhs(u + C[1] * h, comb(y, h, &[k1, k2], &A3))?;
    let k4 = rhs(u + C[2] * h, comb(y, h, &[k1, k2, k3], &A4))?;
    let k5 = rhs(u + C[3] * h, comb(y, h, &[k1, k2, k3, k4], &A5))?;
    let k6 = rhs(u + C[4] * h, comb(y, h, &[k1, k2, k3, k4, k5], &A6))?;
    let y_new = comb(y, h, &[k1, k2, k3, k4, k5, k6], &B);
    let k7 = rhs(u + h, y_new)?;
    let ks = [k1, k2, k3, k4, k5, k6, k7];
    let mut acc = 0.0;
    for i in 0..2 {
        let e: f64 = h * ks.iter().zip(E.iter()).map(|(k, w)| w * k[i]).sum::<f64>();
        let sc = abs + rel * y[i].abs().max(y_new[i].abs());
        acc += (e / sc) * (e / sc);
    }
    let err = (acc / 2.0).sqrt();
    if !err.is_finite() || !y_new[0].is_finite() || !y_new[1].is_finite() {
        return None;
    }
    Some(Step { y: y_new, k_end: k7, err })
}

/// Next step size from the error estimate.
pub fn next_step(h: f64, err: f64, accepted: bool) -> f64 {
    let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
    let hi = if accepted { 5.0 } else { 1.0 };
    h * fac.clamp(0.2, hi)
}

/// Cubic Hermite interpolation on a step of length `h`, at `tau ∈ [0, 1]`.
pub fn hermite(y0: State, d0: State, y1: State, d1: State, h: f64, tau: f64) -> State {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + tau;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let mut out = [0.0; 2];
    for i in 0..2 {
        out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
    }
    out
}

/// Bisection for a sign change of `g` on `[0, 1]`, given `g(0) < 0 <= g(1)`.
fn bisect<G: Fn(f64) -> f64>(g: G) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn wrap(a: f64) -> f64 {
    let mut d = a % TAU;
    if d > std::f64::consts::PI {
        d -= TAU;
    } else if d < -std::f64::consts::PI {
        d += TAU;
    }
    d
}

pub fn tangential_fraction(z: Vec2, v: Vec2) -> f64 {
    let n = z.norm() * v.norm();
    if n == 0.0 {
        0.0
    } else {
        z.cross(v).abs() / n
    }
}

enum Mode {
    Cartesian,
    Angular { omega_sign: f64 },
}

enum Event {
    None,
    Left(f64),
    Escaped(f64),
}

/// Integrates one semi-trajectory; `allow_angular` enables the polar mode.
pub fn run(
    field: &VectorField,
    seed: Vec2,
    direction: Direction,
    c: &Controls,
    allow_angular: bool,
    strategy: &str,
) -> Trajectory {
    let sgn = direction.sign();
    let sigma = field.sigma();
    let r_max = c.r_max.unwrap_or(128.0 * sigma);
    let t_max = c.t_max;
    let vel = |z: Vec2| field.value(z) * sgn;
    let cart_rhs = |_u: f64, y: State| -> Option<State> {
        let v = vel(Vec2::new(y[0], y[1]));
        v.is_finite().then_some([v.x, v.y])
    };

    let mut traj = Trajectory {
        seed,
        direction,
        strategy: strategy.to_string(),
        samples: vec![Sample { t: 0.0, p: seed }],
        terminal: Terminal::Bounded { t_max },
        max_radius: seed.norm(),
        steps: 0,
        first_return: None,
    };

    let phi0 = seed.angle();
    let mut phi = phi0;
    let mut z = seed;
    let mut s = 0.0f64;
    let mut mode = Mode::Cartesian;
    let v0 = vel(seed);
    if !v0.is_finite() {
        traj.terminal = Terminal::StepFailure { reason: "field is not finite at the seed".into() };
        return traj;
    }
    let mut h = (0.01 * seed.norm().max(1.0) / v0.norm().max(1e-300)).min(1.0);
    let mut h_ang: f64 = 0.01;
    let mut rejections = 0usize;
    // Cartesian steps to take before angle stepping may resume; `usize::MAX`
    // once the time budget is nearly spent.
    let mut cooldown = if allow_angular { 0usize } else { usize::MAX };

    let push = |traj: &mut Trajectory, s: f64, p: Vec2| {
        traj.max_radius = traj.max_radius.max(p.norm());
        traj.samples.push(Sample { t: sgn * s, p });
    };

    loop {
        if traj.steps >= c.max_steps {
            traj.terminal = Terminal::StepFailure { reason: format!("step budget of {} exhausted", c.max_steps) };
            return traj;
        }
        if s >= t_max {
            traj.terminal = Terminal::Bounded { t_max };
            return traj;
        }

        if let Mode::Cartesian = mode {
            let v = vel(z);
            if cooldown == 0 && tangential_fraction(z, v) >= ENTER_ANGULAR {
                let omega = z.cross(v) / z.norm_sq();
                mode = Mode::Angular { omega_sign: omega.signum() };
                h_ang = h_ang.abs().max(1e-3) * omega.signum();
                continue;
            }
            if h < 1e-14 * s.abs().max(1.0) {
                traj.terminal = Terminal::StepFailure { reason: "step size underflow".into() };
                return traj;
            }
            let hh = h.min(t_max - s);
            let y0 = [z.x, z.y];
            let k1 = [v.x, v.y];
            let Some(step) = dopri_step(&cart_rhs, s, y0, k1, hh, c.rel_tol, c.abs_tol) else {
                h = 0.25 * hh;
                rejections += 1;
                if rejections > 200 {
                    traj.terminal = Terminal::StepFailure { reason: "field undefined along the step".into() };
                    return traj;
                }
                continue;
            };
            if step.err > 1.0 {
                h = next_step(hh, step.err, false);
                rejections += 1;
                continue;
            }
            rejections = 0;
            traj.steps += 1;
            if cooldown != usize::MAX {
                cooldown = cooldown.saturating_sub(1);
            }
            let z_new = Vec2::new(step.y[0], step.y[1]);
            let interp = |tau: f64| {
                let y = hermite(y0, k1, step.y, step.k_end, hh, tau);
                Vec2::new(y[0], y[1])
            };
            // first full turn about the origin
            let phi_new = phi + wrap(z_new.angle() - z.angle());
            if traj.first_return.is_none() && (phi_new - phi0).abs() >= TAU {
                let target = phi0 + TAU * (phi_new - phi0).signum();
                let dir = (phi_new - phi).signum();
                let tau = bisect(|t| dir * (phi + wrap(interp(t).angle() - z.angle()) - target));
                let p = interp(tau);
                traj.first_return = Some(FirstReturn { t: sgn * (s + tau * hh), point: p, distance: p.dist(seed) });
            }
            let ev = radius_event(z.norm(), z_new.norm(), sigma, r_max, |t| interp(t).norm());
            s = if hh == t_max - s { t_max } else { s + hh };
            phi = phi_new;
            match ev {
                Event::None => {}
                Event::Left(_) | Event::Escaped(_) => {
                    let s0 = s - hh;
                    let at = |frac: f64| {
                        dopri_step(&cart_rhs, s0, y0, k1, frac * hh, c.rel_tol, c.abs_tol)
                            .map(|st| Vec2::new(st.y[0], st.y[1]))
                    };
                    if let Event::Left(tau) = ev {
                        let tau = refine(|f| at(f).map(|p| sigma - p.norm()), tau);
                        let p = at(tau).unwrap_or_else(|| interp(tau));
                        push(&mut traj, s0 + tau * hh, p);
                        traj.terminal = Terminal::LeftDomain { t: sgn * (s0 + tau * hh), point: p };
                    } else if let Event::Escaped(tau) = ev {
                        let tau = refine(|f| at(f).map(|p| p.norm() - r_max), tau);
                        push(&mut traj, s, z_new);
                        traj.terminal = Terminal::Escaped { r_exit: r_max, t_exit: sgn * (s0 + tau * hh) };
                    }
                    return traj;
                }
            }
            z = z_new;
            push(&mut traj, s, z);
            h = next_step(hh, step.err, true);
        } else if let Mode::Angular { omega_sign } = mode {
            let ang_rhs = |theta: f64, y: State| -> Option<State> {
                let p = Vec2::polar(y[0], theta);
                let v = vel(p);
                let omega = p.cross(v) / (y[0] * y[0]);
                if !(omega * omega_sign > 0.0) || !v.is_finite() {
                    return None;
                }
                let rdot = p.dot(v) / y[0];
                Some([rdot / omega, 1.0 / omega])
            };
            let r = z.norm();
            let y0 = [r, s];
            let Some(k1) = ang_rhs(phi, y0) else {
                mode = Mode::Cartesian;
                cooldown = 16;
                continue;
            };
            let mut hh = h_ang;
            // land exactly on the first full turn
            if traj.first_return.is_none() {
                let target = phi0 + TAU * omega_sign;
                let remaining = target - phi;
                if remaining * omega_sign > 0.0 && hh.abs() > remaining.abs() {
                    hh = remaining;
                }
            }
            if hh.abs() < 1e-9 {
                mode = Mode::Cartesian;
                h_ang = 1e-3 * omega_sign;
                cooldown = 16;
                continue;
            }
            let Some(step) = dopri_step(&ang_rhs, phi, y0, k1, hh, c.rel_tol, c.abs_tol) else {
                h_ang = 0.25 * hh;
                continue;
            };
            if step.err > 1.0 {
                h_ang = next_step(hh, step.err, false);
                continue;
            }
            if step.y[1] > t_max {
                // finish the remaining time in Cartesian mode
                mode = Mode::Cartesian;
                cooldown = usize::MAX;
                h = (t_max - s).min(h.max(1e-3));
                continue;
            }
            traj.steps += 1;
            let phi_new = phi + hh;
            let z_new = Vec2::polar(step.y[0], phi_new);
            let interp = |tau: f64| hermite(y0, k1, step.y, step.k_end, hh, tau);
            if traj.first_return.is_none() && (phi_new - phi0).abs() >= TAU * (1.0 - 1e-15) {
                traj.first_return =
                    Some(FirstReturn { t: sgn * step.y[1], point: z_new, distance: z_new.dist(seed) });
            }
            let ev = radius_event(r, step.y[0], sigma, r_max, |t| interp(t)[0]);
            let at = |frac: f64| dopri_step(&ang_rhs, phi, y0, k1, frac * hh, c.rel_tol, c.abs_tol).map(|st| st.y);
            match ev {
                Event::None => {}
                Event::Left(tau) => {
                    let tau = refine(|f| at(f).map(|y| sigma - y[0]), tau);
                    let y = at(tau).unwrap_or_else(|| interp(tau));
                    let p = Vec2::polar(y[0], phi + tau * hh);
                    push(&mut traj, y[1], p);
                    traj.terminal = Terminal::LeftDomain { t: sgn * y[1], point: p };
                    return traj;
                }
                Event::Escaped(tau) => {
                    let tau = refine(|f| at(f).map(|y| y[0] - r_max), tau);
                    let t_exit = at(tau).unwrap_or_else(|| interp(tau))[1];
                    push(&mut traj, step.y[1], z_new);
                    traj.terminal = Terminal::Escaped { r_exit: r_max, t_exit: sgn * t_exit };
                    return traj;
                }
            }
            phi = phi_new;
            z = z_new;
            s = step.y[1];
            push(&mut traj, s, z);
            h_ang = next_step(hh, step.err, true);
            if tangential_fraction(z, vel(z)) < LEAVE_ANGULAR {
                mode = Mode::Cartesian;
                h = (0.01 * z.norm().max(1.0) / vel(z).norm().max(1e-300)).min(1.0);
            }
        }
    }
}

/// Illinois false position on `[0, 1]` for `g(0) < 0 <= g(1)`, falling back
/// to `guess` where `g` is undefined.
fn refine<G: Fn(f64) -> Option<f64>>(g: G, guess: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    let Some(mut g_hi) = g(1.0) else { return guess };
    let mut g_lo = match g(0.0) {
        Some(v) => v,
        None => return guess,
    };
    if !(g_lo < 0.0 && g_hi >= 0.0) {
        return guess;
    }
    let mut side = 0i8;
    for _ in 0..100 {
        if hi - lo <= 1e-15 {
            break;
        }
        let mut x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let Some(gx) = g(x) else { return guess };
        if gx < 0.0 {
            lo = x;
            g_lo = gx;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            g_hi = gx;
            if gx == 0.0 {
                break;
            }
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    hi
}

/// Locates the first crossing of `sigma` (inward) or `r_max` (outward)
/// inside a step, as a fraction of the step.
fn radius_event<R: Fn(f64) -> f64>(r0: f64, r1: f64, sigma: f64, r_max: f64, radius: R) -> Event {
    if r1 < sigma {
        let tau = bisect(|t| sigma - radius(t));
        return Event::Left(tau);
    }
    if r1 >= r_max && r0 < r_max {
        let tau = bisect(|t| radius(t) - r_max);
        return Event::Escaped(tau);
    }
    Event::None
}
