//! Acceptance criteria AC1 to AC11, one PASS/FAIL line per criterion.
//! Runs without the libtest harness so the lines are never captured.
//!
//! A criterion listed in `KNOWN_RED` is expected to fail for a reason that
//! is analysed in the project notes. The suite asserts that it is still red,
//! so an unexpected pass is noticed too.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use horizon::field::registry::FieldParams;
use horizon::field::{scan_region, ScanGrid};
use horizon::foliation::{detect_half_reeb, trace_leaf, Boundedness, Extent, HalfReebControls, LeafArc, LeafControls};
use horizon::index::{compute_index, extension_independence_probe, IndexControls, IndexValue};
use horizon::infinity::{classify_infinity, InfinityControls, Verdict};
use horizon::runner::{self, RunConfig, Subcommand};
use horizon::tangency::{eta_sweep, tangency_report, ClosedCurve, CurveFamily};
use horizon::verify::{green_identity_check, injectivity_scan};
use horizon::{Component, FieldRegistry, FieldSpec, Rect, Vec2, VectorField};
use serde_json::Value;

const KNOWN_RED: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn field(name: &str) -> VectorField {
    FieldRegistry::builtin().build(name, &FieldParams::default()).unwrap()
}

fn hurwitz() -> Vec<&'static str> {
    FieldRegistry::builtin().hurwitz_names()
}

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Closed-form flux of `X` through the circle of radius `r`.
fn analytic_flux(name: &str, r: f64) -> f64 {
    let eps = 0.5;
    let q = 1.0 + r * r;
    match name {
        "rot_decay_repel" => -TAU * eps * r * r / q,
        "rot_feed_attract" => TAU * eps * r * r / (q * q),
        _ => unreachable!(),
    }
}

fn trapezoid_flux(f: &VectorField, r: f64) -> f64 {
    let n = 4096;
    (0..n)
        .map(|k| {
            let u = Vec2::polar(1.0, TAU * k as f64 / n as f64);
            f.value(u * r).dot(u) * r
        })
        .sum::<f64>()
        * TAU
        / n as f64
}

fn ac1() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    // The closed forms behind the targets, checked against direct quadrature.
    for name in ["rot_decay_repel", "rot_feed_attract"] {
        let f = field(name);
        for r in [3.0, 10.0, 100.0] {
            let gap = (trapezoid_flux(&f, r) - analytic_flux(name, r)).abs();
            pass &= gap < 1e-9;
        }
    }
    let runs = [("rot_decay_repel", -PI), ("rot_feed_attract", 0.0), ("linear_hurwitz", f64::NEG_INFINITY)];
    for (name, target) in runs {
        let t0 = Instant::now();
        let est = compute_index(&field(name), &IndexControls::default()).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let ok = match est.value {
            IndexValue::Finite(v) if target == -PI => (v - target).abs() <= 0.01 * PI,
            IndexValue::Finite(v) if target == 0.0 => v.abs() <= 0.01,
            IndexValue::MinusInfinity => target == f64::NEG_INFINITY,
            _ => false,
        };
        pass &= ok && secs <= 30.0;
        parts.push(format!("{name}={:?} ({secs:.2}s)", est.value));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn ac2() -> Outcome {
    let want = [
        ("rot_feed_attract", Verdict::Attractor),
        ("linear_hurwitz", Verdict::Repellor),
        ("rot_decay_repel", Verdict::Repellor),
        ("radial_slow", Verdict::Repellor),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, v) in want {
        let r = classify_infinity(&field(name), &InfinityControls::default()).unwrap();
        pass &= r.verdict == v && r.index_sign_consistent;
        parts.push(format!("{name}={:?}/consistent={}", r.verdict, r.index_sign_consistent));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn ac3() -> Outcome {
    let reg = FieldRegistry::builtin();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in reg.names() {
        let f = field(name);
        let scan = scan_region(&f, [f.sigma(), 25.0], &ScanGrid::default()).unwrap();
        if !scan.no_nonneg_real.is_all() {
            // Outside the hypothesis; shown as a control.
            let rep = tangency_report(&f, &ClosedCurve::circle(5.0)).unwrap();
            parts.push(format!("{name}: excluded by scan (r=5 gives n_e={} n_i={} index={})", rep.n_ext, rep.n_int, rep.index_winding));
            continue;
        }
        let mut row = Vec::new();
        for r in [5.0, 10.0, 20.0] {
            let rep = tangency_report(&f, &ClosedCurve::circle(r)).unwrap();
            pass &= rep.general_position && rep.index_winding == 0 && rep.n_ext == rep.n_int + 2;
            row.push(format!("{}/{}/{}", rep.n_ext, rep.n_int, rep.index_winding));
        }
        parts.push(format!("{name}: {}", row.join(" ")));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

/// Newton solve of `f(x, y) = level` in one coordinate, the other held fixed.
fn solve_on_leaf(f: &VectorField, level: f64, start: f64, at: impl Fn(f64) -> Vec2) -> f64 {
    let fval = |u: f64| f.scalar(Component::F, at(u));
    let mut u = start;
    for _ in 0..60 {
        let h = 1e-6 * (1.0 + u.abs());
        let du = (fval(u) - level) / ((fval(u + h) - fval(u - h)) / (2.0 * h));
        u -= du;
        if du.abs() < 1e-15 * (1.0 + u.abs()) {
            break;
        }
    }
    u
}

fn nearest(values: &[f64], t: f64) -> usize {
    (0..values.len()).min_by(|&i, &j| (values[i] - t).abs().total_cmp(&(values[j] - t).abs())).unwrap()
}

/// Area term of the Green identity, `∫_arc (G(x, y) - G(x, c)) dx` with
/// `G_y = g`, from an independent 2-D Simpson grid. The arc is written as a
/// graph over whichever coordinate runs monotonically along it.
fn grid_oracle(f: &VectorField, arc: &LeafArc, c: f64) -> f64 {
    let xs: Vec<f64> = arc.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = arc.points.iter().map(|p| p.y).collect();
    let (first, last) = (arc.points[0], arc.points[arc.points.len() - 1]);
    let gy = |x: f64, y: f64| {
        let h = 1e-5 * (1.0 + y.abs());
        (f.scalar(Component::G, Vec2::new(x, y + h)) - f.scalar(Component::G, Vec2::new(x, y - h))) / (2.0 * h)
    };
    let column = |x: f64, y: f64| simpson(c, y, 400, |t| gy(x, t));
    if monotone(&xs) {
        // y = h(x)
        return simpson(first.x, last.x, 2000, |x| {
            let y = solve_on_leaf(f, arc.level, ys[nearest(&xs, x)], |u| Vec2::new(x, u));
            column(x, y)
        });
    }
    assert!(monotone(&ys), "arc is a graph over neither axis");
    // x = X(y), dx = X'(y) dy with X' = -f_y / f_x.
    simpson(first.y, last.y, 2000, |y| {
        let x = solve_on_leaf(f, arc.level, xs[nearest(&ys, y)], |u| Vec2::new(u, y));
        let p = Vec2::new(x, y);
        let h = 1e-6 * (1.0 + p.norm());
        let d = |e: Vec2| (f.scalar(Component::F, p + e * h) - f.scalar(Component::F, p - e * h)) / (2.0 * h);
        let dxdy = -d(Vec2::new(0.0, 1.0)) / d(Vec2::new(1.0, 0.0));
        if dxdy == 0.0 {
            return 0.0;
        }
        dxdy * column(x, y)
    })
}

fn ac4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in hurwitz() {
        let f = field(name);
        let s = f.sigma();
        let lc = LeafControls {
            step: 0.01 * s,
            max_length: 10.0 * s,
            window: Some(Rect::new(1.5 * s, 40.0 * s, -40.0 * s, 40.0 * s)),
            extent: Extent::Both,
        };
        let mut worst: f64 = 0.0;
        let mut worst_oracle: f64 = 0.0;
        let seeds = [(4.0, 0.0), (6.0, 2.0), (8.0, -3.0), (5.0, 4.0)];
        for (a, b) in seeds {
            let arc = trace_leaf(&f, Vec2::new(a * s, b * s), Component::F, &lc).unwrap();
            let c = arc.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - 2.0 * s;
            let r = green_identity_check(&f, &arc, c).unwrap();
            let rel = r.slack.abs() / (1.0 + r.lhs.abs());
            let oracle = grid_oracle(&f, &arc, c);
            let orel = (r.lhs - oracle).abs() / (1.0 + oracle.abs());
            pass &= r.passed && rel <= 1e-6 && orel <= 1e-6;
            worst = worst.max(rel);
            worst_oracle = worst_oracle.max(orel);
        }
        parts.push(format!("{name}: {} regions, identity {worst:.1e}, vs grid {worst_oracle:.1e}", seeds.len()));
    }
    Outcome { pass, detail: parts.join("; ") }
}

/// One `verify` run per Hurwitz field through the runner, so the archived
/// report is what the criteria read.
fn verify_reports() -> Vec<(&'static str, Value)> {
    hurwitz()
        .into_iter()
        .map(|name| {
            let out = runner::run(&RunConfig::new(FieldSpec::named(name)), Subcommand::Verify);
            assert_eq!(out.exit_code(), 0, "{name}");
            (name, serde_json::to_value(&out.report).unwrap()["result"].clone())
        })
        .collect()
}

fn ac5(reports: &[(&str, Value)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in reports {
        for variant in ["positive", "negative"] {
            let v = &r["flux"]["variants"][variant];
            let arcs = v["arcs"].as_u64().unwrap();
            let slack = v["min_relative_slack"].as_f64();
            let ok = arcs == 100 && slack.is_some_and(|s| s >= -1e-8);
            pass &= ok;
            let shown = slack.map_or("none".to_string(), |s| format!("{s:.2e}"));
            parts.push(format!("{name}/{variant}: {arcs} arcs, min rel slack {shown}"));
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn ac6(reports: &[(&str, Value)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in reports {
        let v = &r["vertical_ray"];
        let ok = v["seeds"] == 100 && v["hits"] == 0 && v["passed"] == true;
        pass &= ok;
        parts.push(format!("{name}: {} seeds, {} compliant half-leaves, {} hits", v["seeds"], v["compliant"], v["hits"]));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn ac7() -> Outcome {
    let hr = HalfReebControls::default();
    let mut parts = Vec::new();
    let model = detect_half_reeb(&field("model_reeb"), Component::F, Rect::new(0.0, 2.0, 0.0, 2.0), &hr).unwrap();
    let mut pass = model.detected.iter().any(|w| w.boundedness == Boundedness::Bounded);
    parts.push(format!("model_reeb: {} witnesses", model.detected.len()));
    for name in hurwitz() {
        let f = field(name);
        let mut row = Vec::new();
        for h in [5.0, 20.0, 50.0] {
            let rep = detect_half_reeb(&f, Component::F, Rect::centered_square(h), &hr).unwrap();
            let ok = if name == "linear_hurwitz" { rep.none_found } else { rep.none_found || rep.bounded_only() };
            pass &= ok;
            row.push(if rep.none_found { "none".to_string() } else { format!("{} bounded", rep.detected.len()) });
        }
        parts.push(format!("{name}: {}", row.join("/")));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn ac8(reports: &[(&str, Value)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in reports {
        let inj = &r["injectivity"];
        let s = field(name).sigma() * 4.0;
        let ok = inj["s"].as_f64() == Some(s)
            && inj["pairs_tested"] == 100_000
            && inj["grid_points"].as_u64().unwrap() >= 1_000_000
            && inj["pair_collisions"] == 0
            && inj["grid_collisions"] == 0;
        pass &= ok;
        parts.push(format!("{name}: {}+{}", inj["pair_collisions"], inj["grid_collisions"]));
    }
    let f = field("model_reeb");
    let a = injectivity_scan(&f, 4.0 * f.sigma(), 100_000, 0).unwrap();
    let b = injectivity_scan(&f, 4.0 * f.sigma(), 100_000, 0).unwrap();
    let antipodal = a.collisions.iter().all(|c| (c.p + c.q).norm() < 1e-6 * (1.0 + c.p.norm()));
    pass &= a.collision_count() > 0 && a == b && antipodal;
    parts.push(format!("model_reeb: {} collisions, antipodal={antipodal}, reproducible={}", a.collision_count(), a == b));
    Outcome { pass, detail: parts.join("; ") }
}

fn ac9() -> Outcome {
    let fam = CurveFamily::StarShaped { perturbations: 16, seed: 7 };
    let mut pass = true;
    let mut parts = Vec::new();
    for name in FieldRegistry::builtin().names() {
        let s = eta_sweep(&field(name), &[2.0, 4.0, 8.0, 16.0, 32.0], fam).unwrap();
        pass &= s.monotone;
        let mins: Vec<String> = s.rows.iter().map(|r| r.n_int_min.map_or("-".into(), |v| v.to_string())).collect();
        parts.push(format!("{name}: [{}]", mins.join(",")));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn ac10() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut finite = 0;
    for name in FieldRegistry::builtin().names() {
        let f = field(name);
        let est = compute_index(&f, &IndexControls::default()).unwrap();
        if est.value.finite().is_none() {
            continue;
        }
        finite += 1;
        let p = extension_independence_probe(&f, &[2.0, 4.0, 8.0], &IndexControls::default()).unwrap();
        let gap = p.max_discrepancy.unwrap_or(f64::INFINITY);
        pass &= p.consistent_class && gap <= 1e-3;
        parts.push(format!("{name}: spread {gap:.1e}"));
    }
    pass &= finite >= 2;
    Outcome { pass, detail: parts.join("; ") }
}

fn run_all(conf: &Path, out: &Path, threads: &str) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_horizon"))
        .args(["all", "--config"])
        .arg(conf)
        .arg("--out")
        .arg(out)
        .env("HORIZON_THREADS", threads)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out.join("report.json")).unwrap()
}

fn ac11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "field = rot_decay_repel\nepsilon = 0.5\nseed = 11\n").unwrap();
    let a = run_all(&conf, &dir.path().join("a"), "1");
    let b = run_all(&conf, &dir.path().join("b"), "2");
    let mut same = a == b;
    for entry in std::fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        same &= std::fs::read(dir.path().join("a").join(&name)).ok() == std::fs::read(dir.path().join("b").join(&name)).ok();
    }
    Outcome { pass: same, detail: format!("report.json {} bytes, all outputs identical={same}", a.len()) }
}

fn main() {
    let reports = verify_reports();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "index accuracy", ac1()),
        (2, "attractor/repellor dichotomy", ac2()),
        (3, "tangency index formula", ac3()),
        (4, "Green identity vs grid oracle", ac4()),
        (5, "flux inequalities", ac5(&reports)),
        (6, "vertical-ray property", ac6(&reports)),
        (7, "half-Reeb detection", ac7()),
        (8, "injectivity scan", ac8(&reports)),
        (9, "eta monotonicity", ac9()),
        (10, "extension independence", ac10()),
        (11, "determinism of `all`", ac11()),
    ];
    let mut unexpected = Vec::new();
    for (n, title, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if KNOWN_RED.contains(n) { " [known red]" } else { "" };
        println!("AC{n:<2} {tag} {title}{note}: {}", o.detail);
        if o.pass == KNOWN_RED.contains(n) {
            unexpected.push(*n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria off their expected state: {unexpected:?}");
        std::process::exit(1);
    }
    println!("acceptance: {} criteria, known red {KNOWN_RED:?}, no surprises", results.len());
}
