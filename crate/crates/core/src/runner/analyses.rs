//! The built-in analyses, one per subcommand.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde_json::{json, Value};

use super::config::FamilyKind;
use super::{Analysis, Context, Section};
use crate::error::{Error, Result};
use crate::field::spectrum::Outcome;
use crate::field::{scan_region, Component, ScanGrid};
use crate::flow::{self, classify_limit, Direction, LimitKind};
use crate::foliation::{detect_half_reeb, trace_leaf, Extent, HalfReebControls, LeafArc, LeafControls};
use crate::geom::{Rect, Vec2};
use crate::index::{compute_index, extension_independence_probe, IndexControls};
use crate::infinity::{classify_infinity, InfinityControls};
use crate::tangency::{eta_sweep, general_position_report, ClosedCurve, CurveFamily, TangencyControls};
use crate::verify::{
    annulus_seeds, flux_inequality_sweep, green_identity_check, injectivity_scan_with, vertical_ray_check, ArcSampling,
    FluxVariant, InjectivityControls, RayControls,
};

pub fn builtin() -> Vec<Box<dyn Analysis>> {
    vec![
        Box::new(SpectrumAnalysis),
        Box::new(FlowAnalysis),
        Box::new(FoliationAnalysis),
        Box::new(TangencyAnalysis),
        Box::new(IndexAnalysis),
        Box::new(ClassifyAnalysis),
        Box::new(VerifyAnalysis),
    ]
}

const MAX_LISTED: usize = 20;

fn outside(ctx: &Context, r: f64, what: &str) -> Result<f64> {
    if !(r.is_finite() && r > ctx.sigma()) {
        return Err(Error::Precondition(format!("{what} {r} must exceed σ = {}", ctx.sigma())));
    }
    Ok(r)
}

fn flow_controls(ctx: &Context) -> flow::Controls {
    let t = &ctx.config.tolerances;
    let mut c = flow::Controls { rel_tol: t.flow_rel, abs_tol: t.flow_abs, ..flow::Controls::default() };
    if let Some(tm) = ctx.config.options.t_max {
        c.t_max = tm;
    }
    c
}

fn index_controls(ctx: &Context) -> IndexControls {
    let t = &ctx.config.tolerances;
    IndexControls { tol: t.index, quad_tol: t.quad, ..IndexControls::default() }
}

fn outcome_json(o: &Outcome) -> Value {
    match o {
        Outcome::All => json!({ "all": true, "violations": 0, "examples": [] }),
        Outcome::Violations(v) => json!({
            "all": false,
            "violations": v.len(),
            "examples": v.iter().take(MAX_LISTED).collect::<Vec<_>>(),
        }),
    }
}

struct SpectrumAnalysis;

impl Analysis for SpectrumAnalysis {
    fn name(&self) -> &'static str {
        "spectrum"
    }

    fn describe(&self) -> &'static str {
        "Jacobian eigenvalue scan over the annulus [σ, radius]"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let r_max = outside(ctx, ctx.config.radius.unwrap_or(16.0 * ctx.sigma()), "scan radius")?;
        let grid = ScanGrid::default();
        let rep = scan_region(&ctx.field, [ctx.sigma(), r_max], &grid)?;
        let mut csv = String::from("predicate,x,y,j11,j12,j21,j22\n");
        for o in [&rep.hurwitz, &rep.no_nonneg_real, &rep.det_positive] {
            if let Outcome::Violations(v) = o {
                for w in v {
                    let j = w.jacobian;
                    let _ = writeln!(csv, "{},{},{},{},{},{},{}", w.predicate, w.point.x, w.point.y, j[0][0], j[0][1], j[1][0], j[1][1]);
                }
            }
        }
        let summary = json!({
            "hurwitz": rep.hurwitz.is_all(),
            "no_nonneg_real": rep.no_nonneg_real.is_all(),
            "det_positive": rep.det_positive.is_all(),
            "max_real_part": rep.max_real_part,
        });
        let result = json!({
            "annulus": rep.annulus,
            "samples": rep.samples,
            "grid": grid,
            "hurwitz": outcome_json(&rep.hurwitz),
            "no_nonneg_real": outcome_json(&rep.no_nonneg_real),
            "det_positive": outcome_json(&rep.det_positive),
            "max_real_part": rep.max_real_part,
            "min_real_part": rep.min_real_part,
        });
        Ok(Section { summary, result, csv: vec![("spectrum_violations.csv".into(), csv)] })
    }
}

struct FlowAnalysis;

impl Analysis for FlowAnalysis {
    fn name(&self) -> &'static str {
        "flow"
    }

    fn describe(&self) -> &'static str {
        "forward and backward orbits from a seed circle, classified against an escape ladder"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let sigma = ctx.sigma();
        let r = outside(ctx, ctx.config.radius.unwrap_or(2.0 * sigma), "seed circle radius")?;
        let n = ctx.config.options.seeds.unwrap_or(16).max(1);
        let ladder = flow::Ladder::default_for(sigma.max(r / 2.0));
        let controls = flow::Controls { r_max: Some(ladder.top() * 1.001), ..flow_controls(ctx) };
        let seeds: Vec<Vec2> = (0..n).map(|k| Vec2::polar(r, TAU * k as f64 / n as f64)).collect();
        let mut rows = Vec::new();
        let mut csv = String::from("seed,direction,t,x,y,r\n");
        let mut escapes = [0usize; 2];
        for (d, dir) in [Direction::Forward, Direction::Backward].into_iter().enumerate() {
            let trajs = flow::integrate_batch(&ctx.field, &seeds, dir, &controls)?;
            for (k, t) in trajs.iter().enumerate() {
                let v = classify_limit(t, &ladder);
                if v.kind == LimitKind::GoesToInfinity {
                    escapes[d] += 1;
                }
                for s in &t.samples {
                    let _ = writeln!(csv, "{k},{},{},{},{},{}", dir_str(dir), s.t, s.p.x, s.p.y, s.p.norm());
                }
                rows.push(json!({
                    "seed_index": k,
                    "seed": t.seed,
                    "direction": dir,
                    "limit": v.kind,
                    "rungs_crossed": v.evidence.rungs_crossed,
                    "returned_below": v.evidence.returned_below,
                    "max_radius": t.max_radius,
                    "final_radius": v.evidence.final_radius,
                    "steps": t.steps,
                    "terminal": t.terminal,
                    "first_return": t.first_return,
                }));
            }
        }
        let summary = json!({ "seeds": n, "forward_escapes": escapes[0], "backward_escapes": escapes[1] });
        let result = json!({
            "seed_radius": r,
            "ladder": ladder,
            "controls": controls,
            "seeds": n,
            "forward_escapes": escapes[0],
            "backward_escapes": escapes[1],
            "trajectories": rows,
        });
        Ok(Section { summary, result, csv: vec![("flow_trajectories.csv".into(), csv)] })
    }
}

fn dir_str(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    }
}

struct FoliationAnalysis;

impl Analysis for FoliationAnalysis {
    fn name(&self) -> &'static str {
        "foliation"
    }

    fn describe(&self) -> &'static str {
        "half-Reeb component search and sample leaves of the first component"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let sigma = ctx.sigma();
        let window = match ctx.config.options.window {
            Some(w) => w,
            None => Rect::centered_square(outside(ctx, ctx.config.radius.unwrap_or(20.0 * sigma), "window radius")?),
        };
        let mut hr = HalfReebControls::default();
        if let Some(g) = ctx.config.options.grid {
            hr.grid = g.clamp(16, 4097);
        }
        let reeb = detect_half_reeb(&ctx.field, Component::F, window, &hr)?;

        let lc = LeafControls {
            step: 0.01 * sigma,
            max_length: 20.0 * sigma,
            window: Some(window.scaled_about_center(1.5)),
            extent: Extent::Both,
        };
        let n = ctx.config.options.seeds.unwrap_or(8).max(1);
        let mut leaves = Vec::new();
        let mut csv = String::from("leaf,x,y\n");
        for k in 0..n {
            let start = Vec2::polar(3.0 * sigma, TAU * (k as f64 + 0.5) / n as f64);
            let arc = trace_leaf(&ctx.field, start, Component::F, &lc)?;
            for p in &arc.points {
                let _ = writeln!(csv, "{k},{},{}", p.x, p.y);
            }
            leaves.push(json!({
                "start": start,
                "level": arc.level,
                "points": arc.points.len(),
                "length": arc.length(),
                "ends": arc.ends,
                "max_residual": arc.max_residual(&ctx.field),
            }));
        }
        let summary = json!({
            "none_found": reeb.none_found,
            "detected": reeb.detected.len(),
            "bounded_only": reeb.bounded_only(),
        });
        let result = json!({
            "window": window,
            "half_reeb": reeb,
            "bounded_only": reeb.bounded_only(),
            "leaf_controls": lc,
            "leaves": leaves,
        });
        Ok(Section { summary, result, csv: vec![("foliation_leaves.csv".into(), csv)] })
    }
}

fn family(ctx: &Context) -> CurveFamily {
    let o = &ctx.config.options;
    match o.family.unwrap_or(FamilyKind::Star) {
        FamilyKind::Circles => CurveFamily::Circles,
        FamilyKind::Star => CurveFamily::StarShaped { perturbations: o.perturbations.unwrap_or(16), seed: ctx.config.seed },
    }
}

fn sweep_radii(ctx: &Context) -> Vec<f64> {
    ctx.config.radii.clone().unwrap_or_else(|| [2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|k| k * ctx.sigma()).collect())
}

struct TangencyAnalysis;

impl Analysis for TangencyAnalysis {
    fn name(&self) -> &'static str {
        "tangency"
    }

    fn describe(&self) -> &'static str {
        "leaf tangencies and the index formula on a circle, plus the internal-tangency sweep"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let r = outside(ctx, ctx.config.radius.unwrap_or(3.0 * ctx.sigma()), "curve radius")?;
        let tc = TangencyControls {
            samples: ctx.config.options.samples.unwrap_or(TangencyControls::default().samples),
            angle_tol: ctx.config.tolerances.angle,
            ..TangencyControls::default()
        };
        let (rep, retries) = general_position_report(&ctx.field, &ClosedCurve::circle(r), &tc, ctx.config.seed)?;
        let fam = family(ctx);
        let sweep = eta_sweep(&ctx.field, &sweep_radii(ctx), fam)?;
        let summary = json!({
            "n_ext": rep.n_ext,
            "n_int": rep.n_int,
            "index_winding": rep.index_winding,
            "formula_holds": rep.formula_holds,
            "eta_monotone": sweep.monotone,
        });
        let result = json!({
            "radius": r,
            "jitter_retries": retries,
            "n_ext": rep.n_ext,
            "n_int": rep.n_int,
            "n_degenerate": rep.n_degenerate,
            "index_formula": rep.index_formula,
            "index_winding": rep.index_winding,
            "formula_holds": rep.formula_holds,
            "general_position": rep.general_position,
            "extrema_external": rep.extrema_external,
            "report": rep,
            "eta_sweep": sweep,
        });
        Ok(Section { summary, result, csv: vec![("tangency_points.csv".into(), rep.to_csv())] })
    }
}

struct IndexAnalysis;

impl Analysis for IndexAnalysis {
    fn name(&self) -> &'static str {
        "index"
    }

    fn describe(&self) -> &'static str {
        "index at infinity from the flux ladder, with an extension-independence probe"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let sigma = ctx.sigma();
        let mut controls = index_controls(ctx);
        controls.s = ctx.config.options.s;
        let est = compute_index(&ctx.field, &controls)?;
        let s_values: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|k| k * sigma).collect();
        let probe = extension_independence_probe(&ctx.field, &s_values, &index_controls(ctx))?;
        let mut csv = String::from("radius,flux,area,flux_scale\n");
        for k in 0..est.radii.len() {
            let area = est.area.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(csv, "{},{},{},{}", est.radii[k], est.flux[k], area, est.flux_scale[k]);
        }
        let summary = json!({
            "value": est.value,
            "max_area_gap": est.max_area_gap,
            "probe_max_discrepancy": probe.max_discrepancy,
            "probe_consistent_class": probe.consistent_class,
        });
        let result = json!({ "controls": controls, "estimate": est, "extension_probe": probe });
        Ok(Section { summary, result, csv: vec![("index_ladder.csv".into(), csv)] })
    }
}

struct ClassifyAnalysis;

impl Analysis for ClassifyAnalysis {
    fn name(&self) -> &'static str {
        "classify"
    }

    fn describe(&self) -> &'static str {
        "attractor/repellor verdict at infinity from transversal curves, escapes and the index"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let mut controls = InfinityControls {
            radii: ctx.config.radii.clone(),
            flow: flow_controls(ctx),
            index: index_controls(ctx),
            ..InfinityControls::default()
        };
        controls.curve_search.seed = ctx.config.seed;
        if let Some(n) = ctx.config.options.seeds {
            controls.seeds = n;
        }
        let v = classify_infinity(&ctx.field, &controls)?;
        let summary = json!({
            "verdict": v.verdict,
            "index": v.index.value,
            "index_sign_consistent": v.index_sign_consistent,
            "periodicity_flag": v.periodicity_flag,
            "ladder_ok": v.ladder_ok,
        });
        let result = json!({
            "verdict": v.verdict,
            "consistent": v.index_sign_consistent,
            "index_sign_consistent": v.index_sign_consistent,
            "index": v.index.value,
            "translation": v.v,
            "ladder_ok": v.ladder_ok,
            "periodicity_flag": v.periodicity_flag,
            "closest_return": v.closest_return,
            "escape_stats": v.escape_stats,
            "ladder": v.ladder,
            "index_estimate": v.index,
        });
        Ok(Section { summary, result, csv: vec![("classify_ladder.csv".into(), v.ladder.to_csv(64))] })
    }
}

struct VerifyAnalysis;

/// Fields without the no-nonnegative-real-eigenvalue property fall outside
/// the hypotheses of the ray, Green and flux checks.
fn spectrally_compliant(ctx: &Context) -> Result<bool> {
    if let Some(info) = &ctx.info {
        if !info.no_nonneg_real {
            return Ok(false);
        }
    }
    let rep = scan_region(&ctx.field, [ctx.sigma(), 30.0 * ctx.sigma()], &ScanGrid::default())?;
    Ok(rep.no_nonneg_real.is_all())
}

fn arc_row(arc: &LeafArc) -> Value {
    let p = arc.points[0];
    let q = arc.points[arc.points.len() - 1];
    json!({ "p": p, "q": q, "level": arc.level, "points": arc.points.len(), "length": arc.length() })
}

impl Analysis for VerifyAnalysis {
    fn name(&self) -> &'static str {
        "verify"
    }

    fn describe(&self) -> &'static str {
        "vertical-ray, Green identity, flux inequality and injectivity checks"
    }

    fn run(&self, ctx: &Context) -> Result<Section> {
        let sigma = ctx.sigma();
        let cfg = ctx.config;
        let compliant = spectrally_compliant(ctx)?;
        let mut csv = Vec::new();
        let mut checks = serde_json::Map::new();
        let mut summary = serde_json::Map::new();
        summary.insert("spectral_hypotheses".into(), json!(compliant));

        if compliant {
            let n = cfg.options.seeds.unwrap_or(100);
            let seeds = annulus_seeds(n, 3.0 * sigma, 30.0 * sigma, cfg.seed);
            let rc = RayControls {
                step: 0.01 * sigma,
                max_length: 40.0 * sigma,
                window: None,
                exit_radius: 0.05 * sigma,
            };
            let ray = vertical_ray_check(&ctx.field, &seeds, &rc);
            let offenders: Vec<_> = ray.entries.iter().filter(|e| e.hits > 0).take(MAX_LISTED).collect();
            summary.insert("vertical_ray_passed".into(), json!(ray.passed));
            checks.insert(
                "vertical_ray".into(),
                json!({
                    "seeds": n,
                    "entries": ray.entries.len(),
                    "compliant": ray.compliant,
                    "hits": ray.hits,
                    "passed": ray.passed,
                    "noted": ray.entries.iter().filter(|e| e.note.is_some()).count(),
                    "offenders": offenders,
                }),
            );

            let lc = LeafControls {
                step: 0.01 * sigma,
                max_length: 10.0 * sigma,
                window: Some(Rect::new(1.5 * sigma, 40.0 * sigma, -40.0 * sigma, 40.0 * sigma)),
                extent: Extent::Both,
            };
            let mut green = Vec::new();
            for (a, b) in [(4.0, 0.0), (6.0, 2.0), (8.0, -3.0)] {
                let arc = trace_leaf(&ctx.field, Vec2::new(a * sigma, b * sigma), Component::F, &lc)?;
                let c = arc.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - 2.0 * sigma;
                let r = green_identity_check(&ctx.field, &arc, c)?;
                green.push(json!({
                    "arc": arc_row(&arc),
                    "baseline": c,
                    "area": r.lhs,
                    "boundary": r.rhs,
                    "slack": r.slack,
                    "relative_error": r.slack.abs() / (1.0 + r.lhs.abs()),
                    "pieces": r.pieces,
                    "passed": r.passed,
                }));
            }
            let green_passed = green.iter().all(|g| g["passed"] == true);
            summary.insert("green_passed".into(), json!(green_passed));
            checks.insert("green".into(), json!({ "regions": green, "passed": green_passed }));

            let sampling = ArcSampling {
                r_min: 3.0 * sigma,
                r_max: 30.0 * sigma,
                max_length: 10.0 * sigma,
                step: 0.01 * sigma,
                ..ArcSampling::default()
            };
            let n_arcs = cfg.options.arcs.unwrap_or(100);
            let mut rows = String::from("variant,arc,px,py,qx,qy,lhs,rhs,slack,relative_slack,passed\n");
            let mut flux = serde_json::Map::new();
            for (k, variant) in [FluxVariant::Positive, FluxVariant::Negative].into_iter().enumerate() {
                let sweep = flux_inequality_sweep(&ctx.field, variant, n_arcs, &sampling, cfg.seed.wrapping_add(k as u64))?;
                for (i, r) in sweep.reports.iter().enumerate() {
                    let (p, q) = (r.arc.points[0], r.arc.points[r.arc.points.len() - 1]);
                    let _ = writeln!(
                        rows,
                        "{},{i},{},{},{},{},{},{},{},{},{}",
                        variant.as_str(),
                        p.x,
                        p.y,
                        q.x,
                        q.y,
                        r.lhs,
                        r.rhs,
                        r.slack,
                        r.relative_slack(),
                        r.passed
                    );
                }
                let failing: Vec<Value> = sweep
                    .reports
                    .iter()
                    .filter(|r| !r.passed)
                    .take(MAX_LISTED)
                    .map(|r| json!({ "arc": arc_row(&r.arc), "lhs": r.lhs, "rhs": r.rhs, "slack": r.slack }))
                    .collect();
                summary.insert(format!("flux_{}_arcs", variant.as_str()), json!(sweep.arcs()));
                summary.insert(format!("flux_{}_passed", variant.as_str()), json!(sweep.all_passed));
                flux.insert(
                    variant.as_str().into(),
                    json!({
                        "requested": sweep.requested,
                        "arcs": sweep.arcs(),
                        "attempts": sweep.attempts,
                        "complete": sweep.complete(),
                        "min_relative_slack": sweep.min_relative_slack,
                        "min_slack": sweep.min_slack,
                        "all_passed": sweep.all_passed,
                        "failing": failing,
                    }),
                );
            }
            checks.insert("flux".into(), json!({ "sampling": sampling, "variants": flux }));
            csv.push(("verify_flux_arcs.csv".to_string(), rows));
        } else {
            let note = "ray, Green and flux checks skipped: the field has real nonnegative eigenvalues";
            checks.insert("skipped".into(), json!(note));
        }

        let grid = cfg.options.grid.unwrap_or(1000);
        let ic = InjectivityControls {
            n_pairs: cfg.options.pairs.unwrap_or(100_000),
            grid_radial: grid,
            grid_angular: grid,
            collision_tol_rel: cfg.tolerances.collision,
            seed: cfg.seed,
            ..InjectivityControls::default()
        };
        let s = cfg.options.s.unwrap_or(4.0 * sigma);
        let inj = injectivity_scan_with(&ctx.field, s, &ic)?;
        summary.insert("injectivity_collisions".into(), json!(inj.collision_count()));
        checks.insert(
            "injectivity".into(),
            json!({
                "s": inj.s,
                "r_max": inj.r_max,
                "pairs_tested": inj.pairs_tested,
                "grid_points": inj.grid_points,
                "image_scale": inj.image_scale,
                "collision_tol": inj.collision_tol,
                "pair_collisions": inj.pair_collisions,
                "grid_collisions": inj.grid_collisions,
                "collisions_listed": inj.collisions.len(),
                "passed": inj.passed,
            }),
        );
        csv.push(("verify_collisions.csv".to_string(), inj.collisions_csv()));
        Ok(Section { summary: Value::Object(summary), result: Value::Object(checks), csv })
    }
}
