use horizon::field::builtin::LinearHurwitz;
use horizon::field::dsl::DslField;
use horizon::field::registry::FieldParams;
use horizon::foliation::leaf::{trace_leaf, Extent, LeafControls};
use horizon::foliation::LeafArc;
use horizon::verify::*;
use horizon::{Component, Error, FieldRegistry, Rect, Vec2, VectorField};
use proptest::prelude::*;

fn registry_field(name: &str) -> VectorField {
    FieldRegistry::builtin().build(name, &FieldParams::default()).unwrap()
}

fn leaf_through(f: &VectorField, p: Vec2, half_length: f64, extent: Extent) -> LeafArc {
    let controls = LeafControls {
        step: 0.01,
        max_length: half_length,
        window: Some(Rect::new(f.sigma() + 0.5, 40.0, -40.0, 40.0)),
        extent,
    };
    trace_leaf(f, p, Component::F, &controls).unwrap()
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

/// Fine-grid area integral of `g_y` below a graph-like leaf, with the leaf
/// height solved by Newton on `f` and `g_y` by central differences.
fn grid_area_oracle(f: &VectorField, arc: &LeafArc, c: f64) -> f64 {
    let level = arc.level;
    let pts = &arc.points;
    let height = |x: f64| {
        let i = pts.iter().enumerate().min_by(|a, b| (a.1.x - x).abs().total_cmp(&(b.1.x - x).abs())).unwrap().0;
        let mut y = pts[i].y;
        for _ in 0..50 {
            let h = 1e-6;
            let r = f.scalar(Component::F, Vec2::new(x, y)) - level;
            let d = (f.scalar(Component::F, Vec2::new(x, y + h)) - f.scalar(Component::F, Vec2::new(x, y - h))) / (2.0 * h);
            y -= r / d;
            if r.abs() < 1e-15 {
                break;
            }
        }
        y
    };
    let gy = |x: f64, y: f64| {
        let h = 1e-5;
        (f.scalar(Component::G, Vec2::new(x, y + h)) - f.scalar(Component::G, Vec2::new(x, y - h))) / (2.0 * h)
    };
    let (a, b) = (pts[0].x, pts.last().unwrap().x);
    simpson(a, b, 2000, |x| {
        let top = height(x);
        simpson(c, top, 400, |y| gy(x, y))
    })
}

#[test]
fn green_on_vertical_leaf_is_degenerate() {
    let f = VectorField::from_field(LinearHurwitz::new());
    let arc = leaf_through(&f, Vec2::new(3.0, 1.0), 2.0, Extent::Both);
    let r = green_identity_check(&f, &arc, -5.0).unwrap();
    assert_eq!(r.span, 0.0);
    assert!(r.lhs.abs() < 1e-14 && r.rhs.abs() < 1e-14);
    assert!(r.passed);
}

#[test]
fn green_identity_rot_decay_matches_grid_oracle() {
    let f = registry_field("rot_decay_repel");
    let arc = leaf_through(&f, Vec2::new(4.0, 0.0), 5.0, Extent::Both);
    let r = green_identity_check(&f, &arc, -10.0).unwrap();
    assert!(r.passed, "{}", r.slack);
    assert!(r.slack.abs() <= 1e-6 * (1.0 + r.lhs.abs()));
    assert_eq!(r.pieces, 1);
    let oracle = grid_area_oracle(&f, &arc, -10.0);
    assert!((r.lhs - oracle).abs() < 1e-7 * (1.0 + oracle.abs()), "{} vs {oracle}", r.lhs);
}

#[test]
fn green_identity_rot_feed_matches_grid_oracle() {
    let f = registry_field("rot_feed_attract");
    let arc = leaf_through(&f, Vec2::new(5.0, 1.0), 5.0, Extent::Both);
    let r = green_identity_check(&f, &arc, -12.0).unwrap();
    assert!(r.passed);
    let oracle = grid_area_oracle(&f, &arc, -12.0);
    assert!((r.lhs - oracle).abs() < 1e-7 * (1.0 + oracle.abs()), "{} vs {oracle}", r.lhs);
    assert!((r.rhs - oracle).abs() < 1e-6 * (1.0 + oracle.abs()));
}

#[test]
fn green_identity_folded_radial_leaf() {
    // Leaves of radial_slow are x/ρ = k, folding at y = 0. The two pieces
    // bound the region between the branches y = ±φ(x), and the inner integral
    // of g_y = -(1+x²)/ρ³ is -y/ρ, so the signed area is ∫ 2kφ(x)/x dx.
    let f = registry_field("radial_slow");
    let arc = leaf_through(&f, Vec2::new(3.0, 0.0), 2.5, Extent::Both);
    let r = green_identity_check(&f, &arc, -12.0).unwrap();
    assert_eq!(r.pieces, 2);
    assert!(r.passed);
    let k = 3.0 / 10f64.sqrt();
    let phi = |x: f64| (x * x * (1.0 - k * k) / (k * k) - 1.0).max(0.0).sqrt();
    let x0 = k / (1.0 - k * k).sqrt();
    let x1 = arc.points[0].x;
    assert!((arc.points.last().unwrap().x - x1).abs() < 1e-9);
    // Smoothstep substitution removes the square-root endpoint.
    let oracle = simpson(0.0, 1.0, 20000, |t| {
        let x = x0 + (x1 - x0) * t * t * (3.0 - 2.0 * t);
        let dx = (x1 - x0) * 6.0 * t * (1.0 - t);
        2.0 * k * phi(x) / x * dx
    });
    assert!((r.lhs - oracle).abs() < 1e-7 * (1.0 + oracle), "{} vs {oracle}", r.lhs);
}

#[test]
fn green_region_errors() {
    let f = registry_field("rot_decay_repel");
    let arc = leaf_through(&f, Vec2::new(4.0, 0.0), 3.0, Extent::Both);
    assert!(matches!(green_identity_check(&f, &arc, 0.5), Err(Error::RegionConstruction(_))));
    let g_arc = LeafArc { component: Component::G, ..arc };
    assert!(matches!(green_identity_check(&f, &g_arc, -10.0), Err(Error::RegionConstruction(_))));
}

#[test]
fn flux_on_vertical_leaf_is_exact() {
    let f = VectorField::from_field(LinearHurwitz::new());
    let arc = leaf_through(&f, Vec2::new(3.0, -1.0), 2.0, Extent::Positive);
    let len = arc.length();
    for v in [FluxVariant::Positive, FluxVariant::Negative] {
        let r = flux_inequality_check(&f, &arc, v).unwrap();
        // ⟨X, ∇f⟩ = x = 3 and dt = -ds along the downward leaf.
        assert!((r.lhs.abs() - 3.0 * len).abs() < 1e-10);
        assert!((r.rhs - r.lhs).abs() < 1e-10);
        assert_eq!(r.span, 0.0);
        assert!(r.passed);
    }
}

/// `∫ (x_q - x) dg` or `∫ (x - x_q) dg` by the midpoint rule on the stored
/// points; the flux slack equals this integral exactly.
fn by_parts_oracle(f: &VectorField, arc: &LeafArc, variant: FluxVariant) -> f64 {
    let xq = arc.points.last().unwrap().x;
    arc.points
        .windows(2)
        .map(|w| {
            let dg = f.scalar(Component::G, w[1]) - f.scalar(Component::G, w[0]);
            let xm = 0.5 * (w[0].x + w[1].x);
            match variant {
                FluxVariant::Positive => (xq - xm) * dg,
                FluxVariant::Negative => (xm - xq) * dg,
            }
        })
        .sum()
}

fn check_sweep(name: &str, variant: FluxVariant) {
    let f = registry_field(name);
    let sweep = flux_inequality_sweep(&f, variant, 100, &ArcSampling::default(), 7).unwrap();
    assert!(sweep.complete(), "{name}: {} arcs", sweep.arcs());
    assert!(sweep.all_passed);
    assert!(sweep.min_relative_slack.unwrap() >= -NUMERICAL_SLACK);
    for r in &sweep.reports {
        let oracle = by_parts_oracle(&f, &r.arc, variant);
        assert!(oracle >= -1e-12);
        assert!((r.slack - oracle).abs() < 1e-5 * (1.0 + oracle.abs()), "{name}: {} vs {oracle}", r.slack);
    }
}

#[test]
fn positive_flux_rot_decay() {
    check_sweep("rot_decay_repel", FluxVariant::Positive);
    let f = registry_field("rot_decay_repel");
    let sweep = flux_inequality_sweep(&f, FluxVariant::Positive, 20, &ArcSampling::default(), 3).unwrap();
    assert!(sweep.reports.iter().all(|r| r.span > 0.0));
}

#[test]
fn negative_flux_radial_slow() {
    check_sweep("radial_slow", FluxVariant::Negative);
    check_sweep("radial_slow", FluxVariant::Positive);
}

#[test]
fn rotating_fields_admit_no_negative_arcs() {
    // The leaf direction (-f_y, f_x) has first component at least 1 - ε/4, so
    // Π increases along every half-leaf and the negative ordering never holds.
    for name in ["rot_decay_repel", "rot_feed_attract"] {
        let f = registry_field(name);
        for i in 0..200 {
            for j in 0..200 {
                let p = Vec2::new(-30.0 + 0.3 * i as f64, -30.0 + 0.3 * j as f64);
                if p.norm() > f.sigma() {
                    assert!(f.leaf_tangent(Component::F, p).x >= 1.0 - 0.5 / 4.0 - 1e-12);
                }
            }
        }
        let sweep = flux_inequality_sweep(&f, FluxVariant::Negative, 10, &ArcSampling::default(), 1).unwrap();
        assert_eq!(sweep.arcs(), 0);
        assert_eq!(sweep.attempts, 10 * ArcSampling::default().attempts_per_arc);
    }
}

#[test]
fn flux_preconditions() {
    let f = registry_field("rot_decay_repel");
    let arc = leaf_through(&f, Vec2::new(5.0, 2.0), 3.0, Extent::Positive);
    assert!(flux_inequality_check(&f, &arc, FluxVariant::Positive).is_ok());
    assert!(matches!(flux_inequality_check(&f, &arc, FluxVariant::Negative), Err(Error::Precondition(_))));
    let mut reversed = arc.clone();
    reversed.points.reverse();
    assert!(matches!(flux_inequality_check(&f, &reversed, FluxVariant::Positive), Err(Error::Precondition(_))));
    let near = LeafArc { points: vec![Vec2::new(0.5, 3.0), Vec2::new(0.6, 3.0)], ..arc };
    assert!(matches!(flux_inequality_check(&f, &near, FluxVariant::Positive), Err(Error::Precondition(_))));
}

/// Brute-force count of returns to the vertical ray on a finer retrace.
fn dense_ray_hits(f: &VectorField, seed: Vec2, up: bool) -> usize {
    let controls = LeafControls {
        step: 0.002,
        max_length: 40.0,
        window: None,
        extent: if up { Extent::Positive } else { Extent::Negative },
    };
    let arc = trace_leaf(f, seed, Component::F, &controls).unwrap();
    let mut pts = arc.points;
    if !up {
        pts.reverse();
    }
    let far = if up { seed.y + 1e4 } else { seed.y - 1e4 };
    pts.windows(2)
        .skip(1)
        .filter(|w| {
            let (d0, d1) = (w[0].x - seed.x, w[1].x - seed.x);
            if d0 * d1 > 0.0 || d0 == d1 {
                return false;
            }
            let y = w[0].y + (w[1].y - w[0].y) * d0 / (d0 - d1);
            (y - seed.y) * (far - seed.y) >= 0.0
        })
        .count()
}

#[test]
fn vertical_ray_rot_decay() {
    let f = registry_field("rot_decay_repel");
    let seeds = annulus_seeds(100, 3.0, 30.0, 11);
    let r = vertical_ray_check(&f, &seeds, &RayControls::default());
    assert_eq!(r.entries.len(), 200);
    assert_eq!(r.compliant, 200);
    assert!(r.passed && r.hits == 0);
    for s in seeds.iter().take(25) {
        assert_eq!(dense_ray_hits(&f, *s, true), 0);
        assert_eq!(dense_ray_hits(&f, *s, false), 0);
    }
    assert!(r.entries.iter().all(|e| e.closest_approach.is_some_and(|d| d > 0.0)));
}

#[test]
fn vertical_ray_linear_is_trivial() {
    let f = VectorField::from_field(LinearHurwitz::new());
    let r = vertical_ray_check(&f, &annulus_seeds(50, 2.0, 10.0, 0), &RayControls::default());
    assert!(r.passed && r.compliant == 100);
}

#[test]
fn closed_leaves_are_detected_and_flagged() {
    // Circles return to the ray; the real eigenvalue 2x ≥ 0 marks the
    // entries as outside the hypotheses.
    let f = VectorField::from_field(DslField::new("x^2 + y^2", "-y", 1.0).unwrap());
    let seed = Vec2::new(2.0, -3.0);
    let r = vertical_ray_check(&f, &[seed], &RayControls { max_length: 30.0, ..RayControls::default() });
    let up = &r.entries[0];
    assert!(up.hits >= 1);
    assert!(!up.spectral_ok);
    assert_eq!(dense_ray_hits(&f, seed, true).min(1), 1);
    assert!(r.passed);
    assert_eq!(r.compliant, 0);
}

#[test]
fn inside_seed_is_noted() {
    let f = registry_field("rot_feed_attract");
    let r = vertical_ray_check(&f, &[Vec2::new(1.0, 0.0)], &RayControls::default());
    assert!(r.entries.iter().all(|e| e.note.is_some()));
}

fn min_separated_gap(f: &VectorField, s: f64, r_max: f64, n: usize) -> f64 {
    let mut pts: Vec<(Vec2, Vec2)> = (0..n * n)
        .map(|k| {
            let r = s + (r_max - s) * ((k / n) as f64 + 0.5) / n as f64;
            let p = Vec2::polar(r, std::f64::consts::TAU * (k % n) as f64 / n as f64);
            (f.value(p), p)
        })
        .collect();
    pts.sort_by(|a, b| a.0.x.total_cmp(&b.0.x));
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if pts[j].0.x - pts[i].0.x > best {
                break;
            }
            if pts[i].1.dist(pts[j].1) > SEPARATION_FLOOR {
                best = best.min(pts[i].0.dist(pts[j].0));
            }
        }
    }
    best
}

#[test]
fn injectivity_holds_for_hurwitz_fields() {
    let f = VectorField::from_field(LinearHurwitz::new());
    let r = injectivity_scan(&f, 2.0, 100_000, 0).unwrap();
    assert!(r.passed && r.collision_count() == 0);
    assert_eq!(r.grid_points, 1_000_000);

    for name in FieldRegistry::builtin().hurwitz_names() {
        let f = registry_field(name);
        let s = 4.0 * f.sigma();
        let r = injectivity_scan(&f, s, 100_000, 5).unwrap();
        assert!(r.passed, "{name}");
        assert!(min_separated_gap(&f, s, 8.0 * s, 150) > 1e3 * r.collision_tol, "{name}");
    }
}

#[test]
fn model_reeb_collides_antipodally() {
    let f = registry_field("model_reeb");
    let s = 4.0 * f.sigma();
    let a = injectivity_scan(&f, s, 100_000, 0).unwrap();
    let b = injectivity_scan(&f, s, 100_000, 0).unwrap();
    assert_eq!(a, b);
    assert!(!a.passed);
    assert_eq!(a.grid_collisions, 500_000);
    assert_eq!(a.collisions.len(), 1000);
    for c in &a.collisions {
        assert!((c.p + c.q).norm() < 1e-12);
        assert!(c.p.dist(c.q) > SEPARATION_FLOOR && c.image_gap <= a.collision_tol);
    }
    let csv = a.collisions_csv();
    assert!(csv.starts_with("px,py,qx,qy,image_gap\n"));
    assert!(matches!(injectivity_scan(&f, 0.05, 10, 0), Err(Error::Precondition(_))));
}

#[test]
fn reports_serialize() {
    let f = registry_field("radial_slow");
    let sweep = flux_inequality_sweep(&f, FluxVariant::Negative, 3, &ArcSampling::default(), 2).unwrap();
    let json = serde_json::to_value(&sweep).unwrap();
    assert_eq!(json["variant"], "negative");
    assert_eq!(json["reports"][0]["check"], "flux_negative");
    let again = flux_inequality_sweep(&f, FluxVariant::Negative, 3, &ArcSampling::default(), 2).unwrap();
    assert_eq!(serde_json::to_string(&sweep).unwrap(), serde_json::to_string(&again).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Green identity on leaves of the decaying field through random points.
    #[test]
    fn green_identity_random_leaves(x in 3.0..12.0f64, y in -6.0..6.0f64, depth in 1.0..10.0f64) {
        let f = registry_field("rot_decay_repel");
        let arc = leaf_through(&f, Vec2::new(x, y), 3.0, Extent::Both);
        let c = arc.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - depth;
        let r = green_identity_check(&f, &arc, c).unwrap();
        prop_assert!(r.slack.abs() <= IDENTITY_TOL * (1.0 + r.lhs.abs()));
    }

    /// Flux slack stays above the numerical floor for every arc meeting the
    /// hypotheses on the slowly decaying radial field.
    #[test]
    fn flux_slack_radial(seed in 0u64..1000) {
        let f = registry_field("radial_slow");
        for v in [FluxVariant::Positive, FluxVariant::Negative] {
            let sweep = flux_inequality_sweep(&f, v, 4, &ArcSampling::default(), seed).unwrap();
            for r in &sweep.reports {
                prop_assert!(r.slack >= -NUMERICAL_SLACK * (1.0 + r.lhs.abs()));
            }
        }
    }
}
