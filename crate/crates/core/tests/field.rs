use horizon::field::registry::FieldParams;
use horizon::field::{scan_region, spectrum, Conjugated, ScanGrid};
use horizon::{FieldRegistry, FieldSpec, Mat2, Vec2, VectorField};
use proptest::prelude::*;

const EPS: f64 = 0.5;

fn field(name: &str) -> VectorField {
    FieldRegistry::builtin().build(name, &FieldParams::default()).unwrap()
}

/// Divergence of the registry fields, worked out by hand.
fn trace_oracle(name: &str, p: Vec2) -> f64 {
    let q = 1.0 + p.norm_sq();
    match name {
        "linear_hurwitz" => -2.0,
        "rot_decay_repel" => -2.0 * EPS / (q * q),
        "rot_feed_attract" => 2.0 * EPS * (1.0 - p.norm_sq()) / (q * q * q),
        "radial_slow" => -q.powf(-1.5) - q.powf(-0.5),
        _ => unreachable!(),
    }
}

fn hurwitz_point() -> impl Strategy<Value = (usize, Vec2)> {
    (0usize..4, 0.0..std::f64::consts::TAU, 1.0f64..60.0).prop_map(|(i, t, k)| (i, Vec2::polar(k, t)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hurwitz_fields_match_hand_trace((i, u) in hurwitz_point()) {
        let name = FieldRegistry::builtin().hurwitz_names()[i];
        let f = field(name);
        let p = u * (f.sigma() * 1.05);
        let j = f.jacobian(p).unwrap();
        let want = trace_oracle(name, p);
        prop_assert!((j.trace() - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} {:?}", name, p);
        let s = spectrum(&j).unwrap();
        prop_assert!(s.hurwitz() && s.det_positive() && s.no_nonneg_real());
    }

    #[test]
    fn analytic_jacobian_agrees_with_differences((i, u) in hurwitz_point()) {
        let f = field(FieldRegistry::builtin().hurwitz_names()[i]);
        let p = u * (f.sigma() * 1.05);
        let j = f.jacobian(p).unwrap();
        let d = f.fd_jacobian(p, 1e-6 * (1.0 + p.norm()));
        let gap = j.add(&d.scale(-1.0)).max_abs();
        prop_assert!(gap <= 1e-6 * (1.0 + j.max_abs()), "gap {}", gap);
    }

    // The spectrum is a similarity invariant, so rotating the field about the
    // origin keeps trace and determinant at the rotated point.
    #[test]
    fn rotation_keeps_trace_and_det((i, u) in hurwitz_point(), theta in 0.0..std::f64::consts::TAU) {
        let f = field(FieldRegistry::builtin().hurwitz_names()[i]);
        let p = u * (f.sigma() * 1.05);
        let g = VectorField::from_field(Conjugated::rotated(f.clone(), theta));
        let q = Mat2::rotation(theta).apply(p);
        let (a, b) = (f.jacobian(p).unwrap(), g.jacobian(q).unwrap());
        prop_assert!((a.trace() - b.trace()).abs() < 1e-12);
        prop_assert!((a.det() - b.det()).abs() < 1e-12 * (1.0 + a.det().abs()));
    }

    #[test]
    fn expression_jacobian_is_exact(a in -3.0f64..3.0, b in -3.0f64..3.0, x in 1.5f64..5.0, y in -5.0f64..5.0) {
        let spec = FieldSpec::Expr {
            f_expr: format!("{a}*x^2*y + sin(y)"),
            g_expr: format!("exp({b}*x/10) - y^3"),
            sigma: 1.0,
            jacobian: Default::default(),
        };
        let f = spec.build(&FieldRegistry::builtin()).unwrap();
        let j = f.jacobian(Vec2::new(x, y)).unwrap();
        let e = (b * x / 10.0).exp();
        let want = [2.0 * a * x * y, a * x * x + y.cos(), b / 10.0 * e, -3.0 * y * y];
        for (got, w) in [j.a, j.b, j.c, j.d].into_iter().zip(want) {
            prop_assert!((got - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }
}

#[test]
fn scan_separates_model_from_hurwitz_fields() {
    let reg = FieldRegistry::builtin();
    for name in reg.hurwitz_names() {
        let f = field(name);
        let r = scan_region(&f, [f.sigma(), 30.0 * f.sigma()], &ScanGrid::default()).unwrap();
        assert!(r.hurwitz.is_all() && r.no_nonneg_real.is_all(), "{name}");
    }
    // Real eigenvalue 0 along x = 0, y > 0; only seen between grid samples.
    let f = field("model_reeb");
    let r = scan_region(&f, [f.sigma(), 10.0], &ScanGrid::default()).unwrap();
    assert!(!r.no_nonneg_real.is_all());
    assert!(!reg.info("model_reeb").unwrap().no_nonneg_real);
}
