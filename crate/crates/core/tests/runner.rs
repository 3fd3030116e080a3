use std::collections::BTreeMap;

use horizon::runner::*;
use horizon::{Error, FieldSpec, Result};
use proptest::prelude::*;
use serde_json::json;

struct Fixed(&'static str, fn() -> Result<Section>);

impl Analysis for Fixed {
    fn name(&self) -> &'static str {
        self.0
    }

    fn describe(&self) -> &'static str {
        "test double"
    }

    fn run(&self, _: &Context) -> Result<Section> {
        (self.1)()
    }
}

fn ok_section() -> Result<Section> {
    Ok(Section { summary: json!({ "fine": true }), result: json!({ "value": 1 }), csv: vec![("double.csv".into(), "a\n1\n".into())] })
}

fn registry_of(parts: Vec<Fixed>) -> AnalysisRegistry {
    let mut reg = AnalysisRegistry::builtin();
    for p in parts {
        reg.register(Box::new(p));
    }
    reg
}

fn light() -> RunConfig {
    RunConfig::new(FieldSpec::named("linear_hurwitz"))
}

#[test]
fn builtin_registry_order() {
    let names: Vec<&str> = AnalysisRegistry::builtin().iter().map(|a| a.name()).collect();
    assert_eq!(names, ["spectrum", "flow", "foliation", "tangency", "index", "classify", "verify"]);
    for sub in Subcommand::ALL {
        assert_eq!(sub.as_str().parse::<Subcommand>().unwrap(), sub);
    }
}

#[test]
fn all_reports_most_severe_section() {
    let quiet = |n: &'static str| Fixed(n, ok_section);
    let mut parts: Vec<Fixed> = ["spectrum", "flow", "foliation", "tangency", "index", "classify", "verify"].map(quiet).into();
    parts[1] = Fixed("flow", || Err(Error::Precondition("seed inside".into())));
    let out = run_with(&registry_of(parts), &light(), Subcommand::All);
    assert_eq!(out.exit_code(), 2);
    assert_eq!(out.report.status, "partial");

    let mut parts: Vec<Fixed> = ["spectrum", "flow", "foliation", "tangency", "index", "classify", "verify"].map(quiet).into();
    parts[1] = Fixed("flow", || Err(Error::Precondition("seed inside".into())));
    parts[4] = Fixed("index", || Err(Error::Inconsistency("flux and area disagree".into())));
    let out = run_with(&registry_of(parts), &light(), Subcommand::All);
    assert_eq!(out.exit_code(), 3);
    let r = out.report.result.unwrap();
    let page = &r["verdict_page"];
    assert_eq!(page["sections_failed"], 2);
    assert_eq!(page["sections"][4]["error"]["kind"], "inconsistency");
    // Failing sections leave no CSV behind; the rest still run.
    assert_eq!(out.csv.len(), 5);
}

#[test]
fn single_subcommand_inconsistency_exits_3() {
    let reg = registry_of(vec![Fixed("index", || Err(Error::Inconsistency("gap".into())))]);
    let out = run_with(&reg, &light(), Subcommand::Index);
    assert_eq!(out.exit_code(), 3);
    assert_eq!(out.report.status, "error");
    assert!(out.report.result.is_none());
}

#[test]
fn unknown_field_is_a_config_failure() {
    let out = run(&RunConfig::new(FieldSpec::named("nowhere")), Subcommand::Spectrum);
    assert_eq!(out.exit_code(), 1);
    assert!(out.report.field.is_none());
}

#[test]
fn spectrum_report_carries_field_facts() {
    let out = run(&RunConfig::new(FieldSpec::named("radial_slow")), Subcommand::Spectrum);
    assert_eq!(out.exit_code(), 0);
    let v = serde_json::to_value(&out.report).unwrap();
    assert_eq!(v["field"]["info"]["expected_verdict"], "repellor");
    assert_eq!(v["result"]["annulus"], json!([1.0, 16.0]));
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert!(v.get("out").is_none() && v["config"].get("out").is_none());
}

#[test]
fn write_outputs_lays_out_files() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry_of(vec![Fixed("spectrum", ok_section)]);
    let out = run_with(&reg, &light(), Subcommand::Spectrum);
    write_outputs(&out, dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("double.csv")).unwrap(), "a\n1\n");
    let text = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    assert!(text.ends_with("}\n"));
    assert_eq!(out.report.artifacts, ["double.csv"]);
}

#[test]
fn error_report_shape() {
    let v: serde_json::Value = serde_json::from_str(&error_report(Subcommand::Flow, &Error::Config("bad".into()))).unwrap();
    assert_eq!(v["exit_code"], 1);
    assert_eq!(v["error"]["kind"], "config");
    assert!(v["config"].is_null());
}

#[test]
fn schema_is_json_with_required_keys() {
    let s: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let required: Vec<&str> = s["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let out = run(&light(), Subcommand::Spectrum);
    let v = serde_json::to_value(&out.report).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let mut a = required.clone();
    a.sort();
    let mut b = keys.clone();
    b.sort();
    assert_eq!(a, b);
    assert_eq!(s["properties"]["schema_version"]["const"], SCHEMA_VERSION);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // Same config, same bytes; the seed feeds through to the report.
    #[test]
    fn runs_are_deterministic(seed in 0u64..1000, n in 2usize..6) {
        let mut c = RunConfig::new(FieldSpec::named("rot_decay_repel"));
        c.seed = seed;
        c.options.seeds = Some(n);
        let a = run(&c, Subcommand::Flow).report.to_json().unwrap();
        let b = run(&c, Subcommand::Flow).report.to_json().unwrap();
        prop_assert_eq!(&a, &b);
        let needle = format!("\"seed\": {}", seed);
        prop_assert!(a.contains(&needle));
    }

    // Rendering a config back to key = value text and parsing it again is lossless.
    #[test]
    fn config_text_round_trip(seed in 0u64..u64::MAX, radius in 1.5f64..100.0, eps in 0.01f64..2.0, arcs in 1usize..500) {
        let text = format!("field = rot_feed_attract\nepsilon = {eps}\nradius = {radius}\nseed = {seed}\narcs = {arcs}\n");
        let c = RunConfig::from_pairs(&parse_kv(&text).unwrap()).unwrap();
        prop_assert_eq!(c.seed, seed);
        prop_assert_eq!(c.radius, Some(radius));
        prop_assert_eq!(c.options.arcs, Some(arcs));
        prop_assert_eq!(c.field, FieldSpec::Named { name: "rot_feed_attract".into(), epsilon: Some(eps) });
        let mut m = BTreeMap::new();
        m.insert("field".to_string(), "rot_feed_attract".to_string());
        prop_assert!(RunConfig::from_pairs(&m).is_ok());
    }
}
