use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_horizon");

fn horizon(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn schema() -> jsonschema::Validator {
    let s: Value = serde_json::from_str(horizon::runner::REPORT_SCHEMA).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

fn assert_valid(v: &Value) {
    let errors: Vec<String> = schema().iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

/// Small budgets so every subcommand finishes quickly.
const LIGHT: &[&str] = &["--arcs", "5", "--pairs", "2000", "--grid", "120", "--seeds", "8", "--perturbations", "4"];

#[test]
fn tangency_on_linear_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = horizon(&["tangency", "--field", "linear_hurwitz", "--radius", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(r["result"]["n_ext"], 2);
    assert_eq!(r["result"]["n_int"], 0);
    assert_eq!(r["result"]["index_winding"], 0);
    assert_eq!(r["result"]["index_formula"], 0.0);
    assert!(dir.path().join("tangency_points.csv").exists());
}

#[test]
fn classify_rot_feed() {
    let dir = tempfile::tempdir().unwrap();
    let o = horizon(&["classify", "--field", "rot_feed_attract", "--epsilon", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["result"]["verdict"], "attractor");
    assert_eq!(r["result"]["consistent"], true);
    assert_eq!(r["result"]["index"]["kind"], "finite");
    assert!(r["result"]["index"]["value"].as_f64().unwrap().abs() < 1e-3);
    let csv = std::fs::read_to_string(dir.path().join("classify_ladder.csv")).unwrap();
    assert!(csv.starts_with("rung,radius,theta,x,y\n"));
}

#[test]
fn malformed_expression_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = horizon(&["spectrum", "--f-expr", "-x +", "--g-expr", "-y", "--sigma", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error at column"));
    let r = report(dir.path());
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["kind"], "parse");
    assert_valid(&r);
}

#[test]
fn precondition_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = horizon(&["tangency", "--field", "rot_feed_attract", "--radius", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let r = report(dir.path());
    assert_eq!(r["error"]["kind"], "precondition");
    assert_eq!(r["exit_code"], 2);
    assert_valid(&r);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["flow", "--field", "nope"][..],
        &["flow", "--field", "linear_hurwitz", "--seed", "x"],
        &["flow", "--f-expr", "-x"],
        &["flow"],
    ] {
        let o = horizon(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    let o = Command::new(BIN).args(["bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(BIN).args(["flow", "--field", "linear_hurwitz", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(BIN)
        .args(["flow", "--field", "linear_hurwitz"])
        .arg("--out")
        .arg(dir.path())
        .env("HORIZON_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# tangency demo\nfield = rot_decay_repel\nradius = 5 # circle\nradii = 2, 4\n").unwrap();
    let a = dir.path().join("a");
    let o = horizon(&["tangency", "--config", cfg.to_str().unwrap()], &a);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&a)["result"]["radius"], 5.0);
    assert_eq!(report(&a)["config"]["radii"], serde_json::json!([2.0, 4.0]));

    let b = dir.path().join("b");
    let o = horizon(&["tangency", "--config", cfg.to_str().unwrap(), "--radius", "7"], &b);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&b)["result"]["radius"], 7.0);

    // A field flag replaces the file's field.
    let c = dir.path().join("c");
    let o = horizon(&["tangency", "--config", cfg.to_str().unwrap(), "--f-expr", "-x", "--g-expr", "-y", "--sigma", "1"], &c);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&c)["field"]["name"], "expr[-x ; -y]");

    std::fs::write(&cfg, "field = linear_hurwitz\nmystery = 3\n").unwrap();
    let o = horizon(&["tangency", "--config", cfg.to_str().unwrap()], &dir.path().join("d"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_subcommand_report_validates() {
    let dir = tempfile::tempdir().unwrap();
    for field in ["linear_hurwitz", "model_reeb"] {
        for sub in ["spectrum", "flow", "foliation", "tangency", "index", "classify", "verify", "all"] {
            let out = dir.path().join(format!("{field}_{sub}"));
            let mut args = vec![sub, "--field", field];
            args.extend_from_slice(LIGHT);
            let o = horizon(&args, &out);
            assert_eq!(o.status.code(), Some(0), "{field} {sub}: {}", String::from_utf8_lossy(&o.stderr));
            let r = report(&out);
            assert_valid(&r);
            assert_eq!(r["subcommand"], sub);
            for a in r["artifacts"].as_array().unwrap() {
                let path = out.join(a.as_str().unwrap());
                let body = std::fs::read_to_string(&path).unwrap();
                let cols = body.lines().next().unwrap().split(',').count();
                assert!(body.lines().all(|l| l.split(',').count() == cols), "{}", path.display());
            }
        }
    }
}

#[test]
fn verify_skips_hypothesis_checks_for_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["verify", "--field", "model_reeb"];
    args.extend_from_slice(LIGHT);
    let o = horizon(&args, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert!(r["result"]["skipped"].is_string());
    assert!(r["result"]["injectivity"]["grid_collisions"].as_u64().unwrap() > 0);
}

#[test]
fn schema_and_fields_subcommands() {
    let o = Command::new(BIN).arg("schema").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), horizon::runner::REPORT_SCHEMA);
    let o = Command::new(BIN).arg("fields").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("shifted_zero"));
}

#[test]
fn report_has_no_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = horizon(&["spectrum", "--field", "radial_slow"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(!text.contains(dir.path().to_str().unwrap()));
}
