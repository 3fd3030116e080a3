//! Scenario runner behind the command-line tool: builds the field, runs one
//! analysis (or all of them) and emits `report.json` plus CSV files.

mod analyses;
pub mod config;

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::registry::FieldInfo;
use crate::field::{FieldRegistry, FieldSpec, VectorField};

pub use config::{parse_kv, FamilyKind, Options, RunConfig, Subcommand, Tolerances, KEYS};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// JSON Schema every `report.json` validates against.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");
pub const REPORT_FILE: &str = "report.json";

pub struct Context<'a> {
    pub field: VectorField,
    pub info: Option<FieldInfo>,
    pub config: &'a RunConfig,
}

impl Context<'_> {
    pub fn sigma(&self) -> f64 {
        self.field.sigma()
    }
}

/// What one analysis hands back: a short summary for the verdict page, the
/// full result and named CSV exports.
pub struct Section {
    pub summary: Value,
    pub result: Value,
    pub csv: Vec<(String, String)>,
}

pub trait Analysis: Send + Sync {
    fn name(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn run(&self, ctx: &Context) -> Result<Section>;
}

/// Analyses by subcommand name, in pipeline order.
pub struct AnalysisRegistry {
    entries: Vec<Box<dyn Analysis>>,
}

impl AnalysisRegistry {
    pub fn builtin() -> Self {
        Self { entries: analyses::builtin() }
    }

    pub fn register(&mut self, analysis: Box<dyn Analysis>) {
        self.entries.retain(|a| a.name() != analysis.name());
        self.entries.push(analysis);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Analysis> {
        self.entries
            .iter()
            .find(|a| a.name() == name)
            .map(|a| a.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "analysis", name: name.to_string() })
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Analysis> {
        self.entries.iter().map(|a| a.as_ref())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldSummary {
    pub name: String,
    pub sigma: f64,
    pub spec: FieldSpec,
    pub info: Option<FieldInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self { kind: error_kind(e), message: e.to_string(), exit_code: e.exit_code() }
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InteriorPoint { .. } => "interior_point",
        Error::NonFinite { .. } => "non_finite",
        Error::Parse { .. } => "parse",
        Error::Unknown { .. } => "unknown",
        Error::Precondition(_) => "precondition",
        Error::VanishingGradient { .. } => "vanishing_gradient",
        Error::DegenerateTangency { .. } => "degenerate_tangency",
        Error::StepResolution { .. } => "step_resolution",
        Error::SearchFailure { .. } => "search_failure",
        Error::RegionConstruction(_) => "region_construction",
        Error::Inconsistency(_) => "inconsistency",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    pub subcommand: Subcommand,
    pub status: &'static str,
    pub exit_code: i32,
    pub field: Option<FieldSummary>,
    pub config: RunConfig,
    pub result: Option<Value>,
    pub error: Option<ErrorInfo>,
    /// CSV files written next to the report, in write order.
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub struct RunOutput {
    pub report: Report,
    pub csv: Vec<(String, String)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn build_context(config: &RunConfig) -> Result<Context<'_>> {
    let registry = FieldRegistry::builtin();
    let field = config.field.build(&registry)?;
    let info = match &config.field {
        FieldSpec::Named { name, .. } => Some(registry.info(name)?.clone()),
        FieldSpec::Expr { .. } => None,
    };
    Ok(Context { field, info, config })
}

/// Runs `sub` without touching the filesystem. Errors end up in the report.
pub fn run(config: &RunConfig, sub: Subcommand) -> RunOutput {
    run_with(&AnalysisRegistry::builtin(), config, sub)
}

pub fn run_with(registry: &AnalysisRegistry, config: &RunConfig, sub: Subcommand) -> RunOutput {
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        subcommand: sub,
        status: "ok",
        exit_code: 0,
        field: None,
        config: config.clone(),
        result: None,
        error: None,
        artifacts: Vec::new(),
    };
    let ctx = match build_context(config) {
        Ok(c) => c,
        Err(e) => return fail(report, &e),
    };
    report.field = Some(FieldSummary {
        name: ctx.field.name().to_string(),
        sigma: ctx.sigma(),
        spec: config.field.clone(),
        info: ctx.info.clone(),
    });
    let outcome = match sub {
        Subcommand::All => Ok(run_all(registry, &ctx)),
        one => registry.get(one.as_str()).and_then(|a| a.run(&ctx)).map(|s| (s.result, s.csv, 0)),
    };
    match outcome {
        Ok((result, csv, code)) => {
            report.result = Some(result);
            report.exit_code = code;
            if code != 0 {
                report.status = "partial";
            }
            report.artifacts = csv.iter().map(|(n, _)| n.clone()).collect();
            RunOutput { report, csv }
        }
        Err(e) => fail(report, &e),
    }
}

fn fail(mut report: Report, e: &Error) -> RunOutput {
    report.status = "error";
    report.exit_code = e.exit_code();
    report.error = Some(e.into());
    RunOutput { report, csv: Vec::new() }
}

/// Every analysis in order. A failing section is recorded and the rest still
/// run; the exit code is the most severe section failure.
fn run_all(registry: &AnalysisRegistry, ctx: &Context) -> (Value, Vec<(String, String)>, i32) {
    let mut sections = Vec::new();
    let mut page = Vec::new();
    let mut csv = Vec::new();
    let mut code = 0;
    for a in registry.iter() {
        match a.run(ctx) {
            Ok(s) => {
                page.push(json!({ "name": a.name(), "status": "ok", "summary": s.summary }));
                sections.push(json!({ "name": a.name(), "status": "ok", "result": s.result }));
                csv.extend(s.csv);
            }
            Err(e) => {
                let info = ErrorInfo::from(&e);
                code = severity_max(code, info.exit_code);
                page.push(json!({ "name": a.name(), "status": "error", "error": info }));
                sections.push(json!({ "name": a.name(), "status": "error", "error": info }));
            }
        }
    }
    let observed = page
        .iter()
        .find(|p| p["name"] == "classify")
        .and_then(|p| p["summary"]["verdict"].as_str())
        .map(str::to_string);
    let expected = ctx.info.as_ref().and_then(|i| i.expected_verdict);
    let verdict_page = json!({
        "field": ctx.field.name(),
        "sigma": ctx.sigma(),
        "expected_verdict": expected,
        "observed_verdict": observed,
        "verdict_matches": match (expected, &observed) {
            (Some(e), Some(o)) => Some(e == o),
            _ => None,
        },
        "sections_ok": page.iter().filter(|p| p["status"] == "ok").count(),
        "sections_failed": page.iter().filter(|p| p["status"] == "error").count(),
        "sections": page,
    });
    (json!({ "verdict_page": verdict_page, "sections": sections }), csv, code)
}

/// Inconsistency (3) outranks precondition failures (2) and config errors (1).
fn severity_max(a: i32, b: i32) -> i32 {
    let rank = |c: i32| match c {
        3 => 3,
        2 => 2,
        1 => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Writes the CSV files and then `report.json` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in &out.csv {
        fs::write(dir.join(name), body)?;
    }
    fs::write(dir.join(REPORT_FILE), out.report.to_json()?)?;
    Ok(())
}

/// Runs and writes into `config.out`; returns the process exit status.
pub fn execute(config: &RunConfig, sub: Subcommand) -> Result<i32> {
    let out = run(config, sub);
    write_outputs(&out, &config.out)?;
    Ok(out.exit_code())
}

/// Error-only `report.json` body for failures before a config exists.
pub fn error_report(sub: Subcommand, e: &Error) -> String {
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "subcommand": sub,
        "status": "error",
        "exit_code": e.exit_code(),
        "field": null,
        "config": null,
        "result": null,
        "error": ErrorInfo::from(e),
        "artifacts": [],
    });
    serde_json::to_string_pretty(&v).expect("plain json") + "\n"
}
