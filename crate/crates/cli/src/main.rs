use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use horizon::runner::{self, parse_kv, RunConfig, Subcommand, REPORT_FILE, REPORT_SCHEMA};
use horizon::{parallel, Error, FieldRegistry};

/// Planar vector fields near infinity: spectra, orbits, foliations,
/// tangencies, the index at infinity and verification checks.
#[derive(Parser, Debug)]
#[command(name = "horizon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    flags: Flags,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Jacobian eigenvalue scan over an annulus.
    Spectrum,
    /// Orbits from a seed circle and their limit behaviour.
    Flow,
    /// Half-Reeb component search and sample leaves.
    Foliation,
    /// Tangencies of the leaves with a circle and the internal-tangency sweep.
    Tangency,
    /// Index at infinity and its independence of the extension.
    Index,
    /// Attractor or repellor at infinity.
    Classify,
    /// Ray, Green, flux and injectivity checks.
    Verify,
    /// Every analysis plus a consolidated verdict page.
    All,
    /// List the registry fields with their oracle facts.
    Fields,
    /// Print the JSON Schema of report.json.
    Schema,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Registry field name.
    #[arg(long, global = true)]
    field: Option<String>,
    #[arg(long = "f-expr", global = true, allow_hyphen_values = true)]
    f_expr: Option<String>,
    #[arg(long = "g-expr", global = true, allow_hyphen_values = true)]
    g_expr: Option<String>,
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// analytic or fd.
    #[arg(long, global = true)]
    jacobian: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    radius: Option<String>,
    /// Comma-separated radii.
    #[arg(long, global = true)]
    radii: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory for report.json and CSV files.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long = "tol-index", global = true)]
    tol_index: Option<String>,
    #[arg(long = "tol-quad", global = true)]
    tol_quad: Option<String>,
    #[arg(long = "tol-flow-rel", global = true)]
    tol_flow_rel: Option<String>,
    #[arg(long = "tol-flow-abs", global = true)]
    tol_flow_abs: Option<String>,
    #[arg(long = "tol-angle", global = true)]
    tol_angle: Option<String>,
    #[arg(long = "tol-collision", global = true)]
    tol_collision: Option<String>,
    /// Seed count for flow, foliation, ray checks and classify.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Flux arcs per variant.
    #[arg(long, global = true)]
    arcs: Option<String>,
    /// Random pairs for the injectivity scan.
    #[arg(long, global = true)]
    pairs: Option<String>,
    /// Grid side for the injectivity lattice or the half-Reeb search.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Blend radius for the index, exclusion radius for injectivity.
    #[arg(long, global = true)]
    s: Option<String>,
    /// `h` for [-h, h]², or `x_min,x_max,y_min,y_max`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    window: Option<String>,
    /// circles or star.
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true)]
    perturbations: Option<String>,
    /// Curve samples for tangency detection.
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("field", &self.field),
            ("f-expr", &self.f_expr),
            ("g-expr", &self.g_expr),
            ("sigma", &self.sigma),
            ("jacobian", &self.jacobian),
            ("epsilon", &self.epsilon),
            ("radius", &self.radius),
            ("radii", &self.radii),
            ("seed", &self.seed),
            ("out", &self.out),
            ("tol-index", &self.tol_index),
            ("tol-quad", &self.tol_quad),
            ("tol-flow-rel", &self.tol_flow_rel),
            ("tol-flow-abs", &self.tol_flow_abs),
            ("tol-angle", &self.tol_angle),
            ("tol-collision", &self.tol_collision),
            ("seeds", &self.seeds),
            ("arcs", &self.arcs),
            ("pairs", &self.pairs),
            ("grid", &self.grid),
            ("s", &self.s),
            ("window", &self.window),
            ("family", &self.family),
            ("perturbations", &self.perturbations),
            ("samples", &self.samples),
            ("t-max", &self.t_max),
        ]
    }
}

fn subcommand(c: &Command) -> Option<Subcommand> {
    Some(match c {
        Command::Spectrum => Subcommand::Spectrum,
        Command::Flow => Subcommand::Flow,
        Command::Foliation => Subcommand::Foliation,
        Command::Tangency => Subcommand::Tangency,
        Command::Index => Subcommand::Index,
        Command::Classify => Subcommand::Classify,
        Command::Verify => Subcommand::Verify,
        Command::All => Subcommand::All,
        Command::Fields | Command::Schema => return None,
    })
}

fn load_config(flags: &Flags) -> horizon::Result<RunConfig> {
    let mut pairs = match &flags.config {
        Some(path) => parse_kv(&std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)?,
        None => BTreeMap::new(),
    };
    for (k, v) in flags.pairs() {
        if let Some(v) = v {
            pairs.insert(k.to_string(), v.clone());
        }
    }
    // Flags naming a field replace a field named in the file.
    if flags.field.is_some() {
        for k in ["f-expr", "g-expr", "sigma", "jacobian"] {
            pairs.remove(k);
        }
    } else if flags.f_expr.is_some() || flags.g_expr.is_some() {
        pairs.remove("field");
        pairs.remove("epsilon");
    }
    RunConfig::from_pairs(&pairs)
}

fn list_fields() {
    let reg = FieldRegistry::builtin();
    for name in reg.names() {
        let i = reg.info(name).expect("registered");
        println!(
            "{name:18} σ={:<4} hurwitz={:<5} verdict={:<12} index={:<8} X = {}",
            i.sigma,
            i.hurwitz,
            i.expected_verdict.unwrap_or("-"),
            i.expected_index,
            i.formula
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Some(sub) = subcommand(&cli.command) else {
        match cli.command {
            Command::Schema => print!("{REPORT_SCHEMA}"),
            _ => list_fields(),
        }
        return ExitCode::SUCCESS;
    };

    let threads = match parallel::threads_from_env() {
        Ok(t) => t,
        Err(e) => return fail_early(sub, &cli.flags, &e),
    };
    parallel::init_pool(threads);

    let config = match load_config(&cli.flags) {
        Ok(c) => c,
        Err(e) => return fail_early(sub, &cli.flags, &e),
    };
    let out = runner::run(&config, sub);
    if let Err(e) = runner::write_outputs(&out, &config.out) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let report = &out.report;
    match &report.error {
        Some(err) => eprintln!("error ({}): {}", err.kind, err.message),
        None => {
            if let Some(v) = report.result.as_ref().and_then(|r| r.get("verdict_page")) {
                eprintln!("sections ok: {}, failed: {}", v["sections_ok"], v["sections_failed"]);
            }
        }
    }
    println!("{} exit {} -> {}", sub, report.exit_code, config.out.join(REPORT_FILE).display());
    ExitCode::from(report.exit_code as u8)
}

/// Reports a failure before a run config exists; still writes an error
/// report when an output directory was named.
fn fail_early(sub: Subcommand, flags: &Flags, e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if let Some(dir) = &flags.out {
        let dir = PathBuf::from(dir);
        let body = runner::error_report(sub, e);
        if std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join(REPORT_FILE), body)).is_err() {
            eprintln!("error: cannot write {}", dir.join(REPORT_FILE).display());
        }
    }
    ExitCode::from(e.exit_code() as u8)
}
