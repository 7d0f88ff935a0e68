use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use adlab_core::diagnostics::diagnose;
use adlab_core::semiflat::limit_pipeline;
use adlab_core::solver::{continuation_sweep, geometric_schedule};
use adlab_core::weil_petersson::{chart_check, wp_product_case, ModuliChart};
use adlab_core::{build_family, solve_potential, LabError, ScenarioSpec, SolverConfig};

mod manifest;
mod plot;
mod report;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "adlab", version, about = "Collapsing Ricci-flat metrics on flat torus fibrations")]
struct Cli {
    /// Output directory for reports.
    #[arg(long, global = true, default_value = "adlab-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Solve at one value of t.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Continuation sweep over t = A·R^j, j = 0..=K.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t_start: f64,
        #[arg(long, default_value_t = 0.5)]
        t_factor: f64,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
    /// Semi-flat form, density F and the base limit metric.
    Limit {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Weil-Petersson checks.
    Wp {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Rebuild CSV, fits and plots from a sweep directory.
    Report {
        #[arg(long)]
        from: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

struct Loaded {
    text: String,
    spec: ScenarioSpec,
    config: SolverConfig,
}

fn load(path: &Path) -> std::result::Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let spec = ScenarioSpec::from_toml(&text)?;
    let config = SolverConfig::default().with_overrides(&spec.solver);
    config.validate()?;
    Ok(Loaded { text, spec, config })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn start_run(
    out: &Path,
    command: &str,
    scenario: &Path,
    loaded: &Loaded,
    schedule: Vec<f64>,
) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(out)?;
    let manifest = RunManifest::new(command, scenario, &loaded.text, schedule, loaded.config, out);
    write_json(&out.join("manifest.json"), &manifest)
}

fn check(scenario: &Path) -> CmdResult {
    let loaded = load(scenario)?;
    let family = build_family(&loaded.spec)?;
    let min_eig = adlab_core::min_eigenvalue(family.omega_x()).inf();
    println!(
        "{}: n = {}, m = {}, N = {}, min eigenvalue of ω_X {min_eig:.6}, ok",
        loaded.spec.label,
        loaded.spec.n,
        loaded.spec.m,
        loaded.spec.resolved_samples()
    );
    Ok(())
}

fn solve(out: &Path, scenario: &Path, t: f64) -> CmdResult {
    let loaded = load(scenario)?;
    let family = build_family(&loaded.spec)?;
    start_run(out, "solve", scenario, &loaded, vec![t])?;
    let solved = solve_potential(&family, t, &loaded.config, None)?;
    let record = diagnose(&solved, &family, None)?;
    write_json(&out.join("report.json"), &json!({ "solve": solved, "diagnostics": record }))?;
    println!(
        "t = {t}: residual {:.3e} after {} iterations",
        solved.final_residual, solved.iterations
    );
    Ok(())
}

fn sweep(out: &Path, scenario: &Path, start: f64, factor: f64, steps: usize) -> CmdResult {
    let loaded = load(scenario)?;
    let family = build_family(&loaded.spec)?;
    let schedule = geometric_schedule(start, factor, steps)?;
    start_run(out, "sweep", scenario, &loaded, schedule.clone())?;
    let limit = match limit_pipeline(&family, &loaded.config) {
        Ok(p) => Some(p.limit.psi),
        Err(e) => {
            eprintln!("limit potential unavailable, limit columns left empty: {e}");
            None
        }
    };
    let (reports, failure) = match continuation_sweep(&family, &schedule, &loaded.config) {
        Ok(r) => (r, None),
        Err(f) => (f.completed, Some((f.failed_t, f.error))),
    };
    let records = reports
        .iter()
        .map(|r| diagnose(r, &family, limit.as_ref()))
        .collect::<adlab_core::Result<Vec<_>>>()?;
    // Completed points are written even when the sweep stopped early.
    if !records.is_empty() {
        report::emit_report(out, &records)?;
    }
    match failure {
        None => {
            println!("{} sweep points written to {}", records.len(), out.display());
            Ok(())
        }
        Some((t, e)) => {
            let at = t.map(|t| format!(" at t = {t}")).unwrap_or_default();
            Err(Failure::Solver(format!(
                "{e}{at}; {} completed points preserved",
                records.len()
            )))
        }
    }
}

fn limit(out: &Path, scenario: &Path) -> CmdResult {
    let loaded = load(scenario)?;
    let family = build_family(&loaded.spec)?;
    start_run(out, "limit", scenario, &loaded, vec![1.0])?;
    let p = limit_pipeline(&family, &loaded.config)?;
    let summary = json!({
        "kappa": p.limit.kappa,
        "base_residual": p.limit.residual,
        "solvability_defect": p.limit.solvability_defect,
        "fiber_oscillation": p.density.fiber_oscillation,
        "route_difference": p.density.route_difference,
        "total_mass_defect": p.total_mass_defect,
        "ke_intermediate_sup": p.ke.intermediate_sup,
        "ricci_minus_wp_sup": p.ke.ricci_minus_wp_sup,
        "reference_residual": p.reference_solve.final_residual,
        "f": p.density.f.values(),
        "psi": p.limit.psi.values(),
    });
    write_json(&out.join("limit.json"), &summary)?;
    println!(
        "κ = {:.6}, Kähler-Einstein residual {:.3e}, Ric(ω) - ω_WP {:.3e}",
        p.limit.kappa, p.ke.intermediate_sup, p.ke.ricci_minus_wp_sup
    );
    Ok(())
}

fn wp(out: &Path, scenario: &Path) -> CmdResult {
    let loaded = load(scenario)?;
    let family = build_family(&loaded.spec)?;
    start_run(out, "wp", scenario, &loaded, Vec::new())?;
    let cert = wp_product_case(&family);
    let chart = match &loaded.spec.wp_chart {
        Some(spec) => Some(chart_check(&ModuliChart::from_spec(spec)?)?),
        None => None,
    };
    let summary = json!({
        "product": {
            "pseudonorm_variation": cert.variation,
            "holomorphicity_defect": cert.holomorphicity_defect,
            "omega_wp_sup": cert.form.sup_abs(),
            "passed": cert.passed,
        },
        "chart": chart,
    });
    write_json(&out.join("wp.json"), &summary)?;
    if let Some(c) = &chart {
        println!(
            "chart: closed-form error {:.3e}, ω_WP(0) = {:.10}, gauge difference {:.3e}",
            c.closed_form_error, c.value_at_origin, c.gauge_difference
        );
    }
    println!("isotrivial certificate: variation {:.3e}, passed {}", cert.variation, cert.passed);
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("ADLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Only fails if a pool already exists, which cannot happen this early.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let out = cli.out.as_path();
    let result = match &cli.command {
        Command::Check { scenario } => check(scenario),
        Command::Solve { scenario, t } => solve(out, scenario, *t),
        Command::Sweep {
            scenario,
            t_start,
            t_factor,
            steps,
        } => sweep(out, scenario, *t_start, *t_factor, *steps),
        Command::Limit { scenario } => limit(out, scenario),
        Command::Wp { scenario } => wp(out, scenario),
        Command::Report { from } => report::rebuild(from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adlab: {e}");
            ExitCode::from(e.code())
        }
    }
}
