//! `thinfilm` command-line front end.
//!
//! Exit codes: 0 when every declared check passes, 1 for validation or
//! operator errors, 2 when a computation ran but a scientific check failed.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::{Functional, Resolved, RunConfig};
use thinfilm::energy::{
    maxwell_residual, solve_magnetostatics, stray_energy, stray_energy_fourier, EnergyReport,
};
use thinfilm::gamma::{
    compactness_diagnostics, decreasing_tail, eps_sweep, recovery_sweep, RecoveryInput,
    RecoveryRecord,
};
use thinfilm::minimize::{
    minimize_feps, minimize_limit2d, IterationRecord, MinimizeError, MinimizeResult,
};
use thinfilm::spectral::{
    constraint_residual, defect_norm, read_crml_file, write_crml_file, AfreeProjector, VectorField,
};
use thinfilm::OperatorSpec;

/// Residual level below which a constraint counts as exactly satisfied.
const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(
    name = "thinfilm",
    version,
    about = "Constant-rank projections and thin-film micromagnetics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `io.output_directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed; overrides `minimize.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the symbol rank over the unit sphere.
    CheckRank {
        /// `div`, `curl`, `maxwell` or a path to an operator text file.
        #[arg(default_value = "maxwell")]
        operator: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Project a CRML field onto the kernel of the rescaled operator.
    Project {
        input: PathBuf,
        #[arg(long, default_value = "maxwell")]
        operator: String,
        /// Thickness parameter; defaults to the one stored in the file.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Solve for the stray field of a CRML magnetization.
    Demag {
        input: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Minimize the configured functional.
    Minimize,
    /// Minimize along the configured eps schedule and compare with the limit.
    Sweep,
    /// Build the recovery sequence of a limit pair along the eps schedule.
    Recover {
        /// Magnetization constant in x3; defaults to m_s e3 on the film.
        #[arg(long)]
        m0: Option<PathBuf>,
        /// Matching stray field; defaults to -(0, 0, m3) on the film.
        #[arg(long)]
        h0: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Compute(String),
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(passed)` once the command has computed; `Err` for anything caught
/// before or instead of a result.
fn run(cli: &Cli) -> Result<bool, CliError> {
    match &cli.command {
        Command::CheckRank { operator, samples } => check_rank(cli, operator, *samples),
        Command::Project {
            input,
            operator,
            eps,
        } => project(cli, input, operator, *eps),
        Command::Demag { input, eps } => demag(cli, input, *eps),
        Command::Minimize => minimize(&resolve(cli)?),
        Command::Sweep => sweep(&resolve(cli)?),
        Command::Recover { m0, h0 } => recover(&resolve(cli)?, m0.as_deref(), h0.as_deref()),
    }
}

fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| invalid("this subcommand needs --config PATH"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.minimize.seed = seed;
    }
    let mut r = cfg.resolve()?;
    if let Some(out) = &cli.out {
        r.out = out.clone();
    }
    Ok(r)
}

fn operator(name: &str) -> Result<OperatorSpec, CliError> {
    match name {
        "div" => Ok(OperatorSpec::div()),
        "curl" => Ok(OperatorSpec::curl()),
        "maxwell" => Ok(OperatorSpec::maxwell()),
        path => {
            let text = fs::read_to_string(path).map_err(|e| {
                invalid(format!(
                    "unknown operator `{path}` and cannot read it as a file: {e}"
                ))
            })?;
            text.parse().map_err(|e| invalid(format!("{path}: {e}")))
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(compute)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| compute(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| compute(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(compute)?;
    }
    w.flush().map_err(compute)
}

fn write_field(path: &Path, f: &VectorField) -> Result<(), CliError> {
    write_crml_file(path, f).map_err(|e| compute(format!("{}: {e}", path.display())))
}

fn read_field(path: &Path, eps: Option<f64>) -> Result<VectorField, CliError> {
    let f = read_crml_file(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    match eps {
        Some(e) => f.with_eps(e).map_err(|e| invalid(format!("--eps: {e}"))),
        None => Ok(f),
    }
}

fn check_rank(cli: &Cli, name: &str, samples: usize) -> Result<bool, CliError> {
    let op = operator(name)?;
    if samples == 0 {
        return Err(invalid("--samples must be positive"));
    }
    let report = op.check_constant_rank(samples, cli.seed.unwrap_or(0));
    println!(
        "rank {}, constant: {}",
        report.rank,
        if report.constant { "yes" } else { "no" }
    );
    println!("axis ranks: {:?}", report.axis_ranks);
    println!("samples checked: {}", report.samples_checked);
    for (xi, r) in report.deviations.iter().take(20) {
        println!("rank {r} at xi = {xi:?}");
    }
    if report.deviations.len() > 20 {
        println!("... {} more", report.deviations.len() - 20);
    }
    if let Some(dir) = &cli.out {
        create_dir(dir)?;
        let deviations: Vec<_> = report
            .deviations
            .iter()
            .map(|(xi, r)| json!({"xi": xi, "rank": r}))
            .collect();
        write_json(
            &dir.join("rank.json"),
            &json!({
                "rank": report.rank,
                "constant": report.constant,
                "samples_checked": report.samples_checked,
                "axis_ranks": report.axis_ranks,
                "deviations": deviations,
            }),
        )?;
    }
    if report.constant {
        Ok(true)
    } else {
        Err(invalid(format!(
            "rank is not constant: {} frequencies deviate from rank {}",
            report.deviations.len(),
            report.rank
        )))
    }
}

fn project(cli: &Cli, input: &Path, name: &str, eps: Option<f64>) -> Result<bool, CliError> {
    let op = operator(name)?;
    let u = read_field(input, eps)?;
    if u.channels() != op.fields() {
        return Err(invalid(format!(
            "{} has {} channels but operator `{name}` acts on {}",
            input.display(),
            u.channels(),
            op.fields()
        )));
    }
    let proj = AfreeProjector::new(&op, *u.grid(), true).map_err(invalid)?;
    let before = defect_norm(&u, &op, true).map_err(compute)?;
    let pu = proj.apply(&u).map_err(compute)?;
    let after = defect_norm(&pu, &op, true).map_err(compute)?;
    let residual = constraint_residual(&pu, &op, true).map_err(compute)?;
    let dir = out_dir(cli);
    create_dir(&dir)?;
    write_field(&dir.join("projected.crml"), &pu)?;
    let passed = after < CONSTRAINT_TOL && residual < CONSTRAINT_TOL;
    write_json(
        &dir.join("project.json"),
        &json!({
            "operator": name,
            "eps": u.grid().eps(),
            "defect_before": before,
            "defect_after": after,
            "constraint_residual": residual,
            "distance": u.sub(&pu).map_err(compute)?.l2_norm(),
            "passed": passed,
        }),
    )?;
    println!("defect before {before:.6e}, after {after:.6e}, residual {residual:.3e}");
    Ok(passed)
}

fn demag(cli: &Cli, input: &Path, eps: Option<f64>) -> Result<bool, CliError> {
    let m = read_field(input, eps)?;
    if m.channels() != 3 {
        return Err(invalid(format!(
            "{} has {} channels, a magnetization needs 3",
            input.display(),
            m.channels()
        )));
    }
    let h = solve_magnetostatics(&m).map_err(compute)?;
    let residual = maxwell_residual(&m, &h).map_err(compute)?;
    let (spatial, fourier) = (stray_energy(&h), stray_energy_fourier(&h));
    let dir = out_dir(cli);
    create_dir(&dir)?;
    write_field(&dir.join("h.crml"), &h)?;
    let passed = residual < CONSTRAINT_TOL;
    write_json(
        &dir.join("demag.json"),
        &json!({
            "eps": m.grid().eps(),
            "maxwell_residual": residual,
            "stray_energy": spatial,
            "stray_energy_fourier": fourier,
            "passed": passed,
        }),
    )?;
    println!("stray energy {spatial:.10e}, Maxwell residual {residual:.3e}");
    Ok(passed)
}

/// Energies as emitted in JSON summaries.
#[derive(Serialize)]
struct EnergyRecord {
    eps: f64,
    exchange: f64,
    anisotropy: f64,
    stray: f64,
    total: f64,
}

impl From<&EnergyReport> for EnergyRecord {
    fn from(r: &EnergyReport) -> Self {
        Self {
            eps: r.eps,
            exchange: r.exchange,
            anisotropy: r.anisotropy,
            stray: r.stray,
            total: r.total,
        }
    }
}

fn resolution_note(r: &Resolved, eps: f64) -> Option<String> {
    let floor = 4.0 / r.geom.grid().counts()[2] as f64;
    (eps < floor).then(|| {
        let msg =
            format!("eps = {eps} is below 4/N3 = {floor}; vertical differences are under-resolved");
        log::warn!("{msg}");
        msg
    })
}

fn minimize(r: &Resolved) -> Result<bool, CliError> {
    let mut notes = Vec::new();
    let outcome = match r.functional {
        Functional::Feps => {
            notes.extend(resolution_note(r, r.geom.grid().eps()));
            minimize_feps(&r.geom, &r.params, &r.minimize)
        }
        Functional::Limit => minimize_limit2d(&r.geom, &r.params, &r.minimize),
    };
    let (result, failure): (MinimizeResult, Option<String>) = match outcome {
        Ok(res) => (res, None),
        Err(MinimizeError::LineSearch(res)) => {
            let msg = format!("line search failed after {} iterations", res.iterations);
            (*res, Some(msg))
        }
        Err(e) => return Err(compute(e)),
    };
    create_dir(&r.out)?;
    write_csv::<IterationRecord>(&r.out.join("trail.csv"), &result.trail)?;
    if r.write_fields {
        write_field(&r.out.join("m.crml"), &result.m_final)?;
        write_field(&r.out.join("h.crml"), &result.h_final)?;
    }
    notes.extend(failure.clone());
    let passed = result.converged && failure.is_none();
    write_json(
        &r.out.join("energy.json"),
        &json!({
            "functional": match r.functional { Functional::Feps => "feps", Functional::Limit => "limit" },
            "energy": EnergyRecord::from(&result.report),
            "converged": result.converged,
            "iterations": result.iterations,
            "residual": result.residual,
            "padding": r.padding,
            "passed": passed,
            "notes": notes,
        }),
    )?;
    println!(
        "total {:.10e} after {} iterations, residual {:.3e}, converged: {}",
        result.report.total, result.iterations, result.residual, result.converged
    );
    Ok(passed)
}

#[derive(Serialize)]
struct SweepRow {
    eps: f64,
    energy_eps: f64,
    energy_limit: f64,
    d3m_norm: f64,
    h_gap: f64,
    maxwell_residual: f64,
    saturation_error: f64,
}

fn sweep(r: &Resolved) -> Result<bool, CliError> {
    let out = eps_sweep(&r.geom, &r.params, &r.schedule, &r.minimize).map_err(compute)?;
    let rows: Vec<SweepRow> = out
        .records
        .iter()
        .map(|s| SweepRow {
            eps: s.eps,
            energy_eps: s.energy_eps,
            energy_limit: s.energy_limit,
            d3m_norm: s.d3m_norm,
            h_gap: s.h_gap,
            maxwell_residual: s.maxwell_residual,
            saturation_error: s.saturation_error,
        })
        .collect();
    let partial =
        out.records.len() < r.schedule.len() || out.records.iter().any(|s| s.failure.is_some());
    create_dir(&r.out)?;
    write_csv(&r.out.join("sweep.csv"), &rows)?;
    if r.write_fields {
        for (i, res) in out.results.iter().enumerate() {
            write_field(&r.out.join(format!("m_{i}.crml")), &res.m_final)?;
        }
        write_field(&r.out.join("m_limit.crml"), &out.limit.m_final)?;
    }
    let fields: Vec<&VectorField> = out.results.iter().map(|res| &res.m_final).collect();
    let compactness = if fields.len() >= 2 {
        Some(compactness_diagnostics(&fields, &r.geom).map_err(compute)?)
    } else {
        None
    };
    let failures: Vec<_> = out
        .records
        .iter()
        .filter_map(|s| {
            s.failure
                .as_ref()
                .map(|f| json!({"eps": s.eps, "failure": f}))
        })
        .collect();
    let passed = out.summary.passed && !partial;
    write_json(
        &r.out.join("summary.json"),
        &json!({
            "passed": passed,
            "assertions": out.summary.assertions,
            "notes": out.summary.notes,
            "failures": failures,
            "limit_energy": EnergyRecord::from(&out.limit.report),
            "compactness": compactness,
            "padding": r.padding,
        }),
    )?;
    for a in &out.summary.assertions {
        println!("{}: {}", a.name, if a.passed { "ok" } else { "FAILED" });
    }
    println!("sweep passed: {passed}");
    Ok(passed)
}

fn recover(r: &Resolved, m0: Option<&Path>, h0: Option<&Path>) -> Result<bool, CliError> {
    let m_s = r.params.m_s;
    let load = |p: &Path| -> Result<VectorField, CliError> {
        let f = read_field(p, Some(r.geom.grid().eps()))?;
        if f.grid().counts() != r.geom.grid().counts() || f.channels() != 3 {
            return Err(invalid(format!(
                "{} is {:?} with {} channels, expected {:?} with 3",
                p.display(),
                f.grid().counts(),
                f.channels(),
                r.geom.grid().counts()
            )));
        }
        Ok(f)
    };
    let m = match m0 {
        Some(p) => load(p)?,
        None => r.geom.uniform([0.0, 0.0, m_s]),
    };
    let inp = match h0 {
        Some(p) => RecoveryInput::new(m, load(p)?, &r.geom, m_s),
        None => RecoveryInput::reduced(m, &r.geom, m_s),
    }
    .map_err(invalid)?;
    for &eps in &r.schedule {
        resolution_note(r, eps);
    }
    let records: Vec<RecoveryRecord> =
        recovery_sweep(&inp, &r.geom, &r.params, &r.schedule).map_err(compute)?;
    let residual = records
        .iter()
        .map(|x| x.maxwell_residual)
        .fold(0.0, f64::max);
    let saturation = records
        .iter()
        .map(|x| x.saturation_error)
        .fold(0.0, f64::max);
    let gaps: Vec<f64> = records.iter().map(|x| x.energy_gap).collect();
    let distances: Vec<f64> = records.iter().map(|x| x.h_distance).collect();
    let assertions = vec![
        json!({"name": "constraints", "passed": residual < CONSTRAINT_TOL, "values": [residual]}),
        json!({"name": "saturation", "passed": saturation < CONSTRAINT_TOL, "values": [saturation]}),
        json!({"name": "energy gap decreasing", "passed": decreasing_tail(&gaps), "values": gaps}),
    ];
    let passed = assertions.iter().all(|a| a["passed"] == true);
    create_dir(&r.out)?;
    write_csv(&r.out.join("recovery.csv"), &records)?;
    write_json(
        &r.out.join("summary.json"),
        &json!({
            "passed": passed,
            "assertions": assertions,
            "h_distance": distances,
        }),
    )?;
    for x in &records {
        println!(
            "eps {:<8} gap {:.6e}  residual {:.3e}",
            x.eps, x.energy_gap, x.maxwell_residual
        );
    }
    println!("recovery passed: {passed}");
    Ok(passed)
}
