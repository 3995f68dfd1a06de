//! Driving `solve`, `verify` and `sweep` runs and writing their reports.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimates::{estimate_suite, EstimateReport, SCHEME_TOL};
use crate::expr::FieldExpr;
use crate::problem::{validate_hypotheses, HypothesisReport, ProblemSpec, DENSE_SAMPLES_1D, DENSE_SAMPLES_2D};
use crate::report::{rows_to_csv, write_file};
use crate::scheme::{check_monotonicity, run_scheme, SchemeResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RunStatus {
    Pass,
    CheckFailure,
    UsageError,
    Nonconvergence,
}

impl RunStatus {
    pub fn code(self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::CheckFailure => 1,
            RunStatus::UsageError => 2,
            RunStatus::Nonconvergence => 3,
        }
    }

    fn label(self) -> &'static str {
        match self {
            RunStatus::Pass => "pass",
            RunStatus::CheckFailure => "check-failure",
            RunStatus::UsageError => "error",
            RunStatus::Nonconvergence => "nonconvergence",
        }
    }

    fn of_error(e: &Error) -> RunStatus {
        if e.is_nonconvergence() {
            RunStatus::Nonconvergence
        } else {
            RunStatus::UsageError
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub report: Value,
    /// Errors that ended the run early, with context.
    pub errors: Vec<String>,
}

/// Runs `command` and writes its reports to `cfg.out_dir`.
pub fn run(command: Command, cfg: &RunConfig) -> RunOutcome {
    let start = Instant::now();
    let mut outcome = match command {
        Command::Solve | Command::Verify => run_single(command, cfg, &cfg.out_dir),
        Command::Sweep => run_sweep(cfg),
    };
    if let Value::Object(map) = &mut outcome.report {
        map.insert("timings".into(), json!({ "total_seconds": start.elapsed().as_secs_f64() }));
    }
    if cfg.formats.json {
        let path = cfg.out_dir.join("report.json");
        let text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
        if let Err(e) = write_file(&path, &text) {
            outcome.errors.push(e.to_string());
            outcome.status = outcome.status.max(RunStatus::UsageError);
        }
    }
    outcome
}

fn header(command: Command, cfg: &RunConfig) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("tool".into(), json!("pxlap"));
    map.insert("version".into(), json!(VERSION));
    map.insert("command".into(), json!(command.name()));
    map.insert("config".into(), cfg.echo());
    map
}

fn hypotheses(spec: &ProblemSpec) -> Result<HypothesisReport> {
    let samples = if spec.dimension() == 1 { DENSE_SAMPLES_1D } else { DENSE_SAMPLES_2D };
    validate_hypotheses(spec, samples)
}

fn run_single(command: Command, cfg: &RunConfig, out_dir: &Path) -> RunOutcome {
    let mut report = header(command, cfg);
    let mut errors = Vec::new();
    let status = match single_inner(command, cfg, out_dir, &mut report, &mut errors) {
        Ok(status) => status,
        Err(e) => {
            errors.push(e.to_string());
            RunStatus::of_error(&e)
        }
    };
    report.insert("status".into(), json!(status.label()));
    report.insert("errors".into(), json!(errors));
    RunOutcome {
        status,
        report: Value::Object(report),
        errors,
    }
}

fn single_inner(
    command: Command,
    cfg: &RunConfig,
    out_dir: &Path,
    report: &mut serde_json::Map<String, Value>,
    errors: &mut Vec<String>,
) -> Result<RunStatus> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let spec = cfg.spec()?;
    let grid = cfg.grid()?;
    let hyp = hypotheses(&spec)?;
    report.insert("hypotheses".into(), serde_json::to_value(&hyp).expect("serializes"));
    if !hyp.passed() {
        errors.push(format!("hypotheses violated: {:?}", hyp.failures()));
        return Ok(RunStatus::CheckFailure);
    }

    let fine = match run_scheme(&spec, &grid, &cfg.scheme) {
        Ok(r) => r,
        Err(Error::SchemeAborted { n, cause, partial }) => {
            report.insert("scheme".into(), scheme_summary(&partial));
            write_solutions(&partial, out_dir)?;
            return Err(Error::SchemeAborted { n, cause, partial });
        }
        Err(e) => return Err(e),
    };
    report.insert("scheme".into(), scheme_summary(&fine));
    write_solutions(&fine, out_dir)?;
    let monotone = check_monotonicity(&fine, SCHEME_TOL).iter().all(|m| m.pass);
    if command == Command::Solve {
        return Ok(if monotone { RunStatus::Pass } else { RunStatus::CheckFailure });
    }

    let coarse = match (cfg.coarse_companion, grid.coarsened()) {
        (true, Some(g)) => Some(run_scheme(&spec, &g, &cfg.scheme)?),
        _ => None,
    };
    if let Some(c) = &coarse {
        report.insert("coarse_scheme".into(), scheme_summary(c));
    }
    let estimates = estimate_suite(&spec, &fine, coarse.as_ref(), &cfg.estimates)?;
    report.insert("estimates".into(), estimate_summary(&estimates));
    if cfg.formats.csv {
        write_file(&out_dir.join("estimates.csv"), &estimates_csv(command, &estimates))?;
    }
    if !estimates.passed() {
        errors.push(format!(
            "{} estimate row(s) failed, {} check(s) not evaluable",
            estimates.failures().len(),
            estimates.not_evaluable.len()
        ));
    }
    Ok(if estimates.passed() && monotone {
        RunStatus::Pass
    } else {
        RunStatus::CheckFailure
    })
}

/// The estimate table with a leading `#` line that carries run metadata. The
/// rest of the file depends only on the configuration and seed.
pub fn estimates_csv(command: Command, estimates: &EstimateReport) -> String {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "# pxlap {VERSION} {} seed={} generated_unix={stamp}\n{}",
        command.name(),
        estimates.seed,
        rows_to_csv(&estimates.rows)
    )
}

fn write_solutions(result: &SchemeResult, out_dir: &Path) -> Result<()> {
    for (n, u) in result.schedule.iter().zip(&result.solutions) {
        write_file(&out_dir.join(format!("solution_n{n}.csv")), &u.to_csv())?;
    }
    Ok(())
}

fn scheme_summary(result: &SchemeResult) -> Value {
    let grid = &result.grid;
    json!({
        "nodes": grid.nodes_per_axis(),
        "schedule": result.schedule,
        "records": result.records,
        "sup_norms": result.solutions.iter().map(|u| u.sup_norm()).collect::<Vec<_>>(),
        "monotonicity": check_monotonicity(result, SCHEME_TOL),
    })
}

fn estimate_summary(e: &EstimateReport) -> Value {
    json!({
        "passed": e.passed(),
        "failures": e.failures(),
        "constants": e.constants,
        "residuals": e.residuals,
        "test_functions": e.test_functions,
        "not_evaluable": e.not_evaluable,
        "seed": e.seed,
        "discretization_allowance": e.discretization_allowance,
        "rows": e.rows,
    })
}

fn run_sweep(cfg: &RunConfig) -> RunOutcome {
    let mut report = header(Command::Sweep, cfg);
    let mut errors = Vec::new();
    let mut status = RunStatus::Pass;
    let mut cells = Vec::new();
    match &cfg.sweep {
        None => {
            errors.push("config has no [sweep] section".to_string());
            status = RunStatus::UsageError;
        }
        Some(sweep) => {
            for (i, (p, r, gamma)) in sweep.cells().into_iter().enumerate() {
                let mut cell_cfg = cfg.clone();
                cell_cfg.exprs.p = FieldExpr::constant(p);
                cell_cfg.exprs.r = FieldExpr::constant(r);
                cell_cfg.exprs.gamma = FieldExpr::constant(gamma);
                let id = format!("cell_{i:03}");
                let skip = cell_cfg.spec().and_then(|s| hypotheses(&s)).map(|h| (!h.passed(), h.failures()));
                let entry = match skip {
                    Ok((true, failures)) => json!({
                        "id": id, "p": p, "r": r, "gamma": gamma,
                        "status": "hypothesis-skip",
                        "failed_hypotheses": failures,
                    }),
                    Ok((false, _)) => {
                        let out = run_single(Command::Verify, &cell_cfg, &cfg.out_dir.join(&id));
                        status = status.max(out.status);
                        errors.extend(out.errors.iter().map(|e| format!("{id}: {e}")));
                        json!({
                            "id": id, "p": p, "r": r, "gamma": gamma,
                            "status": out.status.label(),
                            "report": out.report,
                        })
                    }
                    Err(e) => {
                        status = status.max(RunStatus::of_error(&e));
                        errors.push(format!("{id}: {e}"));
                        json!({ "id": id, "p": p, "r": r, "gamma": gamma, "status": "error" })
                    }
                };
                cells.push(entry);
            }
        }
    }
    report.insert("cells".into(), json!(cells));
    report.insert("status".into(), json!(status.label()));
    report.insert("errors".into(), json!(errors));
    RunOutcome {
        status,
        report: Value::Object(report),
        errors,
    }
}
