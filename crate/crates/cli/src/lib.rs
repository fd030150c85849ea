//! Command-line front end for the `nestmc` experiments.
//!
//! [`run`] parses arguments, runs one experiment and writes its table as CSV
//! or JSON. It returns the process exit code: 0 on success, 2 for usage or
//! configuration errors, 3 when more than a tenth of the rows are flagged as
//! degenerate (the output is still written).

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fmt::Display;
use std::io::{self, Write};

use clap::Parser;
use nestmc::harness::{self, ConvergenceReport, FitAxis};
use nestmc::{models, AllocationPolicy, NestedProblem, RepSchedule, RngStream};

pub use config::{Command, Format, Grid, PolicyList, RepSteps, RunConfig};
use report::{Cell, Document, FitLine, Metadata};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

/// Share of flagged rows above which a run exits with [`EXIT_DEGENERATE`].
pub const DEGENERATE_ROWS_LIMIT: f64 = 0.1;

pub const CONVERGE_COLUMNS: &[&str] = &["T", "N", "M", "reps", "mean", "mse", "mse_se", "degenerate_frac"];
pub const COLLAPSE_COLUMNS: &[&str] = &[
    "estimator",
    "T",
    "N",
    "M",
    "reps",
    "mean",
    "mse",
    "mse_se",
    "degenerate_frac",
];
pub const BIAS_COLUMNS: &[&str] = &["M", "N", "reps", "mean_error", "se", "predicted"];
pub const ALLOCATE_COLUMNS: &[&str] = &["policy", "N", "M", "mse", "mse_se", "rank"];
pub const MODELS_COLUMNS: &[&str] = &["name", "truth", "exercises"];

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(io::Error),
}

impl From<nestmc::Error> for Failure {
    fn from(e: nestmc::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn config_error(msg: impl Display) -> Failure {
    Failure::Config(msg.to_string())
}

/// Runs one invocation. Reports go to `out` unless `--out` is given;
/// diagnostics and the slope summary go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return e.exit_code();
        }
    };
    match execute(&cfg, out, err) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_IO
        }
    }
}

/// Runs a parsed configuration and writes its document.
pub fn execute(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let doc = match cfg.workers {
        Some(0) => return Err(config_error("--workers must be at least 1")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| config_error(format!("cannot start {k} workers: {e}")))?
            .install(|| build_document(cfg))?,
        None => build_document(cfg)?,
    };
    let mut buf = Vec::new();
    doc.write(cfg.format, &mut buf)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &buf)?,
        None => out.write_all(&buf)?,
    }
    for f in &doc.fits {
        writeln!(err, "{}", f.summary())?;
    }
    let code = exit_code(&doc);
    if code == EXIT_DEGENERATE {
        writeln!(
            err,
            "warning: {} of {} rows are degenerate",
            doc.flagged_rows,
            doc.rows.len()
        )?;
    }
    Ok(code)
}

/// [`EXIT_DEGENERATE`] when more than a tenth of the rows are flagged.
pub fn exit_code(doc: &Document) -> i32 {
    if doc.flagged_rows as f64 > DEGENERATE_ROWS_LIMIT * doc.rows.len() as f64 {
        EXIT_DEGENERATE
    } else {
        EXIT_OK
    }
}

/// Runs the experiment a configuration describes.
pub fn build_document(cfg: &RunConfig) -> Result<Document, Failure> {
    if cfg.command != Command::Models {
        if let Some(a) = &cfg.action {
            return Err(config_error(format!(
                "unexpected argument `{a}` for {}",
                cfg.command.name()
            )));
        }
    }
    match cfg.command {
        Command::Converge => converge(cfg),
        Command::Bias => bias(cfg),
        Command::Allocate => allocate(cfg),
        Command::Collapse => collapse(cfg),
        Command::Models => list_models(cfg),
    }
}

fn model(cfg: &RunConfig) -> Result<NestedProblem, Failure> {
    let name = cfg
        .model
        .as_deref()
        .ok_or_else(|| config_error("--model is required"))?;
    Ok(models::by_name(name)?)
}

fn require<T: Clone>(v: &Option<T>, flag: &str, command: Command) -> Result<T, Failure> {
    v.clone()
        .ok_or_else(|| config_error(format!("{} needs --{flag}", command.name())))
}

fn schedule(cfg: &RunConfig) -> RepSchedule {
    RepSchedule::with_steps(cfg.reps, cfg.rep_schedule.0.clone())
}

fn metadata(cfg: &RunConfig, policy: Option<String>) -> Metadata {
    Metadata {
        command: cfg.command.name(),
        model: cfg.model.clone(),
        policy,
        seed: cfg.seed,
    }
}

fn axis_name(axis: FitAxis) -> &'static str {
    match axis {
        FitAxis::Budget => "T",
        FitAxis::Outer => "N",
        FitAxis::Inner => "M",
    }
}

fn convergence_rows(r: &ConvergenceReport, estimator: Option<&'static str>) -> Vec<Vec<Cell>> {
    r.rows
        .iter()
        .map(|row| {
            let mut cells: Vec<Cell> = estimator.map(|e| Cell::Text(e.into())).into_iter().collect();
            cells.extend([
                row.budget.into(),
                row.n.into(),
                row.m.into(),
                row.reps.into(),
                row.mean.into(),
                row.mse.into(),
                row.mse_se.into(),
                row.degenerate_frac.into(),
            ]);
            cells
        })
        .collect()
}

fn fit_line(r: &ConvergenceReport, estimator: Option<&'static str>) -> FitLine {
    FitLine {
        estimator,
        axis: axis_name(r.fit_axis),
        fit: r.fit,
        note: r.fit_note.clone(),
    }
}

fn converge(cfg: &RunConfig) -> Result<Document, Failure> {
    let p = model(cfg)?;
    let s = RngStream::root(cfg.seed);
    let reps = schedule(cfg);
    let mut report = match (&cfg.budgets, cfg.n, &cfg.ms, cfg.m, &cfg.ns) {
        (Some(b), None, None, None, None) => {
            let policy = cfg.policy.unwrap_or(AllocationPolicy::BALANCED);
            harness::run_convergence(&p, &policy, &b.values()?, &reps, &s)?
        }
        (None, Some(n), Some(ms), None, None) if cfg.policy.is_none() => {
            harness::run_fixed_outer(&p, n, &ms.counts()?, &reps, &s)?
        }
        (None, None, None, Some(m), Some(ns)) if cfg.policy.is_none() => {
            harness::run_fixed_inner(&p, m, &ns.counts()?, &reps, &s)?
        }
        _ => {
            return Err(config_error(
                "converge needs exactly one of --budgets [--policy], --N with --Ms, or --M with --Ns",
            ))
        }
    };
    report.refit(cfg.drop_smallest);
    Ok(Document {
        metadata: metadata(cfg, Some(report.policy.clone())),
        columns: CONVERGE_COLUMNS,
        rows: convergence_rows(&report, None),
        fits: vec![fit_line(&report, None)],
        notes: Vec::new(),
        flagged_rows: report.flagged_rows(),
    })
}

fn collapse(cfg: &RunConfig) -> Result<Document, Failure> {
    let p = model(cfg)?;
    if !p.is_linear() {
        return Err(config_error(format!(
            "model `{}` has no linear form to collapse",
            p.name()
        )));
    }
    let budgets = require(&cfg.budgets, "budgets", cfg.command)?;
    let policy = cfg.policy.unwrap_or(AllocationPolicy::BALANCED);
    let s = RngStream::root(cfg.seed);
    let reps = schedule(cfg);
    let mut collapsed = harness::run_collapsed_convergence(&p, &budgets.counts()?, &reps, &s.split(0))?;
    let mut nested = harness::run_convergence(&p, &policy, &budgets.values()?, &reps, &s.split(1))?;
    collapsed.refit(cfg.drop_smallest);
    nested.refit(cfg.drop_smallest);
    let mut rows = convergence_rows(&collapsed, Some("collapsed"));
    rows.extend(convergence_rows(&nested, Some("nested")));
    Ok(Document {
        metadata: metadata(cfg, Some(policy.to_string())),
        columns: COLLAPSE_COLUMNS,
        rows,
        fits: vec![
            fit_line(&collapsed, Some("collapsed")),
            fit_line(&nested, Some("nested")),
        ],
        notes: Vec::new(),
        flagged_rows: collapsed.flagged_rows() + nested.flagged_rows(),
    })
}

fn bias(cfg: &RunConfig) -> Result<Document, Failure> {
    let p = model(cfg)?;
    let n = require(&cfg.n, "N", cfg.command)?;
    let ms = require(&cfg.ms, "Ms", cfg.command)?;
    let report = harness::run_bias(&p, n, &ms.counts()?, cfg.reps, &RngStream::root(cfg.seed))?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.m.into(),
                r.n.into(),
                r.reps.into(),
                r.mean_error.into(),
                r.se.into(),
                r.predicted.into(),
            ]
        })
        .collect();
    Ok(Document {
        metadata: metadata(cfg, None),
        columns: BIAS_COLUMNS,
        rows,
        fits: vec![FitLine {
            estimator: None,
            axis: "M",
            fit: report.fit,
            note: report.fit_note.clone(),
        }],
        notes: Vec::new(),
        flagged_rows: 0,
    })
}

fn allocate(cfg: &RunConfig) -> Result<Document, Failure> {
    let p = model(cfg)?;
    let budget = require(&cfg.budget, "T", cfg.command)?;
    let policies = match (&cfg.policies, cfg.policy) {
        (Some(list), None) => list.0.clone(),
        (None, Some(one)) => vec![one],
        _ => return Err(config_error("allocate needs exactly one of --policies or --policy")),
    };
    let cmp = harness::compare_policies(&p, budget, &policies, cfg.reps, &RngStream::root(cfg.seed))?;
    let rows = cmp
        .results
        .iter()
        .map(|r| {
            vec![
                Cell::Text(r.policy.to_string()),
                r.n.into(),
                r.m.into(),
                r.mse.into(),
                r.mse_se.into(),
                r.rank.into(),
            ]
        })
        .collect();
    let mut notes = vec![format!("winner={}", cmp.winner().policy)];
    if cmp.tie {
        notes.push("tie".into());
    }
    Ok(Document {
        metadata: metadata(cfg, Some(PolicyList(policies).to_string())),
        columns: ALLOCATE_COLUMNS,
        rows,
        fits: Vec::new(),
        notes,
        flagged_rows: 0,
    })
}

fn list_models(cfg: &RunConfig) -> Result<Document, Failure> {
    match cfg.action.as_deref() {
        Some("list") | None => {}
        Some(other) => {
            return Err(config_error(format!(
                "unknown models action `{other}`, expected `list`"
            )))
        }
    }
    let rows = models::CATALOG
        .iter()
        .map(|e| {
            let truth = e.make().truth().map(|t| (t[0] * 1e6).round() / 1e6);
            vec![Cell::Text(e.name.into()), truth.into(), Cell::Text(e.exercises.into())]
        })
        .collect();
    Ok(Document {
        metadata: metadata(cfg, None),
        columns: MODELS_COLUMNS,
        rows,
        fits: Vec::new(),
        notes: Vec::new(),
        flagged_rows: 0,
    })
}
