//! Replicated experiments over nested estimators.
//!
//! Row `i` of a sweep runs on stream `s / i` and its replication `r` on
//! `s / i / r`, so every number in a report is a function of the root seed
//! alone. Replications run on the current rayon pool and are reduced in index
//! order.

mod fit;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

pub use fit::{fit_loglog_slope, SlopeFit};

use crate::allocation::AllocationPolicy;
use crate::error::{Error, Result};
use crate::estimators::{collapsed_estimate, nmc_estimate, Estimate};
use crate::problem::NestedProblem;
use crate::rng::RngStream;
use crate::sum::NeumaierSum;

/// Rows whose fraction of degenerate outer terms reaches this are left out of fits.
pub const DEGENERATE_ROW_LIMIT: f64 = 0.1;

pub const ZERO_MSE_NOTE: &str = "degenerate: zero MSE";
pub const ZERO_ERROR_NOTE: &str = "degenerate: zero mean error";

/// Replication count per row, optionally reduced at large budgets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RepSchedule {
    pub base: usize,
    /// `(threshold, reps)`: rows with budget `>= threshold` use `reps`; the
    /// largest matching threshold wins.
    pub steps: Vec<(u64, usize)>,
}

impl RepSchedule {
    pub fn constant(reps: usize) -> Self {
        RepSchedule {
            base: reps,
            steps: Vec::new(),
        }
    }

    pub fn with_steps(base: usize, mut steps: Vec<(u64, usize)>) -> Self {
        steps.sort_by_key(|s| s.0);
        RepSchedule { base, steps }
    }

    pub fn reps_for(&self, budget: u64) -> usize {
        self.steps
            .iter()
            .rev()
            .find(|(t, _)| budget >= *t)
            .map_or(self.base, |(_, r)| *r)
    }

    fn check(&self) -> Result<()> {
        let min = self.steps.iter().map(|s| s.1).chain([self.base]).min().unwrap_or(0);
        if min < 2 {
            return Err(Error::TooFewReplications(min));
        }
        Ok(())
    }

    /// Steps spelled `T=R,T=R`, or the empty string.
    pub fn steps_to_string(&self) -> String {
        self.steps
            .iter()
            .map(|(t, r)| format!("{t}={r}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Parses schedule steps `T=R,T=R` (the base count comes separately).
pub fn parse_rep_steps(s: &str) -> Result<Vec<(u64, usize)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let bad = || Error::InvalidGrid(format!("bad replication step `{item}`, expected T=R"));
            let (t, r) = item.split_once('=').ok_or_else(bad)?;
            Ok((
                t.trim().parse().map_err(|_| bad())?,
                r.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Which estimator a sweep ran.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Nested,
    Collapsed,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Nested => "nested",
            EstimatorKind::Collapsed => "collapsed",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nested" => Ok(EstimatorKind::Nested),
            "collapsed" => Ok(EstimatorKind::Collapsed),
            _ => Err(Error::InvalidPolicy(s.to_string())),
        }
    }
}

/// The quantity on the x axis of a convergence fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitAxis {
    Budget,
    Outer,
    Inner,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub budget: u64,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub mean: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub degenerate_frac: f64,
    /// Set when `degenerate_frac >= DEGENERATE_ROW_LIMIT`.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub policy: String,
    pub estimator: EstimatorKind,
    pub truth: f64,
    pub rows: Vec<ConvergenceRow>,
    pub fit_axis: FitAxis,
    pub drop_smallest: usize,
    pub fit: Option<SlopeFit>,
    pub fit_note: Option<String>,
    pub root_seed: u64,
}

impl ConvergenceReport {
    /// Refits the slope ignoring the `k` smallest rows.
    pub fn refit(&mut self, drop_smallest: usize) {
        self.drop_smallest = drop_smallest;
        let points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .skip(drop_smallest)
            .filter(|r| !r.flagged && r.mse.is_finite())
            .map(|r| {
                let x = match self.fit_axis {
                    FitAxis::Budget => r.budget as f64,
                    FitAxis::Outer => r.n as f64,
                    FitAxis::Inner => r.m as f64,
                };
                (x, r.mse)
            })
            .collect();
        (self.fit, self.fit_note) = fit_positive(&points, ZERO_MSE_NOTE);
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn flagged_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }
}

fn fit_positive(points: &[(f64, f64)], zero_note: &str) -> (Option<SlopeFit>, Option<String>) {
    if !points.is_empty() && points.iter().all(|p| p.1 == 0.0) {
        return (None, Some(zero_note.to_string()));
    }
    let usable: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    match fit_loglog_slope(&usable) {
        Ok(f) if usable.len() == points.len() => (Some(f), None),
        Ok(f) => (
            Some(f),
            Some(format!(
                "{} zero-valued rows excluded from fit",
                points.len() - usable.len()
            )),
        ),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn scalar_truth(p: &NestedProblem) -> Result<f64> {
    let t = p.truth().ok_or_else(|| Error::NoTruth(p.name().to_string()))?;
    if t.len() != 1 {
        return Err(Error::InvalidProblem(format!(
            "experiments need a scalar f, `{}` has D_f = {}",
            p.name(),
            t.len()
        )));
    }
    Ok(t[0])
}

/// Summary of one row's replications.
struct Replicated {
    mean: f64,
    mse: f64,
    mse_se: f64,
    error_se: f64,
    median_sq_error: f64,
    degenerate_frac: f64,
}

fn replicate<F>(reps: usize, row: &RngStream, truth: f64, run: F) -> Result<Replicated>
where
    F: Fn(&RngStream) -> Result<Estimate> + Sync,
{
    let estimates: Vec<Estimate> = (0..reps as u64)
        .into_par_iter()
        .map(|r| run(&row.split(r)))
        .collect::<Result<_>>()?;
    let n_outer: usize = estimates.iter().map(|e| e.n_outer).sum();
    let degenerate: usize = estimates.iter().map(|e| e.degenerate_count).sum();
    let values: Vec<f64> = estimates
        .iter()
        .filter(|e| e.is_valid())
        .map(Estimate::scalar)
        .collect();
    let k = values.len();
    let degenerate_frac = degenerate as f64 / n_outer as f64;
    if k == 0 {
        return Ok(Replicated {
            mean: f64::NAN,
            mse: f64::NAN,
            mse_se: f64::NAN,
            error_se: f64::NAN,
            median_sq_error: f64::NAN,
            degenerate_frac,
        });
    }
    let kf = k as f64;
    let mean = values.iter().copied().collect::<NeumaierSum>().total() / kf;
    let mut sq: Vec<f64> = values.iter().map(|v| (v - truth).powi(2)).collect();
    let mse = sq.iter().copied().collect::<NeumaierSum>().total() / kf;
    let (sq_var, var) = if k > 1 {
        let sq_var = sq.iter().map(|s| (s - mse).powi(2)).collect::<NeumaierSum>().total() / (kf - 1.0);
        let var = values
            .iter()
            .map(|v| (v - mean).powi(2))
            .collect::<NeumaierSum>()
            .total()
            / (kf - 1.0);
        (sq_var, var)
    } else {
        (f64::NAN, f64::NAN)
    };
    sq.sort_by(f64::total_cmp);
    let median_sq_error = if k % 2 == 1 {
        sq[k / 2]
    } else {
        0.5 * (sq[k / 2 - 1] + sq[k / 2])
    };
    Ok(Replicated {
        mean,
        mse,
        mse_se: (sq_var / kf).sqrt(),
        error_se: (var / kf).sqrt(),
        median_sq_error,
        degenerate_frac,
    })
}

fn check_increasing<T: PartialOrd + fmt::Display>(what: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidGrid(format!("{what} grid is empty")));
    }
    if let Some(w) = xs.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid(format!(
            "{what} grid must increase strictly, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

struct Sweep<'a> {
    p: &'a NestedProblem,
    estimator: EstimatorKind,
    policy: String,
    axis: FitAxis,
    configs: Vec<(u64, usize, usize)>,
}

impl Sweep<'_> {
    fn run(self, reps: &RepSchedule, s: &RngStream) -> Result<ConvergenceReport> {
        let truth = scalar_truth(self.p)?;
        reps.check()?;
        let mut rows = Vec::with_capacity(self.configs.len());
        for (i, &(budget, n, m)) in self.configs.iter().enumerate() {
            let r = reps.reps_for(budget);
            let row_stream = s.split(i as u64);
            let p = self.p;
            let summary = match self.estimator {
                EstimatorKind::Nested => replicate(r, &row_stream, truth, |st| nmc_estimate(p, n, m, st))?,
                EstimatorKind::Collapsed => replicate(r, &row_stream, truth, |st| collapsed_estimate(p, n, st))?,
            };
            rows.push(ConvergenceRow {
                budget,
                n,
                m,
                reps: r,
                mean: summary.mean,
                mse: summary.mse,
                mse_se: summary.mse_se,
                degenerate_frac: summary.degenerate_frac,
                flagged: summary.degenerate_frac >= DEGENERATE_ROW_LIMIT || !summary.mse.is_finite(),
            });
        }
        let mut report = ConvergenceReport {
            model: self.p.name().to_string(),
            policy: self.policy,
            estimator: self.estimator,
            truth,
            rows,
            fit_axis: self.axis,
            drop_smallest: 0,
            fit: None,
            fit_note: None,
            root_seed: s.root_seed(),
        };
        report.refit(0);
        Ok(report)
    }
}

/// MSE of the nested estimator against the truth over a grid of total budgets,
/// with `(N, M)` chosen by `policy`.
pub fn run_convergence(
    p: &NestedProblem,
    policy: &AllocationPolicy,
    budgets: &[u64],
    reps: &RepSchedule,
    s: &RngStream,
) -> Result<ConvergenceReport> {
    check_increasing("budget", budgets)?;
    let configs = budgets
        .iter()
        .map(|&t| policy.split_budget(t).map(|(n, m)| (t, n, m)))
        .collect::<Result<_>>()?;
    Sweep {
        p,
        estimator: EstimatorKind::Nested,
        policy: policy.to_string(),
        axis: FitAxis::Budget,
        configs,
    }
    .run(reps, s)
}

/// MSE of the collapsed single-expectation estimator for each outer count;
/// the budget of a row is its `N`.
pub fn run_collapsed_convergence(
    p: &NestedProblem,
    ns: &[usize],
    reps: &RepSchedule,
    s: &RngStream,
) -> Result<ConvergenceReport> {
    if !p.is_linear() {
        return Err(Error::NotLinear(p.name().to_string()));
    }
    check_increasing("N", ns)?;
    Sweep {
        p,
        estimator: EstimatorKind::Collapsed,
        policy: "collapsed".to_string(),
        axis: FitAxis::Budget,
        configs: ns.iter().map(|&n| (n as u64, n, 1)).collect(),
    }
    .run(reps, s)
}

/// MSE against `N` with the inner count held at `m`; the fit is in `N`.
pub fn run_fixed_inner(
    p: &NestedProblem,
    m: usize,
    ns: &[usize],
    reps: &RepSchedule,
    s: &RngStream,
) -> Result<ConvergenceReport> {
    if m < 1 {
        return Err(Error::TooFewSamples {
            what: "M",
            min: 1,
            got: m,
        });
    }
    check_increasing("N", ns)?;
    if ns[0] < 1 {
        return Err(Error::TooFewSamples {
            what: "N",
            min: 1,
            got: 0,
        });
    }
    Sweep {
        p,
        estimator: EstimatorKind::Nested,
        policy: AllocationPolicy::FixedInner(m).to_string(),
        axis: FitAxis::Outer,
        configs: ns.iter().map(|&n| (n as u64 * m as u64, n, m)).collect(),
    }
    .run(reps, s)
}

/// MSE against `M` with the outer count held at `n`; the fit is in `M`.
pub fn run_fixed_outer(
    p: &NestedProblem,
    n: usize,
    ms: &[usize],
    reps: &RepSchedule,
    s: &RngStream,
) -> Result<ConvergenceReport> {
    if n < 1 {
        return Err(Error::TooFewSamples {
            what: "N",
            min: 1,
            got: n,
        });
    }
    check_increasing("M", ms)?;
    if ms[0] < 1 {
        return Err(Error::TooFewSamples {
            what: "M",
            min: 1,
            got: 0,
        });
    }
    Sweep {
        p,
        estimator: EstimatorKind::Nested,
        policy: AllocationPolicy::FixedOuter(n).to_string(),
        axis: FitAxis::Inner,
        configs: ms.iter().map(|&m| (n as u64 * m as u64, n, m)).collect(),
    }
    .run(reps, s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasRow {
    pub m: usize,
    pub n: usize,
    pub reps: usize,
    pub mean_error: f64,
    pub se: f64,
    pub predicted: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub model: String,
    pub n: usize,
    pub rows: Vec<BiasRow>,
    /// Fit of `log10 |mean error|` against `log10 M`.
    pub fit: Option<SlopeFit>,
    pub fit_note: Option<String>,
    pub root_seed: u64,
}

/// Mean error of the nested estimator at fixed `n` for each inner count.
pub fn run_bias(p: &NestedProblem, n: usize, ms: &[usize], reps: usize, s: &RngStream) -> Result<BiasReport> {
    let truth = scalar_truth(p)?;
    if reps < 2 {
        return Err(Error::TooFewReplications(reps));
    }
    if n < 1 {
        return Err(Error::TooFewSamples {
            what: "N",
            min: 1,
            got: n,
        });
    }
    check_increasing("M", ms)?;
    let mut rows = Vec::with_capacity(ms.len());
    for (i, &m) in ms.iter().enumerate() {
        let summary = replicate(reps, &s.split(i as u64), truth, |st| nmc_estimate(p, n, m, st))?;
        rows.push(BiasRow {
            m,
            n,
            reps,
            mean_error: summary.mean - truth,
            se: summary.error_se,
            predicted: p.expected_estimate(m).map(|e| e[0] - truth),
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_error.is_finite())
        .map(|r| (r.m as f64, r.mean_error.abs()))
        .collect();
    let (fit, fit_note) = fit_positive(&points, ZERO_ERROR_NOTE);
    Ok(BiasReport {
        model: p.name().to_string(),
        n,
        rows,
        fit,
        fit_note,
        root_seed: s.root_seed(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyResult {
    pub policy: AllocationPolicy,
    pub n: usize,
    pub m: usize,
    pub mse: f64,
    pub mse_se: f64,
    pub median_sq_error: f64,
    /// 1-based; equal MSEs share a rank.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyComparison {
    pub model: String,
    pub budget: u64,
    pub reps: usize,
    /// Sorted by rank, ties kept in input order.
    pub results: Vec<PolicyResult>,
    pub tie: bool,
    pub root_seed: u64,
}

impl PolicyComparison {
    pub fn winner(&self) -> &PolicyResult {
        &self.results[0]
    }
}

/// MSE of each policy at the same budget. Replication `r` of every policy
/// runs on `s / r` (common random numbers).
pub fn compare_policies(
    p: &NestedProblem,
    budget: u64,
    policies: &[AllocationPolicy],
    reps: usize,
    s: &RngStream,
) -> Result<PolicyComparison> {
    let truth = scalar_truth(p)?;
    if reps < 2 {
        return Err(Error::TooFewReplications(reps));
    }
    if policies.is_empty() {
        return Err(Error::InvalidPolicy("no policies given".into()));
    }
    let splits: Vec<(usize, usize)> = policies
        .iter()
        .map(|pol| pol.split_budget(budget))
        .collect::<Result<_>>()?;
    let mut results = Vec::with_capacity(policies.len());
    for (pol, &(n, m)) in policies.iter().zip(&splits) {
        let summary = replicate(reps, s, truth, |st| nmc_estimate(p, n, m, st))?;
        results.push(PolicyResult {
            policy: *pol,
            n,
            m,
            mse: summary.mse,
            mse_se: summary.mse_se,
            median_sq_error: summary.median_sq_error,
            rank: 0,
        });
    }
    results.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    let mut tie = false;
    for i in 0..results.len() {
        results[i].rank = if i > 0 && results[i].mse == results[i - 1].mse {
            tie = true;
            results[i - 1].rank
        } else {
            i + 1
        };
    }
    Ok(PolicyComparison {
        model: p.name().to_string(),
        budget,
        reps,
        results,
        tie,
        root_seed: s.root_seed(),
    })
}
