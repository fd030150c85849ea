//! Plain, nested, recursively nested and collapsed Monte Carlo estimators.
//!
//! Stream layout for a nested estimate on stream `s`:
//!
//! * outer draw `n` uses `s / 0 / n`
//! * inner block `n` uses `s / 1 / n`, and its `m`-th draw uses `s / 1 / n / m`
//!
//! Levels without a child (plain MC, the innermost level) draw sample `n` from
//! `s / n`. Indices are zero-based.
//!
//! Non-finite values of the outermost integrand are left out of the average and
//! counted in [`Estimate::degenerate_count`]; an estimate whose outer terms are
//! all degenerate is invalid and carries NaN values.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{NestedProblem, ProblemTree, TreeLevel};
use crate::rng::{Generator, RngStream, StreamId};
use crate::sum::NeumaierSum;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub n_outer: usize,
    /// Inner samples per outer sample; 0 for plain Monte Carlo.
    pub n_inner: usize,
    /// Per-depth counts for recursive estimates other than the two-level case.
    pub depth_counts: Option<Vec<usize>>,
    pub total_draws: u64,
    pub seed_path: StreamId,
    pub degenerate_count: usize,
}

impl Estimate {
    pub fn is_valid(&self) -> bool {
        self.degenerate_count < self.n_outer
    }

    /// First component of the value.
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

fn require(what: &'static str, got: usize) -> Result<()> {
    if got < 1 {
        return Err(Error::TooFewSamples { what, min: 1, got });
    }
    Ok(())
}

/// Mean of vector terms that skips (and counts) any term with a non-finite entry.
struct FiniteMean {
    sums: Vec<NeumaierSum>,
    included: usize,
    skipped: usize,
}

impl FiniteMean {
    fn new(dim: usize) -> Self {
        FiniteMean {
            sums: vec![NeumaierSum::new(); dim],
            included: 0,
            skipped: 0,
        }
    }

    #[inline]
    fn push(&mut self, term: &[f64]) {
        if term.iter().all(|v| v.is_finite()) {
            for (s, &v) in self.sums.iter_mut().zip(term) {
                s.add(v);
            }
            self.included += 1;
        } else {
            self.skipped += 1;
        }
    }

    fn write_mean(&self, out: &mut [f64]) {
        if self.included == 0 {
            out.fill(f64::NAN);
            return;
        }
        let k = self.included as f64;
        for (o, s) in out.iter_mut().zip(&self.sums) {
            *o = s.total() / k;
        }
    }
}

#[inline]
fn plain_mean_into(sums: &mut [NeumaierSum], count: usize, out: &mut [f64]) {
    let k = count as f64;
    for (o, s) in out.iter_mut().zip(sums.iter()) {
        *o = s.total() / k;
    }
}

/// Plain Monte Carlo estimate of `E[integrand(y)]` with `y_n` drawn from `s / n`.
///
/// `sampler` writes `sample_dim` values and `integrand` writes `value_dim` values.
pub fn mc_estimate<S, L>(
    sampler: S,
    sample_dim: usize,
    integrand: L,
    value_dim: usize,
    n: usize,
    s: &RngStream,
) -> Result<Estimate>
where
    S: Fn(&mut Generator, &mut [f64]),
    L: Fn(&[f64], &mut [f64]),
{
    require("N", n)?;
    let root = s.generator();
    let mut y = vec![0.0; sample_dim];
    let mut term = vec![0.0; value_dim];
    let mut acc = FiniteMean::new(value_dim);
    for i in 0..n {
        sampler(&mut root.split(i as u64), &mut y);
        integrand(&y, &mut term);
        acc.push(&term);
    }
    let mut value = vec![0.0; value_dim];
    acc.write_mean(&mut value);
    Ok(Estimate {
        value,
        n_outer: n,
        n_inner: 0,
        depth_counts: Some(vec![n]),
        total_draws: n as u64,
        seed_path: s.id(),
        degenerate_count: acc.skipped,
    })
}

/// Inner Monte Carlo estimate `(1/M) sum_m phi(y, z_m)` with `z_m` from `s / m`.
pub fn inner_estimate(p: &NestedProblem, y: &[f64], m: usize, s: &RngStream) -> Result<Vec<f64>> {
    require("M", m)?;
    let d = p.dims();
    let mut z = vec![0.0; d.inner];
    let mut phi = vec![0.0; d.phi];
    let mut sums = vec![NeumaierSum::new(); d.phi];
    let mut out = vec![0.0; d.phi];
    inner_mean_into(p, y, m, s.generator(), &mut z, &mut phi, &mut sums, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn inner_mean_into(
    p: &NestedProblem,
    y: &[f64],
    m: usize,
    block: &Generator,
    z: &mut [f64],
    phi: &mut [f64],
    sums: &mut [NeumaierSum],
    out: &mut [f64],
) {
    sums.fill(NeumaierSum::new());
    for j in 0..m {
        p.sample_inner(&mut block.split(j as u64), y, z);
        p.phi(y, z, phi);
        for (s, &v) in sums.iter_mut().zip(phi.iter()) {
            s.add(v);
        }
    }
    plain_mean_into(sums, m, out);
}

/// Nested Monte Carlo estimate `I_{N,M} = (1/N) sum_n f(y_n, gamma_hat_M(y_n))`.
pub fn nmc_estimate(p: &NestedProblem, n: usize, m: usize, s: &RngStream) -> Result<Estimate> {
    require("N", n)?;
    require("M", m)?;
    let d = p.dims();
    let outer_root = s.generator().split(0);
    let inner_root = s.generator().split(1);
    let mut y = vec![0.0; d.outer];
    let mut z = vec![0.0; d.inner];
    let mut phi = vec![0.0; d.phi];
    let mut sums = vec![NeumaierSum::new(); d.phi];
    let mut gamma = vec![0.0; d.phi];
    let mut term = vec![0.0; d.f];
    let mut acc = FiniteMean::new(d.f);
    for i in 0..n as u64 {
        p.sample_outer(&mut outer_root.split(i), &mut y);
        inner_mean_into(p, &y, m, &inner_root.split(i), &mut z, &mut phi, &mut sums, &mut gamma);
        p.f(&y, &gamma, &mut term);
        acc.push(&term);
    }
    let mut value = vec![0.0; d.f];
    acc.write_mean(&mut value);
    Ok(Estimate {
        value,
        n_outer: n,
        n_inner: m,
        depth_counts: None,
        total_draws: n as u64 * m as u64,
        seed_path: s.id(),
        degenerate_count: acc.skipped,
    })
}

/// Collapsed single-expectation estimate `(1/N) sum_n f(y_n, phi(y_n, z_n))` for
/// problems with `f` linear in its second argument.
///
/// Uses the nested stream layout with one inner draw, so it coincides with
/// `nmc_estimate(p, n, 1, s)`.
pub fn collapsed_estimate(p: &NestedProblem, n: usize, s: &RngStream) -> Result<Estimate> {
    if !p.is_linear() {
        return Err(Error::NotLinear(p.name().to_string()));
    }
    require("N", n)?;
    let d = p.dims();
    let outer_root = s.generator().split(0);
    let inner_root = s.generator().split(1);
    let mut y = vec![0.0; d.outer];
    let mut z = vec![0.0; d.inner];
    let mut phi = vec![0.0; d.phi];
    let mut term = vec![0.0; d.f];
    let mut acc = FiniteMean::new(d.f);
    for i in 0..n as u64 {
        p.sample_outer(&mut outer_root.split(i), &mut y);
        p.sample_inner(&mut inner_root.split(i).split(0), &y, &mut z);
        p.phi(&y, &z, &mut phi);
        p.f(&y, &phi, &mut term);
        acc.push(&term);
    }
    let mut value = vec![0.0; d.f];
    acc.write_mean(&mut value);
    Ok(Estimate {
        value,
        n_outer: n,
        n_inner: 1,
        depth_counts: None,
        total_draws: n as u64,
        seed_path: s.id(),
        degenerate_count: acc.skipped,
    })
}

/// Recursive nested estimate for a tree of depth `d` with per-depth counts.
///
/// A depth-2 tree built by [`ProblemTree::from_problem`] reproduces
/// [`nmc_estimate`] bit for bit, and a depth-1 tree reproduces [`mc_estimate`].
pub fn nmc_estimate_depth(t: &ProblemTree, counts: &[usize], s: &RngStream) -> Result<Estimate> {
    if counts.len() != t.depth() {
        return Err(Error::DepthMismatch {
            expected: t.depth(),
            got: counts.len(),
        });
    }
    for &c in counts {
        require("per-depth count", c)?;
    }
    let levels = t.levels();
    let mut vars = Vec::with_capacity(levels.iter().map(TreeLevel::var_dim).sum());
    let mut value = vec![0.0; levels[0].out_dim()];
    let degenerate = level_estimate(levels, counts, &mut vars, s.generator(), &mut value, true);
    let total_draws = counts.iter().map(|&c| c as u64).product();
    let two_level = counts.len() == 2;
    Ok(Estimate {
        value,
        n_outer: counts[0],
        n_inner: counts.get(1).copied().unwrap_or(0),
        depth_counts: if two_level { None } else { Some(counts.to_vec()) },
        total_draws,
        seed_path: s.id(),
        degenerate_count: degenerate,
    })
}

/// Writes the level's estimate into `out` and returns the number of skipped
/// terms. `vars` holds the ancestor variables on entry and is restored on exit.
fn level_estimate(
    levels: &[TreeLevel],
    counts: &[usize],
    vars: &mut Vec<f64>,
    gen: &Generator,
    out: &mut [f64],
    top: bool,
) -> usize {
    let level = &levels[0];
    let n = counts[0];
    let base = vars.len();
    vars.resize(base + level.var_dim(), 0.0);
    let mut term = vec![0.0; level.out_dim()];

    let skipped = if levels.len() == 1 {
        if top {
            let mut acc = FiniteMean::new(level.out_dim());
            for i in 0..n as u64 {
                let (ancestors, own) = vars.split_at_mut(base);
                level.sample(&mut gen.split(i), ancestors, own);
                level.integrand(vars, &[], &mut term);
                acc.push(&term);
            }
            acc.write_mean(out);
            acc.skipped
        } else {
            let mut sums = vec![NeumaierSum::new(); level.out_dim()];
            for i in 0..n as u64 {
                let (ancestors, own) = vars.split_at_mut(base);
                level.sample(&mut gen.split(i), ancestors, own);
                level.integrand(vars, &[], &mut term);
                for (s, &v) in sums.iter_mut().zip(&term) {
                    s.add(v);
                }
            }
            plain_mean_into(&mut sums, n, out);
            0
        }
    } else {
        let outer_root = gen.split(0);
        let inner_root = gen.split(1);
        let mut child = vec![0.0; level.child_dim()];
        let mut acc = FiniteMean::new(level.out_dim());
        for i in 0..n as u64 {
            {
                let (ancestors, own) = vars.split_at_mut(base);
                level.sample(&mut outer_root.split(i), ancestors, own);
            }
            level_estimate(
                &levels[1..],
                &counts[1..],
                vars,
                &inner_root.split(i),
                &mut child,
                false,
            );
            level.integrand(vars, &child, &mut term);
            acc.push(&term);
        }
        acc.write_mean(out);
        acc.skipped
    };

    vars.truncate(base);
    skipped
}
