//! Splitting a total sample budget `T = N * M` between outer and inner draws.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Rule for choosing the outer count `N` from the inner count `M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AllocationPolicy {
    /// `M` fixed; `N` takes the rest of the budget.
    FixedInner(usize),
    /// `N` fixed; `M` takes the rest of the budget.
    FixedOuter(usize),
    /// `N = tau(M) = ceil(c * M^alpha)`.
    TauPower { alpha: f64, c: f64 },
}

/// Smallest budget accepted for [`AllocationPolicy::TauPower`].
pub const MIN_TAU_BUDGET: u64 = 4;

impl AllocationPolicy {
    /// `tau(M) = M`, the balanced policy.
    pub const BALANCED: AllocationPolicy = AllocationPolicy::TauPower { alpha: 1.0, c: 1.0 };

    pub fn tau_power(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) || !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidPolicy(format!("tau:alpha={alpha},c={c}")));
        }
        Ok(AllocationPolicy::TauPower { alpha, c })
    }

    /// Outer count for inner count `m`. `FixedInner` couples nothing (its `N`
    /// comes from the budget) and is rejected.
    pub fn tau(&self, m: usize) -> Result<usize> {
        if m < 1 {
            return Err(Error::TooFewSamples {
                what: "M",
                min: 1,
                got: m,
            });
        }
        match *self {
            AllocationPolicy::FixedOuter(n) => Ok(n),
            AllocationPolicy::FixedInner(_) => Err(Error::InvalidPolicy(format!("{self} has no tau"))),
            AllocationPolicy::TauPower { alpha, c } => Ok(tau_power(alpha, c, m)),
        }
    }

    /// Largest admissible `(N, M)` with `N * M <= budget`.
    pub fn split_budget(&self, budget: u64) -> Result<(usize, usize)> {
        let infeasible = || Error::InfeasibleBudget {
            policy: self.to_string(),
            budget,
        };
        match *self {
            AllocationPolicy::FixedInner(m) => {
                let n = if m == 0 { 0 } else { budget / m as u64 };
                if n < 1 {
                    return Err(infeasible());
                }
                Ok((n as usize, m))
            }
            AllocationPolicy::FixedOuter(n) => {
                let m = if n == 0 { 0 } else { budget / n as u64 };
                if m < 1 {
                    return Err(infeasible());
                }
                Ok((n, m as usize))
            }
            AllocationPolicy::TauPower { alpha, c } => {
                if budget < MIN_TAU_BUDGET {
                    return Err(infeasible());
                }
                let fits = |m: u64| (tau_power(alpha, c, m as usize) as u64).saturating_mul(m) <= budget;
                if !fits(1) {
                    return Err(infeasible());
                }
                // tau(M) * M is strictly increasing, so binary search for the last fit.
                let (mut lo, mut hi) = (1u64, budget);
                while lo < hi {
                    let mid = lo + (hi - lo).div_ceil(2);
                    if fits(mid) {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                let m = lo as usize;
                Ok((tau_power(alpha, c, m), m))
            }
        }
    }
}

fn tau_power(alpha: f64, c: f64, m: usize) -> usize {
    let v = c * (m as f64).powf(alpha);
    // Snap values within rounding noise of an integer so that e.g. 100^0.5 is 10.
    let r = v.round();
    let v = if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        v.ceil()
    };
    if v >= usize::MAX as f64 {
        usize::MAX
    } else {
        (v as usize).max(1)
    }
}

impl fmt::Display for AllocationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocationPolicy::FixedInner(m) => write!(f, "fixed-inner:M={m}"),
            AllocationPolicy::FixedOuter(n) => write!(f, "fixed-outer:N={n}"),
            AllocationPolicy::TauPower { alpha, c } => write!(f, "tau:alpha={alpha},c={c}"),
        }
    }
}

impl Serialize for AllocationPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for AllocationPolicy {
    type Err = Error;

    /// Parses `tau:alpha=A,c=C`, `fixed-inner:M=K` or `fixed-outer:N=K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPolicy(s.to_string());
        let (kind, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let mut pairs = Vec::new();
        for item in params.split(',') {
            let (k, v) = item.split_once('=').ok_or_else(bad)?;
            pairs.push((k.trim(), v.trim()));
        }
        let count = |k: &str| -> Result<usize> {
            match pairs.as_slice() {
                [(key, v)] if *key == k => v.parse::<usize>().ok().filter(|x| *x >= 1).ok_or_else(bad),
                _ => Err(bad()),
            }
        };
        match kind.trim() {
            "fixed-inner" => Ok(AllocationPolicy::FixedInner(count("M")?)),
            "fixed-outer" => Ok(AllocationPolicy::FixedOuter(count("N")?)),
            "tau" => {
                let (mut alpha, mut c) = (None, None);
                for (k, v) in &pairs {
                    let x: f64 = v.parse().map_err(|_| bad())?;
                    match *k {
                        "alpha" if alpha.is_none() => alpha = Some(x),
                        "c" if c.is_none() => c = Some(x),
                        _ => return Err(bad()),
                    }
                }
                AllocationPolicy::tau_power(alpha.ok_or_else(bad)?, c.unwrap_or(1.0)).map_err(|_| bad())
            }
            _ => Err(bad()),
        }
    }
}

/// Geometrically spaced, strictly increasing integer budgets from `lo` to `hi`
/// inclusive. Rounding collisions are dropped, so fewer than `points` values
/// may come back.
pub fn budget_grid(lo: u64, hi: u64, points: usize) -> Result<Vec<u64>> {
    if lo < 1 || lo >= hi || points < 2 {
        return Err(Error::InvalidGrid(format!(
            "need 1 <= lo < hi and at least 2 points, got {lo}:{hi}:{points}"
        )));
    }
    let ratio = (hi as f64 / lo as f64).ln();
    let mut grid: Vec<u64> = (0..points)
        .map(|i| match i {
            0 => lo,
            i if i == points - 1 => hi,
            i => ((lo as f64) * (ratio * i as f64 / (points - 1) as f64).exp()).round() as u64,
        })
        .collect();
    grid.dedup();
    Ok(grid)
}
