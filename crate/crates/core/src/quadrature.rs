//! Gauss rules for expectations under uniform and normal densities.
//!
//! Legendre nodes come from Newton iteration on the three-term recurrence.
//! Hermite nodes come from the Golub–Welsch eigenproblem, solved with implicit
//! QL while tracking only the first eigenvector component (O(n^2)), which stays
//! stable for thousands of nodes where the polynomial recurrence overflows.
//!
//! Weights are normalized to sum to one so a rule is directly an expectation
//! operator for its density.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::sum::NeumaierSum;

/// A univariate density the built-in rules can integrate against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Density {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Density {
    pub fn expectation(&self, nodes: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
        let (rule, shift, scale) = match *self {
            Density::Normal { mean, sd } => (hermite(nodes), mean, sd * std::f64::consts::SQRT_2),
            Density::Uniform { lo, hi } => (legendre(nodes), 0.5 * (lo + hi), 0.5 * (hi - lo)),
        };
        rule.expectation(|x| g(shift + scale * x))
    }
}

/// Nodes and normalized weights of a symmetric Gauss rule, nodes ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// `sum_i w_i g(x_i)`, evaluated as `g(x_ref) + sum_i w_i (g(x_i) - g(x_ref))`
    /// about a central node so that constant integrands are reproduced exactly.
    pub fn expectation(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        let reference = g(self.nodes[self.nodes.len() / 2]);
        let mut acc = NeumaierSum::new();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * (g(x) - reference));
        }
        reference + acc.total()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn symmetrized(mut nodes: Vec<f64>, mut weights: Vec<f64>) -> Rule {
        let n = nodes.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: NeumaierSum = weights.iter().copied().collect();
        let total = total.total();
        weights.iter_mut().for_each(|w| *w /= total);
        Rule { nodes, weights }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Family {
    Legendre,
    Hermite,
}

type RuleCache = Mutex<HashMap<(Family, usize), Arc<Rule>>>;

fn cached(family: Family, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().unwrap().get(&(family, n)) {
        return rule.clone();
    }
    let rule = Arc::new(build(n));
    cache.lock().unwrap().insert((family, n), rule.clone());
    rule
}

/// Gauss–Legendre rule on `[-1, 1]` for the uniform density.
pub fn legendre(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "quadrature needs at least one node");
    cached(Family::Legendre, n, build_legendre)
}

/// Gauss–Hermite rule for the weight `exp(-x^2)`.
pub fn hermite(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "quadrature needs at least one node");
    cached(Family::Hermite, n, build_hermite)
}

fn build_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi's initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_eval(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule::symmetrized(nodes, weights)
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn build_hermite(n: usize) -> Rule {
    // Jacobi matrix: zero diagonal, off-diagonal sqrt(k / 2).
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    off.push(0.0);
    let mut first = vec![0.0; n];
    first[0] = 1.0;
    symmetric_tridiagonal_ql(&mut diag, &mut off, &mut first);
    let mut pairs: Vec<(f64, f64)> = diag.into_iter().zip(first.into_iter().map(|v| v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Rule::symmetrized(nodes, weights)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
///
/// `off[i]` couples rows `i` and `i + 1`; `off[n - 1]` must be zero. On return
/// `diag` holds the eigenvalues and `first[k]` the first component of the k-th
/// normalized eigenvector (when `first` starts as `e_1`).
fn symmetric_tridiagonal_ql(diag: &mut [f64], off: &mut [f64], first: &mut [f64]) {
    let n = diag.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            assert!(iterations <= 60, "tridiagonal QL failed to converge");
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = (f * f + g * g).sqrt();
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let z = first[i + 1];
                first[i + 1] = s * first[i] + c * z;
                first[i] = c * first[i] - s * z;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
}
