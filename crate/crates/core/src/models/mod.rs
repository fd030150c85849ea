//! Built-in benchmark problems with closed-form or frozen oracles.
//!
//! All non-constant models share `y ~ Uniform(-1, 1)`, `z ~ N(0, 1)` and
//! `phi(y, z) = sqrt(2/pi) exp(-2 (y - z)^2)`, which is the `N(y, 1/4)` density
//! evaluated at `z`. Convolving with the standard normal gives
//! `gamma(y) = N(y; 0, 5/4)`.

pub mod constants;

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{Error, Result};
use crate::problem::{InnerDensity, NestedProblem, QuadratureSupport};
use crate::quadrature::Density;
use crate::rng::Generator;

pub const GAUSS_LOG: &str = "gauss-log";
pub const BIAS_QUAD_POS: &str = "bias-quad-pos";
pub const BIAS_QUAD_NEG: &str = "bias-quad-neg";
pub const LINEAR_GAUSS: &str = "linear-gauss";
pub const CONSTANT: &str = "constant";

/// Value of `phi` for the catalog's `constant` entry.
pub const CATALOG_CONSTANT: f64 = 0.75;

const GAMMA_VARIANCE: f64 = 1.25;

#[inline]
fn gauss_phi(y: f64, z: f64) -> f64 {
    let d = y - z;
    FRAC_2_PI.sqrt() * (-2.0 * d * d).exp()
}

/// Closed-form `gamma(y)` shared by the Gaussian models.
#[inline]
pub fn gauss_gamma(y: f64) -> f64 {
    (-y * y / (2.0 * GAMMA_VARIANCE)).exp() / (2.0 * PI * GAMMA_VARIANCE).sqrt()
}

fn standard_support() -> QuadratureSupport {
    QuadratureSupport {
        outer: Density::Uniform { lo: -1.0, hi: 1.0 },
        inner: InnerDensity::Fixed(Density::Normal { mean: 0.0, sd: 1.0 }),
    }
}

fn outer_uniform(g: &mut Generator, y: &mut [f64]) {
    y[0] = g.next_symmetric_uniform();
}

fn inner_normal(g: &mut Generator, z: &mut [f64]) {
    z[0] = g.next_gaussian();
}

fn gaussian_base(name: &str) -> crate::problem::ProblemBuilder {
    NestedProblem::builder(name)
        .outer(outer_uniform)
        .marginal_inner(inner_normal)
        .phi(|y, z, out| out[0] = gauss_phi(y[0], z[0]))
        .gamma_exact(|y, out| out[0] = gauss_gamma(y[0]))
        .quadrature(standard_support())
}

/// `f(y, w) = log w`; the benchmark whose nested estimate converges at the
/// balanced `O(1/sqrt(T))` rate.
pub fn make_gauss_log() -> NestedProblem {
    gaussian_base(GAUSS_LOG)
        .f(|_, w, out| out[0] = w[0].ln())
        .truth(vec![constants::GAUSS_LOG_TRUTH])
        .build()
        .expect("gauss-log is well formed")
}

/// `f(y, w) = sign * (gamma(y) - w)^2` with truth 0.
///
/// `f` uses the exact `gamma`, so this only exists for models where it is
/// known. The nested estimate has expectation `sign * E_y[Var(phi | y)] / M`
/// at every `N`.
pub fn make_bias_quadratic(sign: f64) -> NestedProblem {
    let sign = if sign < 0.0 { -1.0 } else { 1.0 };
    let name = if sign > 0.0 { BIAS_QUAD_POS } else { BIAS_QUAD_NEG };
    gaussian_base(name)
        .f(move |y, w, out| {
            let d = gauss_gamma(y[0]) - w[0];
            out[0] = sign * (d * d);
        })
        .truth(vec![0.0])
        .expected_estimate(move |m| vec![bias_quadratic_expected_value(sign, m)])
        .build()
        .expect("bias-quad is well formed")
}

/// Exact expectation of the nested estimate of [`make_bias_quadratic`] at inner
/// count `m` (for any `N`): `sign * c / m` with `c = E_y[Var(phi(y, z) | y)]`.
pub fn bias_quadratic_expected_value(sign: f64, m: usize) -> f64 {
    sign.signum() * constants::MEAN_INNER_VARIANCE / m as f64
}

/// `f(y, w) = (1 + y^2) w`, linear in `w`.
pub fn make_linear_gauss() -> NestedProblem {
    gaussian_base(LINEAR_GAUSS)
        .f(|y, w, out| out[0] = (1.0 + y[0] * y[0]) * w[0])
        .linear_g(|y, out| out[0] = 1.0 + y[0] * y[0])
        .truth(vec![constants::LINEAR_GAUSS_TRUTH])
        .build()
        .expect("linear-gauss is well formed")
}

/// `phi = c`, `f(y, w) = w`; every estimator returns `c` (exactly, whenever
/// `N c` is representable).
pub fn make_constant(c: f64) -> NestedProblem {
    NestedProblem::builder(CONSTANT)
        .outer(outer_uniform)
        .marginal_inner(inner_normal)
        .phi(move |_, _, out| out[0] = c)
        .f(|_, w, out| out[0] = w[0])
        .gamma_exact(move |_, out| out[0] = c)
        .linear_g(|_, out| out[0] = 1.0)
        .truth(vec![c])
        .quadrature(standard_support())
        .expected_estimate(move |_| vec![c])
        .build()
        .expect("constant is well formed")
}

/// A catalog entry: name, constructor and the results it exercises.
pub struct CatalogEntry {
    pub name: &'static str,
    pub exercises: &'static str,
    make: fn() -> NestedProblem,
}

impl CatalogEntry {
    pub fn make(&self) -> NestedProblem {
        (self.make)()
    }
}

pub static CATALOG: [CatalogEntry; 5] = [
    CatalogEntry {
        name: GAUSS_LOG,
        exercises: "consistency, O(1/N + 1/M) MSE rate, tau(M) = M allocation",
        make: make_gauss_log,
    },
    CatalogEntry {
        name: BIAS_QUAD_POS,
        exercises: "inherent bias (positive), c/M bias law, fixed-M plateau",
        make: || make_bias_quadratic(1.0),
    },
    CatalogEntry {
        name: BIAS_QUAD_NEG,
        exercises: "inherent bias (negative), c/M bias law",
        make: || make_bias_quadratic(-1.0),
    },
    CatalogEntry {
        name: LINEAR_GAUSS,
        exercises: "collapse to a single expectation, O(1/N) rate",
        make: make_linear_gauss,
    },
    CatalogEntry {
        name: CONSTANT,
        exercises: "exact estimator (sanity)",
        make: || make_constant(CATALOG_CONSTANT),
    },
];

/// Builds a catalog model by name.
pub fn by_name(name: &str) -> Result<NestedProblem> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .map(CatalogEntry::make)
        .ok_or_else(|| Error::UnknownModel(name.to_string()))
}

pub fn names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|e| e.name)
}
