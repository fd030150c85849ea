//! Nested estimation problems.
//!
//! A [`NestedProblem`] describes
//!
//! ```text
//! I = E_{y ~ p(y)}[ f(y, gamma(y)) ],   gamma(y) = E_{z ~ p(z|y) or p(z)}[ phi(y, z) ]
//! ```
//!
//! through its samplers and the maps `phi` and `f`. Values are flat `f64`
//! slices; the declared [`Dims`] fix their lengths. Exact `gamma`, the truth `I`
//! and a linear factorisation of `f` are optional and only used by tests,
//! diagnostics and the collapsed estimator.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::Density;
use crate::rng::{Generator, RngStream};

pub type OuterSampler = Arc<dyn Fn(&mut Generator, &mut [f64]) + Send + Sync>;
pub type InnerSampler = Arc<dyn Fn(&mut Generator, &[f64], &mut [f64]) + Send + Sync>;
/// `(y, z_or_w, out)`
pub type BinaryMap = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(y, out)`
pub type UnaryMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ExpectedEstimate = Arc<dyn Fn(usize) -> Vec<f64> + Send + Sync>;

/// Whether inner draws are conditioned on the outer draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InnerKind {
    /// `z ~ p(z | y)`
    Conditional,
    /// `z ~ p(z)`, independent of `y`
    Marginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub outer: usize,
    pub inner: usize,
    pub phi: usize,
    pub f: usize,
}

impl Dims {
    pub const SCALAR: Dims = Dims {
        outer: 1,
        inner: 1,
        phi: 1,
        f: 1,
    };
}

/// Densities of `y` and `z` for scalar problems, enabling deterministic
/// quadrature of `gamma` and `I`.
#[derive(Clone)]
pub struct QuadratureSupport {
    pub outer: Density,
    pub inner: InnerDensity,
}

#[derive(Clone)]
pub enum InnerDensity {
    Fixed(Density),
    Conditional(Arc<dyn Fn(f64) -> Density + Send + Sync>),
}

impl InnerDensity {
    fn at(&self, y: f64) -> Density {
        match self {
            InnerDensity::Fixed(d) => *d,
            InnerDensity::Conditional(d) => d(y),
        }
    }
}

#[derive(Clone)]
pub struct NestedProblem {
    name: String,
    dims: Dims,
    inner_kind: InnerKind,
    outer_sampler: OuterSampler,
    inner_sampler: InnerSampler,
    phi: BinaryMap,
    f: BinaryMap,
    gamma_exact: Option<UnaryMap>,
    truth: Option<Vec<f64>>,
    linear_g: Option<UnaryMap>,
    quadrature: Option<QuadratureSupport>,
    expected_estimate: Option<ExpectedEstimate>,
}

impl fmt::Debug for NestedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NestedProblem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("inner_kind", &self.inner_kind)
            .field("truth", &self.truth)
            .field("linear", &self.linear_g.is_some())
            .finish_non_exhaustive()
    }
}

impl NestedProblem {
    pub fn builder(name: impl Into<String>) -> ProblemBuilder {
        ProblemBuilder {
            name: name.into(),
            dims: Dims::SCALAR,
            inner_kind: None,
            outer_sampler: None,
            inner_sampler: None,
            phi: None,
            f: None,
            gamma_exact: None,
            truth: None,
            linear_g: None,
            quadrature: None,
            expected_estimate: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn inner_kind(&self) -> InnerKind {
        self.inner_kind
    }

    pub fn truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    pub fn is_linear(&self) -> bool {
        self.linear_g.is_some()
    }

    pub fn has_gamma_exact(&self) -> bool {
        self.gamma_exact.is_some()
    }

    pub fn quadrature_support(&self) -> Option<&QuadratureSupport> {
        self.quadrature.as_ref()
    }

    #[inline]
    pub fn sample_outer(&self, g: &mut Generator, y: &mut [f64]) {
        (self.outer_sampler)(g, y)
    }

    #[inline]
    pub fn sample_inner(&self, g: &mut Generator, y: &[f64], z: &mut [f64]) {
        (self.inner_sampler)(g, y, z)
    }

    #[inline]
    pub fn phi(&self, y: &[f64], z: &[f64], out: &mut [f64]) {
        (self.phi)(y, z, out)
    }

    #[inline]
    pub fn f(&self, y: &[f64], w: &[f64], out: &mut [f64]) {
        (self.f)(y, w, out)
    }

    /// Writes the exact `gamma(y)`; returns `false` if the problem has none.
    pub fn gamma_exact(&self, y: &[f64], out: &mut [f64]) -> bool {
        match &self.gamma_exact {
            Some(g) => {
                g(y, out);
                true
            }
            None => false,
        }
    }

    /// Writes the row-major `D_f x D_phi` matrix `g(y)` with `f(y, w) = g(y) w`.
    pub fn linear_g(&self, y: &[f64], out: &mut [f64]) -> bool {
        match &self.linear_g {
            Some(g) => {
                g(y, out);
                true
            }
            None => false,
        }
    }

    /// Known expectation of `nmc_estimate` at inner count `m`, when the problem
    /// provides one.
    pub fn expected_estimate(&self, m: usize) -> Option<Vec<f64>> {
        self.expected_estimate.as_ref().map(|e| e(m))
    }

    pub(crate) fn outer_sampler(&self) -> &OuterSampler {
        &self.outer_sampler
    }

    pub(crate) fn inner_sampler(&self) -> &InnerSampler {
        &self.inner_sampler
    }

    pub(crate) fn phi_map(&self) -> &BinaryMap {
        &self.phi
    }

    pub(crate) fn f_map(&self) -> &BinaryMap {
        &self.f
    }
}

pub struct ProblemBuilder {
    name: String,
    dims: Dims,
    inner_kind: Option<InnerKind>,
    outer_sampler: Option<OuterSampler>,
    inner_sampler: Option<InnerSampler>,
    phi: Option<BinaryMap>,
    f: Option<BinaryMap>,
    gamma_exact: Option<UnaryMap>,
    truth: Option<Vec<f64>>,
    linear_g: Option<UnaryMap>,
    quadrature: Option<QuadratureSupport>,
    expected_estimate: Option<ExpectedEstimate>,
}

impl ProblemBuilder {
    pub fn dims(mut self, dims: Dims) -> Self {
        self.dims = dims;
        self
    }

    pub fn outer(mut self, sampler: impl Fn(&mut Generator, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.outer_sampler = Some(Arc::new(sampler));
        self
    }

    /// Inner draws independent of `y`.
    pub fn marginal_inner(mut self, sampler: impl Fn(&mut Generator, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.inner_kind = Some(InnerKind::Marginal);
        self.inner_sampler = Some(Arc::new(move |g: &mut Generator, _y: &[f64], z: &mut [f64]| {
            sampler(g, z)
        }));
        self
    }

    /// Inner draws from `p(z | y)`.
    pub fn conditional_inner(
        mut self,
        sampler: impl Fn(&mut Generator, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inner_kind = Some(InnerKind::Conditional);
        self.inner_sampler = Some(Arc::new(sampler));
        self
    }

    pub fn phi(mut self, phi: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.phi = Some(Arc::new(phi));
        self
    }

    pub fn f(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn gamma_exact(mut self, gamma: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gamma_exact = Some(Arc::new(gamma));
        self
    }

    pub fn truth(mut self, truth: Vec<f64>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn linear_g(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.linear_g = Some(Arc::new(g));
        self
    }

    pub fn quadrature(mut self, support: QuadratureSupport) -> Self {
        self.quadrature = Some(support);
        self
    }

    pub fn expected_estimate(mut self, e: impl Fn(usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.expected_estimate = Some(Arc::new(e));
        self
    }

    pub fn build(self) -> Result<NestedProblem> {
        let missing = |what: &str| Error::InvalidProblem(format!("`{}` is missing {what}", self.name));
        let dims = self.dims;
        if dims.outer == 0 || dims.inner == 0 || dims.phi == 0 || dims.f == 0 {
            return Err(Error::InvalidProblem(format!(
                "`{}` has a zero dimension: {dims:?}",
                self.name
            )));
        }
        if let Some(t) = &self.truth {
            if t.len() != dims.f {
                return Err(Error::InvalidProblem(format!(
                    "`{}` truth has length {} but D_f = {}",
                    self.name,
                    t.len(),
                    dims.f
                )));
            }
        }
        if self.quadrature.is_some() && (dims.outer != 1 || dims.inner != 1) {
            return Err(Error::InvalidProblem(format!(
                "`{}` declares quadrature support but is not scalar in y and z",
                self.name
            )));
        }
        Ok(NestedProblem {
            inner_kind: self.inner_kind.ok_or_else(|| missing("an inner sampler"))?,
            outer_sampler: self.outer_sampler.clone().ok_or_else(|| missing("an outer sampler"))?,
            inner_sampler: self.inner_sampler.clone().ok_or_else(|| missing("an inner sampler"))?,
            phi: self.phi.clone().ok_or_else(|| missing("phi"))?,
            f: self.f.clone().ok_or_else(|| missing("f"))?,
            name: self.name,
            dims,
            gamma_exact: self.gamma_exact,
            truth: self.truth,
            linear_g: self.linear_g,
            quadrature: self.quadrature,
            expected_estimate: self.expected_estimate,
        })
    }
}

/// Quadrature approximation of `gamma(y)` for scalar problems.
pub fn gamma_quadrature(p: &NestedProblem, y: f64, nodes: usize) -> Result<f64> {
    let support = p
        .quadrature
        .as_ref()
        .ok_or_else(|| Error::NoQuadrature(p.name.clone()))?;
    if nodes < 2 {
        return Err(Error::TooFewSamples {
            what: "quadrature nodes",
            min: 2,
            got: nodes,
        });
    }
    if p.dims.phi != 1 {
        return Err(Error::NoQuadrature(p.name.clone()));
    }
    let ys = [y];
    let mut out = [0.0];
    Ok(support.inner.at(y).expectation(nodes, |z| {
        p.phi(&ys, &[z], &mut out);
        out[0]
    }))
}

/// Quadrature approximation of `E_y[Var(phi(y, z) | y)]` for scalar problems.
pub fn mean_inner_variance_quadrature(p: &NestedProblem, outer_nodes: usize, inner_nodes: usize) -> Result<f64> {
    let support = p
        .quadrature
        .as_ref()
        .ok_or_else(|| Error::NoQuadrature(p.name.clone()))?;
    let mut out = [0.0];
    let mut err = None;
    let v = support.outer.expectation(outer_nodes, |y| {
        let gamma = match gamma_quadrature(p, y, inner_nodes) {
            Ok(g) => g,
            Err(e) => {
                err = Some(e);
                return 0.0;
            }
        };
        support.inner.at(y).expectation(inner_nodes, |z| {
            p.phi(&[y], &[z], &mut out);
            (out[0] - gamma).powi(2)
        })
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Quadrature approximation of `I = E_y[f(y, gamma(y))]`, with `gamma` itself
/// computed by quadrature.
pub fn truth_quadrature(p: &NestedProblem, outer_nodes: usize, inner_nodes: usize) -> Result<f64> {
    let support = p
        .quadrature
        .as_ref()
        .ok_or_else(|| Error::NoQuadrature(p.name.clone()))?;
    if p.dims.f != 1 {
        return Err(Error::NoQuadrature(p.name.clone()));
    }
    let mut err = None;
    let mut out = [0.0];
    let v = support
        .outer
        .expectation(outer_nodes, |y| match gamma_quadrature(p, y, inner_nodes) {
            Ok(g) => {
                p.f(&[y], &[g], &mut out);
                out[0]
            }
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// One failed invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    Linearity,
    LinearFactor,
    GammaMismatch,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, detail: String) {
        self.violations.push(Violation { kind, detail });
    }
}

const LINEARITY_RTOL: f64 = 1e-12;
const GAMMA_ATOL: f64 = 1e-8;
const GAMMA_CHECK_NODES: usize = 2000;

fn probe_points(p: &NestedProblem) -> Vec<Vec<f64>> {
    if let Some(q) = &p.quadrature {
        let offsets = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let ys: Vec<f64> = match q.outer {
            Density::Uniform { lo, hi } => offsets.iter().map(|t| lo + (hi - lo) * (t + 1.0) / 2.0).collect(),
            Density::Normal { mean, sd } => offsets.iter().map(|t| mean + 2.0 * sd * t).collect(),
        };
        return ys.into_iter().map(|y| vec![y]).collect();
    }
    let root = RngStream::root(0x7072_6f62_6573).generator().clone();
    (0..8)
        .map(|i| {
            let mut y = vec![0.0; p.dims.outer];
            p.sample_outer(&mut root.split(i), &mut y);
            y
        })
        .collect()
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= LINEARITY_RTOL * scale.max(1.0)
}

/// Numerical checks of the problem's declared structure on fixed probe points.
pub fn validate(p: &NestedProblem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = p.dims;
    let ys = probe_points(p);

    // phi must produce D_phi finite values that f accepts.
    let gen = RngStream::root(0x7a5a_6d70).generator().clone();
    for (i, y) in ys.iter().enumerate() {
        let mut z = vec![0.0; d.inner];
        p.sample_inner(&mut gen.split(i as u64), y, &mut z);
        let mut w = vec![f64::NAN; d.phi];
        p.phi(y, &z, &mut w);
        if w.iter().any(|v| v.is_nan()) {
            report.push(
                ViolationKind::Dimension,
                format!("phi at y = {y:?} left some of its {} outputs unset", d.phi),
            );
        }
    }

    if p.linear_g.is_some() {
        let coeffs = [(1.0, 1.0), (2.5, -0.75), (-3.0, 0.125)];
        let basis_v: Vec<f64> = (0..d.phi).map(|k| 0.3 + 0.7 * k as f64).collect();
        let basis_w: Vec<f64> = (0..d.phi).map(|k| 1.9 - 0.4 * k as f64).collect();
        let mut fv = vec![0.0; d.f];
        let mut fw = vec![0.0; d.f];
        let mut fc = vec![0.0; d.f];
        let mut g = vec![0.0; d.f * d.phi];
        'probe: for y in &ys {
            p.f(y, &basis_v, &mut fv);
            p.f(y, &basis_w, &mut fw);
            for &(alpha, beta) in &coeffs {
                let combo: Vec<f64> = basis_v
                    .iter()
                    .zip(&basis_w)
                    .map(|(v, w)| alpha * v + beta * w)
                    .collect();
                p.f(y, &combo, &mut fc);
                for k in 0..d.f {
                    let rhs = alpha * fv[k] + beta * fw[k];
                    let scale = fc[k].abs().max((alpha * fv[k]).abs() + (beta * fw[k]).abs());
                    if !close(fc[k], rhs, scale) {
                        report.push(
                            ViolationKind::Linearity,
                            format!(
                                "f(y, {alpha} v + {beta} w) = {} but {alpha} f(y, v) + {beta} f(y, w) = {rhs} at y = {y:?}",
                                fc[k]
                            ),
                        );
                        break 'probe;
                    }
                }
            }
            p.linear_g(y, &mut g);
            for k in 0..d.f {
                let gw: f64 = (0..d.phi).map(|j| g[k * d.phi + j] * basis_w[j]).sum();
                if !close(gw, fw[k], gw.abs().max(fw[k].abs())) {
                    report.push(
                        ViolationKind::LinearFactor,
                        format!("g(y) w = {gw} but f(y, w) = {} at y = {y:?}", fw[k]),
                    );
                    break 'probe;
                }
            }
        }
    }

    if p.gamma_exact.is_some() && p.quadrature.is_some() && d.phi == 1 {
        let mut exact = [0.0];
        for y in &ys {
            p.gamma_exact(y, &mut exact);
            match gamma_quadrature(p, y[0], GAMMA_CHECK_NODES) {
                Ok(q) if (q - exact[0]).abs() <= GAMMA_ATOL => {}
                Ok(q) => report.push(
                    ViolationKind::GammaMismatch,
                    format!("gamma_exact({}) = {} but quadrature gives {q}", y[0], exact[0]),
                ),
                Err(e) => report.push(ViolationKind::GammaMismatch, e.to_string()),
            }
        }
    }

    report
}

/// One level of a [`ProblemTree`]: a sampler for the level's own variables
/// (given all ancestor variables) and the integrand evaluated on all variables
/// so far plus the child's estimate.
#[derive(Clone)]
pub struct TreeLevel {
    var_dim: usize,
    child_dim: usize,
    out_dim: usize,
    sampler: InnerSampler,
    integrand: BinaryMap,
}

impl TreeLevel {
    /// `sampler(gen, ancestors, own_vars)` and `integrand(all_vars, child_estimate, out)`.
    /// Leaves use `child_dim = 0` and receive an empty child estimate.
    pub fn new(
        var_dim: usize,
        child_dim: usize,
        out_dim: usize,
        sampler: impl Fn(&mut Generator, &[f64], &mut [f64]) + Send + Sync + 'static,
        integrand: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        TreeLevel {
            var_dim,
            child_dim,
            out_dim,
            sampler: Arc::new(sampler),
            integrand: Arc::new(integrand),
        }
    }

    pub fn var_dim(&self) -> usize {
        self.var_dim
    }

    pub fn child_dim(&self) -> usize {
        self.child_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub(crate) fn sample(&self, g: &mut Generator, ancestors: &[f64], own: &mut [f64]) {
        (self.sampler)(g, ancestors, own)
    }

    #[inline]
    pub(crate) fn integrand(&self, vars: &[f64], child: &[f64], out: &mut [f64]) {
        (self.integrand)(vars, child, out)
    }
}

/// Recursively nested expectation of depth `d >= 1`; level 0 is outermost.
#[derive(Clone)]
pub struct ProblemTree {
    name: String,
    levels: Vec<TreeLevel>,
}

impl ProblemTree {
    pub fn new(name: impl Into<String>, levels: Vec<TreeLevel>) -> Result<Self> {
        let name = name.into();
        if levels.is_empty() {
            return Err(Error::InvalidTree(format!("`{name}` has no levels")));
        }
        for (k, pair) in levels.windows(2).enumerate() {
            if pair[0].child_dim != pair[1].out_dim {
                return Err(Error::InvalidTree(format!(
                    "level {k} consumes {} values but level {} produces {}",
                    pair[0].child_dim,
                    k + 1,
                    pair[1].out_dim
                )));
            }
        }
        let leaf = levels.last().expect("non-empty");
        if leaf.child_dim != 0 {
            return Err(Error::InvalidTree(format!(
                "leaf level of `{name}` expects a child estimate of dimension {}",
                leaf.child_dim
            )));
        }
        Ok(ProblemTree { name, levels })
    }

    /// The two-level tree equivalent to a [`NestedProblem`].
    pub fn from_problem(p: &NestedProblem) -> Self {
        let d = p.dims;
        let outer = p.outer_sampler().clone();
        let inner = p.inner_sampler().clone();
        let phi = p.phi_map().clone();
        let f = p.f_map().clone();
        let dy = d.outer;
        ProblemTree {
            name: p.name.clone(),
            levels: vec![
                TreeLevel::new(
                    d.outer,
                    d.phi,
                    d.f,
                    move |g, _, y| outer(g, y),
                    move |y, w, out| f(y, w, out),
                ),
                TreeLevel::new(
                    d.inner,
                    0,
                    d.phi,
                    move |g, y, z| inner(g, y, z),
                    move |vars, _, out| phi(&vars[..dy], &vars[dy..], out),
                ),
            ],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[TreeLevel] {
        &self.levels
    }
}

impl fmt::Debug for ProblemTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemTree")
            .field("name", &self.name)
            .field("depth", &self.levels.len())
            .finish()
    }
}
