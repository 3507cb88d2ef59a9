//! Hybrid domain `[0,1] ∪ {2,…,N+1}`, functions on it, forcing data and the
//! problem specification.
//!
//! The measure on the domain is Lebesgue measure on `[0,1]` plus a unit point
//! mass at each integer node. Functions are stored as nodal coefficients of
//! continuous piecewise-linear hats on a uniform mesh of `[0,1]` together with
//! one real value per discrete node.

use std::ops::{Add, Mul, Sub};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_QUAD_ORDER: usize = 6;
pub const DEFAULT_SINGULAR_SUBDIVISIONS: usize = 40;
pub const DEFAULT_TOL_SOLVE: f64 = 1e-8;
pub const DEFAULT_TOL_IDENTITY: f64 = 1e-8;

/// Fractional order, number of discrete nodes and mesh resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct HybridDomain {
    alpha: f64,
    num_nodes: usize,
    mesh_intervals: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    alpha: f64,
    num_nodes: usize,
    mesh_intervals: usize,
}

impl TryFrom<RawDomain> for HybridDomain {
    type Error = Error;

    fn try_from(raw: RawDomain) -> Result<Self> {
        HybridDomain::new(raw.alpha, raw.num_nodes, raw.mesh_intervals)
    }
}

impl HybridDomain {
    pub fn new(alpha: f64, num_nodes: usize, mesh_intervals: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::out_of_range(
                "alpha",
                format!("alpha out of (0,1): got {alpha}"),
            ));
        }
        if num_nodes < 2 {
            return Err(Error::out_of_range(
                "num_nodes",
                format!("num_nodes must be >= 2: got {num_nodes}"),
            ));
        }
        if mesh_intervals < 1 {
            return Err(Error::out_of_range(
                "mesh_intervals",
                "mesh_intervals must be >= 1: got 0",
            ));
        }
        Ok(Self {
            alpha,
            num_nodes,
            mesh_intervals,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn mesh_intervals(&self) -> usize {
        self.mesh_intervals
    }

    /// Kernel exponent `1 + 2α`.
    pub fn exponent(&self) -> f64 {
        1.0 + 2.0 * self.alpha
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.mesh_intervals as f64
    }

    /// Number of continuous coefficients, `M + 1`.
    pub fn num_cont_dofs(&self) -> usize {
        self.mesh_intervals + 1
    }

    /// Total number of unknowns, `M + 1 + N`.
    pub fn dim(&self) -> usize {
        self.mesh_intervals + 1 + self.num_nodes
    }

    /// Breakpoint `i / M`.
    pub fn breakpoint(&self, i: usize) -> f64 {
        i as f64 / self.mesh_intervals as f64
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        (0..=self.mesh_intervals)
            .map(|i| self.breakpoint(i))
            .collect()
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell::new(self.breakpoint(i), self.breakpoint(i + 1))
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.mesh_intervals).map(|i| self.cell(i))
    }

    /// Integer position of the `idx`-th discrete node (`idx = 0` is node 2).
    pub fn node_position(&self, idx: usize) -> usize {
        idx + 2
    }

    pub fn node_positions(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.node_position(i)).collect()
    }

    /// Same parameters on a mesh with `mesh_intervals` cells.
    pub fn with_mesh(&self, mesh_intervals: usize) -> Result<Self> {
        Self::new(self.alpha, self.num_nodes, mesh_intervals)
    }
}

pub fn make_domain(alpha: f64, num_nodes: usize, mesh_intervals: usize) -> Result<HybridDomain> {
    HybridDomain::new(alpha, num_nodes, mesh_intervals)
}

/// Closed interval of the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

impl Cell {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(hi > lo);
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Linear function on a cell, stored by its endpoint values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPiece {
    pub at_lo: f64,
    pub at_hi: f64,
}

impl LinearPiece {
    pub fn new(at_lo: f64, at_hi: f64) -> Self {
        Self { at_lo, at_hi }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(c, c)
    }

    pub fn eval(&self, cell: Cell, x: f64) -> f64 {
        let t = (x - cell.lo) / cell.width();
        self.at_lo + t * (self.at_hi - self.at_lo)
    }

    pub fn slope(&self, cell: Cell) -> f64 {
        (self.at_hi - self.at_lo) / cell.width()
    }

    /// The same linear function described on a sub-interval of `cell`.
    pub fn restrict(&self, cell: Cell, sub: Cell) -> Self {
        Self::new(self.eval(cell, sub.lo), self.eval(cell, sub.hi))
    }
}

/// A function `u = (v, a_2, …, a_{N+1})` of the discrete energy space.
///
/// The same type is used for test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridFunction {
    pub cont_coeffs: Vec<f64>,
    pub node_values: Vec<f64>,
}

impl HybridFunction {
    pub fn new(
        domain: &HybridDomain,
        cont_coeffs: Vec<f64>,
        node_values: Vec<f64>,
    ) -> Result<Self> {
        if cont_coeffs.len() != domain.num_cont_dofs() {
            return Err(Error::DimensionMismatch {
                what: "cont_coeffs",
                expected: domain.num_cont_dofs(),
                found: cont_coeffs.len(),
            });
        }
        if node_values.len() != domain.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "node_values",
                expected: domain.num_nodes(),
                found: node_values.len(),
            });
        }
        Ok(Self {
            cont_coeffs,
            node_values,
        })
    }

    pub fn zeros(domain: &HybridDomain) -> Self {
        Self::constant(domain, 0.0)
    }

    pub fn constant(domain: &HybridDomain, c: f64) -> Self {
        Self {
            cont_coeffs: vec![c; domain.num_cont_dofs()],
            node_values: vec![c; domain.num_nodes()],
        }
    }

    /// Nodal interpolant of `v` on the mesh plus the given node values.
    pub fn interpolate(
        domain: &HybridDomain,
        v: impl Fn(f64) -> f64,
        node_values: Vec<f64>,
    ) -> Result<Self> {
        let coeffs = domain.breakpoints().into_iter().map(v).collect();
        Self::new(domain, coeffs, node_values)
    }

    /// Inverse of [`HybridFunction::to_vector`]: continuous block first.
    pub fn from_vector(domain: &HybridDomain, x: &DVector<f64>) -> Result<Self> {
        if x.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                what: "coefficient vector",
                expected: domain.dim(),
                found: x.len(),
            });
        }
        let nc = domain.num_cont_dofs();
        Ok(Self {
            cont_coeffs: x.as_slice()[..nc].to_vec(),
            node_values: x.as_slice()[nc..].to_vec(),
        })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.cont_coeffs
                .iter()
                .chain(self.node_values.iter())
                .copied(),
        )
    }

    /// `i`-th basis function: a hat for `i <= M`, a node indicator otherwise.
    pub fn basis(domain: &HybridDomain, i: usize) -> Self {
        let mut u = Self::zeros(domain);
        let nc = domain.num_cont_dofs();
        if i < nc {
            u.cont_coeffs[i] = 1.0;
        } else {
            u.node_values[i - nc] = 1.0;
        }
        u
    }

    pub fn dim(&self) -> usize {
        self.cont_coeffs.len() + self.node_values.len()
    }

    pub fn mesh_intervals(&self) -> usize {
        self.cont_coeffs.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.node_values.len()
    }

    /// Restriction of the continuous part to cell `i`.
    pub fn piece(&self, i: usize) -> LinearPiece {
        LinearPiece::new(self.cont_coeffs[i], self.cont_coeffs[i + 1])
    }

    /// Piecewise-linear interpolation of the coefficients at `x`.
    pub fn eval_continuous(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfInterval { x });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let m = self.mesh_intervals();
        let s = x * m as f64;
        let i = (s.floor() as usize).min(m - 1);
        let t = s - i as f64;
        let (c0, c1) = (self.cont_coeffs[i], self.cont_coeffs[i + 1]);
        if t == 0.0 {
            c0
        } else if t == 1.0 {
            c1
        } else {
            c0 + t * (c1 - c0)
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            cont_coeffs: self.cont_coeffs.iter().map(|c| t * c).collect(),
            node_values: self.node_values.iter().map(|a| t * a).collect(),
        }
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            cont_coeffs: self
                .cont_coeffs
                .iter()
                .zip(&other.cont_coeffs)
                .map(|(a, b)| a + t * b)
                .collect(),
            node_values: self
                .node_values
                .iter()
                .zip(&other.node_values)
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }
}

impl Add for &HybridFunction {
    type Output = HybridFunction;
    fn add(self, rhs: Self) -> HybridFunction {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &HybridFunction {
    type Output = HybridFunction;
    fn sub(self, rhs: Self) -> HybridFunction {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<&HybridFunction> for f64 {
    type Output = HybridFunction;
    fn mul(self, rhs: &HybridFunction) -> HybridFunction {
        rhs.scaled(self)
    }
}

pub fn eval_continuous(u: &HybridFunction, x: f64) -> Result<f64> {
    u.eval_continuous(x)
}

/// `∫_T u dμ`: trapezoid on each cell (exact for the hat basis) plus node values.
pub fn mu_integral(u: &HybridFunction) -> f64 {
    let h = 1.0 / u.mesh_intervals() as f64;
    let c = &u.cont_coeffs;
    let interior: f64 = c[1..c.len() - 1].iter().sum();
    let cont = h * (0.5 * (c[0] + c[c.len() - 1]) + interior);
    cont + u.node_values.iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingKind {
    Constant,
    Polynomial,
    Sine,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForcingParams {
    /// Coefficient list: `[c]`, `[c0, c1, …]` or `[amplitude, frequency, phase]`.
    Coefficients(Vec<f64>),
    /// Breakpoint/value pairs, linearly interpolated.
    Table(Vec<[f64; 2]>),
}

/// Right-hand side `f`: a profile on `[0,1]` plus the point loads `f(k)`.
///
/// The sine profile is `amplitude * sin(2π * frequency * x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawForcing")]
pub struct Forcing {
    pub kind: ForcingKind,
    pub params: ForcingParams,
    pub node_loads: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    kind: ForcingKind,
    params: ForcingParams,
    node_loads: Vec<f64>,
}

impl TryFrom<RawForcing> for Forcing {
    type Error = Error;

    fn try_from(raw: RawForcing) -> Result<Self> {
        Forcing::new(raw.kind, raw.params, raw.node_loads)
    }
}

impl Forcing {
    pub fn new(kind: ForcingKind, params: ForcingParams, node_loads: Vec<f64>) -> Result<Self> {
        if node_loads.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidForcing("node loads must be finite".into()));
        }
        match (&kind, &params) {
            (ForcingKind::Constant, ForcingParams::Coefficients(c)) if c.len() == 1 => {}
            (ForcingKind::Polynomial, ForcingParams::Coefficients(c)) if !c.is_empty() => {}
            (ForcingKind::Sine, ForcingParams::Coefficients(c)) if c.len() == 3 => {}
            (ForcingKind::Sampled, ForcingParams::Table(t)) => validate_table(t)?,
            (ForcingKind::Sampled, ForcingParams::Coefficients(c)) if c.is_empty() => {
                return Err(Error::InvalidForcing("sample table is empty".into()))
            }
            _ => {
                return Err(Error::InvalidForcing(format!(
                    "params do not match forcing kind {kind:?}"
                )))
            }
        }
        if let ForcingParams::Coefficients(c) = &params {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidForcing("coefficients must be finite".into()));
            }
        }
        Ok(Self {
            kind,
            params,
            node_loads,
        })
    }

    pub fn constant(value: f64, node_loads: Vec<f64>) -> Result<Self> {
        Self::new(
            ForcingKind::Constant,
            ForcingParams::Coefficients(vec![value]),
            node_loads,
        )
    }

    pub fn zero(num_nodes: usize) -> Self {
        Self::constant(0.0, vec![0.0; num_nodes]).expect("zero forcing is valid")
    }

    pub fn polynomial(coeffs: Vec<f64>, node_loads: Vec<f64>) -> Result<Self> {
        Self::new(
            ForcingKind::Polynomial,
            ForcingParams::Coefficients(coeffs),
            node_loads,
        )
    }

    pub fn sine(amplitude: f64, frequency: f64, phase: f64, node_loads: Vec<f64>) -> Result<Self> {
        Self::new(
            ForcingKind::Sine,
            ForcingParams::Coefficients(vec![amplitude, frequency, phase]),
            node_loads,
        )
    }

    pub fn sampled(table: Vec<[f64; 2]>, node_loads: Vec<f64>) -> Result<Self> {
        Self::new(
            ForcingKind::Sampled,
            ForcingParams::Table(table),
            node_loads,
        )
    }

    /// Same profile with different point loads.
    pub fn with_node_loads(&self, node_loads: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.params.clone(), node_loads)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.params {
            ForcingParams::Coefficients(c) => match self.kind {
                ForcingKind::Constant => c[0],
                ForcingKind::Polynomial => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
                ForcingKind::Sine => c[0] * (2.0 * std::f64::consts::PI * c[1] * x + c[2]).sin(),
                ForcingKind::Sampled => unreachable!("validated at construction"),
            },
            ForcingParams::Table(t) => interpolate_table(t, x),
        }
    }

    /// Interior kinks of the profile inside `(lo, hi)`; empty unless sampled.
    pub fn kinks_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        match &self.params {
            ForcingParams::Table(t) => t
                .iter()
                .map(|p| p[0])
                .filter(|&x| x > lo && x < hi)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Splits `[lo, hi]` at the profile's kinks so that it is smooth on
    /// every returned piece.
    pub fn smooth_pieces(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut edges = vec![lo];
        edges.extend(self.kinks_in(lo, hi));
        edges.push(hi);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

fn validate_table(t: &[[f64; 2]]) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::InvalidForcing(
            "sample table needs at least two entries".into(),
        ));
    }
    if t.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidForcing("sample table must be finite".into()));
    }
    if t.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(Error::InvalidForcing(
            "sample breakpoints must be strictly increasing".into(),
        ));
    }
    if t[0][0] > 0.0 || t[t.len() - 1][0] < 1.0 {
        return Err(Error::InvalidForcing(
            "sample table must cover [0, 1]".into(),
        ));
    }
    Ok(())
}

fn interpolate_table(t: &[[f64; 2]], x: f64) -> f64 {
    let j = t.partition_point(|p| p[0] <= x);
    if j == 0 {
        return t[0][1];
    }
    if j == t.len() {
        return t[t.len() - 1][1];
    }
    let ([x0, y0], [x1, y1]) = (t[j - 1], t[j]);
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

/// Everything needed to set up and solve one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ProblemSpec {
    pub domain: HybridDomain,
    pub lambda: f64,
    pub forcing: Forcing,
    pub quad_order: usize,
    pub singular_subdivisions: usize,
    pub tol_solve: f64,
    pub tol_identity: f64,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    domain: HybridDomain,
    lambda: f64,
    forcing: Forcing,
    #[serde(default = "default_quad_order")]
    quad_order: usize,
    #[serde(default = "default_subdivisions")]
    singular_subdivisions: usize,
    #[serde(default = "default_tol_solve")]
    tol_solve: f64,
    #[serde(default = "default_tol_identity")]
    tol_identity: f64,
    #[serde(default)]
    seed: u64,
}

fn default_quad_order() -> usize {
    DEFAULT_QUAD_ORDER
}
fn default_subdivisions() -> usize {
    DEFAULT_SINGULAR_SUBDIVISIONS
}
fn default_tol_solve() -> f64 {
    DEFAULT_TOL_SOLVE
}
fn default_tol_identity() -> f64 {
    DEFAULT_TOL_IDENTITY
}

impl TryFrom<RawSpec> for ProblemSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let spec = ProblemSpec {
            domain: raw.domain,
            lambda: raw.lambda,
            forcing: raw.forcing,
            quad_order: raw.quad_order,
            singular_subdivisions: raw.singular_subdivisions,
            tol_solve: raw.tol_solve,
            tol_identity: raw.tol_identity,
            seed: raw.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ProblemSpec {
    /// Spec with default quadrature settings and tolerances.
    pub fn new(domain: HybridDomain, lambda: f64, forcing: Forcing) -> Result<Self> {
        let spec = Self {
            domain,
            lambda,
            forcing,
            quad_order: DEFAULT_QUAD_ORDER,
            singular_subdivisions: DEFAULT_SINGULAR_SUBDIVISIONS,
            tol_solve: DEFAULT_TOL_SOLVE,
            tol_identity: DEFAULT_TOL_IDENTITY,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero forcing, `λ = 1`; convenient for energy-only work.
    pub fn unforced(domain: HybridDomain) -> Self {
        Self::new(domain, 1.0, Forcing::zero(domain.num_nodes())).expect("valid by construction")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::out_of_range(
                "lambda",
                format!("lambda must be > 0: got {}", self.lambda),
            ));
        }
        if self.forcing.node_loads.len() != self.domain.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "forcing.node_loads",
                expected: self.domain.num_nodes(),
                found: self.forcing.node_loads.len(),
            });
        }
        if self.quad_order < 2 {
            return Err(Error::out_of_range(
                "quad_order",
                format!("quad_order must be >= 2: got {}", self.quad_order),
            ));
        }
        if self.singular_subdivisions < 1 {
            return Err(Error::out_of_range(
                "singular_subdivisions",
                "singular_subdivisions must be >= 1: got 0",
            ));
        }
        if !(self.tol_solve > 0.0) {
            return Err(Error::out_of_range("tol_solve", "tol_solve must be > 0"));
        }
        if !(self.tol_identity > 0.0) {
            return Err(Error::out_of_range(
                "tol_identity",
                "tol_identity must be > 0",
            ));
        }
        Ok(())
    }

    pub fn with_domain(&self, domain: HybridDomain) -> Result<Self> {
        let mut spec = self.clone();
        spec.domain = domain;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mesh(&self, mesh_intervals: usize) -> Result<Self> {
        self.with_domain(self.domain.with_mesh(mesh_intervals)?)
    }

    pub fn alpha(&self) -> f64 {
        self.domain.alpha()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
