//! Numerical checks of the interface estimate, interface coercivity, the
//! hybrid Poincaré inequality and the product-norm lower bound.
//!
//! The constants `C1 = 2 c1` and `C2 = max(2N, 2 + 4S)` are the ones that
//! come out of the coercivity argument; they are not claimed to be sharp.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, mass_matrix};
use crate::domain::{HybridFunction, LinearPiece, ProblemSpec};
use crate::energy::{
    continuous_l2_sq, interface_l2_sum, l2_mu_norm_sq, mean_stats, EnergyBreakdown, EnergyModel,
};
use crate::error::{Error, Result};
use crate::quadrature::{interface_weight, GagliardoQuadrature, GaussRule};
use crate::random::RandomFunctions;

pub const TOL_INTERFACE: f64 = 1e-10;
pub const TOL_COERCIVITY: f64 = 1e-8;
pub const TOL_PRODUCT_NORM: f64 = 1e-10;
pub const TOL_POINCARE: f64 = 1e-6;
/// Relative residual at which the Poincaré eigeniteration stops.
pub const POINCARE_REL_TOL: f64 = 1e-8;
pub const POINCARE_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityConstants {
    pub c1: f64,
    pub c2: f64,
    #[serde(rename = "C1")]
    pub big_c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    #[serde(rename = "inv_C1")]
    pub inv_c1: f64,
    /// `Σ_{m=1}^{N-1} m^{-(1+2α)}`.
    pub s: f64,
}

impl CoercivityConstants {
    pub fn new(alpha: f64, num_nodes: usize) -> Self {
        let exponent = 1.0 + 2.0 * alpha;
        let c1 = ((num_nodes + 1) as f64).powf(-exponent);
        let s: f64 = (1..num_nodes).map(|m| (m as f64).powf(-exponent)).sum();
        let big_c1 = 2.0 * c1;
        Self {
            c1,
            c2: 1.0,
            big_c1,
            big_c2: (2.0 * num_nodes as f64).max(2.0 + 4.0 * s),
            inv_c1: 1.0 / big_c1,
            s,
        }
    }

    pub fn for_spec(spec: &ProblemSpec) -> Self {
        Self::new(spec.alpha(), spec.domain.num_nodes())
    }
}

/// Worst margins of a two-sided inequality `lo ≤ mid ≤ hi`.
///
/// `lower`/`upper` are the raw minima of `mid - lo` and `hi - mid`; the
/// `_scaled` fields divide each sample's margin by `max(1, larger side)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstMargins {
    pub lower: f64,
    pub upper: f64,
    pub lower_scaled: f64,
    pub upper_scaled: f64,
}

impl WorstMargins {
    fn empty() -> Self {
        Self {
            lower: f64::INFINITY,
            upper: f64::INFINITY,
            lower_scaled: f64::INFINITY,
            upper_scaled: f64::INFINITY,
        }
    }

    fn record(&mut self, lo: f64, mid: f64, hi: f64) {
        let (ml, mu) = (mid - lo, hi - mid);
        self.lower = self.lower.min(ml);
        self.upper = self.upper.min(mu);
        self.lower_scaled = self.lower_scaled.min(ml / lo.abs().max(mid.abs()).max(1.0));
        self.upper_scaled = self.upper_scaled.min(mu / hi.abs().max(mid.abs()).max(1.0));
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.lower_scaled >= -tol && self.upper_scaled >= -tol
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::ParameterOutOfRange {
            field: "samples",
            message: "samples must be >= 1: got 0".into(),
        });
    }
    Ok(())
}

/// Worst margins of `c1 Σ∫|a_k - v|² ≤ E_cd(u) ≤ c2 Σ∫|a_k - v|²`.
pub fn check_interface_estimate(spec: &ProblemSpec, samples: usize) -> Result<WorstMargins> {
    check_samples(samples)?;
    let model = EnergyModel::from_spec(spec)?;
    let consts = CoercivityConstants::for_spec(spec);
    let mut worst = WorstMargins::empty();
    for u in RandomFunctions::new(&spec.domain, spec.seed).take(samples) {
        interface_margins(&model, &consts, &u, &mut worst);
    }
    Ok(worst)
}

fn interface_margins(
    model: &EnergyModel,
    consts: &CoercivityConstants,
    u: &HybridFunction,
    worst: &mut WorstMargins,
) {
    let sum = interface_l2_sum(u);
    worst.record(consts.c1 * sum, model.energy_cd(u), consts.c2 * sum);
}

/// `e_cc + ‖v - v̄‖² + Σ|a_k - v̄|²`, the right-hand quantity in the
/// coercivity estimate.
pub fn coercivity_quantity(breakdown: &EnergyBreakdown, u: &HybridFunction) -> f64 {
    breakdown.e_cc + mean_stats(u).deviation()
}

/// Worst margins of `C1 Q(u) ≤ E(u) ≤ C2 Q(u)`.
pub fn check_coercivity(spec: &ProblemSpec, samples: usize) -> Result<WorstMargins> {
    check_coercivity_with(spec, samples, &CoercivityConstants::for_spec(spec))
}

/// [`check_coercivity`] with caller-supplied constants.
pub fn check_coercivity_with(
    spec: &ProblemSpec,
    samples: usize,
    consts: &CoercivityConstants,
) -> Result<WorstMargins> {
    check_samples(samples)?;
    let model = EnergyModel::from_spec(spec)?;
    let mut worst = WorstMargins::empty();
    for u in RandomFunctions::new(&spec.domain, spec.seed).take(samples) {
        coercivity_margins(&model, consts, &u, &mut worst);
    }
    Ok(worst)
}

fn coercivity_margins(
    model: &EnergyModel,
    consts: &CoercivityConstants,
    u: &HybridFunction,
    worst: &mut WorstMargins,
) {
    let b = model.breakdown(u);
    let q = coercivity_quantity(&b, u);
    worst.record(consts.big_c1 * q, b.total, consts.big_c2 * q);
}

/// Worst margin of `‖u‖²_H ≥ ‖v‖²_{L²} + [v]²_{H^α} + Σ a_k²`.
pub fn check_product_norm_lower(spec: &ProblemSpec, samples: usize) -> Result<f64> {
    check_samples(samples)?;
    let model = EnergyModel::from_spec(spec)?;
    let mut worst = f64::INFINITY;
    for u in RandomFunctions::new(&spec.domain, spec.seed).take(samples) {
        worst = worst.min(product_norm_margin(&model, &u));
    }
    Ok(worst)
}

fn product_norm_margin(model: &EnergyModel, u: &HybridFunction) -> f64 {
    let b = model.breakdown(u);
    let hybrid = l2_mu_norm_sq(u) + b.total;
    let product = continuous_l2_sq(u) + b.e_cc + u.node_values.iter().map(|a| a * a).sum::<f64>();
    (hybrid - product) / hybrid.max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareEstimate {
    pub theta_max: f64,
    pub upper_bound: f64,
    pub iterations: usize,
}

impl PoincareEstimate {
    pub fn passes(&self, tol: f64) -> bool {
        self.theta_max <= self.upper_bound + tol
    }
}

/// Matrix of `u ↦ ‖v - v̄‖² + Σ|a_k - v̄|²` in the Galerkin basis.
pub fn poincare_numerator(spec: &ProblemSpec) -> DMatrix<f64> {
    let d = &spec.domain;
    let nc = d.num_cont_dofs();
    let n = d.num_nodes();
    let mut b = mass_matrix(d);
    // d_i = ∫ φ_i, the mean functional
    let mean: DVector<f64> = b.view((0, 0), (nc, nc)).column_sum();
    let outer = &mean * mean.transpose();
    b.view_mut((0, 0), (nc, nc))
        .zip_apply(&outer, |x, o| *x += (n as f64 - 1.0) * o);
    for k in 0..n {
        for i in 0..nc {
            b[(i, nc + k)] = -mean[i];
            b[(nc + k, i)] = -mean[i];
        }
    }
    b
}

fn deflated_cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = a.nrows();
    let shifted = a.add_scalar(1.0 / n as f64);
    Cholesky::new(shifted).ok_or(Error::NotPositiveDefinite)
}

/// Largest generalized Rayleigh quotient of the Poincaré numerator against
/// the energy, constants deflated.
pub fn poincare_estimate(spec: &ProblemSpec) -> Result<PoincareEstimate> {
    poincare_estimate_capped(spec, POINCARE_MAX_ITER)
}

pub fn poincare_estimate_capped(spec: &ProblemSpec, max_iter: usize) -> Result<PoincareEstimate> {
    let a = assemble(spec)?.full_matrix();
    let b = poincare_numerator(spec);
    let (theta, iterations) = largest_generalized(&b, &a, max_iter)?;
    Ok(PoincareEstimate {
        theta_max: theta,
        upper_bound: CoercivityConstants::for_spec(spec).inv_c1,
        iterations,
    })
}

/// Power iteration for the top eigenvalue of `L⁻¹ B L⁻ᵀ`, where `L Lᵀ` is
/// `A` plus the rank-one shift `eeᵀ/n`. Both forms must vanish on the
/// constant vector `e`.
fn largest_generalized(
    b: &DMatrix<f64>,
    a: &DMatrix<f64>,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let n = a.nrows();
    let chol = deflated_cholesky(a)?;
    let l = chol.l();
    let apply = |x: &DVector<f64>| -> DVector<f64> {
        let y = l
            .transpose()
            .solve_upper_triangular(x)
            .expect("triangular solve");
        l.solve_lower_triangular(&(b * y))
            .expect("triangular solve")
    };
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i + 1) as f64).sin());
    x /= x.norm();
    for it in 1..=max_iter {
        let y = apply(&x);
        let theta = x.dot(&y);
        let residual = (&y - &x * theta).norm();
        let norm = y.norm();
        if norm == 0.0 {
            return Ok((0.0, it));
        }
        if residual <= POINCARE_REL_TOL * theta.abs() {
            return Ok((theta, it));
        }
        x = y / norm;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}

/// Smallest and largest values of `E(u) / Q(u)` over the discrete space, by a
/// dense symmetric eigendecomposition. Used to see how close the proof
/// constants `C1`, `C2` are to the discrete extremes.
pub fn discrete_coercivity_range(spec: &ProblemSpec) -> Result<(f64, f64)> {
    let sys = assemble(spec)?;
    let a = sys.full_matrix();
    let nc = spec.domain.num_cont_dofs();
    let mut q = poincare_numerator(spec);
    q.view_mut((0, 0), (nc, nc))
        .zip_apply(&sys.a_cc, |x, c| *x += c);
    let chol = deflated_cholesky(&q)?;
    let l = chol.l();
    let li = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let c = &li * a * li.transpose();
    let sym = (&c + c.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    // the constant direction contributes the single zero eigenvalue
    Ok((vals[1], vals[vals.len() - 1]))
}

/// `E(u)` by direct quadrature of the double integral over `T × T` against
/// `μ ⊗ μ`, pair by pair and without the three-part split.
pub fn direct_energy(u: &HybridFunction, spec: &ProblemSpec) -> Result<f64> {
    let d = &spec.domain;
    let rule = GaussRule::new(spec.quad_order)?;
    let quad =
        GagliardoQuadrature::new(d.alpha(), rule, spec.singular_subdivisions, d.cell_width());
    let pieces: Vec<(crate::domain::Cell, LinearPiece)> = d
        .cells()
        .enumerate()
        .map(|(i, c)| (c, u.piece(i)))
        .collect();
    let mut cc = 0.0;
    for &(ca, fa) in &pieces {
        for &(cb, fb) in &pieces {
            cc += quad.pair(ca, cb, fa, fb);
        }
    }
    let gauss = GaussRule::new(10)?;
    let mut cross = 0.0;
    for (pos, &a) in d.node_positions().into_iter().zip(&u.node_values) {
        for &(cell, f) in &pieces {
            // x in [0,1], y = k and x = k, y in [0,1]
            let one = gauss.integrate(cell.lo, cell.hi, |x| {
                (f.eval(cell, x) - a).powi(2) * interface_weight(pos, d.alpha(), x)
            });
            let two = gauss.integrate(cell.lo, cell.hi, |y| {
                (a - f.eval(cell, y)).powi(2) * interface_weight(pos, d.alpha(), y)
            });
            cross += one + two;
        }
    }
    let mut dd = 0.0;
    let nodes = d.node_positions();
    for (i, &pi) in nodes.iter().enumerate() {
        for (j, &pj) in nodes.iter().enumerate() {
            if i != j {
                let dist = (pi as f64 - pj as f64).abs();
                dd += (u.node_values[i] - u.node_values[j]).powi(2) / dist.powf(d.exponent());
            }
        }
    }
    Ok(cc + cross + dd)
}

/// Worst `|total - direct| / (1 + total)` over random functions.
pub fn check_energy_identity(spec: &ProblemSpec, samples: usize) -> Result<f64> {
    check_samples(samples)?;
    let model = EnergyModel::from_spec(spec)?;
    let mut worst: f64 = 0.0;
    for u in RandomFunctions::new(&spec.domain, spec.seed).take(samples) {
        let total = model.total(&u);
        let direct = direct_energy(&u, spec)?;
        worst = worst.max((total - direct).abs() / (1.0 + total.abs()));
    }
    Ok(worst)
}

/// Results of every inequality check at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub alpha: f64,
    pub num_nodes: usize,
    pub mesh_intervals: usize,
    pub seed: u64,
    pub samples: usize,
    pub constants: CoercivityConstants,
    pub interface: WorstMargins,
    pub coercivity: WorstMargins,
    pub product_norm: f64,
    pub passed: bool,
}

impl VerificationReport {
    pub const CSV_HEADER: &'static str = "alpha,N,M,seed,samples,C1,C2,interface_lower,interface_upper,coercivity_lower,coercivity_upper,product_norm,passed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.alpha,
            self.num_nodes,
            self.mesh_intervals,
            self.seed,
            self.samples,
            self.constants.big_c1,
            self.constants.big_c2,
            self.interface.lower_scaled,
            self.interface.upper_scaled,
            self.coercivity.lower_scaled,
            self.coercivity.upper_scaled,
            self.product_norm,
            self.passed
        )
    }
}

/// Runs the interface, coercivity and product-norm sweeps on one shared set
/// of random functions.
pub fn verify(spec: &ProblemSpec, samples: usize) -> Result<VerificationReport> {
    verify_with(spec, samples, &CoercivityConstants::for_spec(spec))
}

pub fn verify_with(
    spec: &ProblemSpec,
    samples: usize,
    consts: &CoercivityConstants,
) -> Result<VerificationReport> {
    check_samples(samples)?;
    let model = EnergyModel::from_spec(spec)?;
    let mut interface = WorstMargins::empty();
    let mut coercivity = WorstMargins::empty();
    let mut product_norm = f64::INFINITY;
    for u in RandomFunctions::new(&spec.domain, spec.seed).take(samples) {
        interface_margins(&model, consts, &u, &mut interface);
        coercivity_margins(&model, consts, &u, &mut coercivity);
        product_norm = product_norm.min(product_norm_margin(&model, &u));
    }
    let passed = interface.passes(TOL_INTERFACE)
        && coercivity.passes(TOL_COERCIVITY)
        && product_norm >= -TOL_PRODUCT_NORM;
    Ok(VerificationReport {
        alpha: spec.alpha(),
        num_nodes: spec.domain.num_nodes(),
        mesh_intervals: spec.domain.mesh_intervals(),
        seed: spec.seed,
        samples,
        constants: *consts,
        interface,
        coercivity,
        product_norm,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_domain;

    fn spec(alpha: f64, n: usize, m: usize) -> ProblemSpec {
        ProblemSpec::unforced(make_domain(alpha, n, m).unwrap())
    }

    #[test]
    fn constants_examples() {
        let c = CoercivityConstants::new(0.5, 2);
        assert!((c.c1 - 1.0 / 9.0).abs() < 1e-15);
        assert!((c.big_c1 - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(c.big_c2, 6.0);
        assert!((c.inv_c1 - 4.5).abs() < 1e-14);
        let json = serde_json::to_value(c).unwrap();
        assert!(json.get("C1").is_some() && json.get("inv_C1").is_some());
        for (alpha, n) in [(0.1, 2), (0.5, 3), (0.9, 5)] {
            let c = CoercivityConstants::new(alpha, n);
            assert!(0.0 < c.c1 && c.c1 <= c.c2 && 0.0 < c.big_c1 && c.big_c1 <= c.big_c2);
        }
    }

    #[test]
    fn interface_example_margins() {
        let s = spec(0.5, 2, 16);
        let model = EnergyModel::from_spec(&s).unwrap();
        let consts = CoercivityConstants::for_spec(&s);
        let u = HybridFunction::new(&s.domain, vec![0.0; 17], vec![1.0, 1.0]).unwrap();
        let mut w = WorstMargins::empty();
        interface_margins(&model, &consts, &u, &mut w);
        assert!((w.lower - 4.0 / 9.0).abs() < 1e-10);
        assert!((w.upper - 4.0 / 3.0).abs() < 1e-10);

        let mut w = WorstMargins::empty();
        interface_margins(
            &model,
            &consts,
            &HybridFunction::constant(&s.domain, 2.0),
            &mut w,
        );
        assert!(w.lower.abs() < 1e-14 && w.upper.abs() < 1e-14);
        let mut w = WorstMargins::empty();
        coercivity_margins(
            &model,
            &consts,
            &HybridFunction::constant(&s.domain, 2.0),
            &mut w,
        );
        assert!(w.lower.abs() < 1e-12 && w.upper.abs() < 1e-12);
    }

    #[test]
    fn sweeps_pass() {
        let s = spec(0.75, 3, 16);
        assert!(check_interface_estimate(&s, 200)
            .unwrap()
            .passes(TOL_INTERFACE));
        assert!(check_coercivity(&s, 200).unwrap().passes(TOL_COERCIVITY));
        assert!(check_product_norm_lower(&s, 200).unwrap() >= -TOL_PRODUCT_NORM);
        assert!(verify(&s, 50).unwrap().passed);
    }

    #[test]
    fn zero_samples_rejected() {
        let s = spec(0.5, 2, 8);
        let err = check_interface_estimate(&s, 0).unwrap_err();
        assert_eq!(err.field(), Some("samples"));
        assert!(check_coercivity(&s, 0).is_err());
        assert!(check_product_norm_lower(&s, 0).is_err());
    }

    #[test]
    fn tampered_constant_fails() {
        let s = spec(0.5, 2, 8);
        let mut c = CoercivityConstants::for_spec(&s);
        c.big_c1 *= 10.0;
        let r = verify_with(&s, 200, &c).unwrap();
        assert!(!r.passed);
        assert!(r.coercivity.lower_scaled < -TOL_COERCIVITY);
    }

    #[test]
    fn product_norm_examples() {
        let s = spec(0.5, 2, 8);
        let model = EnergyModel::from_spec(&s).unwrap();
        assert_eq!(
            product_norm_margin(&model, &HybridFunction::zeros(&s.domain)),
            0.0
        );
        let one = HybridFunction::constant(&s.domain, 1.0);
        assert!(product_norm_margin(&model, &one).abs() < 1e-14);
    }

    #[test]
    fn numerator_matrix_matches_mean_stats() {
        let s = spec(0.5, 3, 6);
        let b = poincare_numerator(&s);
        for u in RandomFunctions::new(&s.domain, 9).take(20) {
            let x = u.to_vector();
            assert!((x.dot(&(&b * &x)) - mean_stats(&u).deviation()).abs() < 1e-12);
        }
        let e = DVector::from_element(s.domain.dim(), 1.0);
        assert!((&b * e).amax() < 1e-14);
    }

    #[test]
    fn poincare_matches_dense_eigen() {
        for (alpha, n, m) in [(0.5, 2, 8), (0.25, 3, 8), (0.75, 5, 4)] {
            let s = spec(alpha, n, m);
            let est = poincare_estimate(&s).unwrap();
            let a = assemble(&s).unwrap().full_matrix();
            let b = poincare_numerator(&s);
            let chol = deflated_cholesky(&a).unwrap();
            let li = chol.l().try_inverse().unwrap();
            let c = &li * b * li.transpose();
            let dense = ((&c + c.transpose()) * 0.5).symmetric_eigenvalues().max();
            assert!(
                (est.theta_max - dense).abs() <= 1e-7 * dense,
                "{} {}",
                est.theta_max,
                dense
            );
            assert!(est.passes(TOL_POINCARE));
        }
    }

    #[test]
    fn poincare_dominates_trial_and_reports_cap() {
        let s = spec(0.5, 2, 8);
        let est = poincare_estimate(&s).unwrap();
        assert!((est.upper_bound - 4.5).abs() < 1e-14);
        let model = EnergyModel::from_spec(&s).unwrap();
        let u = HybridFunction::new(&s.domain, vec![0.0; 9], vec![1.0, 1.0]).unwrap();
        let trial = mean_stats(&u).deviation() / model.total(&u);
        assert!(est.theta_max >= trial);
        let err = poincare_estimate_capped(&s, 1).unwrap_err();
        assert!(err.to_string().contains("eigeniteration did not converge"));
    }

    #[test]
    fn proof_constants_bracket_discrete_range() {
        for (alpha, n) in [(0.25, 2), (0.5, 3), (0.75, 5), (0.25, 5)] {
            let s = spec(alpha, n, 16);
            let c = CoercivityConstants::for_spec(&s);
            let (lo, hi) = discrete_coercivity_range(&s).unwrap();
            assert!(
                lo >= c.big_c1 * (1.0 - 1e-9),
                "{alpha} {n}: {lo} < {}",
                c.big_c1
            );
            assert!(
                hi <= c.big_c2 * (1.0 + 1e-9),
                "{alpha} {n}: {hi} > {}",
                c.big_c2
            );
        }
    }

    #[test]
    fn direct_energy_agrees() {
        let s = spec(0.5, 2, 8);
        let model = EnergyModel::from_spec(&s).unwrap();
        for u in RandomFunctions::new(&s.domain, 2).take(5) {
            let total = model.total(&u);
            assert!((direct_energy(&u, &s).unwrap() - total).abs() <= 1e-8 * (1.0 + total));
        }
    }
}
