//! Discrete weak problem: direct solve, functional evaluation and residuals.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, assemble_load};
use crate::domain::{HybridFunction, ProblemSpec};
use crate::energy::{interface_cell_form, l2_mu_inner, l2_mu_norm_sq, EnergyModel};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_integral, interface_weight};
use crate::random::RandomFunctions;

/// Exclusion radii for the principal value in the continuous residual.
pub const PV_RADII: [f64; 2] = [1e-2, 1e-3];

/// Interior points at which the continuous residual is sampled; none of them
/// is a breakpoint of a dyadic mesh.
pub const STRONG_SAMPLE_POINTS: [f64; 5] = [0.1, 0.3, 0.55, 0.7, 0.9];

const MAX_REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub u: HybridFunction,
    pub j_value: f64,
    pub weak_residual: f64,
    pub node_residuals: Vec<f64>,
    pub solver_iterations: usize,
    pub spd_certified: bool,
}

/// A problem with its energy model and load vector built once.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub model: EnergyModel,
    pub load: DVector<f64>,
}

impl Problem {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            model: EnergyModel::from_spec(spec)?,
            load: assemble_load(spec)?,
        })
    }

    fn check_dims(&self, u: &HybridFunction) -> Result<()> {
        let d = &self.spec.domain;
        if u.cont_coeffs.len() != d.num_cont_dofs() {
            return Err(Error::DimensionMismatch {
                what: "cont_coeffs",
                expected: d.num_cont_dofs(),
                found: u.cont_coeffs.len(),
            });
        }
        if u.node_values.len() != d.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "node_values",
                expected: d.num_nodes(),
                found: u.node_values.len(),
            });
        }
        Ok(())
    }

    /// `½E(u) + λ/2 ‖u‖² - (f, u)_μ`.
    pub fn j(&self, u: &HybridFunction) -> f64 {
        0.5 * self.model.total(u) + 0.5 * self.spec.lambda * l2_mu_norm_sq(u)
            - self.load.dot(&u.to_vector())
    }

    /// Gâteaux derivative of `J` at `u` tested against each basis function,
    /// from freshly evaluated pairings.
    pub fn gradient(&self, u: &HybridFunction) -> DVector<f64> {
        let mut g = self.model.apply(u);
        let h = self.spec.domain.cell_width();
        let v = &u.cont_coeffs;
        let lambda = self.spec.lambda;
        for i in 0..v.len() - 1 {
            g[i] += lambda * h * (2.0 * v[i] + v[i + 1]) / 6.0;
            g[i + 1] += lambda * h * (v[i] + 2.0 * v[i + 1]) / 6.0;
        }
        let nc = v.len();
        for (k, a) in u.node_values.iter().enumerate() {
            g[nc + k] += lambda * a;
        }
        g - &self.load
    }

    pub fn weak_residual(&self, u: &HybridFunction) -> f64 {
        self.gradient(u).amax()
    }

    /// `|2∫(a_k - v) w_k + 2Σ_j (a_k - a_j)|k-j|^{-(1+2α)} + λ a_k - f(k)|`.
    pub fn node_residuals(&self, u: &HybridFunction) -> Vec<f64> {
        let d = &self.spec.domain;
        let v = &u.cont_coeffs;
        let a = &u.node_values;
        (0..d.num_nodes())
            .map(|k| {
                let pos = d.node_position(k);
                let interface: f64 = d
                    .cells()
                    .enumerate()
                    .map(|(i, cell)| {
                        let g = interface_cell_form(pos, d.alpha(), cell);
                        // φ_lo + φ_hi = 1, so a - v = (a - v_lo) φ_lo + (a - v_hi) φ_hi
                        -(a[k] - v[i]) * g[0][1] - (a[k] - v[i + 1]) * g[0][2]
                    })
                    .sum();
                let discrete: f64 = (0..d.num_nodes())
                    .filter(|&j| j != k)
                    .map(|j| (a[k] - a[j]) * (k as f64 - j as f64).abs().powf(-d.exponent()))
                    .sum();
                (2.0 * interface + 2.0 * discrete + self.spec.lambda * a[k]
                    - self.spec.forcing.node_loads[k])
                    .abs()
            })
            .collect()
    }
}

pub fn evaluate_j(u: &HybridFunction, spec: &ProblemSpec) -> Result<f64> {
    let p = Problem::new(spec)?;
    p.check_dims(u)?;
    Ok(p.j(u))
}

/// Solves `(A + λ·mass) x = load` by Cholesky factorization with a few
/// steps of iterative refinement.
pub fn solve(spec: &ProblemSpec) -> Result<Solution> {
    let problem = Problem::new(spec)?;
    solve_problem(&problem)
}

pub fn solve_problem(problem: &Problem) -> Result<Solution> {
    let spec = &problem.spec;
    let sys = assemble(spec)?;
    let s = sys.system_matrix(spec.lambda);
    let chol = Cholesky::new(s.clone()).ok_or(Error::NotPositiveDefinite)?;
    let mut x = chol.solve(&sys.load);
    let mut steps = 0;
    let mut res_norm = (&sys.load - &s * &x).amax();
    while steps < MAX_REFINEMENT_STEPS && res_norm > 0.0 {
        let r = &sys.load - &s * &x;
        let candidate = &x + chol.solve(&r);
        let next = (&sys.load - &s * &candidate).amax();
        if next >= res_norm {
            break;
        }
        x = candidate;
        res_norm = next;
        steps += 1;
    }
    let u = HybridFunction::from_vector(&spec.domain, &x)?;
    Ok(Solution {
        j_value: problem.j(&u),
        weak_residual: problem.weak_residual(&u),
        node_residuals: problem.node_residuals(&u),
        solver_iterations: steps,
        spd_certified: true,
        u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousResidual {
    pub x: f64,
    pub epsilon: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongResiduals {
    pub continuous: Vec<ContinuousResidual>,
    pub node_residuals: Vec<f64>,
}

/// Pointwise residuals of the formal strong system. The continuous ones
/// replace the principal value by symmetric exclusion of radius `ε` and are
/// diagnostics only.
pub fn strong_residuals(sol: &Solution, spec: &ProblemSpec) -> Result<StrongResiduals> {
    let problem = Problem::new(spec)?;
    problem.check_dims(&sol.u)?;
    let u = &sol.u;
    let d = &spec.domain;
    let s = d.exponent();
    let breaks = d.breakpoints();
    let mut continuous = Vec::new();
    for &eps in &PV_RADII {
        for &x in &STRONG_SAMPLE_POINTS {
            let vx = u.eval_unchecked(x);
            let integrand = |y: f64| (vx - u.eval_unchecked(y)) * (x - y).abs().powf(-s);
            let mut pv = 0.0;
            for (lo, hi) in [(0.0, x - eps), (x + eps, 1.0)] {
                let mut cuts = vec![lo];
                cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
                cuts.push(hi);
                for w in cuts.windows(2) {
                    pv += adaptive_integral(&integrand, w[0], w[1], 1e-12);
                }
            }
            let coupling: f64 = d
                .node_positions()
                .into_iter()
                .zip(&u.node_values)
                .map(|(k, a)| (vx - a) * interface_weight(k, d.alpha(), x))
                .sum();
            let residual = 2.0 * pv + 2.0 * coupling + spec.lambda * vx - spec.forcing.eval(x);
            continuous.push(ContinuousResidual {
                x,
                epsilon: eps,
                residual,
            });
        }
    }
    Ok(StrongResiduals {
        continuous,
        node_residuals: problem.node_residuals(u),
    })
}

/// Central-difference step used by [`gradient_check`]. `J` is quadratic so
/// the difference quotient is exact for every step.
pub const FD_STEP: f64 = 1e-2;

/// Worst relative mismatch between the analytic derivative of `J` and its
/// central difference quotient over `samples` random directions.
///
/// The derivative `a(u,φ) + λ(u,φ)_μ - (f,φ)_μ` vanishes at the minimizer,
/// so the error is measured against `|a(u,φ)| + λ|(u,φ)_μ| + |(f,φ)_μ|`.
pub fn gradient_check(spec: &ProblemSpec, u: &HybridFunction, samples: usize) -> Result<f64> {
    let problem = Problem::new(spec)?;
    problem.check_dims(u)?;
    let applied = problem.model.apply(u);
    let mut dirs = RandomFunctions::new(&spec.domain, spec.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let phi = dirs.sample();
        let x = phi.to_vector();
        let terms = [
            applied.dot(&x),
            spec.lambda * l2_mu_inner(u, &phi),
            -problem.load.dot(&x),
        ];
        let analytic: f64 = terms.iter().sum();
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        let fd = (problem.j(&u.axpy(FD_STEP, &phi)) - problem.j(&u.axpy(-FD_STEP, &phi)))
            / (2.0 * FD_STEP);
        if scale > 0.0 {
            worst = worst.max((fd - analytic).abs() / scale);
        } else if fd != 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

/// `‖f‖_{L^2(μ)}`, integrating the continuous part adaptively.
pub fn forcing_l2_mu_norm(spec: &ProblemSpec) -> f64 {
    let f = &spec.forcing;
    let cont: f64 = f
        .smooth_pieces(0.0, 1.0)
        .into_iter()
        .map(|(lo, hi)| adaptive_integral(&|x| f.eval(x).powi(2), lo, hi, 1e-14))
        .sum();
    (cont + f.node_loads.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterativeResult {
    pub u: HybridFunction,
    pub j_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative decrease of `J` below which the iterative minimizer stops.
pub const ITERATIVE_REL_DECREASE: f64 = 1e-14;
pub const ITERATIVE_MAX_ITER: usize = 100_000;

/// Minimizes `J` by nonlinear conjugate gradients with exact line search,
/// using only evaluations of the energy and its matrix-free derivative.
/// Serves as an oracle independent of the assembled matrix.
pub fn minimize_iteratively(problem: &Problem, start: &HybridFunction) -> Result<IterativeResult> {
    problem.check_dims(start)?;
    let domain = problem.spec.domain;
    let lambda = problem.spec.lambda;
    let restart = domain.dim();
    let mut u = start.clone();
    let mut g = problem.gradient(&u);
    let mut d = -&g;
    let mut j = problem.j(&u);
    let mut gg = g.norm_squared();
    for it in 0..ITERATIVE_MAX_ITER {
        if gg == 0.0 {
            return Ok(IterativeResult {
                u,
                j_value: j,
                iterations: it,
                converged: true,
            });
        }
        let dir = HybridFunction::from_vector(&domain, &d)?;
        let curvature = problem.model.total(&dir) + lambda * l2_mu_norm_sq(&dir);
        let slope = g.dot(&d);
        if !(curvature > 0.0) || slope >= 0.0 {
            // lost descent; restart along the steepest direction
            d = -&g;
            continue;
        }
        let step = -slope / curvature;
        u = u.axpy(step, &dir);
        let decrease = 0.5 * slope * slope / curvature;
        j = problem.j(&u);
        let g_new = problem.gradient(&u);
        let gg_new = g_new.norm_squared();
        if decrease <= ITERATIVE_REL_DECREASE * j.abs().max(f64::MIN_POSITIVE) {
            return Ok(IterativeResult {
                u,
                j_value: j,
                iterations: it + 1,
                converged: true,
            });
        }
        let beta = if (it + 1) % restart == 0 {
            0.0
        } else {
            // Polak–Ribière, clipped at zero
            (gg_new - g_new.dot(&g)).max(0.0) / gg
        };
        d = -&g_new + d * beta;
        g = g_new;
        gg = gg_new;
    }
    Ok(IterativeResult {
        j_value: problem.j(&u),
        u,
        iterations: ITERATIVE_MAX_ITER,
        converged: false,
    })
}

/// A reproducible random starting point for the iterative minimizer.
pub fn random_start(problem: &Problem, seed: u64) -> HybridFunction {
    RandomFunctions::new(&problem.spec.domain, seed).sample()
}

/// Distance of `u` and `w` in the norm `(‖·‖²_{L²(μ)} + E)^{1/2}`.
pub fn hybrid_distance(problem: &Problem, u: &HybridFunction, w: &HybridFunction) -> f64 {
    let diff = u - w;
    (l2_mu_inner(&diff, &diff) + problem.model.total(&diff))
        .max(0.0)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_domain, Forcing};

    fn example(m: usize) -> ProblemSpec {
        let d = make_domain(0.5, 2, m).unwrap();
        ProblemSpec::new(d, 1.0, Forcing::constant(0.0, vec![1.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let s = ProblemSpec::unforced(make_domain(0.5, 3, 8).unwrap());
        let sol = solve(&s).unwrap();
        assert!(sol.u.to_vector().amax() == 0.0);
        assert_eq!(sol.j_value, 0.0);
        assert!(sol.spd_certified);
        assert_eq!(
            evaluate_j(&HybridFunction::zeros(&s.domain), &s).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_forcing_gives_constant() {
        for alpha in [0.2, 0.5, 0.9] {
            let d = make_domain(alpha, 3, 8).unwrap();
            let c = 1.7;
            let lambda = 0.5;
            let s = ProblemSpec::new(d, lambda, Forcing::constant(c, vec![c; 3]).unwrap()).unwrap();
            let sol = solve(&s).unwrap();
            let expect = c / lambda;
            assert!(sol.u.to_vector().iter().all(|x| (x - expect).abs() < 1e-10));
            assert!(sol.weak_residual <= 1e-8);
        }
    }

    #[test]
    fn example_solve_is_converged() {
        let s = example(16);
        let sol = solve(&s).unwrap();
        assert!(sol.weak_residual <= 1e-10, "{}", sol.weak_residual);
        assert!(sol.node_residuals.iter().all(|r| *r <= 1e-10));
        let problem = Problem::new(&s).unwrap();
        let mut dirs = RandomFunctions::new(&s.domain, 1);
        for _ in 0..25 {
            let phi = dirs.sample();
            for t in [1e-2, -1e-2, 1e-1, -1e-1] {
                assert!(sol.j_value <= problem.j(&sol.u.axpy(t, &phi)));
            }
            let t = 1e-5;
            let dj =
                (problem.j(&sol.u.axpy(t, &phi)) - problem.j(&sol.u.axpy(-t, &phi))) / (2.0 * t);
            assert!(dj.abs() <= 1e-6 * phi.to_vector().norm());
        }
    }

    #[test]
    fn gradient_check_is_exact() {
        let mut s = example(32);
        s.forcing = Forcing::sine(1.0, 2.0, 0.3, vec![0.5, -1.0]).unwrap();
        for u in RandomFunctions::new(&s.domain, 4).take(5) {
            assert!(gradient_check(&s, &u, 10).unwrap() <= 1e-7);
        }
        let zero = ProblemSpec::unforced(s.domain);
        assert_eq!(
            gradient_check(&zero, &HybridFunction::zeros(&s.domain), 5).unwrap(),
            0.0
        );
    }

    #[test]
    fn iterative_oracle_agrees() {
        let s = example(16);
        let problem = Problem::new(&s).unwrap();
        let sol = solve_problem(&problem).unwrap();
        let it = minimize_iteratively(&problem, &HybridFunction::zeros(&s.domain)).unwrap();
        assert!(it.converged);
        assert!(hybrid_distance(&problem, &it.u, &sol.u) <= 1e-6);
    }

    #[test]
    fn strong_node_residuals_vanish_for_constants() {
        let d = make_domain(0.5, 2, 8).unwrap();
        let s = ProblemSpec::new(d, 2.0, Forcing::constant(3.0, vec![3.0, 3.0]).unwrap()).unwrap();
        let u = HybridFunction::constant(&d, 1.5);
        let sol = Solution {
            u,
            j_value: 0.0,
            weak_residual: 0.0,
            node_residuals: vec![],
            solver_iterations: 0,
            spd_certified: true,
        };
        let r = strong_residuals(&sol, &s).unwrap();
        assert_eq!(r.node_residuals, vec![0.0, 0.0]);
        assert_eq!(
            r.continuous.len(),
            PV_RADII.len() * STRONG_SAMPLE_POINTS.len()
        );
        assert!(r.continuous.iter().all(|c| c.residual.abs() < 1e-12));
    }

    #[test]
    fn stability_bound() {
        let d = make_domain(0.3, 3, 16).unwrap();
        let f = Forcing::polynomial(vec![1.0, -2.0, 4.0], vec![0.5, 2.0, -1.0]).unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let s = ProblemSpec::new(d, lambda, f.clone()).unwrap();
            let sol = solve(&s).unwrap();
            assert!(l2_mu_norm_sq(&sol.u).sqrt() <= forcing_l2_mu_norm(&s) / lambda);
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let s = example(8);
        let u = HybridFunction::zeros(&make_domain(0.5, 2, 4).unwrap());
        assert!(matches!(
            evaluate_j(&u, &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
