//! The two-node instance `T = [0,1] ∪ {2,3}` with node values `a = u(2)`,
//! `b = u(3)` and node loads `F`, `G`.

use nalgebra::{Cholesky, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::domain::{make_domain, Forcing, HybridDomain, HybridFunction, ProblemSpec};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_integral, kernel_moment};
use crate::solver::{Problem, Solution};

pub fn example_spec(
    alpha: f64,
    lambda: f64,
    f: &Forcing,
    big_f: f64,
    big_g: f64,
    mesh_intervals: usize,
) -> Result<ProblemSpec> {
    let domain = make_domain(alpha, 2, mesh_intervals)?;
    ProblemSpec::new(domain, lambda, f.with_node_loads(vec![big_f, big_g])?)
}

/// `u = (m x + c, a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedAffineState {
    pub m: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
}

impl ReducedAffineState {
    pub fn from_vector(z: &Vector4<f64>) -> Self {
        Self {
            m: z[0],
            c: z[1],
            a: z[2],
            b: z[3],
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.m, self.c, self.a, self.b)
    }

    /// The same function in the mesh space of `domain` (which must have two
    /// nodes); exact since affine functions are piecewise linear.
    pub fn embed(&self, domain: &HybridDomain) -> Result<HybridFunction> {
        let (m, c) = (self.m, self.c);
        HybridFunction::interpolate(domain, |x| m * x + c, vec![self.a, self.b])
    }
}

/// `∫_0^1 f` and `∫_0^1 x f`.
fn forcing_moments(f: &Forcing) -> (f64, f64) {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for (lo, hi) in f.smooth_pieces(0.0, 1.0) {
        m0 += adaptive_integral(&|x| f.eval(x), lo, hi, 1e-15);
        m1 += adaptive_integral(&|x| x * f.eval(x), lo, hi, 1e-15);
    }
    (m0, m1)
}

/// Hessian `H` and linear term `g` of `J` restricted to `(m, c, a, b)`, so
/// that `J = ½ zᵀ H z - gᵀ z`.
pub fn reduced_system(
    alpha: f64,
    lambda: f64,
    f: &Forcing,
    big_f: f64,
    big_g: f64,
) -> Result<(Matrix4<f64>, Vector4<f64>)> {
    make_domain(alpha, 2, 1)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::ParameterOutOfRange {
            field: "lambda",
            message: format!("lambda must be > 0: got {lambda}"),
        });
    }
    // E(z) = zᵀ P z
    let mut p = Matrix4::zeros();
    p[(0, 0)] = 1.0 / ((1.0 - alpha) * (3.0 - 2.0 * alpha));
    for (idx, k) in [(2, 2), (3, 3)] {
        let m0 = kernel_moment(k, alpha, 0)?;
        let m1 = kernel_moment(k, alpha, 1)?;
        let m2 = kernel_moment(k, alpha, 2)?;
        // 2[(a_k - c)² m0 - 2 (a_k - c) m m1 + m² m2]
        p[(idx, idx)] += 2.0 * m0;
        p[(1, 1)] += 2.0 * m0;
        p[(idx, 1)] -= 2.0 * m0;
        p[(1, idx)] -= 2.0 * m0;
        p[(idx, 0)] -= 2.0 * m1;
        p[(0, idx)] -= 2.0 * m1;
        p[(1, 0)] += 2.0 * m1;
        p[(0, 1)] += 2.0 * m1;
        p[(0, 0)] += 2.0 * m2;
    }
    // 2|a - b|²
    p[(2, 2)] += 2.0;
    p[(3, 3)] += 2.0;
    p[(2, 3)] -= 2.0;
    p[(3, 2)] -= 2.0;

    // ‖u‖² = m²/3 + m c + c² + a² + b²
    let mass = Matrix4::new(
        1.0 / 3.0,
        0.5,
        0.0,
        0.0, //
        0.5,
        1.0,
        0.0,
        0.0, //
        0.0,
        0.0,
        1.0,
        0.0, //
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let (f0, f1) = forcing_moments(f);
    Ok((p + mass * lambda, Vector4::new(f1, f0, big_f, big_g)))
}

/// Minimizer of `J` over affine continuous parts.
pub fn reduced_solve(
    alpha: f64,
    lambda: f64,
    f: &Forcing,
    big_f: f64,
    big_g: f64,
) -> Result<ReducedAffineState> {
    let (h, g) = reduced_system(alpha, lambda, f, big_f, big_g)?;
    let chol = Cholesky::new(h).ok_or(Error::NotPositiveDefinite)?;
    Ok(ReducedAffineState::from_vector(&chol.solve(&g)))
}

/// `J` of an affine state in closed form.
pub fn reduced_j(
    state: &ReducedAffineState,
    alpha: f64,
    lambda: f64,
    f: &Forcing,
    big_f: f64,
    big_g: f64,
) -> Result<f64> {
    let (h, g) = reduced_system(alpha, lambda, f, big_f, big_g)?;
    let z = state.to_vector();
    Ok(0.5 * z.dot(&(h * z)) - g.dot(&z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingCheck {
    pub cont_ok: bool,
    /// Largest continuous-row residual over the hat test functions.
    pub cont_residual: f64,
    pub node_a_res: f64,
    pub node_b_res: f64,
}

impl SplittingCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.cont_ok && self.node_a_res <= tol && self.node_b_res <= tol
    }
}

/// Checks the continuous equation against every hat function and the two
/// scalar node equations separately.
pub fn check_splitting(sol: &Solution, spec: &ProblemSpec) -> Result<SplittingCheck> {
    if spec.domain.num_nodes() != 2 {
        return Err(Error::ParameterOutOfRange {
            field: "num_nodes",
            message: format!(
                "num_nodes must be 2 for the splitting check: got {}",
                spec.domain.num_nodes()
            ),
        });
    }
    let problem = Problem::new(spec)?;
    let nc = spec.domain.num_cont_dofs();
    let g = problem.gradient(&sol.u);
    let cont_residual = g.rows(0, nc).amax();
    let nodes = problem.node_residuals(&sol.u);
    Ok(SplittingCheck {
        cont_ok: cont_residual <= spec.tol_solve,
        cont_residual,
        node_a_res: nodes[0],
        node_b_res: nodes[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyModel;
    use crate::solver::solve;

    fn zero() -> Forcing {
        Forcing::zero(2)
    }

    #[test]
    fn spec_has_two_nodes() {
        let s = example_spec(0.5, 1.0, &zero(), 1.0, 1.0, 64).unwrap();
        assert_eq!(s.domain.node_positions(), vec![2, 3]);
        assert_eq!(s.forcing.node_loads, vec![1.0, 1.0]);
        let s0 = example_spec(0.5, 1.0, &zero(), 0.0, 0.0, 8).unwrap();
        assert_eq!(solve(&s0).unwrap().u.to_vector().amax(), 0.0);
        assert!(example_spec(1.0, 1.0, &zero(), 0.0, 0.0, 8).is_err());
    }

    #[test]
    fn example_energy_has_node_coupling() {
        // v = 0, a = 1, b = -1: e_cd = m0_2 + m0_3 and e_dd = 2|a - b|² = 8
        let s = example_spec(0.5, 1.0, &zero(), 0.0, 0.0, 4).unwrap();
        let u = HybridFunction::new(&s.domain, vec![0.0; 5], vec![1.0, -1.0]).unwrap();
        let b = EnergyModel::from_spec(&s).unwrap().breakdown(&u);
        assert_eq!(b.e_dd, 8.0);
        assert!((b.e_cd - (0.5 + 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn reduced_trivial_cases() {
        let z = reduced_solve(0.5, 1.0, &zero(), 0.0, 0.0).unwrap();
        assert_eq!(z.to_vector(), Vector4::zeros());
        for (alpha, lambda, c0) in [(0.3, 2.0, 1.5), (0.8, 0.5, -2.0)] {
            let f = Forcing::constant(lambda * c0, vec![]).unwrap();
            let z = reduced_solve(alpha, lambda, &f, lambda * c0, lambda * c0).unwrap();
            let expect = Vector4::new(0.0, c0, c0, c0);
            assert!((z.to_vector() - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn reduced_system_is_spd() {
        for alpha in [0.05, 0.25, 0.5, 0.75, 0.95] {
            for lambda in [1e-3, 1.0, 1e3] {
                let (h, _) = reduced_system(alpha, lambda, &zero(), 1.0, 1.0).unwrap();
                assert!((h - h.transpose()).amax() == 0.0);
                assert!(Cholesky::new(h).is_some());
            }
        }
    }

    #[test]
    fn reduced_j_matches_mesh_functional() {
        let f = Forcing::polynomial(vec![1.0, 2.0], vec![]).unwrap();
        let s = example_spec(0.5, 1.5, &f, 0.3, -0.7, 1).unwrap();
        let problem = Problem::new(&s).unwrap();
        let state = ReducedAffineState {
            m: 0.7,
            c: -0.2,
            a: 1.1,
            b: 0.4,
        };
        let u = state.embed(&s.domain).unwrap();
        let closed = reduced_j(&state, 0.5, 1.5, &f, 0.3, -0.7).unwrap();
        assert!((problem.j(&u) - closed).abs() < 1e-10);
    }

    #[test]
    fn splitting_of_converged_solve() {
        let s = example_spec(0.5, 1.0, &zero(), 1.0, 1.0, 16).unwrap();
        let sol = solve(&s).unwrap();
        let check = check_splitting(&sol, &s).unwrap();
        assert!(check.passes(1e-8));

        let mut bad = sol.clone();
        bad.u.node_values[0] += 0.1;
        let m0 = kernel_moment(2, 0.5, 0).unwrap();
        let check = check_splitting(&bad, &s).unwrap();
        assert!(check.node_a_res > 0.1 * (1.0 + 2.0 * m0 + 2.0) - 1e-8);

        let mut bad = sol.clone();
        bad.u.cont_coeffs[5] += 0.1;
        assert!(!check_splitting(&bad, &s).unwrap().cont_ok);
    }

    #[test]
    fn splitting_constant_solution() {
        let f = Forcing::constant(2.0, vec![]).unwrap();
        let s = example_spec(0.5, 2.0, &f, 2.0, 2.0, 8).unwrap();
        let sol = solve(&s).unwrap();
        let check = check_splitting(&sol, &s).unwrap();
        assert_eq!((check.node_a_res, check.node_b_res), (0.0, 0.0));
    }

    #[test]
    fn splitting_requires_two_nodes() {
        let s = ProblemSpec::unforced(make_domain(0.5, 3, 4).unwrap());
        let sol = solve(&s).unwrap();
        assert_eq!(
            check_splitting(&sol, &s).unwrap_err().field(),
            Some("num_nodes")
        );
    }
}
