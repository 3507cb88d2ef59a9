//! Acceptance gate: one line per criterion, then a single assertion that
//! every criterion passed. Runs without the test harness so the lines are
//! always printed.

mod common;

use std::time::{Duration, Instant};

use hybrid_nonlocal::analysis::{
    check_energy_identity, poincare_estimate, verify, CoercivityConstants, TOL_COERCIVITY,
    TOL_INTERFACE, TOL_POINCARE,
};
use hybrid_nonlocal::energy::{mean_stats, node_l2_distance_sq};
use hybrid_nonlocal::example::reduced_j;
use hybrid_nonlocal::random::RandomFunctions;
use hybrid_nonlocal::solver::{hybrid_distance, minimize_iteratively, solve_problem};
use hybrid_nonlocal::{
    check_splitting, energy_cc, gradient_check, make_domain, reduced_solve, Forcing,
    HybridFunction, Problem, ProblemSpec,
};

const SUITE_BUDGET: Duration = Duration::from_secs(300);

struct Gate {
    results: Vec<(usize, bool)>,
}

impl Gate {
    fn report(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id:>2}: {name}: {detail}");
        self.results.push((id, pass));
    }
}

fn energy_identity(gate: &mut Gate) {
    let mut spec = ProblemSpec::unforced(make_domain(0.5, 2, 32).unwrap());
    spec.seed = 2024;
    let worst = check_energy_identity(&spec, 100).unwrap();
    gate.report(
        1,
        "energy decomposition vs direct μ⊗μ quadrature",
        worst <= 1e-8,
        format!("worst |total - direct|/(1 + total) = {worst:.3e} (tol 1e-8, 100 samples)"),
    );
}

fn seminorm_oracle(gate: &mut Gate) {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for alpha in [0.25, 0.5, 0.75] {
        let spec = ProblemSpec::unforced(make_domain(alpha, 2, 64).unwrap());
        let u = HybridFunction::interpolate(&spec.domain, |x| x, vec![0.0, 0.0]).unwrap();
        let exact = 1.0 / ((1.0 - alpha) * (3.0 - 2.0 * alpha));
        let err = (energy_cc(&u, &spec).unwrap() - exact).abs();
        worst = worst.max(err);
        parts.push(format!("α={alpha}: {err:.2e}"));
    }
    gate.report(
        2,
        "seminorm of v(x) = x at M = 64",
        worst <= 1e-6,
        format!("{} (tol 1e-6)", parts.join(", ")),
    );
}

fn mean_decomposition(gate: &mut Gate) {
    let d = make_domain(0.5, 3, 32).unwrap();
    let mut worst: f64 = 0.0;
    for u in RandomFunctions::new(&d, 77).take(1000) {
        let st = mean_stats(&u);
        let mut sum_lhs = 0.0;
        for (k, &a) in u.node_values.iter().enumerate() {
            let lhs = node_l2_distance_sq(&u, a);
            sum_lhs += lhs;
            worst = worst.max((lhs - st.node_dev_sq[k] - st.osc_sq).abs());
        }
        let n = u.node_values.len() as f64;
        let sum_rhs: f64 = st.node_dev_sq.iter().sum::<f64>() + n * st.osc_sq;
        worst = worst.max((sum_lhs - sum_rhs).abs());
    }
    gate.report(
        3,
        "mean decomposition exactness",
        worst <= 1e-12,
        format!("worst residual = {worst:.3e} (tol 1e-12, 1000 samples)"),
    );
}

fn inequality_sweeps(gate: &mut Gate) {
    let mut interface_ok = true;
    let mut coercivity_ok = true;
    let (mut wi, mut wc) = (f64::INFINITY, f64::INFINITY);
    for spec in common::grid() {
        let r = verify(&spec, 1000).unwrap();
        interface_ok &= r.interface.passes(TOL_INTERFACE);
        coercivity_ok &= r.coercivity.passes(TOL_COERCIVITY);
        wi = wi.min(r.interface.lower_scaled.min(r.interface.upper_scaled));
        wc = wc.min(r.coercivity.lower_scaled.min(r.coercivity.upper_scaled));
    }
    gate.report(
        4,
        "interface estimate with c1 = (N+1)^-(1+2α), c2 = 1",
        interface_ok,
        format!("worst scaled margin = {wi:.3e} (tol -1e-10, 1000 samples x 18 grid points)"),
    );
    gate.report(
        5,
        "interface coercivity with C1 = 2c1, C2 = max(2N, 2+4S)",
        coercivity_ok,
        format!("worst scaled margin = {wc:.3e} (tol -1e-8, 1000 samples x 18 grid points)"),
    );
}

fn poincare(gate: &mut Gate) {
    let mut bounded = true;
    let mut monotone = true;
    let mut worst_ratio: f64 = 0.0;
    let mut example_theta = f64::NAN;
    for &alpha in &common::ALPHAS {
        for &n in &common::NODES {
            let mut prev = f64::NEG_INFINITY;
            for m in [16, 32, 64] {
                let spec = ProblemSpec::unforced(make_domain(alpha, n, m).unwrap());
                let est = poincare_estimate(&spec).unwrap();
                let c = CoercivityConstants::for_spec(&spec);
                bounded &= est.passes(TOL_POINCARE);
                worst_ratio = worst_ratio.max(est.theta_max * c.big_c1);
                monotone &= est.theta_max >= prev;
                prev = est.theta_max;
                if alpha == 0.5 && n == 2 && m == 64 {
                    example_theta = est.theta_max;
                }
            }
        }
    }
    let example_ok = example_theta <= 4.5 + TOL_POINCARE;
    gate.report(
        6,
        "hybrid Poincaré: theta_max <= 1/C1, monotone under M -> 2M",
        bounded && monotone && example_ok,
        format!(
            "max theta·C1 = {worst_ratio:.4}, theta(α=0.5,N=2,M=64) = {example_theta:.6} <= 4.5, monotone = {monotone}"
        ),
    );
}

fn minimizer_equals_weak_solution(gate: &mut Gate) {
    let spec = common::canned(64);
    let problem = Problem::new(&spec).unwrap();
    let sol = solve_problem(&problem).unwrap();
    let iterative = minimize_iteratively(&problem, &HybridFunction::zeros(&spec.domain)).unwrap();
    let dist = hybrid_distance(&problem, &sol.u, &iterative.u);

    let mut fd: f64 = gradient_check(&spec, &sol.u, 50).unwrap();
    let dirs = RandomFunctions::new(&spec.domain, 5).take(10);
    for u in dirs {
        fd = fd.max(gradient_check(&spec, &u, 5).unwrap());
    }
    let pass = iterative.converged && dist <= 1e-6 && sol.weak_residual <= 1e-8 && fd <= 1e-7;
    gate.report(
        7,
        "direct solve = iterative minimizer, weak residual, Gâteaux check",
        pass,
        format!(
            "hybrid-norm gap = {dist:.2e} ({} CG iterations), weak residual = {:.2e}, FD rel err = {fd:.2e}",
            iterative.iterations, sol.weak_residual
        ),
    );
}

fn splitting(gate: &mut Gate) {
    let spec = common::canned(64);
    let sol = hybrid_nonlocal::solve(&spec).unwrap();
    let ok = check_splitting(&sol, &spec).unwrap();
    let mut bad = sol.clone();
    bad.u.node_values[0] += 0.1;
    let perturbed = check_splitting(&bad, &spec).unwrap();
    let pass = ok.passes(1e-8) && perturbed.node_a_res >= 0.05;
    gate.report(
        8,
        "splitting: node equations of the converged solve, perturbation control",
        pass,
        format!(
            "node residuals = ({:.2e}, {:.2e}), perturbed residual = {:.4}",
            ok.node_a_res, ok.node_b_res, perturbed.node_a_res
        ),
    );
}

fn reduced_oracle(gate: &mut Gate) {
    let f = Forcing::zero(2);
    let reduced = reduced_solve(0.5, 1.0, &f, 1.0, 1.0).unwrap();
    let brute = common::brute_force_reduced(0.5, 1.0, &f, 1.0, 1.0);
    let gap = (reduced.to_vector() - brute.to_vector()).amax();
    let j_reduced = reduced_j(&reduced, 0.5, 1.0, &f, 1.0, 1.0).unwrap();
    let spec = common::canned(64);
    let j_full = hybrid_nonlocal::solve(&spec).unwrap().j_value;
    let problem = Problem::new(&spec).unwrap();
    let j_embedded = problem.j(&reduced.embed(&spec.domain).unwrap());
    let pass = gap <= 1e-6 && j_reduced >= j_full && j_embedded >= j_full;
    gate.report(
        9,
        "reduced affine oracle vs brute force, J(reduced) >= J(M = 64)",
        pass,
        format!(
            "coefficient gap = {gap:.2e}, J(reduced) = {j_reduced:.10}, J(M=64) = {j_full:.10}"
        ),
    );
}

fn ladder(gate: &mut Gate, started: Instant) {
    let values: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&m| hybrid_nonlocal::solve(&common::canned(m)).unwrap().j_value)
        .collect();
    let monotone = values.windows(2).all(|w| w[1] <= w[0]);
    let elapsed = started.elapsed();
    let pass = monotone && elapsed < SUITE_BUDGET;
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.10}")).collect();
    gate.report(
        10,
        "nested-mesh monotonicity of J over M = 8, 16, 32, 64, suite time",
        pass,
        format!(
            "J = [{}], elapsed {:.1}s (< 300s)",
            shown.join(", "),
            elapsed.as_secs_f64()
        ),
    );
}

fn main() {
    let started = Instant::now();
    let mut gate = Gate {
        results: Vec::new(),
    };
    energy_identity(&mut gate);
    seminorm_oracle(&mut gate);
    mean_decomposition(&mut gate);
    inequality_sweeps(&mut gate);
    poincare(&mut gate);
    minimizer_equals_weak_solution(&mut gate);
    splitting(&mut gate);
    reduced_oracle(&mut gate);
    ladder(&mut gate, started);

    let failed: Vec<usize> = gate
        .results
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(id, _)| *id)
        .collect();
    println!(
        "acceptance: {}/{} criteria passed",
        gate.results.len() - failed.len(),
        gate.results.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
