//! Oracles shared by the integration tests. None of them goes through the
//! assembled matrices or the closed-form reduced system.

#![allow(dead_code)]

use hybrid_nonlocal::example::ReducedAffineState;
use hybrid_nonlocal::{example_spec, Forcing, HybridFunction, Problem, ProblemSpec};

pub const ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];
pub const NODES: [usize; 3] = [2, 3, 5];
pub const MESHES: [usize; 2] = [16, 64];

/// Every `(α, N, M)` of the verification grid, with zero forcing and λ = 1.
pub fn grid() -> Vec<ProblemSpec> {
    let mut out = Vec::new();
    for &alpha in &ALPHAS {
        for &n in &NODES {
            for &m in &MESHES {
                let d = hybrid_nonlocal::make_domain(alpha, n, m).unwrap();
                out.push(ProblemSpec::unforced(d));
            }
        }
    }
    out
}

/// The two-node instance with `λ = 1`, `f ≡ 0`, `F = G = 1`.
pub fn canned(m: usize) -> ProblemSpec {
    example_spec(0.5, 1.0, &Forcing::zero(2), 1.0, 1.0, m).unwrap()
}

/// Minimizes `J` over `(m, c, a, b)` using only evaluations of `J` on the
/// one-cell mesh (where affine functions are exactly representable): a
/// coarse grid search, then coordinate descent with three-point parabolic
/// steps until no coordinate moves by more than `1e-12`.
pub fn brute_force_reduced(
    alpha: f64,
    lambda: f64,
    f: &Forcing,
    big_f: f64,
    big_g: f64,
) -> ReducedAffineState {
    let spec = example_spec(alpha, lambda, f, big_f, big_g, 1).unwrap();
    let problem = Problem::new(&spec).unwrap();
    let j = |z: &[f64; 4]| {
        let u =
            HybridFunction::new(&spec.domain, vec![z[1], z[0] + z[1]], vec![z[2], z[3]]).unwrap();
        problem.j(&u)
    };

    let ticks: Vec<f64> = (-8..=8).map(|i| i as f64 * 0.25).collect();
    let mut best = ([0.0; 4], f64::INFINITY);
    for &m in &ticks {
        for &c in &ticks {
            for &a in &ticks {
                for &b in &ticks {
                    let z = [m, c, a, b];
                    let v = j(&z);
                    if v < best.1 {
                        best = (z, v);
                    }
                }
            }
        }
    }

    let mut z = best.0;
    for _ in 0..100_000 {
        let mut moved: f64 = 0.0;
        for i in 0..4 {
            let h = 0.1;
            let mut lo = z;
            lo[i] -= h;
            let mut hi = z;
            hi[i] += h;
            let (jl, j0, jh) = (j(&lo), j(&z), j(&hi));
            let curv = jl - 2.0 * j0 + jh;
            if curv > 0.0 {
                let step = -h * (jh - jl) / (2.0 * curv);
                z[i] += step;
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    ReducedAffineState {
        m: z[0],
        c: z[1],
        a: z[2],
        b: z[3],
    }
}
