//! Reproducible random hybrid functions for property sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{HybridDomain, HybridFunction};

/// Draws hybrid functions with independent standard normal coefficients.
#[derive(Debug, Clone)]
pub struct RandomFunctions {
    domain: HybridDomain,
    rng: ChaCha8Rng,
}

impl RandomFunctions {
    pub fn new(domain: &HybridDomain, seed: u64) -> Self {
        Self {
            domain: *domain,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> HybridFunction {
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect()
        };
        let cont = draw(self.domain.num_cont_dofs());
        let nodes = draw(self.domain.num_nodes());
        HybridFunction {
            cont_coeffs: cont,
            node_values: nodes,
        }
    }
}

impl Iterator for RandomFunctions {
    type Item = HybridFunction;

    fn next(&mut self) -> Option<HybridFunction> {
        Some(self.sample())
    }
}

/// `count` random functions from `seed`.
pub fn random_functions(domain: &HybridDomain, seed: u64, count: usize) -> Vec<HybridFunction> {
    RandomFunctions::new(domain, seed).take(count).collect()
}
