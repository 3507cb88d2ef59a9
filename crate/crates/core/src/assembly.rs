//! Galerkin matrices for the hat-function/node-indicator basis.
//!
//! Continuous degrees of freedom come first (`M + 1` hat coefficients),
//! followed by the `N` node values. The full matrix `A` is the Hessian of
//! `E/2`, so `xᵀ A x` reproduces the energy with no extra factors.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::domain::{HybridDomain, LinearPiece, ProblemSpec};
use crate::energy::interface_cell_form;
use crate::error::Result;
use crate::quadrature::{GagliardoQuadrature, GaussRule};

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub domain: HybridDomain,
    pub a_cc: DMatrix<f64>,
    pub a_int_vv: DMatrix<f64>,
    pub a_int_vn: DMatrix<f64>,
    pub a_int_nn: DMatrix<f64>,
    pub a_dd: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub load: DVector<f64>,
    pub dim: usize,
}

impl AssembledSystem {
    /// The energy matrix `A` assembled from its blocks.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let nc = self.domain.num_cont_dofs();
        let n = self.domain.num_nodes();
        let mut a = DMatrix::zeros(self.dim, self.dim);
        a.view_mut((0, 0), (nc, nc))
            .copy_from(&(&self.a_cc + &self.a_int_vv));
        a.view_mut((0, nc), (nc, n)).copy_from(&self.a_int_vn);
        a.view_mut((nc, 0), (n, nc))
            .copy_from(&self.a_int_vn.transpose());
        a.view_mut((nc, nc), (n, n))
            .copy_from(&(&self.a_int_nn + &self.a_dd));
        a
    }

    /// `A + λ·mass`.
    pub fn system_matrix(&self, lambda: f64) -> DMatrix<f64> {
        self.full_matrix() + &self.mass * lambda
    }

    /// Whether `A + λ·mass` admits a Cholesky factorization.
    pub fn is_spd(&self, lambda: f64) -> bool {
        Cholesky::new(self.system_matrix(lambda)).is_some()
    }

    /// Dense row-major dump of `A + λ·mass` with a one-line header.
    pub fn write_csv<W: Write>(&self, mut out: W, lambda: f64) -> Result<()> {
        writeln!(
            out,
            "dim={},alpha={},lambda={},N={},M={}",
            self.dim,
            self.domain.alpha(),
            lambda,
            self.domain.num_nodes(),
            self.domain.mesh_intervals()
        )?;
        let s = self.system_matrix(lambda);
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim).map(|c| format!("{:e}", s[(r, c)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn assemble(spec: &ProblemSpec) -> Result<AssembledSystem> {
    spec.validate()?;
    let d = spec.domain;
    let m = d.mesh_intervals();
    let nc = d.num_cont_dofs();
    let n = d.num_nodes();
    let quad = GagliardoQuadrature::for_spec(spec)?;

    // local hat pieces on a cell: the one falling from 1 and the one rising to 1
    let hats = [LinearPiece::new(1.0, 0.0), LinearPiece::new(0.0, 1.0)];
    let zero = LinearPiece::constant(0.0);
    let mut a_cc = DMatrix::zeros(nc, nc);
    for i in 0..m {
        for j in i..m {
            let (ca, cb) = (d.cell(i), d.cell(j));
            // every dof touching either cell, with its piece on each cell
            let mut dofs: Vec<(usize, LinearPiece, LinearPiece)> = Vec::with_capacity(4);
            for (r, &h) in hats.iter().enumerate() {
                dofs.push((i + r, h, zero));
            }
            for (r, &h) in hats.iter().enumerate() {
                if let Some(entry) = dofs.iter_mut().find(|e| e.0 == j + r) {
                    entry.2 = h;
                } else {
                    dofs.push((j + r, zero, h));
                }
            }
            let weight = if i == j { 1.0 } else { 2.0 };
            for (p, &(gi, fa, fb)) in dofs.iter().enumerate() {
                for &(gj, ga, gb) in &dofs[p..] {
                    let v = weight * quad.pair_bilinear(ca, cb, (fa, fb), (ga, gb));
                    a_cc[(gi, gj)] += v;
                    if gi != gj {
                        a_cc[(gj, gi)] += v;
                    }
                }
            }
        }
    }

    let mut a_int_vv = DMatrix::zeros(nc, nc);
    let mut a_int_vn = DMatrix::zeros(nc, n);
    let mut a_int_nn = DMatrix::zeros(n, n);
    for (k, pos) in d.node_positions().into_iter().enumerate() {
        for (i, cell) in d.cells().enumerate() {
            let g = interface_cell_form(pos, d.alpha(), cell);
            a_int_nn[(k, k)] += 2.0 * g[0][0];
            for r in 0..2 {
                a_int_vn[(i + r, k)] += 2.0 * g[r + 1][0];
                for c in 0..2 {
                    a_int_vv[(i + r, i + c)] += 2.0 * g[r + 1][c + 1];
                }
            }
        }
    }

    let mut a_dd = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = (i as f64 - j as f64).abs().powf(-d.exponent());
                a_dd[(i, j)] = -2.0 * w;
                a_dd[(i, i)] += 2.0 * w;
            }
        }
    }

    Ok(AssembledSystem {
        domain: d,
        a_cc,
        a_int_vv,
        a_int_vn,
        a_int_nn,
        a_dd,
        mass: mass_matrix(&d),
        load: assemble_load(spec)?,
        dim: d.dim(),
    })
}

/// Load vector: `∫ f φ_i` for hats, `f(k)` for node indicators.
pub fn assemble_load(spec: &ProblemSpec) -> Result<DVector<f64>> {
    let d = spec.domain;
    let rule = GaussRule::new(spec.quad_order)?;
    let nc = d.num_cont_dofs();
    let mut load = DVector::zeros(d.dim());
    for (i, cell) in d.cells().enumerate() {
        let h = cell.width();
        for (lo, hi) in spec.forcing.smooth_pieces(cell.lo, cell.hi) {
            for (x, w) in rule.mapped(lo, hi) {
                let fx = spec.forcing.eval(x) * w;
                let up = (x - cell.lo) / h;
                load[i] += fx * (1.0 - up);
                load[i + 1] += fx * up;
            }
        }
    }
    for (k, f) in spec.forcing.node_loads.iter().enumerate() {
        load[nc + k] = *f;
    }
    Ok(load)
}

/// Exact `L^2(μ)` Gram matrix of the basis.
pub fn mass_matrix(domain: &HybridDomain) -> DMatrix<f64> {
    let nc = domain.num_cont_dofs();
    let h = domain.cell_width();
    let mut mass = DMatrix::zeros(domain.dim(), domain.dim());
    for i in 0..domain.mesh_intervals() {
        mass[(i, i)] += h / 3.0;
        mass[(i + 1, i + 1)] += h / 3.0;
        mass[(i, i + 1)] += h / 6.0;
        mass[(i + 1, i)] += h / 6.0;
    }
    for k in 0..domain.num_nodes() {
        mass[(nc + k, nc + k)] = 1.0;
    }
    mass
}
