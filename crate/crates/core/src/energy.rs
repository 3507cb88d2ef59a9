//! Evaluation of the hybrid energy and its pieces.
//!
//! The energy splits as `E = E_cc + 2 E_cd + E_dd` (continuous–continuous,
//! interface, discrete–discrete). [`EnergyModel`] precomputes the local cell
//! pair forms of `E_cc` and the local interface forms once per mesh, so that
//! repeated evaluations cost `O(M^2)` multiply-adds.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::{Cell, HybridDomain, HybridFunction, LinearPiece, ProblemSpec};
use crate::error::Result;
use crate::quadrature::{distance_moments, GagliardoQuadrature, GaussRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_cc: f64,
    pub e_cd: f64,
    pub e_dd: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(e_cc: f64, e_cd: f64, e_dd: f64) -> Self {
        Self {
            e_cc,
            e_cd,
            e_dd,
            total: e_cc + 2.0 * e_cd + e_dd,
        }
    }
}

/// Statistics of `u` around the mean of its continuous part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStats {
    pub v_bar: f64,
    pub osc_sq: f64,
    pub node_dev_sq: Vec<f64>,
}

impl MeanStats {
    /// `Σ_k |a_k - v̄|^2 + ‖v - v̄‖^2`, the quantity bounded in the
    /// Poincaré-type inequality.
    pub fn deviation(&self) -> f64 {
        self.osc_sq + self.node_dev_sq.iter().sum::<f64>()
    }
}

type Local2 = [[f64; 2]; 2];
type Local3 = [[f64; 3]; 3];

fn form<const N: usize>(m: &[[f64; N]; N], x: &[f64; N], y: &[f64; N]) -> f64 {
    let mut acc = 0.0;
    for r in 0..N {
        let mut row = 0.0;
        for c in 0..N {
            row += m[r][c] * y[c];
        }
        acc += x[r] * row;
    }
    acc
}

fn apply_local<const N: usize>(m: &[[f64; N]; N], x: &[f64; N], scale: f64, out: &mut [f64; N]) {
    for r in 0..N {
        let mut row = 0.0;
        for c in 0..N {
            row += m[r][c] * x[c];
        }
        out[r] += scale * row;
    }
}

/// Precomputed local forms for one `(α, N, M)` and quadrature setting.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    domain: HybridDomain,
    quad: GagliardoQuadrature,
    // Cell-pair forms annihilate constants, so each is stored as a form in
    // the differences of its dofs from the first one.
    // identical pair, (v_{i+1} - v_i)^2
    identical: f64,
    // cells (i, i+1), dofs (v_i, v_{i+1}, v_{i+2})
    adjacent: Local2,
    // cells (i, i+d) for d >= 2 at index d, dofs (v_i, v_{i+1}, v_{i+d}, v_{i+d+1})
    separated: Vec<Local3>,
    // [node][cell]: ∫_cell (a_k - v)^2 w_k as a form in the differences
    // (a_k - v_i, a_k - v_{i+1})
    interface: Vec<Vec<Local2>>,
    // |i - j|^{-(1+2α)} for node indices, zero on the diagonal
    node_weights: Vec<Vec<f64>>,
}

impl EnergyModel {
    pub fn new(domain: &HybridDomain, quad_order: usize, subdivisions: usize) -> Result<Self> {
        let rule = GaussRule::new(quad_order)?;
        let h = domain.cell_width();
        let quad = GagliardoQuadrature::new(domain.alpha(), rule, subdivisions, h);
        let m = domain.mesh_intervals();

        let hat_down = LinearPiece::new(1.0, 0.0);
        let hat_up = LinearPiece::new(0.0, 1.0);
        let zero = LinearPiece::constant(0.0);

        let identical = quad.diagonal_kernel(h) / (h * h);

        let mut adjacent = [[0.0; 2]; 2];
        if m >= 2 {
            let (a, b) = (domain.cell(0), domain.cell(1));
            // hats restricted to the two cells; continuous at the shared point
            let local = [(hat_down, zero), (hat_up, hat_down), (zero, hat_up)];
            for r in 1..3 {
                for c in r..3 {
                    let v = quad.pair_bilinear(a, b, local[r], local[c]);
                    adjacent[r - 1][c - 1] = v;
                    adjacent[c - 1][r - 1] = v;
                }
            }
        }

        let mut separated = vec![[[0.0; 3]; 3]; m];
        for (d, table) in separated.iter_mut().enumerate().skip(2) {
            let (a, b) = (domain.cell(0), domain.cell(d));
            let local = [
                (hat_down, zero),
                (hat_up, zero),
                (zero, hat_down),
                (zero, hat_up),
            ];
            for r in 1..4 {
                for c in r..4 {
                    let v = quad.pair_bilinear(a, b, local[r], local[c]);
                    table[r - 1][c - 1] = v;
                    table[c - 1][r - 1] = v;
                }
            }
        }

        let alpha = domain.alpha();
        let interface = domain
            .node_positions()
            .into_iter()
            .map(|k| {
                domain
                    .cells()
                    .map(|cell| {
                        let g = interface_cell_form(k, alpha, cell);
                        [[g[1][1], g[1][2]], [g[2][1], g[2][2]]]
                    })
                    .collect()
            })
            .collect();

        let n = domain.num_nodes();
        let node_weights = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            (i as f64 - j as f64).abs().powf(-domain.exponent())
                        }
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            domain: *domain,
            quad,
            identical,
            adjacent,
            separated,
            interface,
            node_weights,
        })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        Self::new(&spec.domain, spec.quad_order, spec.singular_subdivisions)
    }

    pub fn domain(&self) -> &HybridDomain {
        &self.domain
    }

    pub fn quadrature(&self) -> &GagliardoQuadrature {
        &self.quad
    }

    /// `∫_0^1∫_0^1 (v(x)-v(y))(ψ(x)-ψ(y)) |x-y|^{-(1+2α)}` summed over cell
    /// pairs; each unordered pair is evaluated once and counted twice.
    pub fn pairing_cc(&self, u: &HybridFunction, phi: &HybridFunction) -> f64 {
        let (v, p) = (&u.cont_coeffs, &phi.cont_coeffs);
        let m = self.domain.mesh_intervals();
        let mut diag = 0.0;
        for i in 0..m {
            diag += (v[i + 1] - v[i]) * (p[i + 1] - p[i]);
        }
        let mut off = 0.0;
        for i in 0..m.saturating_sub(1) {
            off += form(
                &self.adjacent,
                &[v[i + 1] - v[i], v[i + 2] - v[i]],
                &[p[i + 1] - p[i], p[i + 2] - p[i]],
            );
        }
        for d in 2..m {
            let table = &self.separated[d];
            for i in 0..m - d {
                let j = i + d;
                off += form(
                    table,
                    &[v[i + 1] - v[i], v[j] - v[i], v[j + 1] - v[i]],
                    &[p[i + 1] - p[i], p[j] - p[i], p[j + 1] - p[i]],
                );
            }
        }
        self.identical * diag + 2.0 * off
    }

    /// `Σ_k ∫_0^1 (a_k - v)(b_k - ψ) |k-x|^{-(1+2α)}`.
    pub fn pairing_cd(&self, u: &HybridFunction, phi: &HybridFunction) -> f64 {
        let (v, p) = (&u.cont_coeffs, &phi.cont_coeffs);
        let mut total = 0.0;
        for (k, cells) in self.interface.iter().enumerate() {
            let (a, b) = (u.node_values[k], phi.node_values[k]);
            for (i, g) in cells.iter().enumerate() {
                total += form(g, &[a - v[i], a - v[i + 1]], &[b - p[i], b - p[i + 1]]);
            }
        }
        total
    }

    /// `Σ_{i≠j} (a_i - a_j)(b_i - b_j) / |i-j|^{1+2α}`.
    pub fn pairing_dd(&self, u: &HybridFunction, phi: &HybridFunction) -> f64 {
        let (a, b) = (&u.node_values, &phi.node_values);
        let mut total = 0.0;
        for (i, row) in self.node_weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                if i != j {
                    total += w * (a[i] - a[j]) * (b[i] - b[j]);
                }
            }
        }
        total
    }

    /// The bilinear form `a(u, φ)` associated with the energy.
    pub fn bilinear(&self, u: &HybridFunction, phi: &HybridFunction) -> f64 {
        self.pairing_cc(u, phi) + 2.0 * self.pairing_cd(u, phi) + self.pairing_dd(u, phi)
    }

    pub fn energy_cc(&self, u: &HybridFunction) -> f64 {
        self.pairing_cc(u, u)
    }

    pub fn energy_cd(&self, u: &HybridFunction) -> f64 {
        self.pairing_cd(u, u)
    }

    pub fn energy_dd(&self, u: &HybridFunction) -> f64 {
        self.pairing_dd(u, u)
    }

    pub fn breakdown(&self, u: &HybridFunction) -> EnergyBreakdown {
        EnergyBreakdown::new(self.energy_cc(u), self.energy_cd(u), self.energy_dd(u))
    }

    pub fn total(&self, u: &HybridFunction) -> f64 {
        self.breakdown(u).total
    }

    /// Coefficient vector of `φ ↦ a(u, φ)` over the basis, computed from
    /// the local forms without a global matrix.
    pub fn apply(&self, u: &HybridFunction) -> DVector<f64> {
        let m = self.domain.mesh_intervals();
        let nc = m + 1;
        let n = self.domain.num_nodes();
        let v = &u.cont_coeffs;
        let mut out = DVector::zeros(nc + n);

        for i in 0..m {
            let t = self.identical * (v[i + 1] - v[i]);
            out[i] -= t;
            out[i + 1] += t;
        }
        for i in 0..m.saturating_sub(1) {
            let mut local = [0.0; 2];
            apply_local(
                &self.adjacent,
                &[v[i + 1] - v[i], v[i + 2] - v[i]],
                2.0,
                &mut local,
            );
            out[i] -= local[0] + local[1];
            out[i + 1] += local[0];
            out[i + 2] += local[1];
        }
        for d in 2..m {
            let table = &self.separated[d];
            for i in 0..m - d {
                let j = i + d;
                let mut local = [0.0; 3];
                let diffs = [v[i + 1] - v[i], v[j] - v[i], v[j + 1] - v[i]];
                apply_local(table, &diffs, 2.0, &mut local);
                out[i] -= local.iter().sum::<f64>();
                for (r, idx) in [i + 1, j, j + 1].into_iter().enumerate() {
                    out[idx] += local[r];
                }
            }
        }
        for (k, cells) in self.interface.iter().enumerate() {
            let a = u.node_values[k];
            for (i, g) in cells.iter().enumerate() {
                let mut local = [0.0; 2];
                apply_local(g, &[a - v[i], a - v[i + 1]], 2.0, &mut local);
                out[nc + k] += local[0] + local[1];
                out[i] -= local[0];
                out[i + 1] -= local[1];
            }
        }
        let a = &u.node_values;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += 2.0 * self.node_weights[i][j] * (a[i] - a[j]);
            }
            out[nc + i] += acc;
        }
        out
    }

    /// `Σ_k ∫_0^1 |a_k - v(x)|^2 dx`, integrated exactly.
    pub fn interface_l2_sum(&self, u: &HybridFunction) -> f64 {
        interface_l2_sum(u)
    }
}

/// `∫_cell (a_k - v)^2 |k-x|^{-(1+2α)} dx` as a quadratic form in
/// `(a_k, v_lo, v_hi)`, integrated exactly through distance moments.
pub(crate) fn interface_cell_form(k: usize, alpha: f64, cell: Cell) -> [[f64; 3]; 3] {
    let h = cell.width();
    let [t0, t1, t2] = distance_moments(k, alpha, cell.lo, cell.hi);
    // the cell centre in the distance variable t = k - x
    let tc = k as f64 - 0.5 * (cell.lo + cell.hi);
    // φ_lo = 1/2 + (t - tc)/h and φ_hi = 1/2 - (t - tc)/h, written as
    // polynomials p0 + p1 t
    let polys = [
        (1.0, 0.0),
        (-(0.5 - tc / h), -1.0 / h),
        (-(0.5 + tc / h), 1.0 / h),
    ];
    let mut g = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (p0, p1) = polys[r];
            let (q0, q1) = polys[c];
            g[r][c] = p0 * q0 * t0 + (p0 * q1 + p1 * q0) * t1 + p1 * q1 * t2;
        }
    }
    g
}

/// Exact `∫_cell w^2` for a linear `w` with endpoint values `w0`, `w1`.
fn linear_sq_integral(h: f64, w0: f64, w1: f64) -> f64 {
    h * (w0 * w0 + w0 * w1 + w1 * w1) / 3.0
}

/// `Σ_k ∫_0^1 |a_k - v(x)|^2 dx`.
pub fn interface_l2_sum(u: &HybridFunction) -> f64 {
    u.node_values
        .iter()
        .map(|&a| node_l2_distance_sq(u, a))
        .sum()
}

/// `∫_0^1 |a - v(x)|^2 dx`.
pub fn node_l2_distance_sq(u: &HybridFunction, a: f64) -> f64 {
    let h = 1.0 / u.mesh_intervals() as f64;
    u.cont_coeffs
        .windows(2)
        .map(|w| linear_sq_integral(h, a - w[0], a - w[1]))
        .sum()
}

/// `∫_0^1 v dx`.
pub fn continuous_mean(u: &HybridFunction) -> f64 {
    let h = 1.0 / u.mesh_intervals() as f64;
    u.cont_coeffs
        .windows(2)
        .map(|w| 0.5 * h * (w[0] + w[1]))
        .sum()
}

pub fn mean_stats(u: &HybridFunction) -> MeanStats {
    let v_bar = continuous_mean(u);
    let h = 1.0 / u.mesh_intervals() as f64;
    let osc_sq = u
        .cont_coeffs
        .windows(2)
        .map(|w| linear_sq_integral(h, w[0] - v_bar, w[1] - v_bar))
        .sum();
    let node_dev_sq = u.node_values.iter().map(|a| (a - v_bar).powi(2)).collect();
    MeanStats {
        v_bar,
        osc_sq,
        node_dev_sq,
    }
}

/// `‖u‖^2_{L^2(μ)} = ‖v‖^2_{L^2(0,1)} + Σ a_k^2`.
pub fn l2_mu_norm_sq(u: &HybridFunction) -> f64 {
    continuous_l2_sq(u) + u.node_values.iter().map(|a| a * a).sum::<f64>()
}

/// `‖v‖^2_{L^2(0,1)}`.
pub fn continuous_l2_sq(u: &HybridFunction) -> f64 {
    let h = 1.0 / u.mesh_intervals() as f64;
    u.cont_coeffs
        .windows(2)
        .map(|w| linear_sq_integral(h, w[0], w[1]))
        .sum()
}

/// `(u, φ)_{L^2(μ)}`, exact for the hat basis.
pub fn l2_mu_inner(u: &HybridFunction, phi: &HybridFunction) -> f64 {
    let h = 1.0 / u.mesh_intervals() as f64;
    let (v, p) = (&u.cont_coeffs, &phi.cont_coeffs);
    let cont: f64 = (0..v.len() - 1)
        .map(|i| {
            h * (2.0 * v[i] * p[i] + v[i] * p[i + 1] + v[i + 1] * p[i] + 2.0 * v[i + 1] * p[i + 1])
                / 6.0
        })
        .sum();
    cont + u
        .node_values
        .iter()
        .zip(&phi.node_values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

pub fn energy_cc(u: &HybridFunction, spec: &ProblemSpec) -> Result<f64> {
    Ok(EnergyModel::from_spec(spec)?.energy_cc(u))
}

pub fn energy_cd(u: &HybridFunction, spec: &ProblemSpec) -> Result<f64> {
    Ok(EnergyModel::from_spec(spec)?.energy_cd(u))
}

/// Exact double sum over ordered node pairs.
pub fn energy_dd(u: &HybridFunction, alpha: f64) -> f64 {
    let a = &u.node_values;
    let s = 1.0 + 2.0 * alpha;
    let mut total = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j {
                total += (a[i] - a[j]).powi(2) / (i as f64 - j as f64).abs().powf(s);
            }
        }
    }
    total
}

pub fn energy_total(u: &HybridFunction, spec: &ProblemSpec) -> Result<EnergyBreakdown> {
    Ok(EnergyModel::from_spec(spec)?.breakdown(u))
}

/// `‖u‖^2_{L^2(μ)} + E(u)`.
pub fn hybrid_norm_sq(u: &HybridFunction, spec: &ProblemSpec) -> Result<f64> {
    Ok(l2_mu_norm_sq(u) + energy_total(u, spec)?.total)
}
