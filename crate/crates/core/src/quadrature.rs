//! Numerical integration.
//!
//! Three families of integrals appear in the energy:
//!
//! * smooth one-dimensional integrals over mesh cells (loads, norms), done with
//!   composite Gauss–Legendre rules;
//! * the interface weight `(k - x)^{-(1+2α)}` against polynomials, which has
//!   closed-form antiderivatives after the substitution `t = k - x`;
//! * the weakly singular double integral of the Gagliardo form over pairs of
//!   mesh cells, handled by tensor Gauss for separated pairs and by graded
//!   dyadic subdivision for pairs that touch the diagonal.

use crate::domain::{Cell, HybridDomain, LinearPiece, ProblemSpec};
use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    order: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// Nodes are the roots of `P_n`, found by Newton's method from the
    /// Chebyshev-like initial guess; weights from `P_n'`.
    pub fn new(order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::out_of_range(
                "quad_order",
                "quad_order must be >= 1: got 0",
            ));
        }
        let n = order;
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = -x;
            points[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        Ok(Self {
            order,
            points,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&p, &w)| (mid + half * p, half * w))
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(lo, hi).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let prev = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * p - prev) / (x * x - 1.0);
    (p, d)
}

/// Composite Gauss integral of `g` over the cells of the mesh.
pub fn smooth_integral(g: impl Fn(f64) -> f64, rule: &GaussRule, domain: &HybridDomain) -> f64 {
    domain.cells().map(|c| rule.integrate(c.lo, c.hi, &g)).sum()
}

/// Adaptive bisection with a 10-point Gauss rule; used as an independent
/// check on closed forms.
pub fn adaptive_integral(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let rule = GaussRule::new(10).expect("order 10 is valid");
    let whole = rule.integrate(lo, hi, f);
    adaptive_step(f, &rule, lo, hi, whole, tol, 0)
}

fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    rule: &GaussRule,
    lo: f64,
    hi: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let left = rule.integrate(lo, mid, f);
    let right = rule.integrate(mid, hi, f);
    if (left + right - whole).abs() <= tol || depth >= 40 {
        return left + right;
    }
    adaptive_step(f, rule, lo, mid, left, 0.5 * tol, depth + 1)
        + adaptive_step(f, rule, mid, hi, right, 0.5 * tol, depth + 1)
}

/// `∫_lo^hi t^p dt` for `0 < lo < hi`, continuous through `p = -1`.
pub fn power_integral(p: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo > 0.0 && hi >= lo);
    let q = p + 1.0;
    let log_ratio = (hi / lo).ln();
    if q == 0.0 {
        log_ratio
    } else {
        lo.powf(q) * (q * log_ratio).exp_m1() / q
    }
}

/// Interface weight `|k - x|^{-(1+2α)}`.
pub fn interface_weight(k: usize, alpha: f64, x: f64) -> f64 {
    (k as f64 - x).abs().powf(-(1.0 + 2.0 * alpha))
}

/// `[∫ t^{-s}, ∫ t^{1-s}, ∫ t^{2-s}]` over `t ∈ [k - hi, k - lo]`, i.e. the
/// moments of the interface weight on `[lo, hi]` written in the distance
/// variable `t = k - x`.
pub fn distance_moments(k: usize, alpha: f64, lo: f64, hi: f64) -> [f64; 3] {
    let s = 1.0 + 2.0 * alpha;
    let (t0, t1) = (k as f64 - hi, k as f64 - lo);
    [
        power_integral(-s, t0, t1),
        power_integral(1.0 - s, t0, t1),
        power_integral(2.0 - s, t0, t1),
    ]
}

/// `∫_lo^hi x^j (k - x)^{-(1+2α)} dx` in closed form.
pub fn kernel_moment_on(k: usize, alpha: f64, j: u32, lo: f64, hi: f64) -> Result<f64> {
    let [t0, t1, t2] = distance_moments(k, alpha, lo, hi);
    let kf = k as f64;
    // x = k - t, so x^j expands binomially in t
    match j {
        0 => Ok(t0),
        1 => Ok(kf * t0 - t1),
        2 => Ok(kf * kf * t0 - 2.0 * kf * t1 + t2),
        _ => Err(Error::UnsupportedMoment { j }),
    }
}

/// `∫_0^1 x^j (k - x)^{-(1+2α)} dx`.
pub fn kernel_moment(k: usize, alpha: f64, j: u32) -> Result<f64> {
    if k < 2 {
        return Err(Error::out_of_range(
            "k",
            format!("node k must be >= 2: got {k}"),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::out_of_range(
            "alpha",
            format!("alpha out of (0,1): got {alpha}"),
        ));
    }
    kernel_moment_on(k, alpha, j, 0.0, 1.0)
}

/// The three interface moments of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub node: usize,
    pub alpha: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

impl KernelMoments {
    pub fn new(node: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            node,
            alpha,
            m0: kernel_moment(node, alpha, 0)?,
            m1: kernel_moment(node, alpha, 1)?,
            m2: kernel_moment(node, alpha, 2)?,
        })
    }
}

/// Quadrature for the Gagliardo double integral over pairs of mesh cells.
///
/// Tables for the singular pairs are built once for a reference cell width;
/// pairs with another width fall back to building them on the fly.
#[derive(Debug, Clone)]
pub struct GagliardoQuadrature {
    alpha: f64,
    exponent: f64,
    rule: GaussRule,
    subdivisions: usize,
    width: f64,
    // (p, q, weight * (p + q)^{-s}) for the corner square [0, width]^2
    corner: Vec<(f64, f64, f64)>,
    // ∫∫_{[0,width]^2} |x - y|^{1 - 2α} dx dy
    diagonal: f64,
}

impl GagliardoQuadrature {
    pub fn new(alpha: f64, rule: GaussRule, subdivisions: usize, width: f64) -> Self {
        let exponent = 1.0 + 2.0 * alpha;
        let corner = corner_points(&rule, subdivisions, exponent, width);
        let diagonal = diagonal_kernel(&rule, subdivisions, exponent, width);
        Self {
            alpha,
            exponent,
            rule,
            subdivisions,
            width,
            corner,
            diagonal,
        }
    }

    pub fn for_spec(spec: &ProblemSpec) -> Result<Self> {
        let rule = GaussRule::new(spec.quad_order)?;
        Ok(Self::new(
            spec.alpha(),
            rule,
            spec.singular_subdivisions,
            spec.domain.cell_width(),
        ))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rule(&self) -> &GaussRule {
        &self.rule
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// `∫∫_{[0,w]^2} |x-y|^{1-2α}` as computed by the graded subdivision.
    pub fn diagonal_kernel(&self, width: f64) -> f64 {
        if same_width(width, self.width) {
            self.diagonal
        } else {
            diagonal_kernel(&self.rule, self.subdivisions, self.exponent, width)
        }
    }

    /// `∫_a ∫_b |v(x) - v(y)|^2 |x-y|^{-(1+2α)} dy dx` with `v = fa` on `a`
    /// and `v = fb` on `b`.
    pub fn pair(&self, a: Cell, b: Cell, fa: LinearPiece, fb: LinearPiece) -> f64 {
        self.pair_bilinear(a, b, (fa, fb), (fa, fb))
    }

    /// Bilinear version: `∫_a ∫_b (f(x)-f(y)) (g(x)-g(y)) |x-y|^{-(1+2α)}`.
    ///
    /// For adjacent cells both functions must be continuous at the shared
    /// point, otherwise the integral diverges for `α >= 1/2`.
    pub fn pair_bilinear(
        &self,
        a: Cell,
        b: Cell,
        f: (LinearPiece, LinearPiece),
        g: (LinearPiece, LinearPiece),
    ) -> f64 {
        // canonical order so that (a, b) and (b, a) share every operation
        if b.lo < a.lo {
            return self.pair_bilinear(b, a, (f.1, f.0), (g.1, g.0));
        }
        let tol = 1e-12 * a.width().max(b.width());
        if (a.lo - b.lo).abs() <= tol && (a.hi - b.hi).abs() <= tol {
            let k = self.diagonal_kernel(a.width());
            return f.0.slope(a) * g.0.slope(a) * k;
        }
        if (a.hi - b.lo).abs() <= tol {
            return self.adjacent(a, b, f, g);
        }
        self.separated(a, b, f, g)
    }

    fn separated(
        &self,
        a: Cell,
        b: Cell,
        f: (LinearPiece, LinearPiece),
        g: (LinearPiece, LinearPiece),
    ) -> f64 {
        let mut total = 0.0;
        for (x, wx) in self.rule.mapped(a.lo, a.hi) {
            let (fx, gx) = (f.0.eval(a, x), g.0.eval(a, x));
            let mut inner = 0.0;
            for (y, wy) in self.rule.mapped(b.lo, b.hi) {
                let kern = (y - x).abs().powf(-self.exponent);
                inner += wy * kern * (fx - f.1.eval(b, y)) * (gx - g.1.eval(b, y));
            }
            total += wx * inner;
        }
        total
    }

    fn adjacent(
        &self,
        a: Cell,
        b: Cell,
        f: (LinearPiece, LinearPiece),
        g: (LinearPiece, LinearPiece),
    ) -> f64 {
        let x0 = a.hi;
        let eval = |p: f64, q: f64| {
            let (x, y) = (x0 - p, x0 + q);
            (f.0.eval(a, x) - f.1.eval(b, y)) * (g.0.eval(a, x) - g.1.eval(b, y))
        };
        if same_width(a.width(), self.width) && same_width(b.width(), self.width) {
            self.corner.iter().map(|&(p, q, w)| w * eval(p, q)).sum()
        } else {
            // unequal widths: grade toward the corner of the smaller square and
            // cover the remaining strips with tensor Gauss
            let w = a.width().min(b.width());
            let corner = corner_points(&self.rule, self.subdivisions, self.exponent, w);
            let mut total: f64 = corner.iter().map(|&(p, q, wt)| wt * eval(p, q)).sum();
            let near_a = Cell::new(x0 - w, x0);
            let on = |sub: Cell, piece: LinearPiece, cell: Cell| piece.restrict(cell, sub);
            if a.width() > w {
                let left = Cell::new(a.lo, x0 - w);
                total += self.separated(left, b, (on(left, f.0, a), f.1), (on(left, g.0, a), g.1));
            }
            if b.width() > w {
                let right = Cell::new(x0 + w, b.hi);
                total += self.separated(
                    near_a,
                    right,
                    (on(near_a, f.0, a), on(right, f.1, b)),
                    (on(near_a, g.0, a), on(right, g.1, b)),
                );
            }
            total
        }
    }
}

fn same_width(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.max(b)
}

fn tensor_points(
    rule: &GaussRule,
    (p0, p1): (f64, f64),
    (q0, q1): (f64, f64),
    exponent: f64,
    out: &mut Vec<(f64, f64, f64)>,
) {
    for (p, wp) in rule.mapped(p0, p1) {
        for (q, wq) in rule.mapped(q0, q1) {
            out.push((p, q, wp * wq * (p + q).powf(-exponent)));
        }
    }
}

/// Graded dyadic rule for `[0,w]^2` with the kernel singular at `p = q = 0`.
///
/// Level `l` covers the L-shaped ring between `[0, w 2^{-l-1}]^2` and
/// `[0, w 2^{-l}]^2` with three tensor squares; the innermost square gets a
/// plain tensor rule (the singular point is a corner, never a node).
fn corner_points(
    rule: &GaussRule,
    subdivisions: usize,
    exponent: f64,
    w: f64,
) -> Vec<(f64, f64, f64)> {
    let mut pts = Vec::with_capacity((3 * subdivisions + 1) * rule.order() * rule.order());
    let mut d = w;
    for _ in 0..subdivisions {
        let hd = 0.5 * d;
        tensor_points(rule, (hd, d), (0.0, hd), exponent, &mut pts);
        tensor_points(rule, (0.0, hd), (hd, d), exponent, &mut pts);
        tensor_points(rule, (hd, d), (hd, d), exponent, &mut pts);
        d = hd;
    }
    tensor_points(rule, (0.0, d), (0.0, d), exponent, &mut pts);
    pts
}

/// `∫∫_{[0,w]^2} |x-y|^{2-s}` by graded dyadic subdivision toward the diagonal.
///
/// A diagonal square of size `d` splits into two diagonal squares of size
/// `d/2` and two corner squares. The integrand depends on `x - y` only, so the
/// `2^l` diagonal squares of level `l` share one value. Diagonal squares left
/// after `subdivisions` levels are dropped; their total is
/// `O(2^{-subdivisions (2 - 2α)})` and the result increases monotonically
/// with the depth.
fn diagonal_kernel(rule: &GaussRule, subdivisions: usize, exponent: f64, w: f64) -> f64 {
    let mut total = 0.0;
    let mut copies = 1.0;
    let mut d = w;
    for _ in 0..subdivisions {
        let hd = 0.5 * d;
        let corner: f64 = corner_points(rule, subdivisions, exponent, hd)
            .iter()
            .map(|&(p, q, wt)| wt * (p + q) * (p + q))
            .sum();
        total += copies * 2.0 * corner;
        copies *= 2.0;
        d = hd;
    }
    total
}

/// One-shot form of [`GagliardoQuadrature::pair`].
pub fn gagliardo_pair_integral(
    cell_a: Cell,
    cell_b: Cell,
    fa: LinearPiece,
    fb: LinearPiece,
    alpha: f64,
    rule: &GaussRule,
    subdivisions: usize,
) -> f64 {
    GagliardoQuadrature::new(alpha, rule.clone(), subdivisions, cell_a.width())
        .pair(cell_a, cell_b, fa, fb)
}
