//! Energy density, discrepancy, density ratios, monotonicity scans, Pohozaev
//! residuals, boundary energy and equipartition.

use crate::geometry::{dot, norm, sub, Domain, GeometryError, Point};
use crate::par;
use crate::potential::DoubleWell;
use crate::solver::{energy_parts, gradient_squared, vector_gradient, Field, Solution};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

/// `C₀` in `W̃ = W - ελu + εΛ₀C₀`.
pub const C0: f64 = 2.0;
/// Largest `c1` tried when fitting the boundary monotonicity constant.
const C1_SEARCH_MAX: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid cutoff scale a = {a}: need a > 0 and 4a < max distance {max_distance}")]
    InvalidCutoffScale { a: f64, max_distance: f64 },
    #[error("vector field was built for a different domain ({expected} nodes, got {found})")]
    DomainMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityFields {
    pub e: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
}

/// `e = ε|∇u|²/2 + W(u)/ε` and `ξ = ε|∇u|²/2 - W(u)/ε` per node.
pub fn density_fields(f: &Field, w: &DoubleWell) -> DensityFields {
    let g2 = gradient_squared(f);
    let eps = f.epsilon;
    let (e, xi): (Vec<f64>, Vec<f64>) = (0..g2.len())
        .into_par_iter()
        .map(|i| {
            let k = 0.5 * eps * g2[i];
            let p = w.value(f.values[i]) / eps;
            (k + p, k - p)
        })
        .unzip();
    let xi_plus = xi.iter().map(|v| v.max(0.0)).collect();
    let xi_minus = xi.iter().map(|v| (-v).max(0.0)).collect();
    DensityFields {
        e,
        xi,
        xi_plus,
        xi_minus,
    }
}

/// `Λ₀ = max(1, |λ|)`.
pub fn lambda0(lambda: f64) -> f64 {
    lambda.abs().max(1.0)
}

/// `ẽ` and `ξ̃` built from `W̃ = W - ελu + εΛ₀C₀`.
pub fn tilde_densities(f: &Field, w: &DoubleWell, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let d = density_fields(f, w);
    let shift = lambda0(lambda) * C0;
    let e_t = (0..d.e.len()).map(|i| d.e[i] - lambda * f.values[i] + shift).collect();
    let xi_t = (0..d.xi.len())
        .map(|i| d.xi[i] + lambda * f.values[i] - shift)
        .collect();
    (e_t, xi_t)
}

/// `ω_{n-1}`, the volume of the unit ball in dimension `n - 1`.
pub fn omega(n_minus_1: usize) -> f64 {
    match n_minus_1 {
        0 => 1.0,
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unimplemented!("only 1D and 2D domains are supported"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCurve {
    pub center: Point,
    pub boundary_centered: bool,
    pub dim: usize,
    pub kappa0: f64,
    pub radii: Vec<f64>,
    pub i_values: Vec<f64>,
    pub i_tilde_values: Vec<f64>,
    /// `∫_{B_r ∩ Ω} ẽ`.
    pub e_tilde_integrals: Vec<f64>,
    /// `∫_{B_r ∩ Ω} (-ξ̃)`.
    pub neg_xi_tilde_integrals: Vec<f64>,
    /// `∫_{B_r ∩ Ω} ξ⁺`.
    pub xi_plus_integrals: Vec<f64>,
    /// Radii at or above `max(4h, 2ε)`.
    pub resolvable: Vec<bool>,
}

/// Node-indexed densities shared by many ratio curves of one field.
pub struct CurveInputs {
    pub e: Vec<f64>,
    pub e_tilde: Vec<f64>,
    pub neg_xi_tilde: Vec<f64>,
    pub xi_plus: Vec<f64>,
    pub epsilon: f64,
}

impl CurveInputs {
    pub fn new(f: &Field, w: &DoubleWell, lambda: f64) -> Self {
        let d = density_fields(f, w);
        let (e_tilde, xi_tilde) = tilde_densities(f, w, lambda);
        CurveInputs {
            e: d.e,
            e_tilde,
            neg_xi_tilde: xi_tilde.iter().map(|v| -v).collect(),
            xi_plus: d.xi_plus,
            epsilon: f.epsilon,
        }
    }
}

/// Energy density ratio `I(r) = ∫_{B_r(x)∩Ω} e / (ω_{n-1} r^{n-1})` and its `W̃` variant.
pub fn energy_ratio_curve(
    f: &Field,
    w: &DoubleWell,
    lambda: f64,
    x: Point,
    radii: &[f64],
) -> Result<RatioCurve, GeometryError> {
    ratio_curve_from(&f.domain, &CurveInputs::new(f, w, lambda), x, radii)
}

pub fn ratio_curve_from(dom: &Domain, inp: &CurveInputs, x: Point, radii: &[f64]) -> Result<RatioCurve, GeometryError> {
    let n = dom.dim();
    let norm_of = |r: f64| omega(n - 1) * r.powi(n as i32 - 1);
    let balls = radii
        .par_iter()
        .map(|&r| dom.ball_restriction(x, r))
        .collect::<Result<Vec<_>, _>>()?;
    let floor = (4.0 * dom.h()).max(2.0 * inp.epsilon);
    let mut c = RatioCurve {
        center: balls.first().map_or(x, |b| b.center),
        boundary_centered: balls.first().is_some_and(|b| b.boundary_flag),
        dim: n,
        kappa0: dom.kappa0(),
        radii: radii.to_vec(),
        i_values: Vec::new(),
        i_tilde_values: Vec::new(),
        e_tilde_integrals: Vec::new(),
        neg_xi_tilde_integrals: Vec::new(),
        xi_plus_integrals: Vec::new(),
        resolvable: radii.iter().map(|&r| r >= floor * (1.0 - 1e-12)).collect(),
    };
    for (b, &r) in balls.iter().zip(radii) {
        let et = b.integrate(&inp.e_tilde);
        c.i_values.push(b.integrate(&inp.e) / norm_of(r));
        c.i_tilde_values.push(et / norm_of(r));
        c.e_tilde_integrals.push(et);
        c.neg_xi_tilde_integrals.push(b.integrate(&inp.neg_xi_tilde));
        c.xi_plus_integrals.push(b.integrate(&inp.xi_plus));
    }
    Ok(c)
}

/// Geometric ladder `r_j = r_min 2^{j/4}` with `r_min = max(4h, 2ε)` up to
/// `min(0.4 · size, dist(x, ∂U))`, further capped by `dist(x, ∂Ω)` for interior centers.
pub fn radius_ladder(dom: &Domain, epsilon: f64, x: Point) -> Vec<f64> {
    let h = dom.h();
    let r_min = (4.0 * h).max(2.0 * epsilon);
    let u = dom.padding_box();
    let mut r_max = (0.4 * dom.size()).min(x[0] - u.x0).min(u.x1 - x[0]);
    if dom.dim() == 2 {
        r_max = r_max.min(x[1] - u.y0).min(u.y1 - x[1]);
    }
    let (d, _, _) = dom.closest_boundary(x);
    if d >= 0.5 * h {
        r_max = r_max.min(d);
    }
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let r = r_min * 2f64.powf(j as f64 / 4.0);
        if r > r_max * (1.0 + 1e-12) {
            break;
        }
        out.push(r);
        j += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub c1: f64,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
    /// Largest `RHS - LHS` over consecutive radius pairs at the given `c1`.
    pub max_deficit: f64,
    /// Smallest `c1 >= 0` with every deficit within tolerance, if one exists below the search cap.
    pub fitted_c1: Option<f64>,
}

/// Per-pair deficits of the discrete almost-monotonicity inequality
/// `d/dρ[e^{c1ρ} ρ^{1-n} ∫ẽ] ≥ e^{c1ρ} (1+3κ₀ρ)^{-1} ρ^{-n} ∫(-ξ̃)`;
/// the curvature factor is used only for boundary-centered curves.
pub fn monotonicity_deficits(curve: &RatioCurve, c1: f64) -> Vec<Violation> {
    let n = curve.dim as i32;
    let kappa = if curve.boundary_centered { curve.kappa0 } else { 0.0 };
    let lhs_f = |k: usize| {
        let r = curve.radii[k];
        (c1 * r).exp() * r.powi(1 - n) * curve.e_tilde_integrals[k]
    };
    let rhs_g = |k: usize| {
        let r = curve.radii[k];
        (c1 * r).exp() / (1.0 + 3.0 * kappa * r) * r.powi(-n) * curve.neg_xi_tilde_integrals[k]
    };
    (0..curve.radii.len().saturating_sub(1))
        .map(|k| {
            let (a, b) = (curve.radii[k], curve.radii[k + 1]);
            let lhs = (lhs_f(k + 1) - lhs_f(k)) / (b - a);
            let rhs = 0.5 * (rhs_g(k) + rhs_g(k + 1));
            Violation {
                rho_lo: a,
                rho_hi: b,
                deficit: rhs - lhs,
            }
        })
        .collect()
}

pub fn monotonicity_scan(curve: &RatioCurve, c1: f64, tolerance: f64) -> MonotonicityReport {
    let all = monotonicity_deficits(curve, c1);
    let max_deficit = all.iter().map(|v| v.deficit).fold(f64::NEG_INFINITY, f64::max);
    let ok = |c: f64| monotonicity_deficits(curve, c).iter().all(|v| v.deficit <= tolerance);
    let fitted_c1 = if ok(0.0) {
        Some(0.0)
    } else if !ok(C1_SEARCH_MAX) {
        None
    } else {
        let (mut lo, mut hi) = (0.0, C1_SEARCH_MAX);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    MonotonicityReport {
        c1,
        tolerance,
        violations: all.into_iter().filter(|v| v.deficit > tolerance).collect(),
        max_deficit,
        fitted_c1,
    }
}

/// Smooth vector field sampled on a domain, with its Jacobian by centered differences.
#[derive(Clone)]
pub struct TestVectorField {
    pub values: Vec<Point>,
    /// `jacobian[i][b][a] = ∂_a X_b` at node `i`.
    pub jacobian: Vec<[[f64; 2]; 2]>,
    /// `X` at each boundary quadrature point.
    pub boundary_values: Vec<Point>,
    pub tangential_on_boundary: bool,
    pub support_radius: f64,
    pub c1_norm: f64,
    eval: Arc<dyn Fn(Point) -> Point + Send + Sync>,
}

impl std::fmt::Debug for TestVectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestVectorField")
            .field("nodes", &self.values.len())
            .field("tangential_on_boundary", &self.tangential_on_boundary)
            .field("support_radius", &self.support_radius)
            .field("c1_norm", &self.c1_norm)
            .finish()
    }
}

impl TestVectorField {
    pub fn from_fn(dom: &Domain, support_radius: f64, f: impl Fn(Point) -> Point + Send + Sync + 'static) -> Self {
        let eval: Arc<dyn Fn(Point) -> Point + Send + Sync> = Arc::new(f);
        let h = dom.h();
        let dim = dom.dim();
        let values: Vec<Point> = dom.points().par_iter().map(|&p| eval(p)).collect();
        let jacobian: Vec<[[f64; 2]; 2]> = dom
            .points()
            .par_iter()
            .map(|&p| {
                let mut j = [[0.0; 2]; 2];
                for a in 0..dim {
                    let mut pp = p;
                    let mut pm = p;
                    pp[a] += h;
                    pm[a] -= h;
                    let (xp, xm) = (eval(pp), eval(pm));
                    for b in 0..dim {
                        j[b][a] = (xp[b] - xm[b]) / (2.0 * h);
                    }
                }
                j
            })
            .collect();
        let boundary_values: Vec<Point> = dom.boundary_nodes().iter().map(|b| eval(b.point)).collect();
        let tangential_on_boundary = dom
            .boundary_nodes()
            .iter()
            .zip(&boundary_values)
            .all(|(b, x)| dot(*x, b.normal).abs() <= 1e-12);
        let sup_x = values.iter().map(|v| norm(*v)).fold(0.0, f64::max);
        let sup_j = jacobian
            .iter()
            .map(|j| (j[0][0].powi(2) + j[0][1].powi(2) + j[1][0].powi(2) + j[1][1].powi(2)).sqrt())
            .fold(0.0, f64::max);
        TestVectorField {
            values,
            jacobian,
            boundary_values,
            tangential_on_boundary,
            support_radius,
            c1_norm: sup_x + sup_j,
            eval,
        }
    }

    pub fn eval(&self, p: Point) -> Point {
        (self.eval)(p)
    }

    pub fn divergence(&self, i: usize) -> f64 {
        self.jacobian[i][0][0] + self.jacobian[i][1][1]
    }

    /// Largest `|X·ν|` over the boundary quadrature points.
    pub fn max_normal_component(&self, dom: &Domain) -> f64 {
        dom.boundary_nodes()
            .iter()
            .zip(&self.boundary_values)
            .map(|(b, x)| dot(*x, b.normal).abs())
            .fold(0.0, f64::max)
    }
}

/// The C² radial cutoff: 1 on `t <= 1/2`, 0 on `t >= 1`, quintic smoothstep between.
pub fn phi(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = 2.0 * (t - 0.5);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `χ`: identity on `[0, 1]`, constant 2 from 3 on, with `χ' = 1 - (s-1)/2` on `[1, 3]`.
pub fn chi(s: f64) -> f64 {
    if s <= 1.0 {
        s
    } else if s >= 3.0 {
        2.0
    } else {
        s - 0.25 * (s - 1.0) * (s - 1.0)
    }
}

pub fn chi_prime(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 3.0 {
        0.0
    } else {
        1.0 - 0.5 * (s - 1.0)
    }
}

pub fn chi_second(s: f64) -> f64 {
    if (1.0..3.0).contains(&s) {
        -0.5
    } else {
        0.0
    }
}

/// `χ_a(s) = a χ(s/a)`.
pub fn chi_a(a: f64, s: f64) -> f64 {
    a * chi(s / a)
}

/// Truncated radial field `X = φ(|p-x|/ρ) (p - x)`.
pub fn make_radial_field(dom: &Domain, x: Point, rho: f64) -> Result<TestVectorField, DiagnosticsError> {
    if !(rho > 0.0) || !dom.padding_box().contains_ball(x, rho, dom.dim()) {
        return Err(GeometryError::BallEscapesU { center: x, radius: rho }.into());
    }
    let dim = dom.dim();
    Ok(TestVectorField::from_fn(dom, rho, move |p| {
        let v = if dim == 1 { [p[0] - x[0], 0.0] } else { sub(p, x) };
        let s = phi(norm(v) / rho);
        [s * v[0], s * v[1]]
    }))
}

/// `X = -ζ ∇(χ_a ∘ d)` with `ζ ≡ 1` on the shrunk box `Ũ ⊃ Ω`, so `X = ν` on `∂Ω`.
pub fn make_boundary_normal_field(dom: &Arc<Domain>, a: f64) -> Result<TestVectorField, DiagnosticsError> {
    let max_distance = dom
        .signed_distance()
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(a > 0.0 && 4.0 * a < max_distance) {
        return Err(DiagnosticsError::InvalidCutoffScale { a, max_distance });
    }
    let d = dom.clone();
    Ok(TestVectorField::from_fn(dom, 3.0 * a, move |p| {
        let (dist, g) = d.distance_at(p);
        let s = chi_prime(dist / a);
        [-s * g[0], -s * g[1]]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PohozaevReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `|LHS - RHS|` of the Pohozaev identity with `W̃`-weights:
/// `∫_Ω [(ε|∇u|²/2 + W̃/ε) div X - ε ∇X(∇u,∇u)] = ∫_{∂Ω} (ε|∇u|²/2 + W̃/ε) X·ν`.
pub fn pohozaev_residual(
    sol: &Solution,
    w: &DoubleWell,
    x: &TestVectorField,
) -> Result<PohozaevReport, DiagnosticsError> {
    let f = &sol.field;
    let dom = &f.domain;
    if x.values.len() != dom.len() {
        return Err(DiagnosticsError::DomainMismatch {
            expected: dom.len(),
            found: x.values.len(),
        });
    }
    let eps = f.epsilon;
    let lam = sol.lambda;
    let shift = eps * lambda0(lam) * C0;
    let g2 = gradient_squared(f);
    let grad = vector_gradient(dom, &f.values);
    let wt = dom.weights();
    let density = |i: usize| {
        let u = f.values[i];
        let wt_u = w.value(u) - eps * lam * u + shift;
        0.5 * eps * g2[i] + wt_u / eps
    };
    let lhs = par::sum_by(dom.len(), |i| {
        let j = &x.jacobian[i];
        let g = grad[i];
        let mut hess = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                hess += g[a] * j[b][a] * g[b];
            }
        }
        wt[i] * (density(i) * x.divergence(i) - eps * hess)
    });
    let rhs: f64 = dom
        .boundary_nodes()
        .iter()
        .zip(&x.boundary_values)
        .map(|(b, xv)| b.weight * density(b.node) * dot(*xv, b.normal))
        .sum();
    Ok(PohozaevReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `∫_{∂Ω ∩ Ũ} e_ε dH^{n-1}` (point evaluations at the two ends in 1D).
pub fn boundary_energy(sol: &Solution, w: &DoubleWell) -> f64 {
    let dom = &sol.field.domain;
    let e = density_fields(&sol.field, w).e;
    let shrunk = dom.shrunk_box();
    dom.boundary_nodes()
        .iter()
        .filter(|b| dom.dim() == 1 || shrunk.contains(b.point))
        .map(|b| b.weight * e[b.node])
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquipartitionRow {
    pub epsilon: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub ratio: f64,
    pub xi_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquipartitionReport {
    pub rows: Vec<EquipartitionRow>,
    pub xi_strictly_decreasing: bool,
}

pub fn equipartition_row(f: &Field, w: &DoubleWell) -> EquipartitionRow {
    let (kinetic, potential) = energy_parts(f, w);
    let d = density_fields(f, w);
    let wt = f.domain.weights();
    let xi_l1 = par::sum_by(wt.len(), |i| wt[i] * d.xi[i].abs());
    let ratio = if kinetic == 0.0 { 0.0 } else { kinetic / potential };
    EquipartitionRow {
        epsilon: f.epsilon,
        kinetic,
        potential,
        ratio,
        xi_l1,
    }
}

pub fn equipartition_report(sweep: &[Solution], w: &DoubleWell) -> EquipartitionReport {
    let rows: Vec<EquipartitionRow> = sweep.iter().map(|s| equipartition_row(&s.field, w)).collect();
    let xi_strictly_decreasing = rows.windows(2).all(|p| p[1].xi_l1 < p[0].xi_l1);
    EquipartitionReport {
        rows,
        xi_strictly_decreasing,
    }
}

/// `max ξ` and the bound `ε^{-4/5}`.
///
/// The pointwise value uses the centered nodal gradient: the edge-form density
/// divides by the dual-cell area, which degenerates on sliver cut cells.
pub fn xi_sup_bound(f: &Field, w: &DoubleWell) -> (f64, f64) {
    let g = vector_gradient(&f.domain, &f.values);
    let eps = f.epsilon;
    let m = par::max_by(g.len(), |i| {
        0.5 * eps * (g[i][0].powi(2) + g[i][1].powi(2)) - w.value(f.values[i]) / eps
    });
    (m, eps.powf(-0.8))
}

/// Smallest `C` with `r^{-n} ∫_{B_r} ξ⁺ ≤ C r^{-7/8} (I(r) + 1)` over all curves and radii.
pub fn fit_xi_integral_constant(curves: &[RatioCurve]) -> f64 {
    let mut c = 0.0f64;
    for cv in curves {
        let n = cv.dim as i32;
        for k in 0..cv.radii.len() {
            let r = cv.radii[k];
            let lhs = r.powi(-n) * cv.xi_plus_integrals[k];
            let rhs = r.powf(-7.0 / 8.0) * (cv.i_values[k] + 1.0);
            c = c.max(lhs / rhs);
        }
    }
    c
}

/// `(min I, max I)` over the resolvable radii of the given curves.
pub fn fit_density_bounds(curves: &[RatioCurve]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for cv in curves {
        for (k, &i) in cv.i_values.iter().enumerate() {
            if cv.resolvable[k] {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
    }
    (lo, hi)
}

/// Smallest `c >= 0` with `I(r) ≥ e^{-c(r-s)} I(s) - c r^{1/8}` for all scanned `s < r`.
pub fn fit_almost_monotonicity(curves: &[RatioCurve]) -> f64 {
    let holds = |c: f64| {
        curves.iter().all(|cv| {
            let (r, i) = (&cv.radii, &cv.i_values);
            (0..r.len())
                .all(|b| (0..b).all(|a| i[b] >= (-c * (r[b] - r[a])).exp() * i[a] - c * r[b].powf(0.125) - 1e-14))
        })
    };
    if holds(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !holds(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
