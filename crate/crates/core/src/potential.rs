//! Double-well potentials, the energy constant `h0` and the 1D heteroclinic profile.
//!
//! The default potential is the quartic `W(s) = (1 - s^2)^2 / 4`. User supplied
//! polynomials are accepted when they satisfy the double-well axioms: wells at
//! `±1` with `W = W' = 0`, a single non-degenerate interior maximum `gamma`,
//! nonnegativity, and uniform convexity `W'' >= kappa` for `|t| >= alpha`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Margin added to the inflection point `1/sqrt(3)` of the quartic.
const QUARTIC_ALPHA_MARGIN: f64 = 0.05;
/// Number of samples used for the invariant checks on `[-2, 2]`.
const SAMPLES: usize = 4001;
const MAX_QUADRATURE_DEPTH: u32 = 40;
const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("DoubleWell invariant violated ({invariant}): {detail}")]
    InvalidPotential { invariant: &'static str, detail: String },
    #[error("quadrature for h0 did not reach tolerance (error estimate {estimate:e})")]
    QuadratureFailure { estimate: f64 },
    #[error("operation requires the standard quartic potential")]
    UnsupportedPotential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    StandardQuartic,
    UserPolynomial,
}

/// A validated double-well potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleWell {
    kind: PotentialKind,
    alpha: f64,
    kappa: f64,
    gamma: f64,
    /// Ascending-degree coefficients (also filled in for the quartic).
    coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstant {
    pub h0: f64,
    pub quadrature_error: f64,
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self::standard_quartic()
    }
}

impl DoubleWell {
    pub fn standard_quartic() -> Self {
        let alpha = 1.0 / 3f64.sqrt() + QUARTIC_ALPHA_MARGIN;
        DoubleWell {
            kind: PotentialKind::StandardQuartic,
            alpha,
            kappa: 3.0 * alpha * alpha - 1.0,
            gamma: 0.0,
            coefficients: vec![0.25, 0.0, -0.5, 0.0, 0.25],
        }
    }

    /// Builds a potential from ascending-degree coefficients and validates it.
    pub fn from_polynomial(coefficients: Vec<f64>) -> Result<Self, PotentialError> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(invalid("finite coefficients", "non-finite coefficient"));
        }
        let mut dw = DoubleWell {
            kind: PotentialKind::UserPolynomial,
            alpha: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            coefficients,
        };
        dw.validate_and_fit()?;
        Ok(dw)
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Returns `(W(s), W'(s), W''(s))`.
    #[inline]
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        match self.kind {
            PotentialKind::StandardQuartic => {
                let a = 1.0 - s * s;
                (0.25 * a * a, s * s * s - s, 3.0 * s * s - 1.0)
            }
            PotentialKind::UserPolynomial => horner3(&self.coefficients, s),
        }
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self.kind {
            PotentialKind::StandardQuartic => {
                let a = 1.0 - s * s;
                0.25 * a * a
            }
            PotentialKind::UserPolynomial => horner3(&self.coefficients, s).0,
        }
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        match self.kind {
            PotentialKind::StandardQuartic => s * s * s - s,
            PotentialKind::UserPolynomial => horner3(&self.coefficients, s).1,
        }
    }

    #[inline]
    pub fn second_derivative(&self, s: f64) -> f64 {
        match self.kind {
            PotentialKind::StandardQuartic => 3.0 * s * s - 1.0,
            PotentialKind::UserPolynomial => horner3(&self.coefficients, s).2,
        }
    }

    /// Re-checks every invariant by sampling. Used by the acceptance suite to
    /// detect tampered potentials.
    pub fn check_invariants(&self) -> Result<(), PotentialError> {
        let scale = self.coefficients.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let tol = 1e-12 * scale;
        for well in [-1.0, 1.0] {
            let (w, dw, _) = self.eval(well);
            if w.abs() > tol {
                return Err(invalid("W(±1) = 0", format!("W({well}) = {w:e}")));
            }
            if dw.abs() > tol {
                return Err(invalid("W'(±1) = 0", format!("W'({well}) = {dw:e}")));
            }
        }
        for k in 0..SAMPLES {
            let t = -2.0 + 4.0 * k as f64 / (SAMPLES - 1) as f64;
            let (w, _, d2) = self.eval(t);
            if w < -tol {
                return Err(invalid("W >= 0 on [-2, 2]", format!("W({t}) = {w:e}")));
            }
            if t.abs() >= self.alpha && d2 < self.kappa - tol {
                return Err(invalid(
                    "W'' >= kappa for |t| >= alpha",
                    format!("W''({t}) = {d2:e} < kappa = {:e}", self.kappa),
                ));
            }
        }
        let (_, dg, d2g) = self.eval(self.gamma);
        if dg.abs() > 1e-9 * scale || d2g >= 0.0 {
            return Err(invalid(
                "non-degenerate local maximum at gamma",
                format!("W'({}) = {dg:e}, W'' = {d2g:e}", self.gamma),
            ));
        }
        Ok(())
    }

    fn validate_and_fit(&mut self) -> Result<(), PotentialError> {
        let scale = self.coefficients.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let tol = 1e-12 * scale;
        for well in [-1.0, 1.0] {
            let (w, dw, _) = self.eval(well);
            if w.abs() > tol {
                return Err(invalid("W(±1) = 0", format!("W({well}) = {w:e}")));
            }
            if dw.abs() > tol {
                return Err(invalid("W'(±1) = 0", format!("W'({well}) = {dw:e}")));
            }
        }

        // Interior critical points from sign changes of W' on a fine grid.
        let n = SAMPLES;
        let grid: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
        let mut maxima = Vec::new();
        for pair in grid.windows(2).skip(1).take(n - 3) {
            let (a, b) = (pair[0], pair[1]);
            let (da, db) = (self.derivative(a), self.derivative(b));
            if da > 0.0 && db <= 0.0 {
                maxima.push(bisect_root(|s| self.derivative(s), a, b));
            }
        }
        if maxima.len() != 1 {
            return Err(invalid(
                "unique local maximum in (-1, 1)",
                format!("found {} interior maxima", maxima.len()),
            ));
        }
        let gamma = maxima[0];
        if self.second_derivative(gamma) >= -1e-10 * scale {
            return Err(invalid(
                "non-degenerate local maximum at gamma",
                format!("W''({gamma}) = {:e}", self.second_derivative(gamma)),
            ));
        }
        self.gamma = gamma;

        // alpha: the smallest radius beyond which W'' stays positive on [-2, 2],
        // plus the same margin used for the quartic.
        let mut boundary = 0.0f64;
        for k in 0..SAMPLES {
            let t = -2.0 + 4.0 * k as f64 / (SAMPLES - 1) as f64;
            if self.second_derivative(t) <= 0.0 {
                boundary = boundary.max(t.abs());
            }
        }
        let alpha = boundary + QUARTIC_ALPHA_MARGIN;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(
                "W'' >= kappa for |t| >= alpha",
                format!("no alpha in (0,1): W'' <= 0 up to |t| = {boundary}"),
            ));
        }
        let mut kappa = f64::INFINITY;
        for k in 0..SAMPLES {
            let t = -2.0 + 4.0 * k as f64 / (SAMPLES - 1) as f64;
            if t.abs() >= alpha {
                kappa = kappa.min(self.second_derivative(t));
            }
        }
        if !(kappa > 0.0) {
            return Err(invalid(
                "W'' >= kappa for |t| >= alpha",
                format!("min W'' = {kappa:e} beyond alpha = {alpha}"),
            ));
        }
        self.alpha = alpha;
        self.kappa = kappa.min(0.99);
        self.check_invariants()
    }

    /// `h0 = ∫_{-1}^{1} sqrt(2 W(s)) ds` by adaptive Simpson quadrature.
    pub fn compute_h0(&self) -> Result<EnergyConstant, PotentialError> {
        let f = |s: f64| (2.0 * self.value(s).max(0.0)).sqrt();
        let (value, err) = adaptive_simpson(&f, -1.0, 1.0, 1e-13, MAX_QUADRATURE_DEPTH);
        if !(err < QUADRATURE_TOL) || !value.is_finite() {
            return Err(PotentialError::QuadratureFailure { estimate: err });
        }
        Ok(EnergyConstant {
            h0: value,
            quadrature_error: err,
        })
    }

    /// `tanh(t / (eps sqrt 2))`, the heteroclinic solution of `-eps^2 q'' + W'(q) = 0`.
    pub fn heteroclinic(&self, t: f64, epsilon: f64) -> Result<f64, PotentialError> {
        Ok(self.heteroclinic_profile(epsilon)?.value(t))
    }

    pub fn heteroclinic_profile(&self, epsilon: f64) -> Result<Heteroclinic, PotentialError> {
        if self.kind != PotentialKind::StandardQuartic {
            return Err(PotentialError::UnsupportedPotential);
        }
        Ok(Heteroclinic { epsilon })
    }
}

/// The quartic's heteroclinic profile with analytic derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Heteroclinic {
    pub epsilon: f64,
}

impl Heteroclinic {
    fn scale(&self) -> f64 {
        self.epsilon * std::f64::consts::SQRT_2
    }
    pub fn value(&self, t: f64) -> f64 {
        (t / self.scale()).tanh()
    }
    pub fn derivative(&self, t: f64) -> f64 {
        let q = self.value(t);
        (1.0 - q * q) / self.scale()
    }
    pub fn second_derivative(&self, t: f64) -> f64 {
        let q = self.value(t);
        -(1.0 - q * q) * q / (self.epsilon * self.epsilon)
    }
}

fn invalid(invariant: &'static str, detail: impl Into<String>) -> PotentialError {
    PotentialError::InvalidPotential {
        invariant,
        detail: detail.into(),
    }
}

/// Value, first and second derivative of a polynomial in one pass.
fn horner3(coeffs: &[f64], s: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut d2p) = (0.0, 0.0, 0.0);
    for &c in coeffs.iter().rev() {
        d2p = d2p * s + 2.0 * dp;
        dp = dp * s + p;
        p = p * s + c;
    }
    (p, dp, d2p)
}

fn bisect_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa0 > 0.0) {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Adaptive Simpson with the classic `|S2 - S1| / 15` interval-halving estimator.
/// Returns the integral and the accumulated error estimate.
pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> (f64, f64) {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return (left + right + delta / 15.0, delta.abs() / 15.0);
        }
        let (l, el) = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
        let (r, er) = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        (l + r, el + er)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quartic_values() {
        let w = DoubleWell::standard_quartic();
        assert_eq!(w.eval(1.0), (0.0, 0.0, 2.0));
        assert_eq!(w.eval(-1.0).0, 0.0);
        assert_eq!(w.eval(0.0), (0.25, 0.0, -1.0));
        let (v, d, d2) = w.eval(0.5);
        assert_abs_diff_eq!(v, 0.140625, epsilon = 1e-15);
        assert_abs_diff_eq!(d, -0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(d2, -0.25, epsilon = 1e-15);
        w.check_invariants().unwrap();
    }

    #[test]
    fn polynomial_matches_quartic() {
        let q = DoubleWell::standard_quartic();
        let p = DoubleWell::from_polynomial(vec![0.25, 0.0, -0.5, 0.0, 0.25]).unwrap();
        for k in 0..50 {
            let s = -1.7 + 0.07 * k as f64;
            let (a, b) = (q.eval(s), p.eval(s));
            assert_abs_diff_eq!(a.0, b.0, epsilon = 1e-13);
            assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-13);
            assert_abs_diff_eq!(a.2, b.2, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(p.gamma(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn h0_closed_form() {
        let ec = DoubleWell::standard_quartic().compute_h0().unwrap();
        assert_abs_diff_eq!(ec.h0, 2.0 * 2f64.sqrt() / 3.0, epsilon = 1e-12);
        assert!(ec.quadrature_error < 1e-10);
    }

    #[test]
    fn h0_scales_with_sqrt_of_factor() {
        let base = 2.0 * 2f64.sqrt() / 3.0;
        for c in [0.25, 4.0] {
            let w = DoubleWell::from_polynomial(vec![0.25 * c, 0.0, -0.5 * c, 0.0, 0.25 * c]).unwrap();
            let h0 = w.compute_h0().unwrap().h0;
            assert_abs_diff_eq!(h0, base * f64::sqrt(c), epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_potential_is_rejected_before_quadrature() {
        let err = DoubleWell::from_polynomial(vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, PotentialError::InvalidPotential { .. }), "{err}");
    }

    #[test]
    fn tampered_well_names_invariant() {
        let err = DoubleWell::from_polynomial(vec![0.35, 0.0, -0.5, 0.0, 0.25]).unwrap_err();
        match err {
            PotentialError::InvalidPotential { invariant, .. } => assert_eq!(invariant, "W(±1) = 0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_well_accepted() {
        // W = (1 - s^2)^2 (1 + s/5)/4 keeps the wells and tilts the barrier.
        let base = [0.25, 0.0, -0.5, 0.0, 0.25];
        let mut c = vec![0.0; 6];
        for (k, b) in base.iter().enumerate() {
            c[k] += b;
            c[k + 1] += 0.2 * b;
        }
        let w = DoubleWell::from_polynomial(c).unwrap();
        assert!(w.gamma() > 0.0 && w.gamma() < 1.0, "{}", w.gamma());
        assert!(w.compute_h0().unwrap().h0 > 0.0);
    }

    #[test]
    fn heteroclinic_examples() {
        let w = DoubleWell::standard_quartic();
        assert_eq!(w.heteroclinic(0.0, 0.1).unwrap(), 0.0);
        assert_abs_diff_eq!(w.heteroclinic(1e3, 0.1).unwrap(), 1.0, epsilon = 1e-15);
        let t = 0.1 * 2f64.sqrt() * 0.5f64.atanh();
        assert_abs_diff_eq!(w.heteroclinic(t, 0.1).unwrap(), 0.5, epsilon = 1e-14);
        let p = DoubleWell::from_polynomial(vec![0.25, 0.0, -0.5, 0.0, 0.25]).unwrap();
        assert_eq!(p.heteroclinic(0.0, 0.1), Err(PotentialError::UnsupportedPotential));
    }

    #[test]
    fn heteroclinic_solves_ode_and_equipartitions() {
        let w = DoubleWell::standard_quartic();
        for eps in [0.01, 0.1, 0.5] {
            let q = w.heteroclinic_profile(eps).unwrap();
            for k in 0..1000 {
                let t = -10.0 * eps + 20.0 * eps * k as f64 / 999.0;
                let u = q.value(t);
                let res = -eps * eps * q.second_derivative(t) + w.derivative(u);
                assert!(res.abs() < 1e-12, "residual {res:e}");
                let xi = eps * q.derivative(t).powi(2) / 2.0 - w.value(u) / eps;
                assert!(xi.abs() < 1e-12, "discrepancy {xi:e}");
            }
        }
    }

    #[test]
    fn heteroclinic_total_energy_is_h0() {
        // Independent route: Simpson on the energy density over a wide window.
        let w = DoubleWell::standard_quartic();
        let eps = 0.05;
        let q = w.heteroclinic_profile(eps).unwrap();
        let e = |t: f64| eps * q.derivative(t).powi(2) / 2.0 + w.value(q.value(t)) / eps;
        let (total, _) = adaptive_simpson(&e, -40.0 * eps, 40.0 * eps, 1e-13, 40);
        assert_abs_diff_eq!(total, w.compute_h0().unwrap().h0, epsilon = 1e-8);
    }
}
