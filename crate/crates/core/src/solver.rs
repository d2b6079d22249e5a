//! Discrete Allen-Cahn energy, its gradient, and critical-point solvers.
//!
//! The kinetic term is the cut-cell finite-volume form
//! `ε/2 Σ_edges c_ij (u_j - u_i)^2`, so the discrete chemical potential
//! `μ_i = ε (K u)_i / w_i + W'(u_i)/ε - λ` is exactly the derivative of the energy
//! divided by the node weight, and the homogeneous Neumann condition is natural
//! (equivalent to mirror ghost nodes on grid-aligned boundaries).

use crate::geometry::Domain;
use crate::linalg::{self, KrylovStats};
use crate::par;
use crate::potential::{DoubleWell, PotentialError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Values beyond this magnitude count as a blow-up of the flow.
const BLOWUP: f64 = 10.0;
const LINEAR_REL_TOL: f64 = 1e-10;
const MAX_DT_FACTOR: f64 = 0.5;

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<Solution>,
    },
    #[error("field blew up (|u| > {BLOWUP}) at step {step}")]
    Blowup { step: usize },
    #[error("singular Jacobian at Newton step {step}")]
    SingularJacobian { step: usize },
    #[error("residual {residual:e} is outside the Newton basin threshold {threshold:e}")]
    OutsideNewtonBasin { residual: f64, threshold: f64 },
    #[error("epsilon {epsilon} does not resolve the interface on a grid with h = {h} (need eps > 2h)")]
    UnresolvedInterface { epsilon: f64, h: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Scalar grid function on the active nodes of a domain.
#[derive(Debug, Clone)]
pub struct Field {
    pub domain: Arc<Domain>,
    pub epsilon: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Arc<Domain>, epsilon: f64, values: Vec<f64>) -> Result<Self, SolverError> {
        if values.len() != domain.len() {
            return Err(SolverError::InvalidParameter(format!(
                "field has {} values, domain has {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if !(epsilon > 0.0) {
            return Err(SolverError::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Field {
            domain,
            epsilon,
            values,
        })
    }

    pub fn constant(domain: Arc<Domain>, epsilon: f64, value: f64) -> Self {
        let n = domain.len();
        Field {
            domain,
            epsilon,
            values: vec![value; n],
        }
    }

    pub fn from_fn(domain: Arc<Domain>, epsilon: f64, f: impl Fn([f64; 2]) -> f64 + Sync) -> Self {
        let values = domain.points().par_iter().map(|&p| f(p)).collect();
        Field {
            domain,
            epsilon,
            values,
        }
    }

    /// Weighted spatial mean `∫u / |Ω|`.
    pub fn mean(&self) -> f64 {
        let w = self.domain.weights();
        par::sum_by(w.len(), |i| w[i] * self.values[i]) / self.domain.area()
    }

    pub fn max_abs(&self) -> f64 {
        par::max_by(self.values.len(), |i| self.values[i].abs()).max(0.0)
    }

    /// Adds a constant so that the weighted mean equals `m`.
    pub fn project_mean(&mut self, m: f64) {
        let shift = m - self.mean();
        self.values.par_iter_mut().for_each(|v| *v += shift);
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Field {
        Field {
            domain: self.domain.clone(),
            epsilon,
            values: self.values.clone(),
        }
    }
}

/// A critical point (or best iterate) with its multiplier and solver metadata.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: Field,
    pub lambda: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub constraint: Option<f64>,
    pub converged: bool,
    /// Residual norm at the Newton start and after each step (empty for pure flows).
    pub newton_history: Vec<f64>,
}

impl Solution {
    pub fn epsilon(&self) -> f64 {
        self.field.epsilon
    }
    pub fn energy(&self, w: &DoubleWell) -> f64 {
        assemble_energy(&self.field, w)
    }
    /// `(max|u| - 1) / ε`, the run-level constant of the C⁰ bound.
    pub fn c0_constant(&self) -> f64 {
        (self.field.max_abs() - 1.0) / self.field.epsilon
    }
}

/// `(K u)_i = Σ_j c_ij (u_i - u_j)`.
pub fn apply_stiffness(dom: &Domain, u: &[f64], out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let ui = u[i];
        *o = dom.neighbors(i).map(|(j, c)| c * (ui - u[j])).sum();
    });
}

/// Discrete `|∇u|^2` per node: the weighted average of squared one-sided differences,
/// normalized so that `Σ w_i g_i = Σ_edges c (u_j - u_i)^2`.
pub fn gradient_squared(f: &Field) -> Vec<f64> {
    let dom = &f.domain;
    let u = &f.values;
    let w = dom.weights();
    (0..dom.len())
        .into_par_iter()
        .map(|i| {
            let s: f64 = dom.neighbors(i).map(|(j, c)| c * (u[j] - u[i]).powi(2)).sum();
            0.5 * s / w[i]
        })
        .collect()
}

/// Centered-difference vector gradient, one-sided where a neighbour is missing.
pub fn vector_gradient(dom: &Domain, u: &[f64]) -> Vec<[f64; 2]> {
    let h = dom.h();
    (0..dom.len())
        .into_par_iter()
        .map(|i| {
            let [e, w, n, s] = dom.directional_neighbors(i);
            let d = |plus: u32, minus: u32| -> f64 {
                let has = |k: u32| k != crate::geometry::NO_NODE;
                match (has(plus), has(minus)) {
                    (true, true) => (u[plus as usize] - u[minus as usize]) / (2.0 * h),
                    (true, false) => (u[plus as usize] - u[i]) / h,
                    (false, true) => (u[i] - u[minus as usize]) / h,
                    (false, false) => 0.0,
                }
            };
            if dom.dim() == 1 {
                [d(e, w), 0.0]
            } else {
                [d(e, w), d(n, s)]
            }
        })
        .collect()
}

/// `(∫ ε|∇u|^2/2, ∫ W(u)/ε)`.
pub fn energy_parts(f: &Field, w: &DoubleWell) -> (f64, f64) {
    let dom = &f.domain;
    let u = &f.values;
    let eps = f.epsilon;
    let kinetic = par::sum_by(dom.len(), |i| {
        dom.neighbors(i)
            .filter(|&(j, _)| j > i)
            .map(|(j, c)| c * (u[j] - u[i]).powi(2))
            .sum::<f64>()
    });
    let wt = dom.weights();
    let potential = par::sum_by(dom.len(), |i| wt[i] * w.value(u[i]));
    (0.5 * eps * kinetic, potential / eps)
}

pub fn assemble_energy(f: &Field, w: &DoubleWell) -> f64 {
    let (k, p) = energy_parts(f, w);
    k + p
}

/// Discrete `-εΔu + W'(u)/ε - λ` per node.
pub fn energy_gradient(f: &Field, w: &DoubleWell, lambda: f64) -> Vec<f64> {
    let dom = &f.domain;
    let mut ku = vec![0.0; dom.len()];
    apply_stiffness(dom, &f.values, &mut ku);
    let eps = f.epsilon;
    let wt = dom.weights();
    ku.par_iter_mut()
        .enumerate()
        .for_each(|(i, k)| *k = eps * *k / wt[i] + w.derivative(f.values[i]) / eps - lambda);
    ku
}

/// Weighted L² norm `sqrt(Σ w μ^2)` of the chemical-potential residual.
pub fn residual_norm(f: &Field, w: &DoubleWell, lambda: f64) -> f64 {
    let mu = energy_gradient(f, w, lambda);
    par::weighted_dot(f.domain.weights(), &mu, &mu).sqrt()
}

/// The multiplier that makes the residual orthogonal to constants: the spatial mean
/// of `-εΔu + W'(u)/ε` (the Laplacian part integrates to zero).
pub fn constrained_lambda(f: &Field, w: &DoubleWell) -> f64 {
    let wt = f.domain.weights();
    par::sum_by(wt.len(), |i| wt[i] * w.derivative(f.values[i])) / (f.epsilon * f.domain.area())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Time step as a multiple of ε (`dt = dt_factor * ε`).
    pub dt_factor: f64,
    pub stop_tol: f64,
    pub max_steps: usize,
    pub constraint: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            dt_factor: 0.25,
            stop_tol: 1e-6,
            max_steps: 20_000,
            constraint: None,
        }
    }
}

/// Observer for per-step flow quantities (energy descent and mean conservation tests).
pub trait FlowObserver {
    fn step(&mut self, step: usize, field: &Field, lambda: f64);
}

impl FlowObserver for () {
    fn step(&mut self, _: usize, _: &Field, _: f64) {}
}

impl<F: FnMut(usize, &Field, f64)> FlowObserver for F {
    fn step(&mut self, step: usize, field: &Field, lambda: f64) {
        self(step, field, lambda)
    }
}

/// Semi-implicit gradient flow: implicit in `εΔ`, explicit in `W'/ε`.
///
/// Each step solves `(W/dt + εK) u⁺ = W (u/dt - W'(u)/ε + λ)` with `W` the diagonal of
/// node weights; with a constraint `λ` is the spatial mean of `W'(u)/ε`, which keeps
/// `∫u` fixed.
pub fn gradient_flow(init: &Field, w: &DoubleWell, opts: &FlowOptions) -> Result<Solution, SolverError> {
    gradient_flow_observed(init, w, opts, &mut ())
}

pub fn gradient_flow_observed(
    init: &Field,
    w: &DoubleWell,
    opts: &FlowOptions,
    observer: &mut impl FlowObserver,
) -> Result<Solution, SolverError> {
    if !(opts.dt_factor > 0.0 && opts.dt_factor <= MAX_DT_FACTOR) {
        return Err(SolverError::InvalidParameter(format!(
            "dt_factor must lie in (0, {MAX_DT_FACTOR}], got {}",
            opts.dt_factor
        )));
    }
    if let Some(m) = opts.constraint {
        if !(m > -1.0 && m < 1.0) {
            return Err(SolverError::InvalidParameter(format!(
                "constraint mean {m} not in (-1, 1)"
            )));
        }
    }
    if init.values.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidParameter("initial field is not finite".into()));
    }
    let dom = init.domain.clone();
    let eps = init.epsilon;
    let dt = opts.dt_factor * eps;
    let wt = dom.weights();
    let n = dom.len();

    let mut field = init.clone();
    if let Some(m) = opts.constraint {
        field.project_mean(m);
    }
    let lambda_of = |f: &Field| opts.constraint.map_or(0.0, |_| constrained_lambda(f, w));

    let diag: Vec<f64> = (0..n)
        .map(|i| wt[i] / dt + eps * dom.neighbors(i).map(|(_, c)| c).sum::<f64>())
        .collect();
    let tri = Tridiagonal::try_new(&dom, eps, |i| wt[i] / dt);
    let apply = |x: &[f64], y: &mut [f64]| {
        apply_stiffness(&dom, x, y);
        y.par_iter_mut()
            .enumerate()
            .for_each(|(i, y)| *y = eps * *y + wt[i] / dt * x[i]);
    };

    let mut lambda = lambda_of(&field);
    let mut res = residual_norm(&field, w, lambda);
    let mut best = (res, field.values.clone(), lambda);
    observer.step(0, &field, lambda);
    let mut rhs = vec![0.0; n];
    for step in 1..=opts.max_steps {
        if res <= opts.stop_tol {
            return Ok(Solution {
                field,
                lambda,
                residual_norm: res,
                iterations: step - 1,
                constraint: opts.constraint,
                converged: true,
                newton_history: Vec::new(),
            });
        }
        rhs.par_iter_mut().enumerate().for_each(|(i, r)| {
            let u = field.values[i];
            *r = wt[i] * (u / dt - w.derivative(u) / eps + lambda);
        });
        match &tri {
            Some(t) => field.values = t.solve(&rhs).ok_or(SolverError::SingularJacobian { step })?,
            None => {
                let stats = linalg::pcg(apply, &diag, &rhs, &mut field.values, LINEAR_REL_TOL, 10 * n);
                if !stats.converged {
                    log::warn!("flow step {step}: CG stalled at {:e}", stats.relative_residual);
                }
            }
        }
        if let Some(m) = opts.constraint {
            field.project_mean(m);
        }
        if field.values.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            return Err(SolverError::Blowup { step });
        }
        lambda = lambda_of(&field);
        res = residual_norm(&field, w, lambda);
        observer.step(step, &field, lambda);
        if res < best.0 {
            best = (res, field.values.clone(), lambda);
        }
    }
    if res <= opts.stop_tol {
        return Ok(Solution {
            field,
            lambda,
            residual_norm: res,
            iterations: opts.max_steps,
            constraint: opts.constraint,
            converged: true,
            newton_history: Vec::new(),
        });
    }
    let best_sol = Solution {
        field: Field {
            values: best.1,
            ..field
        },
        lambda: best.2,
        residual_norm: best.0,
        iterations: opts.max_steps,
        constraint: opts.constraint,
        converged: false,
        newton_history: Vec::new(),
    };
    Err(SolverError::NoConvergence {
        iterations: opts.max_steps,
        residual: best.0,
        best: Box::new(best_sol),
    })
}

/// `diag + εK` when the graph is a path (1D grids), solved directly.
struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn try_new(dom: &Domain, eps: f64, shift: impl Fn(usize) -> f64) -> Option<Self> {
        if dom.dim() != 1 {
            return None;
        }
        let n = dom.len();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = shift(i);
            for (j, c) in dom.neighbors(i) {
                diag[i] += eps * c;
                if j + 1 == i {
                    lower[i] = -eps * c;
                } else if j == i + 1 {
                    upper[i] = -eps * c;
                } else {
                    return None;
                }
            }
        }
        Some(Tridiagonal { lower, diag, upper })
    }

    fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        linalg::solve_tridiagonal(&self.lower, &self.diag, &self.upper, rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest starting residual accepted as being inside the Newton basin.
    pub basin: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 30,
            basin: f64::INFINITY,
        }
    }
}

/// Damped Newton on `μ(u, λ) = 0`; with a constraint `λ` is an unknown and the
/// bordered system `[H -w; -wᵀ 0]` is solved.
pub fn newton_refine(sol: &Solution, w: &DoubleWell, opts: &NewtonOptions) -> Result<Solution, SolverError> {
    if sol.residual_norm > opts.basin {
        return Err(SolverError::OutsideNewtonBasin {
            residual: sol.residual_norm,
            threshold: opts.basin,
        });
    }
    let dom = sol.field.domain.clone();
    let eps = sol.field.epsilon;
    let wt = dom.weights();
    let n = dom.len();
    let area = dom.area();
    let mut field = sol.field.clone();
    if let Some(m) = sol.constraint {
        field.project_mean(m);
    }
    let mut lambda = match sol.constraint {
        Some(_) => constrained_lambda(&field, w),
        None => 0.0,
    };
    let mut res = residual_norm(&field, w, lambda);
    let mut history = vec![res];
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            let best = Solution {
                field,
                lambda,
                residual_norm: res,
                iterations,
                constraint: sol.constraint,
                converged: false,
                newton_history: history,
            };
            return Err(SolverError::NoConvergence {
                iterations,
                residual: res,
                best: Box::new(best),
            });
        }
        iterations += 1;
        let step = iterations;
        let mu = energy_gradient(&field, w, lambda);
        let f: Vec<f64> = (0..n).map(|i| wt[i] * mu[i]).collect();
        let hdiag: Vec<f64> = (0..n)
            .map(|i| {
                eps * dom.neighbors(i).map(|(_, c)| c).sum::<f64>() + wt[i] * w.second_derivative(field.values[i]) / eps
            })
            .collect();
        let gap = sol.constraint.map(|m| m * area - par::dot(wt, &field.values));
        let (du, dl) = if let Some(tri) =
            Tridiagonal::try_new(&dom, eps, |i| wt[i] * w.second_derivative(field.values[i]) / eps)
        {
            let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
            let a = tri.solve(&neg_f).ok_or(SolverError::SingularJacobian { step })?;
            match gap {
                None => (a, 0.0),
                Some(g) => {
                    let b = tri.solve(wt).ok_or(SolverError::SingularJacobian { step })?;
                    let wb = par::dot(wt, &b);
                    if wb.abs() < 1e-300 || !wb.is_finite() {
                        return Err(SolverError::SingularJacobian { step });
                    }
                    let dl = (g - par::dot(wt, &a)) / wb;
                    ((0..n).map(|i| a[i] + dl * b[i]).collect(), dl)
                }
            }
        } else {
            krylov_newton_step(&dom, eps, &hdiag, wt, &f, gap, step)?
        };
        // Damped update.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut trial = field.clone();
            trial
                .values
                .par_iter_mut()
                .zip(du.par_iter())
                .for_each(|(u, d)| *u += t * d);
            if let Some(m) = sol.constraint {
                trial.project_mean(m);
            }
            let tl = lambda + t * dl;
            let tr = residual_norm(&trial, w, tl);
            if tr.is_finite() && (tr < res || tr <= opts.tol) {
                field = trial;
                lambda = tl;
                res = tr;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            let best = Solution {
                field,
                lambda,
                residual_norm: res,
                iterations,
                constraint: sol.constraint,
                converged: false,
                newton_history: history,
            };
            return Err(SolverError::NoConvergence {
                iterations,
                residual: res,
                best: Box::new(best),
            });
        }
        log::debug!("newton step {step}: residual {res:e} (damping {t})");
        history.push(res);
    }
    Ok(Solution {
        field,
        lambda,
        residual_norm: res,
        iterations: sol.iterations + iterations,
        constraint: sol.constraint,
        converged: true,
        newton_history: history,
    })
}

fn krylov_newton_step(
    dom: &Domain,
    eps: f64,
    hdiag: &[f64],
    wt: &[f64],
    f: &[f64],
    gap: Option<f64>,
    step: usize,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = dom.len();
    let reaction: Vec<f64> = (0..n)
        .map(|i| hdiag[i] - eps * dom.neighbors(i).map(|(_, c)| c).sum::<f64>())
        .collect();
    let apply_h = |x: &[f64], y: &mut [f64]| {
        apply_stiffness(dom, x, y);
        y.par_iter_mut()
            .enumerate()
            .for_each(|(i, y)| *y = eps * *y + reaction[i] * x[i]);
    };
    let mdiag: Vec<f64> = hdiag.iter().map(|d| d.abs().max(1e-12)).collect();
    let stats: KrylovStats;
    let result = match gap {
        None => {
            let b: Vec<f64> = f.iter().map(|v| -v).collect();
            let mut x = vec![0.0; n];
            stats = linalg::minres(apply_h, &mdiag, &b, &mut x, LINEAR_REL_TOL, 20 * n);
            (x, 0.0)
        }
        Some(g) => {
            let schur: f64 = (0..n).map(|i| wt[i] * wt[i] / mdiag[i]).sum();
            let mut m = mdiag.clone();
            m.push(schur);
            let mut b: Vec<f64> = f.iter().map(|v| -v).collect();
            b.push(-g);
            let apply = |x: &[f64], y: &mut [f64]| {
                apply_h(&x[..n], &mut y[..n]);
                let l = x[n];
                y[..n].par_iter_mut().zip(wt.par_iter()).for_each(|(y, w)| *y -= w * l);
                y[n] = -par::dot(wt, &x[..n]);
            };
            let mut x = vec![0.0; n + 1];
            stats = linalg::minres(apply, &m, &b, &mut x, LINEAR_REL_TOL, 20 * n);
            let dl = x.pop().unwrap_or(0.0);
            (x, dl)
        }
    };
    if result.0.iter().any(|v| !v.is_finite()) || !result.1.is_finite() {
        return Err(SolverError::SingularJacobian { step });
    }
    if !stats.converged {
        log::warn!(
            "newton step {step}: MINRES stopped at relative residual {:e}",
            stats.relative_residual
        );
        if stats.relative_residual > 1e-3 {
            return Err(SolverError::SingularJacobian { step });
        }
    }
    Ok(result)
}

/// Interface-bearing initial data, smoothed by the heteroclinic profile at the current ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum InitRecipe {
    Constant {
        value: f64,
    },
    /// `q(x - at)`: `-1` left of `at`, `+1` right of it.
    StepX {
        at: f64,
    },
    /// `q(y - at)`.
    StepY {
        at: f64,
    },
    /// `+1` outside `[lower, upper]` along `axis` (0 = x, 1 = y) and `-1` inside.
    TwoLayer {
        lower: f64,
        upper: f64,
        axis: usize,
    },
    /// `q(|p - center| - radius)`: `-1` inside the circle, `+1` outside.
    Radial {
        center: [f64; 2],
        radius: f64,
    },
    /// Explicit nodal values (e.g. loaded from a solution file).
    Values {
        values: Vec<f64>,
    },
}

impl InitRecipe {
    pub fn build(
        &self,
        domain: Arc<Domain>,
        epsilon: f64,
        w: &DoubleWell,
        constraint: Option<f64>,
    ) -> Result<Field, SolverError> {
        let needs_profile = !matches!(self, InitRecipe::Constant { .. } | InitRecipe::Values { .. });
        let q = if needs_profile {
            Some(w.heteroclinic_profile(epsilon)?)
        } else {
            None
        };
        let q = move |t: f64| q.map_or(0.0, |q| q.value(t));
        let mut field = match self {
            InitRecipe::Constant { value } => Field::constant(domain, epsilon, *value),
            InitRecipe::StepX { at } => Field::from_fn(domain, epsilon, |p| q(p[0] - at)),
            InitRecipe::StepY { at } => Field::from_fn(domain, epsilon, |p| q(p[1] - at)),
            InitRecipe::TwoLayer { lower, upper, axis } => {
                if lower >= upper || *axis > 1 {
                    return Err(SolverError::InvalidParameter(format!(
                        "two-layer needs lower < upper and axis in {{0, 1}}, got {lower}, {upper}, {axis}"
                    )));
                }
                let a = *axis;
                Field::from_fn(domain, epsilon, |p| q(p[a] - upper) - q(p[a] - lower) + 1.0)
            }
            InitRecipe::Radial { center, radius } => Field::from_fn(domain, epsilon, |p| {
                q((p[0] - center[0]).hypot(p[1] - center[1]) - radius)
            }),
            InitRecipe::Values { values } => Field::new(domain, epsilon, values.clone())?,
        };
        if let Some(m) = constraint {
            field.project_mean(m);
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub epsilons: Vec<f64>,
    pub constraint: Option<f64>,
    pub init: InitRecipe,
    pub flow: FlowOptions,
    pub newton: NewtonOptions,
    /// Warm-start each ε from the previous solution; otherwise solve every ε
    /// independently (and in parallel) from the init recipe.
    pub warm_start: bool,
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub result: Result<Solution, SolverError>,
}

/// Checks that the epsilons descend and that each resolves the interface.
pub fn validate_epsilons(dom: &Domain, epsilons: &[f64]) -> Result<(), SolverError> {
    if epsilons.is_empty() {
        return Err(SolverError::InvalidParameter("no epsilons given".into()));
    }
    if epsilons.windows(2).any(|p| p[1] >= p[0]) {
        return Err(SolverError::InvalidParameter(
            "epsilons must be strictly descending".into(),
        ));
    }
    for &e in epsilons {
        if !(e > 2.0 * dom.h()) {
            return Err(SolverError::UnresolvedInterface { epsilon: e, h: dom.h() });
        }
    }
    Ok(())
}

/// Gradient flow followed by Newton refinement from a given start.
pub fn solve_from(
    init: &Field,
    w: &DoubleWell,
    flow: &FlowOptions,
    newton: &NewtonOptions,
) -> Result<Solution, SolverError> {
    let pre = match gradient_flow(init, w, flow) {
        Ok(s) => s,
        Err(SolverError::NoConvergence { best, .. }) => *best,
        Err(e) => return Err(e),
    };
    if pre.residual_norm <= newton.tol {
        return Ok(pre);
    }
    newton_refine(&pre, w, newton)
}

pub fn epsilon_sweep(domain: Arc<Domain>, w: &DoubleWell, opts: &SweepOptions) -> Result<Vec<SweepEntry>, SolverError> {
    validate_epsilons(&domain, &opts.epsilons)?;
    let flow = FlowOptions {
        constraint: opts.constraint,
        ..opts.flow
    };
    if !opts.warm_start {
        return Ok(opts
            .epsilons
            .par_iter()
            .map(|&eps| {
                let result = opts
                    .init
                    .build(domain.clone(), eps, w, opts.constraint)
                    .and_then(|init| solve_from(&init, w, &flow, &opts.newton));
                SweepEntry { epsilon: eps, result }
            })
            .collect());
    }
    let mut out = Vec::with_capacity(opts.epsilons.len());
    let mut previous: Option<Field> = None;
    for &eps in &opts.epsilons {
        let init = match &previous {
            Some(f) => Ok(f.with_epsilon(eps)),
            None => opts.init.build(domain.clone(), eps, w, opts.constraint),
        };
        let result = init.and_then(|init| solve_from(&init, w, &flow, &opts.newton));
        match &result {
            Ok(s) => previous = Some(s.field.clone()),
            Err(e) => log::warn!("eps = {eps}: {e}"),
        }
        out.push(SweepEntry { epsilon: eps, result });
    }
    Ok(out)
}
