//! Small hand-rolled Krylov and tridiagonal solvers for the grid operators.

use crate::par;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Relative residual reached (in the solver's own norm).
    pub relative_residual: f64,
    pub converged: bool,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += a * x);
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = (0..n).into_par_iter().map(|i| b[i] - ax[i]).collect();
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut z: Vec<f64> = (0..n).into_par_iter().map(|i| r[i] / diag[i]).collect();
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = par::dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return KrylovStats {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        apply(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            return KrylovStats {
                iterations: it,
                relative_residual: rel,
                converged: false,
            };
        }
        let alpha = rz / pap;
        axpy(x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        z.par_iter_mut()
            .zip(r.par_iter())
            .zip(diag.par_iter())
            .for_each(|((z, r), d)| *z = r / d);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + beta * *p);
        rel = par::dot(&r, &r).sqrt() / bnorm;
    }
    KrylovStats {
        iterations: max_iter,
        relative_residual: rel,
        converged: rel <= rel_tol,
    }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) operators with an SPD
/// diagonal preconditioner `m_diag`. Follows the Paige-Saunders recurrences.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    m_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r1: Vec<f64> = (0..n).into_par_iter().map(|i| b[i] - ax[i]).collect();
    let mut y: Vec<f64> = (0..n).into_par_iter().map(|i| r1[i] / m_diag[i]).collect();
    let beta1 = par::dot(&r1, &y);
    if !(beta1 > 0.0) {
        return KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: beta1 == 0.0,
        };
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        v.par_iter_mut().zip(y.par_iter()).for_each(|(v, y)| *v = s * y);
        apply(&v, &mut y);
        if itn >= 2 {
            axpy(&mut y, -beta / oldb, &r1);
        }
        let alfa = par::dot(&v, &y);
        axpy(&mut y, -alfa / beta, &r2);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        y.par_iter_mut()
            .zip(r2.par_iter())
            .zip(m_diag.par_iter())
            .for_each(|((y, r), m)| *y = r / m);
        oldb = beta;
        let bb = par::dot(&r2, &y);
        if bb < 0.0 {
            return KrylovStats {
                iterations: itn,
                relative_residual: phibar / beta1,
                converged: false,
            };
        }
        beta = bb.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        // w1 <- w2, w2 <- w, w <- (v - oldeps w1 - delta w2) / gamma
        std::mem::swap(&mut w2, &mut w);
        // now w holds the old w2 (= w1), w2 holds the old w
        w.par_iter_mut()
            .zip(w2.par_iter())
            .zip(v.par_iter())
            .for_each(|((w1, w2), v)| *w1 = (v - oldeps * *w1 - delta * w2) * denom);
        axpy(x, phi, &w);
        let rel = phibar / beta1;
        if rel <= rel_tol || beta == 0.0 {
            return KrylovStats {
                iterations: itn,
                relative_residual: rel,
                converged: true,
            };
        }
    }
    KrylovStats {
        iterations: max_iter,
        relative_residual: phibar / beta1,
        converged: false,
    }
}

/// Solves a tridiagonal system by the Thomas algorithm. `lower[0]` and
/// `upper[n-1]` are ignored. Returns `None` on a vanishing pivot.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let scale = diag
        .iter()
        .chain(lower)
        .chain(upper)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < tiny {
        return None;
    }
    c[0] = if n > 1 { upper[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.abs() < tiny || !piv.is_finite() {
            return None;
        }
        if i + 1 < n {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn laplacian_1d(n: usize, shift: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = (2.0 + shift) * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    fn residual(apply: &impl Fn(&[f64], &mut [f64]), x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        apply(x, &mut ax);
        ax.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn cg_and_minres_solve_spd() {
        let n = 200;
        let a = laplacian_1d(n, 0.01);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag = vec![2.01; n];
        let mut x = vec![0.0; n];
        let s = pcg(&a, &diag, &b, &mut x, 1e-12, 2000);
        assert!(s.converged);
        assert!(residual(&a, &x, &b) < 1e-11);
        let mut x = vec![0.0; n];
        let s = minres(&a, &diag, &b, &mut x, 1e-12, 2000);
        assert!(s.converged, "{s:?}");
        assert!(residual(&a, &x, &b) < 1e-10);
    }

    #[test]
    fn minres_handles_indefinite() {
        let n = 100;
        let a = laplacian_1d(n, -0.5);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut x = vec![0.0; n];
        let s = minres(&a, &vec![1.0; n], &b, &mut x, 1e-12, 5000);
        assert!(s.converged, "{s:?}");
        assert!(residual(&a, &x, &b) < 1e-9);
    }

    #[test]
    fn thomas_matches_apply() {
        let n = 50;
        let lower = vec![-1.0; n];
        let upper = vec![-1.0; n];
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + 0.01 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            let mut v = diag[i] * x[i];
            if i > 0 {
                v += lower[i] * x[i - 1];
            }
            if i + 1 < n {
                v += upper[i] * x[i + 1];
            }
            assert!((v - rhs[i]).abs() < 1e-12);
        }
        assert!(solve_tridiagonal(&[0.0], &[0.0], &[0.0], &[1.0]).is_none());
    }
}
