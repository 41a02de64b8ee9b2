//! Preconditioned conjugate gradients over closures.

use crate::error::{AetError, Result};
use crate::sparse::{axpy, dot, norm2};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop when `‖r‖ ≤ tol · ‖b‖`.
    pub tol: f64,
    pub max_iters: usize,
    /// Return the current iterate instead of failing when `max_iters` is hit.
    pub allow_early_stop: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 10_000,
            allow_early_stop: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration.
    pub history: Vec<f64>,
}

/// Solves `A x = b` for SPD `A` with SPD preconditioner `P ≈ A⁻¹`, starting at zero.
pub fn pcg<A, P>(apply_a: A, precondition: P, b: &[f64], opts: CgOptions) -> Result<CgOutcome>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            history: Vec::new(),
        });
    }
    let mut r = b.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    let mut rel = 1.0;
    for it in 1..=opts.max_iters {
        let ap = apply_a(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            if opts.allow_early_stop && it > 1 {
                return Ok(CgOutcome {
                    x,
                    iterations: it - 1,
                    relative_residual: rel,
                    converged: false,
                    history,
                });
            }
            return Err(AetError::NoConvergence {
                what: "conjugate gradients (breakdown: non-positive curvature)",
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = norm2(&r) / b_norm;
        history.push(rel);
        if rel <= opts.tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: rel,
                converged: true,
                history,
            });
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    if opts.allow_early_stop {
        return Ok(CgOutcome {
            x,
            iterations: opts.max_iters,
            relative_residual: rel,
            converged: false,
            history,
        });
    }
    Err(AetError::NoConvergence {
        what: "conjugate gradients",
        iterations: opts.max_iters,
        residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect()
        };
        let b = [1.0, 2.0, 3.0];
        let out = pcg(apply, |r: &[f64]| r.to_vec(), &b, CgOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 3);
        let r = apply(&out.x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-9);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let apply = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).collect() };
        let b = vec![1.0; 50];
        let opts = CgOptions {
            tol: 1e-14,
            max_iters: 3,
            allow_early_stop: false,
        };
        assert!(matches!(
            pcg(apply, |r: &[f64]| r.to_vec(), &b, opts),
            Err(AetError::NoConvergence { iterations: 3, .. })
        ));
    }
}
