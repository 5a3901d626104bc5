//! Right-preconditioned BiCGSTAB.

use crate::linalg::{dot, norm2};

/// Pivot magnitude below which BiCGSTAB reports breakdown.
const BREAKDOWN: f64 = 1e-300;
/// True-residual restarts allowed before declaring stagnation.
const MAX_RESTARTS: usize = 5;

/// `op(x, y)` writes `y = Op x`.
pub type LinearOp<'a> = &'a dyn Fn(&[f64], &mut [f64]);

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KrylovOutcome {
    Converged,
    MaxIterations,
    /// `ρ`, `(r̂, v)` or `ω` fell below 1e-300.
    Breakdown,
    /// The true residual stayed above tolerance after repeated restarts.
    Stagnation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    /// Iteration count; a solve that converges at the intermediate `s`
    /// vector counts half an iteration.
    pub iterations: f64,
    pub outcome: KrylovOutcome,
    /// `‖b - A x‖₂ / ‖b‖₂` of the returned iterate.
    pub relative_residual: f64,
    pub matvecs: usize,
    pub restarts: usize,
}

impl KrylovReport {
    pub fn converged(&self) -> bool {
        self.outcome == KrylovOutcome::Converged
    }
}

/// Solves `A x = b` from `x0 = 0`, preconditioning on the right
/// (`A P⁻¹ y = b`, `x = P⁻¹ y`) so that the monitored residual is the true one.
///
/// `apply(x, y)` writes `y = A x`; `precond(r, z)` writes `z = P⁻¹ r`, or pass
/// `None` for the identity. Stops when `‖r‖₂ ≤ tol ‖b‖₂` or after `maxit`
/// iterations.
pub fn bicgstab(
    apply: LinearOp,
    precond: Option<LinearOp>,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> (Vec<f64>, KrylovReport) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    let mut report = KrylovReport {
        iterations: 0.0,
        outcome: KrylovOutcome::Converged,
        relative_residual: 0.0,
        matvecs: 0,
        restarts: 0,
    };
    if bnorm == 0.0 {
        return (x, report);
    }
    let target = tol * bnorm;
    let pc = |r: &[f64], z: &mut [f64]| match precond {
        Some(p) => p(r, z),
        None => z.copy_from_slice(r),
    };

    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut fresh = true;
    let mut last_true = f64::INFINITY;

    // Returns true when the true residual of `x` meets the target; otherwise
    // resets the recurrences from that residual.
    let mut verify =
        |x: &[f64], r: &mut Vec<f64>, r_hat: &mut Vec<f64>, report: &mut KrylovReport, scratch: &mut [f64]| -> bool {
            apply(x, scratch);
            report.matvecs += 1;
            for ((ri, bi), ai) in r.iter_mut().zip(b).zip(scratch.iter()) {
                *ri = bi - ai;
            }
            let true_norm = norm2(r);
            report.relative_residual = true_norm / bnorm;
            if true_norm <= target {
                return true;
            }
            if true_norm >= 0.5 * last_true {
                report.restarts += MAX_RESTARTS;
            }
            last_true = true_norm;
            report.restarts += 1;
            r_hat.copy_from_slice(r);
            false
        };

    let mut it = 0usize;
    while it < maxit {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < BREAKDOWN {
            report.outcome = KrylovOutcome::Breakdown;
            break;
        }
        if fresh {
            p.copy_from_slice(&r);
            fresh = false;
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
                *pi = ri + beta * (*pi - omega * vi);
            }
        }
        pc(&p, &mut p_hat);
        apply(&p_hat, &mut v);
        report.matvecs += 1;
        let denom = dot(&r_hat, &v);
        if denom.abs() < BREAKDOWN {
            report.outcome = KrylovOutcome::Breakdown;
            break;
        }
        alpha = rho_new / denom;
        for ((si, ri), vi) in s.iter_mut().zip(&r).zip(&v) {
            *si = ri - alpha * vi;
        }
        if norm2(&s) <= target {
            for (xi, pi) in x.iter_mut().zip(&p_hat) {
                *xi += alpha * pi;
            }
            report.iterations = it as f64 - 0.5;
            if verify(&x, &mut r, &mut r_hat, &mut report, &mut t) {
                report.outcome = KrylovOutcome::Converged;
                return (x, report);
            }
            if report.restarts > MAX_RESTARTS {
                report.outcome = KrylovOutcome::Stagnation;
                return (x, report);
            }
            fresh = true;
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        pc(&s, &mut s_hat);
        apply(&s_hat, &mut t);
        report.matvecs += 1;
        let tt = dot(&t, &t);
        if tt < BREAKDOWN {
            report.outcome = KrylovOutcome::Breakdown;
            break;
        }
        omega = dot(&t, &s) / tt;
        for ((xi, pi), si) in x.iter_mut().zip(&p_hat).zip(&s_hat) {
            *xi += alpha * pi + omega * si;
        }
        for ((ri, si), ti) in r.iter_mut().zip(&s).zip(&t) {
            *ri = si - omega * ti;
        }
        report.iterations = it as f64;
        if norm2(&r) <= target {
            if verify(&x, &mut r, &mut r_hat, &mut report, &mut t) {
                report.outcome = KrylovOutcome::Converged;
                return (x, report);
            }
            if report.restarts > MAX_RESTARTS {
                report.outcome = KrylovOutcome::Stagnation;
                return (x, report);
            }
            fresh = true;
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        if omega.abs() < BREAKDOWN {
            report.outcome = KrylovOutcome::Breakdown;
            break;
        }
        rho = rho_new;
    }
    if report.outcome == KrylovOutcome::Converged {
        report.outcome = KrylovOutcome::MaxIterations;
        report.iterations = it as f64;
    }
    apply(&x, &mut t);
    report.matvecs += 1;
    let res: Vec<f64> = b.iter().zip(&t).map(|(bi, ti)| bi - ti).collect();
    report.relative_residual = norm2(&res) / bnorm;
    (x, report)
}
