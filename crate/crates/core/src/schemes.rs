//! Spatial operator and the two implicit Euler time-steppers.
//!
//! With `w1 = τ / h^α` and `w2 = α λ^{α-1} τ / h` the interior operator is
//!
//! ```text
//! A = I - w1 (D+ G + D- Gᵀ) + w2 (D+ - D-) B,     B = tridiag(-1, 1, 0)
//! ```
//!
//! The nonlinear scheme solves `A u^j - τ f(u^j, t_j) = u^{j-1}` each step; the
//! linearised scheme solves `A u^j = u^{j-1} + τ f(u^{j-1}, t_{j-1})`.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;

use crate::error::{check_len, Result, TfdeError};
use crate::krylov::{bicgstab, KrylovReport};
use crate::linalg::{
    norm2, BandedFactor, BandedMatrix, DenseAssemble, DenseLu, LowerHessenbergToeplitz, DEFAULT_DENSE_CAP,
};
use crate::problem::{check_hypotheses, Mesh, ProblemSpec};
use crate::weights::TemperedWeights;

/// Scratch buffers for one FFT matvec.
pub struct Workspace {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    gx: Vec<f64>,
    gtx: Vec<f64>,
}

/// Structured form of `A`; matvec costs `O(N log N)`.
#[derive(Debug, Clone)]
pub struct SpaceOperator {
    n: usize,
    w1: f64,
    w2: f64,
    d_plus: Vec<f64>,
    d_minus: Vec<f64>,
    weights: TemperedWeights,
    g: LowerHessenbergToeplitz,
}

impl SpaceOperator {
    /// Builds `A` on the interior nodes of `mesh`.
    pub fn assemble(spec: &ProblemSpec, mesh: &Mesh) -> Result<Self> {
        spec.validate()?;
        check_hypotheses(spec, mesh)?;
        let n = mesh.interior();
        let (h, tau, alpha) = (mesh.h(), mesh.tau(), spec.alpha);
        let weights = TemperedWeights::new(alpha, spec.lambda, h, n)?;
        let nodes = mesh.interior_nodes();
        let d_plus = nodes.iter().map(|&x| (spec.d_plus)(x)).collect();
        let d_minus = nodes.iter().map(|&x| (spec.d_minus)(x)).collect();
        let w1 = tau / h.powf(alpha);
        // λ^{α-1} → 0 as λ → 0 since α > 1
        let w2 = if spec.lambda == 0.0 { 0.0 } else { alpha * spec.lambda.powf(alpha - 1.0) * tau / h };
        Ok(Self::from_parts(w1, w2, d_plus, d_minus, weights))
    }

    /// Builds `A` from explicit pieces. `weights` must hold `g_0 ..= g_n`.
    pub fn from_parts(w1: f64, w2: f64, d_plus: Vec<f64>, d_minus: Vec<f64>, weights: TemperedWeights) -> Self {
        let n = d_plus.len();
        assert_eq!(n, d_minus.len());
        let g = LowerHessenbergToeplitz::from_weights(weights.as_slice(), n);
        Self { n, w1, w2, d_plus, d_minus, weights, g }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }

    pub fn d_plus(&self) -> &[f64] {
        &self.d_plus
    }

    pub fn d_minus(&self) -> &[f64] {
        &self.d_minus
    }

    pub fn weights(&self) -> &TemperedWeights {
        &self.weights
    }

    pub fn toeplitz(&self) -> &LowerHessenbergToeplitz {
        &self.g
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            buf: vec![Complex64::new(0.0, 0.0); self.g.embedding_len()],
            scratch: vec![Complex64::new(0.0, 0.0); self.g.scratch_len()],
            gx: vec![0.0; self.n],
            gtx: vec![0.0; self.n],
        }
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64], ws: &mut Workspace) {
        let Workspace { buf, scratch, gx, gtx } = ws;
        self.g.matvec_pair_into(x, gx, gtx, buf, scratch);
        for i in 0..self.n {
            let (dp, dm) = (self.d_plus[i], self.d_minus[i]);
            let back = if i > 0 { x[i - 1] } else { 0.0 };
            y[i] = x[i] - self.w1 * (dp * gx[i] + dm * gtx[i]) + self.w2 * (dp - dm) * (x[i] - back);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y, &mut self.workspace());
        Ok(y)
    }

    /// Entry `(i, j)` of `A` built from weights `g_0 ..= g_ell` only.
    fn entry_truncated(&self, i: usize, j: usize, ell: usize) -> f64 {
        let g = self.weights.as_slice();
        // G(i, j) = g_{i-j+1} when -1 ≤ i - j ≤ ell - 1
        let gij = |i: usize, j: usize| {
            if i + 1 >= j && i + 1 - j <= ell {
                g[i + 1 - j]
            } else {
                0.0
            }
        };
        let delta = if i == j { 1.0 } else { 0.0 };
        let b = if i == j {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        };
        let (dp, dm) = (self.d_plus[i], self.d_minus[i]);
        delta - self.w1 * (dp * gij(i, j) + dm * gij(j, i)) + self.w2 * (dp - dm) * b
    }

    /// `A_ℓ`: `A` rebuilt from `g_0 ..= g_ℓ`, half-bandwidth `ℓ - 1` each side.
    pub fn banded(&self, ell: usize) -> Result<BandedMatrix> {
        if ell <= 2 || ell > self.n {
            return Err(TfdeError::Domain(format!("band parameter must satisfy 2 < ell <= {}, got {ell}", self.n)));
        }
        let bw = ell - 1;
        let mut m = BandedMatrix::zeros(self.n, bw, bw);
        for i in 0..self.n {
            for j in m.row_range(i) {
                m.set(i, j, self.entry_truncated(i, j, ell));
            }
        }
        Ok(m)
    }
}

impl DenseAssemble for SpaceOperator {
    fn dense_dim(&self) -> usize {
        self.n
    }

    fn dense_entry(&self, i: usize, j: usize) -> f64 {
        self.entry_truncated(i, j, self.n)
    }
}

pub fn assemble_space_operator(spec: &ProblemSpec, mesh: &Mesh) -> Result<SpaceOperator> {
    SpaceOperator::assemble(spec, mesh)
}

/// Grid values `u_i^j`, `i = 0..=N`, `j = 0..=M`, stored by time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSolution {
    pub mesh: Mesh,
    values: Vec<f64>,
}

impl SchemeSolution {
    /// Zero boundary columns and `u0` on the first row; other rows zero.
    pub fn with_initial(spec: &ProblemSpec, mesh: Mesh) -> Self {
        let stride = mesh.n + 1;
        let mut values = vec![0.0; stride * (mesh.m + 1)];
        for i in 1..mesh.n {
            values[i] = (spec.u0)(mesh.x(i));
        }
        Self { mesh, values }
    }

    /// Assembles from the interior initial level and the time-major stacked
    /// interior unknowns `[u^1; ...; u^M]`.
    pub fn from_stacked(mesh: Mesh, u0_interior: &[f64], stacked: &[f64]) -> Result<Self> {
        let n = mesh.interior();
        check_len(n, u0_interior.len())?;
        check_len(n * mesh.m, stacked.len())?;
        let stride = mesh.n + 1;
        let mut values = vec![0.0; stride * (mesh.m + 1)];
        values[1..=n].copy_from_slice(u0_interior);
        for j in 1..=mesh.m {
            values[j * stride + 1..j * stride + 1 + n].copy_from_slice(&stacked[(j - 1) * n..j * n]);
        }
        Ok(Self { mesh, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.mesh.n + 1) + i]
    }

    /// Full level `j`, boundary nodes included.
    pub fn level(&self, j: usize) -> &[f64] {
        let s = self.mesh.n + 1;
        &self.values[j * s..(j + 1) * s]
    }

    pub fn interior(&self, j: usize) -> &[f64] {
        let s = self.mesh.n + 1;
        &self.values[j * s + 1..(j + 1) * s - 1]
    }

    fn interior_mut(&mut self, j: usize) -> &mut [f64] {
        let s = self.mesh.n + 1;
        &mut self.values[j * s + 1..(j + 1) * s - 1]
    }

    /// `[u^1; ...; u^M]`.
    pub fn stacked(&self) -> Vec<f64> {
        (1..=self.mesh.m).flat_map(|j| self.interior(j).iter().copied()).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest `|u_i^j - v_i^j|` over the whole grid; meshes must match.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        check_len(self.values.len(), other.values.len())?;
        Ok(self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// How per-step linear systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverChoice {
    /// Dense LU when `N - 1` is within the dense cap, banded-preconditioned
    /// BiCGSTAB otherwise.
    Auto,
    Dense,
    /// BiCGSTAB preconditioned by the banded truncation `A_ℓ`.
    Krylov {
        ell: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub solver: LinearSolverChoice,
    pub dense_cap: usize,
    pub krylov_tol: f64,
    pub krylov_maxit: usize,
    /// Band parameter used by `Auto` when it falls back to Krylov.
    pub ell: usize,
    pub newton_tol: f64,
    pub newton_maxit: usize,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            solver: LinearSolverChoice::Auto,
            dense_cap: DEFAULT_DENSE_CAP,
            krylov_tol: 1e-12,
            krylov_maxit: 1000,
            ell: 8,
            newton_tol: 1e-12,
            newton_maxit: 50,
        }
    }
}

enum Factor {
    Dense(DenseLu),
    Banded(BandedFactor),
}

impl Factor {
    fn solve_into(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        let res = match self {
            Factor::Dense(lu) => lu.solve_in_place(z),
            Factor::Banded(f) => f.solve_in_place(z),
        };
        res.expect("factor dimension fixed at construction");
    }
}

fn dense_matrix(op: &SpaceOperator, cap: usize) -> Result<nalgebra::DMatrix<f64>> {
    op.to_dense(cap)
}

/// Chooses between an exact factor of `A` and the banded `A_ℓ`.
fn build_factor(op: &SpaceOperator, opts: &SchemeOptions) -> Result<(Factor, bool)> {
    let n = op.dim();
    let ell_for = |ell: usize| ell.clamp(3, n.max(3)).min(n);
    match opts.solver {
        LinearSolverChoice::Dense => Ok((Factor::Dense(DenseLu::new(dense_matrix(op, opts.dense_cap)?)?), true)),
        LinearSolverChoice::Auto if n <= opts.dense_cap => {
            Ok((Factor::Dense(DenseLu::new(dense_matrix(op, opts.dense_cap)?)?), true))
        }
        LinearSolverChoice::Auto => Ok((Factor::Banded(op.banded(ell_for(opts.ell))?.factor()?), false)),
        LinearSolverChoice::Krylov { ell } => {
            if n < 3 {
                Ok((Factor::Dense(DenseLu::new(dense_matrix(op, opts.dense_cap)?)?), false))
            } else {
                Ok((Factor::Banded(op.banded(ell_for(ell))?.factor()?), false))
            }
        }
    }
}

/// Per-run statistics of a time-stepping solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemeStats {
    /// Krylov iterations summed over all steps (zero for direct solves).
    pub krylov_iterations: f64,
    /// Newton iterations per time step (nonlinear scheme only).
    pub newton_iterations: Vec<usize>,
}

fn krylov_failed(step: usize, rep: &KrylovReport) -> TfdeError {
    TfdeError::Solver(format!(
        "BiCGSTAB {:?} at step {step} after {} iterations, relative residual {:.3e}",
        rep.outcome, rep.iterations, rep.relative_residual
    ))
}

/// Linearised implicit Euler: `A u^j = u^{j-1} + τ f(u^{j-1}, x, t_{j-1})`.
pub fn liess_run(spec: &ProblemSpec, mesh: &Mesh, opts: &SchemeOptions) -> Result<SchemeSolution> {
    liess_run_with_stats(spec, mesh, opts).map(|(s, _)| s)
}

pub fn liess_run_with_stats(
    spec: &ProblemSpec,
    mesh: &Mesh,
    opts: &SchemeOptions,
) -> Result<(SchemeSolution, SchemeStats)> {
    let op = SpaceOperator::assemble(spec, mesh)?;
    let (factor, exact) = build_factor(&op, opts)?;
    let nodes = mesh.interior_nodes();
    let tau = mesh.tau();
    let mut sol = SchemeSolution::with_initial(spec, *mesh);
    let mut stats = SchemeStats::default();
    let ws = RefCell::new(op.workspace());
    let n = op.dim();
    let mut rhs = vec![0.0; n];
    let mut next = vec![0.0; n];
    for j in 1..=mesh.m {
        let t_prev = mesh.t(j - 1);
        let prev = sol.interior(j - 1);
        for i in 0..n {
            rhs[i] = prev[i] + tau * spec.f(prev[i], nodes[i], t_prev);
        }
        if exact {
            factor.solve_into(&rhs, &mut next);
        } else {
            let apply = |x: &[f64], y: &mut [f64]| op.matvec_into(x, y, &mut ws.borrow_mut());
            let pc = |r: &[f64], z: &mut [f64]| factor.solve_into(r, z);
            let (x, rep) = bicgstab(&apply, Some(&pc), &rhs, opts.krylov_tol, opts.krylov_maxit);
            if !rep.converged() {
                return Err(krylov_failed(j, &rep));
            }
            stats.krylov_iterations += rep.iterations;
            next.copy_from_slice(&x);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(TfdeError::Numeric(format!("non-finite solution at step {j}")));
        }
        sol.interior_mut(j).copy_from_slice(&next);
    }
    Ok((sol, stats))
}

/// Nonlinear implicit Euler, one Newton solve per step:
/// `A u^j - τ f(u^j, x, t_j) = u^{j-1}`, starting from `u^{j-1}`.
pub fn nlies_step_run(spec: &ProblemSpec, mesh: &Mesh, opts: &SchemeOptions) -> Result<SchemeSolution> {
    nlies_step_run_with_stats(spec, mesh, opts).map(|(s, _)| s)
}

pub fn nlies_step_run_with_stats(
    spec: &ProblemSpec,
    mesh: &Mesh,
    opts: &SchemeOptions,
) -> Result<(SchemeSolution, SchemeStats)> {
    let op = SpaceOperator::assemble(spec, mesh)?;
    let n = op.dim();
    let direct = opts.solver == LinearSolverChoice::Dense;
    let dense_a = if direct { Some(dense_matrix(&op, opts.dense_cap)?) } else { None };
    let factor = if direct { None } else { Some(build_factor(&op, opts)?.0) };
    let nodes = mesh.interior_nodes();
    let tau = mesh.tau();
    let mut sol = SchemeSolution::with_initial(spec, *mesh);
    let mut stats = SchemeStats::default();
    let mut ws = op.workspace();
    let krylov_ws = RefCell::new(op.workspace());
    let mut u = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut jac_diag = vec![0.0; n];

    for j in 1..=mesh.m {
        let t = mesh.t(j);
        let prev = sol.interior(j - 1).to_vec();
        u.copy_from_slice(&prev);
        let mut last_step = f64::INFINITY;
        let mut iters = 0;
        let mut done = false;
        while iters < opts.newton_maxit {
            iters += 1;
            op.matvec_into(&u, &mut resid, &mut ws);
            for i in 0..n {
                resid[i] = -(resid[i] - tau * spec.f(u[i], nodes[i], t) - prev[i]);
                jac_diag[i] = -tau * spec.df_du(u[i], nodes[i], t);
            }
            if resid.iter().any(|v| !v.is_finite()) {
                return Err(TfdeError::Numeric(format!("non-finite residual at step {j}")));
            }
            let z = match (&dense_a, &factor) {
                (Some(a), _) => {
                    let mut jm = a.clone();
                    for i in 0..n {
                        jm[(i, i)] += jac_diag[i];
                    }
                    DenseLu::new(jm)?.solve(&resid)?
                }
                (None, Some(f)) => {
                    let apply = |x: &[f64], y: &mut [f64]| {
                        op.matvec_into(x, y, &mut krylov_ws.borrow_mut());
                        for i in 0..n {
                            y[i] += jac_diag[i] * x[i];
                        }
                    };
                    let pc = |r: &[f64], z: &mut [f64]| f.solve_into(r, z);
                    let (z, rep) = bicgstab(&apply, Some(&pc), &resid, opts.krylov_tol, opts.krylov_maxit);
                    stats.krylov_iterations += rep.iterations;
                    // a slightly inexact correction still contracts
                    if !rep.converged() && rep.relative_residual > 1e-8 {
                        return Err(krylov_failed(j, &rep));
                    }
                    z
                }
                _ => unreachable!(),
            };
            for (ui, zi) in u.iter_mut().zip(&z) {
                *ui += zi;
            }
            let step = norm2(&z);
            // Converged, or stalled at the rounding floor.
            if step <= opts.newton_tol || (step <= 1e-9 && step >= 0.5 * last_step) {
                done = true;
                break;
            }
            last_step = step;
        }
        if !done {
            return Err(TfdeError::Solver(format!(
                "per-step Newton did not converge at step {j} within {} iterations (last step {last_step:.3e})",
                opts.newton_maxit
            )));
        }
        stats.newton_iterations.push(iters);
        sol.interior_mut(j).copy_from_slice(&u);
    }
    Ok((sol, stats))
}
