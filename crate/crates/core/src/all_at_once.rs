//! All-at-once nonlinear system and its preconditioned Newton–Krylov solver.
//!
//! Stacking the interior unknowns time-major, `u = [u^1; ...; u^M]`, the
//! nonlinear scheme becomes one block lower-bidiagonal system
//!
//! ```text
//! 𝒜 u = τ f(u) + v,   𝒜 = blktridiag(-I, A, 0),   v = [u^0; 0; ...; 0]
//! ```
//!
//! Newton's method is started from the linearised scheme solved on a coarse
//! grid and interpolated, and each Jacobian system is solved by BiCGSTAB
//! preconditioned with `P_ℓ = blktridiag(-I, A_ℓ, 0)`.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, TfdeError};
use crate::krylov::{bicgstab, KrylovOutcome, LinearOp};
use crate::linalg::{check_cap, norm2, BandedFactor, BandedMatrix, DenseAssemble, DenseLu, DEFAULT_DENSE_CAP};
use crate::problem::{build_mesh, Mesh, ProblemSpec};
use crate::schemes::{liess_run, SchemeOptions, SchemeSolution, SpaceOperator};

/// The stacked system for one problem and mesh.
#[derive(Debug, Clone)]
pub struct AllAtOnceSystem {
    pub spec: ProblemSpec,
    pub mesh: Mesh,
    op: SpaceOperator,
    u0: Vec<f64>,
    nodes: Vec<f64>,
}

impl AllAtOnceSystem {
    pub fn new(spec: &ProblemSpec, mesh: &Mesh) -> Result<Self> {
        let op = SpaceOperator::assemble(spec, mesh)?;
        let nodes = mesh.interior_nodes();
        let u0 = nodes.iter().map(|&x| (spec.u0)(x)).collect();
        Ok(Self { spec: spec.clone(), mesh: *mesh, op, u0, nodes })
    }

    pub fn operator(&self) -> &SpaceOperator {
        &self.op
    }

    /// Interior values of the initial level.
    pub fn initial(&self) -> &[f64] {
        &self.u0
    }

    /// Unknowns per time level.
    pub fn block(&self) -> usize {
        self.op.dim()
    }

    /// `M (N - 1)`.
    pub fn dim(&self) -> usize {
        self.block() * self.mesh.m
    }

    /// Block-wise `y = 𝒜 x + diag(extra) x`; blocks run in parallel.
    fn apply_blocks(&self, x: &[f64], y: &mut [f64], extra: Option<&[f64]>) {
        let n = self.block();
        y.par_chunks_mut(n).enumerate().for_each_init(
            || self.op.workspace(),
            |ws, (j, yj)| {
                let xj = &x[j * n..(j + 1) * n];
                self.op.matvec_into(xj, yj, ws);
                if j > 0 {
                    for (yi, xi) in yj.iter_mut().zip(&x[(j - 1) * n..j * n]) {
                        *yi -= xi;
                    }
                }
                if let Some(d) = extra {
                    for ((yi, xi), di) in yj.iter_mut().zip(xj).zip(&d[j * n..(j + 1) * n]) {
                        *yi += di * xi;
                    }
                }
            },
        );
    }

    /// `𝒜 x`.
    pub fn apply_operator(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut y = vec![0.0; x.len()];
        self.apply_blocks(x, &mut y, None);
        Ok(y)
    }

    /// `F(u) = 𝒜 u - τ f(u) - v`. Block `j` is `A u^j - u^{j-1} - τ f(u^j, x, t_j)`
    /// with `u^0` the initial data.
    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u.len())?;
        let n = self.block();
        let tau = self.mesh.tau();
        let mut y = vec![0.0; u.len()];
        self.apply_blocks(u, &mut y, None);
        for (j, yj) in y.chunks_mut(n).enumerate() {
            let t = self.mesh.t(j + 1);
            let uj = &u[j * n..(j + 1) * n];
            for i in 0..n {
                yj[i] -= tau * self.spec.f(uj[i], self.nodes[i], t);
            }
            if j == 0 {
                for (yi, u0) in yj.iter_mut().zip(&self.u0) {
                    *yi -= u0;
                }
            }
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(TfdeError::Numeric(format!("residual entry {pos} is not finite")));
        }
        Ok(y)
    }

    /// Diagonal `-τ ∂f/∂u` added to `𝒜` in the Jacobian at `u`.
    pub fn jacobian_diagonal(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u.len())?;
        let n = self.block();
        let tau = self.mesh.tau();
        Ok(u.iter()
            .enumerate()
            .map(|(k, &uk)| {
                let (j, i) = (k / n, k % n);
                -tau * self.spec.df_du(uk, self.nodes[i], self.mesh.t(j + 1))
            })
            .collect())
    }

    /// `(𝒜 - τ diag(∂f/∂u(u))) x`, matrix-free.
    pub fn jacobian_apply(&self, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let diag = self.jacobian_diagonal(u)?;
        let mut y = vec![0.0; x.len()];
        self.apply_blocks(x, &mut y, Some(&diag));
        Ok(y)
    }

    /// Dense `𝒜`, or the Jacobian at `u` when given.
    pub fn dense_jacobian(&self, u: Option<&[f64]>, cap: usize) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        check_cap(dim, cap)?;
        let n = self.block();
        let a = self.op.to_dense(usize::MAX)?;
        let diag = match u {
            Some(u) => self.jacobian_diagonal(u)?,
            None => vec![0.0; dim],
        };
        let mut j = DMatrix::zeros(dim, dim);
        for b in 0..self.mesh.m {
            j.view_mut((b * n, b * n), (n, n)).copy_from(&a);
            if b > 0 {
                for i in 0..n {
                    j[(b * n + i, (b - 1) * n + i)] = -1.0;
                }
            }
        }
        for k in 0..dim {
            j[(k, k)] += diag[k];
        }
        Ok(j)
    }
}

/// `P_ℓ = blktridiag(-I, A_ℓ, 0)` with one shared factorisation of `A_ℓ`.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub ell: usize,
    blocks: usize,
    a_ell: BandedMatrix,
    factor: BandedFactor,
    w1: f64,
    w2: f64,
    d_plus: Vec<f64>,
    d_minus: Vec<f64>,
    g: Vec<f64>,
}

/// Factors `A_ℓ` once; it does not depend on `u`.
pub fn precond_build(sys: &AllAtOnceSystem, ell: usize) -> Result<Preconditioner> {
    let op = sys.operator();
    let a_ell = op.banded(ell)?;
    let factor = a_ell.factor()?;
    Ok(Preconditioner {
        ell,
        blocks: sys.mesh.m,
        a_ell,
        factor,
        w1: op.w1(),
        w2: op.w2(),
        d_plus: op.d_plus().to_vec(),
        d_minus: op.d_minus().to_vec(),
        g: op.weights().as_slice()[..=ell].to_vec(),
    })
}

impl Preconditioner {
    pub fn block_matrix(&self) -> &BandedMatrix {
        &self.a_ell
    }

    pub fn dim(&self) -> usize {
        self.a_ell.dim() * self.blocks
    }

    /// Solves `P_ℓ z = r` by block forward substitution:
    /// `A_ℓ z^1 = r^1`, `A_ℓ z^j = r^j + z^{j-1}`.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        let n = self.a_ell.dim();
        z.copy_from_slice(r);
        for j in 0..self.blocks {
            if j > 0 {
                let (done, rest) = z.split_at_mut(j * n);
                for (zi, prev) in rest[..n].iter_mut().zip(&done[(j - 1) * n..]) {
                    *zi += prev;
                }
            }
            self.factor.solve_in_place(&mut z[j * n..(j + 1) * n]).expect("block length matches factor");
        }
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), r.len())?;
        let mut z = vec![0.0; r.len()];
        self.apply_into(r, &mut z);
        Ok(z)
    }

    /// `P_ℓ z` (the forward operator, for round-trip checks).
    pub fn multiply(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z.len())?;
        let n = self.a_ell.dim();
        let mut y = Vec::with_capacity(z.len());
        for j in 0..self.blocks {
            let mut yj = self.a_ell.matvec(&z[j * n..(j + 1) * n])?;
            if j > 0 {
                for (yi, zi) in yj.iter_mut().zip(&z[(j - 1) * n..j * n]) {
                    *yi -= zi;
                }
            }
            y.extend(yj);
        }
        Ok(y)
    }

    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        check_cap(dim, cap)?;
        let n = self.a_ell.dim();
        let a = self.a_ell.to_dense(usize::MAX)?;
        let mut p = DMatrix::zeros(dim, dim);
        for b in 0..self.blocks {
            p.view_mut((b * n, b * n), (n, n)).copy_from(&a);
            if b > 0 {
                for i in 0..n {
                    p[(b * n + i, (b - 1) * n + i)] = -1.0;
                }
            }
        }
        Ok(p)
    }
}

/// Row-wise Gershgorin bounds for the symmetric part of `A_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GershgorinReport {
    /// `c_i - r_i - 1` with `c_i = 1 - w1 (d+ + d-) g_1 + w2 (d+ - d-)` and
    /// `r_i = |w1 (d+ + d-)(g_0 + g_2) + w2 (d+ - d-)| + Σ_{k=3}^{ℓ} w1 (d+ + d-) g_k`.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    /// Smallest `H_ii - Σ_{j≠i} |H_ij|` of the assembled `H = (A_ℓ + A_ℓᵀ)/2`.
    pub assembled_lower_bound: f64,
}

impl GershgorinReport {
    pub fn all_positive(&self) -> bool {
        self.margins.iter().all(|&m| m > 0.0)
    }
}

/// Evaluates the disc inequality showing every eigenvalue of the symmetric
/// part of `A_ℓ` exceeds one.
pub fn gershgorin_check(p: &Preconditioner) -> GershgorinReport {
    let g = &p.g;
    let tail: f64 = g.iter().skip(3).sum();
    let margins: Vec<f64> = p
        .d_plus
        .iter()
        .zip(&p.d_minus)
        .map(|(&dp, &dm)| {
            let (s, d) = (dp + dm, dp - dm);
            let center = 1.0 - p.w1 * s * g[1] + p.w2 * d;
            let radius = (-p.w1 * s * (g[0] + g[2]) - p.w2 * d).abs() + p.w1 * s * tail;
            center - radius - 1.0
        })
        .collect();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);

    let a = &p.a_ell;
    let at = a.transpose();
    let n = a.dim();
    let mut lower = f64::INFINITY;
    for i in 0..n {
        let range = a.row_range(i);
        let mut diag = 0.0;
        let mut radius = 0.0;
        for j in range {
            let h = 0.5 * (a.get(i, j) + at.get(i, j));
            if i == j {
                diag = h;
            } else {
                radius += h.abs();
            }
        }
        lower = lower.min(diag - radius);
    }
    GershgorinReport { margins, min_margin, assembled_lower_bound: lower }
}

/// Linearised scheme on a coarse grid, bilinearly interpolated onto the
/// interior nodes of `fine` and stacked time-major.
pub fn coarse_initial_guess(spec: &ProblemSpec, fine: &Mesh, coarse_n: usize, coarse_m: usize) -> Result<Vec<f64>> {
    let coarse = build_mesh(spec, coarse_n, coarse_m)?;
    let sol = liess_run(spec, &coarse, &SchemeOptions::default())?;
    Ok(interpolate_bilinear(&sol, fine))
}

/// Samples `sol` (boundary columns and initial row included) at the interior
/// nodes `(x_i, t_j)`, `i = 1..N-1`, `j = 1..M`, of `fine`.
pub fn interpolate_bilinear(sol: &SchemeSolution, fine: &Mesh) -> Vec<f64> {
    let c = sol.mesh;
    let locate = |s: f64, cells: usize| -> (usize, f64) {
        let s = s.clamp(0.0, cells as f64);
        let k = (s.floor() as usize).min(cells - 1);
        (k, s - k as f64)
    };
    let mut out = Vec::with_capacity(fine.interior() * fine.m);
    for j in 1..=fine.m {
        let (jc, ft) = locate(fine.t(j) / c.tau(), c.m);
        for i in 1..fine.n {
            let (ic, fx) = locate((fine.x(i) - c.a) / c.h(), c.n);
            let v00 = sol.get(ic, jc);
            let v10 = sol.get(ic + 1, jc);
            let v01 = sol.get(ic, jc + 1);
            let v11 = sol.get(ic + 1, jc + 1);
            out.push((1.0 - fx) * (1.0 - ft) * v00 + fx * (1.0 - ft) * v10 + (1.0 - fx) * ft * v01 + fx * ft * v11);
        }
    }
    out
}

/// How each Newton correction `J z = -F` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianSolver {
    /// BiCGSTAB with `P_ℓ`.
    Preconditioned,
    /// Plain BiCGSTAB.
    Unpreconditioned,
    /// Block forward substitution with a dense LU per time level.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub maxit: usize,
    pub tol_out: f64,
    pub krylov_tol: f64,
    pub krylov_maxit: usize,
    pub coarse_n: usize,
    pub coarse_m: usize,
    pub ell: usize,
    pub solver: JacobianSolver,
    /// Largest time-level block the direct solver will factor densely.
    pub dense_cap: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            maxit: 100,
            tol_out: 1e-12,
            krylov_tol: 1e-6,
            krylov_maxit: 1000,
            coarse_n: 16,
            coarse_m: 16,
            ell: 8,
            solver: JacobianSolver::Preconditioned,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.maxit == 0 || self.krylov_maxit == 0 || self.coarse_n < 2 || self.coarse_m == 0 {
            return Err(TfdeError::Config("iteration caps and coarse mesh sizes must be positive".into()));
        }
        if !(self.tol_out > 0.0 && self.krylov_tol > 0.0) {
            return Err(TfdeError::Config("tolerances must be positive".into()));
        }
        if self.ell <= 2 {
            return Err(TfdeError::Config(format!("ell must exceed 2, got {}", self.ell)));
        }
        Ok(())
    }
}

/// Outcome marker of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    /// Some inner Krylov solve hit its iteration cap (table marker `‡`).
    KrylovCap,
    /// Newton reached `maxit` without meeting `tol_out` (`‡`).
    NotConverged,
    /// Dense storage would exceed the configured cap (`†`).
    ResourceExceeded,
}

impl SolveStatus {
    pub fn marker(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "ok",
            SolveStatus::KrylovCap | SolveStatus::NotConverged => "‡",
            SolveStatus::ResourceExceeded => "†",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Outer Newton iterations.
    pub iter1: usize,
    /// Mean inner Krylov iterations per outer step.
    pub iter2: f64,
    pub wall_time_seconds: f64,
    pub converged: bool,
    pub status: SolveStatus,
    pub inner_iterations: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
}

/// Newton's method from the coarse-grid initial guess.
pub fn newton_solve(sys: &AllAtOnceSystem, config: &NewtonConfig) -> Result<(SchemeSolution, SolveReport)> {
    config.validate()?;
    let start = Instant::now();
    let guess = coarse_initial_guess(&sys.spec, &sys.mesh, config.coarse_n, config.coarse_m)?;
    newton_iterate(sys, config, guess, start)
}

/// Newton's method from a caller-supplied stacked initial guess.
pub fn newton_solve_from(
    sys: &AllAtOnceSystem,
    config: &NewtonConfig,
    initial: Vec<f64>,
) -> Result<(SchemeSolution, SolveReport)> {
    config.validate()?;
    check_len(sys.dim(), initial.len())?;
    newton_iterate(sys, config, initial, Instant::now())
}

fn newton_iterate(
    sys: &AllAtOnceSystem,
    config: &NewtonConfig,
    mut u: Vec<f64>,
    start: Instant,
) -> Result<(SchemeSolution, SolveReport)> {
    let n = sys.block();
    let dim = sys.dim();
    let precond = match config.solver {
        JacobianSolver::Preconditioned => Some(precond_build(sys, config.ell.min(n))?),
        _ => None,
    };
    let dense_a = match config.solver {
        JacobianSolver::Direct => {
            if n > config.dense_cap {
                return Err(TfdeError::Resource(format!(
                    "direct Jacobian solve needs dense {n}x{n} blocks, cap {}",
                    config.dense_cap
                )));
            }
            Some(sys.operator().to_dense(usize::MAX)?)
        }
        _ => None,
    };

    let mut report = SolveReport {
        iter1: 0,
        iter2: 0.0,
        wall_time_seconds: 0.0,
        converged: false,
        status: SolveStatus::NotConverged,
        inner_iterations: Vec::new(),
        step_norms: Vec::new(),
        residual_norms: Vec::new(),
    };
    let mut cap_hit = false;
    let mut z = vec![0.0; dim];

    for k in 1..=config.maxit {
        let f = sys.residual(&u)?;
        report.residual_norms.push(norm2(&f));
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let diag = sys.jacobian_diagonal(&u)?;

        match config.solver {
            JacobianSolver::Direct => {
                let a = dense_a.as_ref().expect("built above");
                z.copy_from_slice(&rhs);
                for j in 0..sys.mesh.m {
                    let mut block = a.clone();
                    for i in 0..n {
                        block[(i, i)] += diag[j * n + i];
                    }
                    if j > 0 {
                        let (done, rest) = z.split_at_mut(j * n);
                        for (zi, prev) in rest[..n].iter_mut().zip(&done[(j - 1) * n..]) {
                            *zi += prev;
                        }
                    }
                    DenseLu::new(block)?.solve_in_place(&mut z[j * n..(j + 1) * n])?;
                }
                report.inner_iterations.push(0.0);
            }
            JacobianSolver::Preconditioned | JacobianSolver::Unpreconditioned => {
                let apply = |x: &[f64], y: &mut [f64]| sys.apply_blocks(x, y, Some(&diag));
                let pc_fn;
                let pc: Option<LinearOp> = match &precond {
                    Some(p) => {
                        pc_fn = move |r: &[f64], out: &mut [f64]| p.apply_into(r, out);
                        Some(&pc_fn)
                    }
                    None => None,
                };
                let (sol, rep) = bicgstab(&apply, pc, &rhs, config.krylov_tol, config.krylov_maxit);
                match rep.outcome {
                    KrylovOutcome::Converged => {}
                    KrylovOutcome::MaxIterations => cap_hit = true,
                    KrylovOutcome::Breakdown | KrylovOutcome::Stagnation => {
                        log::warn!("Newton step {k}: BiCGSTAB {:?}", rep.outcome);
                        cap_hit = true;
                    }
                }
                z.copy_from_slice(&sol);
                report.inner_iterations.push(rep.iterations);
            }
        }

        for (ui, zi) in u.iter_mut().zip(&z) {
            *ui += zi;
        }
        let step = norm2(&z);
        report.step_norms.push(step);
        log::debug!("Newton step {k}: |z| = {step:.3e}, |F| = {:.3e}", report.residual_norms[k - 1]);
        report.iter1 = k;
        if step <= config.tol_out {
            report.converged = true;
            break;
        }
    }

    report.iter2 = report.inner_iterations.iter().sum::<f64>() / report.iter1.max(1) as f64;
    report.status = if !report.converged {
        SolveStatus::NotConverged
    } else if cap_hit {
        SolveStatus::KrylovCap
    } else {
        SolveStatus::Converged
    };
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    let solution = SchemeSolution::from_stacked(sys.mesh, &sys.u0, &u)?;
    Ok((solution, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;
    use std::sync::Arc;

    #[test]
    fn zero_problem_has_zero_residual() {
        let spec = catalog("example1").unwrap().without_source().with_initial(Arc::new(|_| 0.0));
        let mesh = build_mesh(&spec, 8, 4).unwrap();
        let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
        let f = sys.residual(&vec![0.0; sys.dim()]).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        let (_, rep) = newton_solve(&sys, &NewtonConfig::default()).unwrap();
        assert_eq!(rep.iter1, 1);
        assert!(rep.converged);
    }

    #[test]
    fn interpolation_at_matching_mesh_is_identity() {
        let spec = catalog("example2").unwrap();
        let mesh = build_mesh(&spec, 16, 16).unwrap();
        let sol = liess_run(&spec, &mesh, &SchemeOptions::default()).unwrap();
        let guess = coarse_initial_guess(&spec, &mesh, 16, 16).unwrap();
        assert_eq!(guess, sol.stacked());
    }

    #[test]
    fn bilinear_midpoint_is_mean() {
        let spec = catalog("example2").unwrap();
        let coarse = build_mesh(&spec, 4, 4).unwrap();
        let sol = liess_run(&spec, &coarse, &SchemeOptions::default()).unwrap();
        // fine mesh with twice the resolution: node (3, 3) sits mid-cell of coarse (1, 1)
        let fine = build_mesh(&spec, 8, 8).unwrap();
        let guess = interpolate_bilinear(&sol, &fine);
        let n = fine.interior();
        let v = guess[(3 - 1) * n + (3 - 1)];
        let mean = 0.25 * (sol.get(1, 1) + sol.get(2, 1) + sol.get(1, 2) + sol.get(2, 2));
        assert!((v - mean).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = NewtonConfig::default();
        assert!(c.validate().is_ok());
        c.ell = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_block_preconditioner_is_banded_solve() {
        let spec = catalog("example1").unwrap();
        let mesh = build_mesh(&spec, 16, 1).unwrap();
        let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
        let p = precond_build(&sys, 8).unwrap();
        let r: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
        let z = p.apply(&r).unwrap();
        let direct = p.block_matrix().factor().unwrap().solve(&r).unwrap();
        assert_eq!(z, direct);
    }
}
