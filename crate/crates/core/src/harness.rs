//! Experiment driver: error and order tables, scheme differences, solver
//! comparisons and dense matrix dumps.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::all_at_once::{
    coarse_initial_guess, newton_solve, precond_build, AllAtOnceSystem, JacobianSolver, NewtonConfig, SolveReport,
    SolveStatus,
};
use crate::error::{Result, TfdeError};
use crate::linalg::{format_sci17, DenseAssemble, DEFAULT_DENSE_CAP};
use crate::problem::{build_mesh, catalog, ProblemSpec};
use crate::schemes::{liess_run, nlies_step_run, SchemeOptions, SchemeSolution};

/// `max_j max_i |u(x_i, t_j) - u_ref(x_i, t_j)|` over the nodes of `solution`.
///
/// The reference mesh must refine the test mesh by integer factors in both
/// directions over the same domain.
pub fn compute_err(solution: &SchemeSolution, reference: &SchemeSolution) -> Result<f64> {
    let (c, f) = (solution.mesh, reference.mesh);
    if c.a != f.a || c.b != f.b || c.t_final != f.t_final {
        return Err(TfdeError::Domain("meshes cover different domains".into()));
    }
    if f.n % c.n != 0 || f.m % c.m != 0 {
        return Err(TfdeError::Domain(format!("mesh {}x{} is not nested in {}x{}", c.n, c.m, f.n, f.m)));
    }
    let (rx, rt) = (f.n / c.n, f.m / c.m);
    let mut err: f64 = 0.0;
    for j in 0..=c.m {
        for i in 0..=c.n {
            err = err.max((solution.get(i, j) - reference.get(rx * i, rt * j)).abs());
        }
    }
    Ok(err)
}

/// `log2(err_coarse / err_fine)`, or `None` unless both are positive.
pub fn compute_order(err_coarse: f64, err_fine: f64) -> Option<f64> {
    (err_coarse > 0.0 && err_fine > 0.0).then(|| (err_coarse / err_fine).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Fixed spatial mesh, `M` sweep (first-order-in-time check).
    Table1,
    /// `M = N` sweep.
    Table2,
    /// Nonlinear minus linearised scheme at equal meshes.
    Diff,
    /// All-at-once solver comparison: Newton and Krylov counts and timing.
    Compare,
}

/// Mesh family used by [`Mode::Diff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    FixedH,
    TauEqH,
}

/// Time stepper producing a table column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeTag {
    Lies,
    Nlies,
    /// The nonlinear scheme solved as one all-at-once system.
    AllAtOnce,
}

impl SchemeTag {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeTag::Lies => "lies",
            SchemeTag::Nlies => "nlies",
            SchemeTag::AllAtOnce => "all-at-once",
        }
    }
}

pub fn method_label(m: JacobianSolver) -> &'static str {
    match m {
        JacobianSolver::Preconditioned => "all-at-once-pl",
        JacobianSolver::Unpreconditioned => "all-at-once-i",
        JacobianSolver::Direct => "all-at-once-bs",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub mode: Mode,
    pub sweep: Sweep,
    /// Test meshes: `M` for fixed-h sweeps, `M = N` otherwise. Defaults depend
    /// on the mode and on `paper_scale`.
    pub sizes: Option<Vec<usize>>,
    /// Reference `M = N`; also the fixed `N` of fixed-h sweeps.
    pub reference: Option<usize>,
    pub paper_scale: bool,
    pub schemes: Option<Vec<SchemeTag>>,
    pub methods: Vec<JacobianSolver>,
    pub newton: NewtonConfig,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "example1".into(),
            alphas: vec![1.5],
            lambdas: vec![1.0],
            mode: Mode::Table1,
            sweep: Sweep::FixedH,
            sizes: None,
            reference: None,
            paper_scale: false,
            schemes: None,
            methods: vec![JacobianSolver::Preconditioned, JacobianSolver::Unpreconditioned, JacobianSolver::Direct],
            newton: NewtonConfig::default(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| TfdeError::Config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        Self::from_toml_str(&s)
    }

    pub fn reference_size(&self) -> usize {
        self.reference.unwrap_or(if self.paper_scale { 1024 } else { 512 })
    }

    pub fn test_sizes(&self) -> Vec<usize> {
        if let Some(s) = &self.sizes {
            return s.clone();
        }
        match (self.mode, self.paper_scale) {
            (Mode::Compare, false) => vec![65, 129, 257],
            (Mode::Compare, true) => vec![129, 257, 513, 1025],
            (_, false) => vec![32, 64, 128, 256],
            (_, true) => vec![64, 128, 256, 512],
        }
    }

    pub fn scheme_list(&self) -> Vec<SchemeTag> {
        self.schemes.clone().unwrap_or_else(|| vec![SchemeTag::Lies, SchemeTag::Nlies])
    }

    pub fn validate(&self) -> Result<()> {
        catalog(&self.problem)?;
        let sizes = self.test_sizes();
        if sizes.iter().any(|&s| s < 2) {
            return Err(TfdeError::Config("mesh sizes must be at least 2".into()));
        }
        if self.alphas.iter().any(|&a| !(a > 1.0 && a < 2.0)) {
            return Err(TfdeError::Config("alpha must lie in (1, 2)".into()));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(TfdeError::Config("lambda must be finite and non-negative".into()));
        }
        if matches!(self.mode, Mode::Table1 | Mode::Table2) {
            let r = self.reference_size();
            if let Some(&s) = sizes.iter().find(|&&s| s > r) {
                return Err(TfdeError::Config(format!("test mesh {s} is finer than reference {r}")));
            }
        }
        if self.mode == Mode::Diff && self.sweep == Sweep::FixedH {
            let r = self.reference_size();
            if r < 2 {
                return Err(TfdeError::Config("fixed spatial mesh must have N >= 2".into()));
            }
        }
        self.newton.validate()
    }
}

/// One table line. Optional fields are empty in CSV when not applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTableRow {
    pub problem: String,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub scheme: String,
    pub err: Option<f64>,
    pub order: Option<f64>,
    pub iter1: Option<usize>,
    pub iter2: Option<f64>,
    pub time_s: Option<f64>,
    pub status: String,
}

impl ErrorTableRow {
    fn new(problem: &str, alpha: f64, lambda: f64, m: usize, n: usize, scheme: &str) -> Self {
        Self {
            problem: problem.into(),
            alpha,
            lambda,
            m,
            n,
            scheme: scheme.into(),
            err: None,
            order: None,
            iter1: None,
            iter2: None,
            time_s: None,
            status: "ok".into(),
        }
    }

    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ErrorTableRow>,
    /// Newton reports for cells that ran the all-at-once solver, aligned with `rows`.
    pub reports: Vec<Option<SolveReport>>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn scheme_options(tight: bool) -> SchemeOptions {
    let mut o = SchemeOptions::default();
    if tight {
        o.krylov_tol = 1e-13;
    }
    o
}

fn solve_scheme(
    tag: SchemeTag,
    spec: &ProblemSpec,
    n: usize,
    m: usize,
    newton: &NewtonConfig,
    tight: bool,
) -> Result<(SchemeSolution, Option<SolveReport>)> {
    let mesh = build_mesh(spec, n, m)?;
    match tag {
        SchemeTag::Lies => Ok((liess_run(spec, &mesh, &scheme_options(tight))?, None)),
        SchemeTag::Nlies => Ok((nlies_step_run(spec, &mesh, &scheme_options(tight))?, None)),
        SchemeTag::AllAtOnce => {
            let sys = AllAtOnceSystem::new(spec, &mesh)?;
            let mut cfg = *newton;
            if tight {
                cfg.krylov_tol = cfg.krylov_tol.min(1e-13);
            }
            let (sol, rep) = newton_solve(&sys, &cfg)?;
            Ok((sol, Some(rep)))
        }
    }
}

fn fill_orders(rows: &mut [ErrorTableRow], by_m: bool) {
    for k in 1..rows.len() {
        let (prev, cur) = (&rows[k - 1], &rows[k]);
        let halves =
            if by_m { prev.m * 2 == cur.m && prev.n == cur.n } else { prev.m * 2 == cur.m && prev.n * 2 == cur.n };
        if halves {
            if let (Some(a), Some(b)) = (prev.err, cur.err) {
                rows[k].order = compute_order(a, b);
            }
        }
    }
}

type Cell = (ErrorTableRow, Option<SolveReport>);

fn error_table_group(cfg: &ExperimentConfig, spec: &ProblemSpec, tag: SchemeTag) -> Vec<Cell> {
    let r = cfg.reference_size();
    let fixed_h = cfg.mode == Mode::Table1;
    let meshes: Vec<(usize, usize)> =
        cfg.test_sizes().into_iter().map(|s| if fixed_h { (r, s) } else { (s, s) }).collect();
    let reference = solve_scheme(tag, spec, r, r, &cfg.newton, true);
    let mut cells: Vec<Cell> = meshes
        .into_iter()
        .map(|(n, m)| {
            let mut row = ErrorTableRow::new(&cfg.problem, spec.alpha, spec.lambda, m, n, tag.label());
            let mut report = None;
            let outcome = reference.as_ref().map_err(|e| e.to_string()).and_then(|(ref_sol, _)| {
                let (sol, rep) = solve_scheme(tag, spec, n, m, &cfg.newton, false).map_err(|e| e.to_string())?;
                report = rep;
                compute_err(&sol, ref_sol).map_err(|e| e.to_string())
            });
            match outcome {
                Ok(e) => row.err = Some(e),
                Err(msg) => row.status = format!("error: {msg}"),
            }
            if let Some(rep) = &report {
                row.iter1 = Some(rep.iter1);
                row.iter2 = Some(rep.iter2);
                row.time_s = Some(round3(rep.wall_time_seconds));
            }
            log::info!("{} alpha {} lambda {} M {m} N {n}: {}", row.scheme, row.alpha, row.lambda, row.status);
            (row, report)
        })
        .collect();
    let mut rows: Vec<ErrorTableRow> = cells.iter().map(|c| c.0.clone()).collect();
    fill_orders(&mut rows, fixed_h);
    for (c, r) in cells.iter_mut().zip(rows) {
        c.0 = r;
    }
    cells
}

fn diff_group(cfg: &ExperimentConfig, spec: &ProblemSpec) -> Vec<Cell> {
    let fixed_h = cfg.sweep == Sweep::FixedH;
    let r = cfg.reference_size();
    let mut rows: Vec<ErrorTableRow> = cfg
        .test_sizes()
        .into_iter()
        .map(|s| {
            let (n, m) = if fixed_h { (r, s) } else { (s, s) };
            let mut row = ErrorTableRow::new(&cfg.problem, spec.alpha, spec.lambda, m, n, "nlies-lies");
            let diff = solve_scheme(SchemeTag::Nlies, spec, n, m, &cfg.newton, false).and_then(|(a, _)| {
                let (b, _) = solve_scheme(SchemeTag::Lies, spec, n, m, &cfg.newton, false)?;
                compute_err(&a, &b)
            });
            match diff {
                Ok(e) => row.err = Some(e),
                Err(e) => row.status = format!("error: {e}"),
            }
            row
        })
        .collect();
    fill_orders(&mut rows, fixed_h);
    rows.into_iter().map(|r| (r, None)).collect()
}

/// Runs one all-at-once solve and fills the comparison columns.
pub fn compare_cell(
    problem: &str,
    spec: &ProblemSpec,
    size: usize,
    method: JacobianSolver,
    newton: &NewtonConfig,
) -> (ErrorTableRow, Option<SolveReport>) {
    let mut row = ErrorTableRow::new(problem, spec.alpha, spec.lambda, size, size, method_label(method));
    let mut cfg = *newton;
    cfg.solver = method;
    let run = build_mesh(spec, size, size)
        .and_then(|mesh| AllAtOnceSystem::new(spec, &mesh))
        .and_then(|sys| newton_solve(&sys, &cfg));
    match run {
        Ok((_, rep)) => {
            log::info!(
                "{} alpha {} lambda {} size {size}: ({}, {:.1})",
                row.scheme,
                row.alpha,
                row.lambda,
                rep.iter1,
                rep.iter2
            );
            row.iter1 = Some(rep.iter1);
            row.iter2 = Some(rep.iter2);
            row.time_s = Some(round3(rep.wall_time_seconds));
            if rep.status != SolveStatus::Converged {
                row.status = rep.status.marker().into();
            }
            (row, Some(rep))
        }
        Err(TfdeError::Resource(msg)) => {
            log::warn!("{msg}");
            row.status = SolveStatus::ResourceExceeded.marker().into();
            (row, None)
        }
        Err(e) => {
            row.status = format!("error: {e}");
            (row, None)
        }
    }
}

/// Runs the configured sweep. Per-cell failures land in the row's `status`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let base = catalog(&cfg.problem)?;
    let params: Vec<(f64, f64)> = cfg.alphas.iter().flat_map(|&a| cfg.lambdas.iter().map(move |&l| (a, l))).collect();
    if cfg.test_sizes().is_empty() {
        return Ok(ExperimentResult::default());
    }
    let groups: Vec<Vec<Cell>> = params
        .par_iter()
        .map(|&(alpha, lambda)| {
            let spec = base.clone().with_order(alpha, lambda);
            match cfg.mode {
                Mode::Table1 | Mode::Table2 => {
                    cfg.scheme_list().into_iter().flat_map(|tag| error_table_group(cfg, &spec, tag)).collect()
                }
                Mode::Diff => diff_group(cfg, &spec),
                // timings would interfere if cells ran concurrently
                Mode::Compare => cfg
                    .test_sizes()
                    .into_iter()
                    .flat_map(|s| cfg.methods.iter().map(move |&m| (s, m)))
                    .map(|(s, m)| compare_cell(&cfg.problem, &spec, s, m, &cfg.newton))
                    .collect(),
            }
        })
        .collect();
    let mut result = ExperimentResult::default();
    for (row, rep) in groups.into_iter().flatten() {
        result.rows.push(row);
        result.reports.push(rep);
    }
    Ok(result)
}

pub fn write_csv<W: Write>(out: W, rows: &[ErrorTableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| TfdeError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ErrorTableRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| TfdeError::Config(format!("bad CSV row: {e}"))))
        .collect()
}

pub fn write_json<W: Write>(out: W, rows: &[ErrorTableRow]) -> Result<()> {
    serde_json::to_writer_pretty(out, rows).map_err(|e| TfdeError::Io(std::io::Error::other(e)))
}

/// Writes `path` as CSV and the same rows as JSON next to it.
pub fn write_outputs(path: &Path, rows: &[ErrorTableRow]) -> Result<PathBuf> {
    write_csv(BufWriter::new(File::create(path)?), rows)?;
    let json = path.with_extension("json");
    let mut w = BufWriter::new(File::create(&json)?);
    write_json(&mut w, rows)?;
    w.flush()?;
    Ok(json)
}

#[derive(Debug, Clone)]
pub struct DumpConfig {
    pub spec: ProblemSpec,
    /// `M = N`.
    pub size: usize,
    pub ell: usize,
    pub newton: NewtonConfig,
    /// Upper limit on `M` and `N`.
    pub cap: usize,
}

impl DumpConfig {
    pub fn new(spec: ProblemSpec, size: usize) -> Self {
        Self { spec, size, ell: 8, newton: NewtonConfig::default(), cap: DEFAULT_DENSE_CAP }
    }
}

/// Streams a block lower-bidiagonal matrix with diagonal block `block(i, j)`,
/// `-I` below it and `extra` added to the main diagonal.
fn write_block_bidiagonal<W: Write>(
    mut out: W,
    n: usize,
    m: usize,
    block: impl Fn(usize, usize) -> f64,
    extra: &[f64],
) -> Result<()> {
    let zero = format_sci17(0.0);
    let minus_one = format_sci17(-1.0);
    let diag_block: Vec<String> = (0..n * n).map(|k| format_sci17(block(k / n, k % n))).collect();
    let mut line = String::new();
    for b in 0..m {
        for i in 0..n {
            line.clear();
            let row = b * n + i;
            for bc in 0..m {
                for j in 0..n {
                    if bc > 0 || j > 0 {
                        line.push(' ');
                    }
                    if bc == b && j == i && extra[row] != 0.0 {
                        line.push_str(&format_sci17(block(i, j) + extra[row]));
                    } else if bc == b {
                        line.push_str(&diag_block[i * n + j]);
                    } else if bc + 1 == b && j == i {
                        line.push_str(&minus_one);
                    } else {
                        line.push_str(&zero);
                    }
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the dense Jacobian at the coarse-grid initial guess to `jac_out` and,
/// when given, the dense `blktridiag(-I, A_ℓ, 0)` to `precond_out`.
pub fn dump_matrices(cfg: &DumpConfig, jac_out: &Path, precond_out: Option<&Path>) -> Result<()> {
    if cfg.size > cfg.cap {
        return Err(TfdeError::Resource(format!("dump size {} exceeds cap {}", cfg.size, cfg.cap)));
    }
    let mesh = build_mesh(&cfg.spec, cfg.size, cfg.size)?;
    let sys = AllAtOnceSystem::new(&cfg.spec, &mesh)?;
    let (n, m) = (sys.block(), mesh.m);
    let guess = coarse_initial_guess(&cfg.spec, &mesh, cfg.newton.coarse_n, cfg.newton.coarse_m)?;
    let diag = sys.jacobian_diagonal(&guess)?;
    let op = sys.operator();
    write_block_bidiagonal(BufWriter::new(File::create(jac_out)?), n, m, |i, j| op.dense_entry(i, j), &diag)?;
    if let Some(path) = precond_out {
        let p = precond_build(&sys, cfg.ell.min(n))?;
        let a = p.block_matrix();
        write_block_bidiagonal(BufWriter::new(File::create(path)?), n, m, |i, j| a.get(i, j), &vec![0.0; n * m])?;
    }
    Ok(())
}
