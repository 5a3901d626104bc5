use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tfde::harness::{
    dump_matrices, run_experiment, write_csv, write_outputs, DumpConfig, ExperimentConfig, Mode, SchemeTag, Sweep,
};
use tfde::{catalog, JacobianSolver, TfdeError};

#[derive(Parser)]
#[command(name = "tfde", version, about = "Tempered fractional diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Table1,
    Table2,
    Diff,
    Compare,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    FixedH,
    TauEqH,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Lies,
    Nlies,
    AllAtOnce,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Preconditioned,
    Unpreconditioned,
    Direct,
}

#[derive(Subcommand)]
enum Command {
    /// Run an error-table, scheme-difference or solver-comparison sweep.
    Run {
        /// TOML file with experiment settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        problem: Option<String>,
        /// Fractional order; repeat or comma-separate for a sweep.
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        sweep: Option<SweepArg>,
        /// Reference mesh M = N (fixed N for fixed-h sweeps).
        #[arg(long = "ref")]
        reference: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',')]
        scheme: Vec<SchemeArg>,
        #[arg(long, value_enum, value_delimiter = ',')]
        method: Vec<MethodArg>,
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long)]
        paper_scale: bool,
        /// CSV output; a JSON copy is written alongside. Prints CSV to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the dense initial Jacobian (and optionally the preconditioner) as text.
    Dump {
        #[arg(long)]
        problem: String,
        /// M = N.
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 8)]
        ell: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        precond_out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, TfdeError> {
    match cli.command {
        Command::Run {
            config,
            problem,
            alpha,
            lambda,
            mode,
            sweep,
            reference,
            sizes,
            scheme,
            method,
            ell,
            paper_scale,
            out,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::from_toml_file(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(p) = problem {
                cfg.problem = p;
            }
            if !alpha.is_empty() {
                cfg.alphas = alpha;
            }
            if !lambda.is_empty() {
                cfg.lambdas = lambda;
            }
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Table1 => Mode::Table1,
                    ModeArg::Table2 => Mode::Table2,
                    ModeArg::Diff => Mode::Diff,
                    ModeArg::Compare => Mode::Compare,
                };
            }
            if let Some(s) = sweep {
                cfg.sweep = match s {
                    SweepArg::FixedH => Sweep::FixedH,
                    SweepArg::TauEqH => Sweep::TauEqH,
                };
            }
            if reference.is_some() {
                cfg.reference = reference;
            }
            if !sizes.is_empty() {
                cfg.sizes = Some(sizes);
            }
            if !scheme.is_empty() {
                cfg.schemes = Some(
                    scheme
                        .into_iter()
                        .map(|s| match s {
                            SchemeArg::Lies => SchemeTag::Lies,
                            SchemeArg::Nlies => SchemeTag::Nlies,
                            SchemeArg::AllAtOnce => SchemeTag::AllAtOnce,
                        })
                        .collect(),
                );
            }
            if !method.is_empty() {
                cfg.methods = method
                    .into_iter()
                    .map(|m| match m {
                        MethodArg::Preconditioned => JacobianSolver::Preconditioned,
                        MethodArg::Unpreconditioned => JacobianSolver::Unpreconditioned,
                        MethodArg::Direct => JacobianSolver::Direct,
                    })
                    .collect();
            }
            if let Some(l) = ell {
                cfg.newton.ell = l;
            }
            cfg.paper_scale |= paper_scale;
            if out.is_some() {
                cfg.out = out;
            }

            let result = run_experiment(&cfg)?;
            match &cfg.out {
                Some(path) => {
                    let json = write_outputs(path, &result.rows)?;
                    log::info!("wrote {} and {}", path.display(), json.display());
                }
                None => write_csv(std::io::stdout().lock(), &result.rows)?,
            }
            let failed = result.failures();
            if failed > 0 {
                log::warn!("{failed} of {} cells failed", result.rows.len());
                Ok(ExitCode::from(2))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Dump { problem, size, alpha, lambda, ell, out, precond_out } => {
            let spec = catalog(&problem)?.with_order(alpha, lambda);
            let mut cfg = DumpConfig::new(spec, size);
            cfg.ell = ell;
            dump_matrices(&cfg, &out, precond_out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("tfde: {e}");
            match e {
                TfdeError::Io(_) | TfdeError::Resource(_) | TfdeError::Solver(_) | TfdeError::Numeric(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
