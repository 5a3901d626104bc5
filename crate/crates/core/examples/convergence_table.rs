// A small error/order sweep in time at fixed spatial mesh, printed as CSV.

use tfde::harness::{run_experiment, write_csv, ExperimentConfig, Mode};

pub fn run_example() -> tfde::Result<()> {
    let cfg = ExperimentConfig {
        problem: "example1".into(),
        alphas: vec![1.5],
        lambdas: vec![1.0],
        mode: Mode::Table1,
        sizes: Some(vec![8, 16, 32]),
        reference: Some(128),
        ..Default::default()
    };
    let result = run_experiment(&cfg)?;
    write_csv(std::io::stdout().lock(), &result.rows)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
