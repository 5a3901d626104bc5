// Solving every time level at once with preconditioned Newton–Krylov.

use tfde::{build_mesh, catalog, newton_solve, nlies_step_run, AllAtOnceSystem, NewtonConfig, SchemeOptions};

pub fn run_example() -> tfde::Result<()> {
    let spec = catalog("example1")?.with_order(1.1, 0.0);
    let mesh = build_mesh(&spec, 65, 65)?;
    let sys = AllAtOnceSystem::new(&spec, &mesh)?;
    let (sol, report) = newton_solve(&sys, &NewtonConfig::default())?;

    println!("unknowns: {}", sys.dim());
    println!(
        "outer iterations {}, mean inner iterations {:.1}, {:.3} s",
        report.iter1, report.iter2, report.wall_time_seconds
    );
    for (k, step) in report.step_norms.iter().enumerate() {
        println!("  step {}: |z| = {step:.3e}", k + 1);
    }

    let stepped = nlies_step_run(&spec, &mesh, &SchemeOptions::default())?;
    println!("difference from step-by-step solve: {:.2e}", sol.max_diff(&stepped)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
