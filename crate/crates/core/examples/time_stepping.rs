// The linearised and nonlinear implicit Euler schemes on the same mesh.

use tfde::harness::compute_err;
use tfde::{build_mesh, catalog, liess_run, nlies_step_run, SchemeOptions};

pub fn run_example() -> tfde::Result<()> {
    let spec = catalog("example2")?.with_order(1.5, 1.0);
    let mesh = build_mesh(&spec, 64, 64)?;
    let opts = SchemeOptions::default();
    let lin = liess_run(&spec, &mesh, &opts)?;
    let nonlin = nlies_step_run(&spec, &mesh, &opts)?;

    let mid = mesh.n / 2;
    println!("u(0, T): linearised {:.6}, nonlinear {:.6}", lin.get(mid, mesh.m), nonlin.get(mid, mesh.m));
    println!("max difference between schemes: {:.3e}", compute_err(&lin, &nonlin)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
