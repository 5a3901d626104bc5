// The banded block preconditioner: disc margins and its effect on BiCGSTAB.

use tfde::harness::compare_cell;
use tfde::{build_mesh, catalog, gershgorin_check, precond_build, AllAtOnceSystem, JacobianSolver, NewtonConfig};

pub fn run_example() -> tfde::Result<()> {
    let spec = catalog("example1")?.with_order(1.5, 5.0);
    let mesh = build_mesh(&spec, 64, 64)?;
    let sys = AllAtOnceSystem::new(&spec, &mesh)?;
    let p = precond_build(&sys, 8)?;
    let disc = gershgorin_check(&p);
    println!("smallest disc margin {:.3e} (all positive: {})", disc.min_margin, disc.all_positive());

    let spec = spec.with_order(1.1, 0.0);
    for method in [JacobianSolver::Preconditioned, JacobianSolver::Unpreconditioned] {
        let (row, _) = compare_cell("example1", &spec, 65, method, &NewtonConfig::default());
        println!("{:>16}: iter1 {:?}, iter2 {:?}, {:?} s", row.scheme, row.iter1, row.iter2, row.time_s);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
