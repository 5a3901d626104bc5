// Writes the initial Jacobian and the preconditioner as dense text files.

use tfde::catalog;
use tfde::harness::{dump_matrices, DumpConfig};
use tfde::linalg::read_dense;

pub fn run_example() -> tfde::Result<()> {
    let dir = std::env::temp_dir().join(format!("tfde-dump-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (jac, pre) = (dir.join("jacobian.txt"), dir.join("precond.txt"));

    let cfg = DumpConfig::new(catalog("example2")?.with_order(1.5, 0.0), 9);
    dump_matrices(&cfg, &jac, Some(&pre))?;
    for path in [&jac, &pre] {
        let m = read_dense(std::io::BufReader::new(std::fs::File::open(path)?))?;
        println!("{}: {} x {}", path.display(), m.nrows(), m.ncols());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
