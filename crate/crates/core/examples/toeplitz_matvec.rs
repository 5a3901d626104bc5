// FFT-based product with the lower Hessenberg Toeplitz matrix `G` and its
// transpose, checked against a dense product.

use tfde::linalg::{DenseAssemble, LowerHessenbergToeplitz};
use tfde::weights::TemperedWeights;

pub fn run_example() -> tfde::Result<()> {
    let n = 100;
    let w = TemperedWeights::new(1.7, 2.0, 0.02, n)?;
    let g = LowerHessenbergToeplitz::from_weights(w.as_slice(), n);
    let x: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).sin()).collect();

    let dense = g.to_dense(n)?;
    let xv = nalgebra::DVector::from_column_slice(&x);
    for transpose in [false, true] {
        let fast = g.matvec(&x, transpose)?;
        let slow = if transpose { dense.transpose() * &xv } else { &dense * &xv };
        let err = fast.iter().zip(slow.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("n = {n}, transpose = {transpose}: embedding {}, max abs diff {err:.2e}", g.embedding_len());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
