//! Structured kernels: FFT Toeplitz products, banded LU and dense oracles.

mod banded;
mod dense;
mod toeplitz;

pub use banded::{band_truncate, banded_lu, banded_solve, BandedFactor, BandedMatrix};
pub use dense::{
    check_cap, dense_assemble, format_sci17, read_dense, write_dense, DenseAssemble, DenseLu, DEFAULT_DENSE_CAP,
};
pub use toeplitz::{embedding_len, fft_plan, FftPlan, LowerHessenbergToeplitz};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
