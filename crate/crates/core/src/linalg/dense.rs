//! Dense fallbacks: explicit assembly, LU solves and the text dump format.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TfdeError};
use crate::linalg::{BandedMatrix, LowerHessenbergToeplitz};

/// Default cap on the dimension of explicitly assembled matrices.
pub const DEFAULT_DENSE_CAP: usize = 2048;

pub fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(TfdeError::Resource(format!("dense dimension {n} exceeds cap {cap}")))
    } else {
        Ok(())
    }
}

/// Anything that can be written out entry by entry.
pub trait DenseAssemble {
    fn dense_dim(&self) -> usize;
    fn dense_entry(&self, i: usize, j: usize) -> f64;

    fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.dense_dim();
        check_cap(n, cap)?;
        Ok(DMatrix::from_fn(n, n, |i, j| self.dense_entry(i, j)))
    }
}

impl DenseAssemble for LowerHessenbergToeplitz {
    fn dense_dim(&self) -> usize {
        self.dim()
    }

    fn dense_entry(&self, i: usize, j: usize) -> f64 {
        self.entry(i, j)
    }
}

impl DenseAssemble for BandedMatrix {
    fn dense_dim(&self) -> usize {
        self.dim()
    }

    fn dense_entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

pub fn dense_assemble<T: DenseAssemble + ?Sized>(op: &T) -> Result<DMatrix<f64>> {
    op.to_dense(DEFAULT_DENSE_CAP)
}

/// Dense LU factorisation with partial pivoting.
pub struct DenseLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl DenseLu {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(TfdeError::Singular { row: 0 });
        }
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.n, b.len())?;
        let x = self.lu.solve(&DVector::from_column_slice(b)).ok_or(TfdeError::Singular { row: 0 })?;
        Ok(x.as_slice().to_vec())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let x = self.solve(b)?;
        b.copy_from_slice(&x);
        Ok(())
    }
}

/// `x` in C-style scientific notation with 17 significant digits,
/// e.g. `-1.2500000000000000e-01`.
pub fn format_sci17(x: f64) -> String {
    let s = format!("{x:.16e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            if digits.len() < 2 {
                format!("{mantissa}e{sign}0{digits}")
            } else {
                format!("{mantissa}e{sign}{digits}")
            }
        }
        None => s,
    }
}

/// One row per line, entries space-separated in [`format_sci17`].
pub fn write_dense<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format_sci17(m[(i, j)]));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dense<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| TfdeError::Config(format!("bad entry `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(TfdeError::Shape { expected: first.len(), got: row.len() });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
