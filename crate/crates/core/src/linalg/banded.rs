//! Banded storage and partial-pivoted banded LU.

use crate::error::{check_len, Result, TfdeError};
use crate::linalg::LowerHessenbergToeplitz;

/// Square matrix with `lower` sub- and `upper` superdiagonals, stored by
/// diagonal: `bands[upper + i - j][j] = a_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    bands: Vec<Vec<f64>>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self { n, lower, upper, bands: vec![vec![0.0; n]; lower + upper + 1] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        m.bands[0].iter_mut().for_each(|v| *v = 1.0);
        m
    }

    /// `tridiag(sub, diag, sup)` with constant entries.
    pub fn tridiag(n: usize, sub: f64, diag: f64, sup: f64) -> Self {
        let mut m = Self::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, diag);
            if i > 0 {
                m.set(i, i - 1, sub);
                m.set(i - 1, i, sup);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bw(&self) -> usize {
        self.lower
    }

    pub fn upper_bw(&self) -> usize {
        self.upper
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j <= i + self.upper && i <= j + self.lower
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.bands[self.upper + i - j][j]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.lower, self.upper);
        self.bands[self.upper + i - j][j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.lower, self.upper);
        self.bands[self.upper + i - j][j] += v;
    }

    /// Column range of row `i` inside the band.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.lower)..(i + self.upper + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        Ok((0..self.n).map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum()).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.upper, self.lower);
        for i in 0..self.n {
            for j in self.row_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn factor(&self) -> Result<BandedFactor> {
        banded_lu(self)
    }
}

/// Keeps `g_0 ..= g_ell` of `G`: lower bandwidth `ell - 1`, upper bandwidth 1.
pub fn band_truncate(g: &LowerHessenbergToeplitz, ell: usize) -> Result<BandedMatrix> {
    let n = g.dim();
    if ell <= 2 || ell > n {
        return Err(TfdeError::Domain(format!("band parameter must satisfy 2 < ell <= {n}, got {ell}")));
    }
    let mut m = BandedMatrix::zeros(n, ell - 1, 1);
    for i in 0..n {
        for j in m.row_range(i) {
            m.set(i, j, g.entry(i, j));
        }
    }
    Ok(m)
}

/// LU factors of a banded matrix with row interchanges. `U` carries
/// `lower + upper` superdiagonals to absorb pivoting fill.
#[derive(Debug, Clone)]
pub struct BandedFactor {
    n: usize,
    lower: usize,
    width: usize,
    /// Row-window storage of `U`: row `i` holds columns `i ..= i + width - 1`.
    u: Vec<f64>,
    /// Multipliers `l[k * lower + r - 1]` applied to row `k + r` at step `k`.
    l: Vec<f64>,
    pivots: Vec<usize>,
}

/// Gaussian elimination with partial pivoting restricted to the band.
pub fn banded_lu(a: &BandedMatrix) -> Result<BandedFactor> {
    let n = a.n;
    let kl = a.lower;
    let width = a.lower + a.upper + 1;
    // Working storage: row i covers columns i - kl ..= i + kl + ku.
    let span = 2 * kl + a.upper + 1;
    let mut w = vec![0.0; n * span];
    let idx = |i: usize, j: usize| i * span + (j + kl - i);
    for i in 0..n {
        for j in a.row_range(i) {
            w[idx(i, j)] = a.get(i, j);
        }
    }
    let mut l = vec![0.0; n * kl.max(1)];
    let mut pivots = vec![0; n];
    for k in 0..n {
        let last_row = (k + kl).min(n - 1);
        let last_col = (k + kl + a.upper).min(n - 1);
        let mut p = k;
        let mut best = w[idx(k, k)].abs();
        for i in k + 1..=last_row {
            let v = w[idx(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(TfdeError::Singular { row: k });
        }
        pivots[k] = p;
        if p != k {
            for j in k..=last_col {
                w.swap(idx(k, j), idx(p, j));
            }
        }
        let pivot = w[idx(k, k)];
        for i in k + 1..=last_row {
            let m = w[idx(i, k)] / pivot;
            l[k * kl + (i - k - 1)] = m;
            w[idx(i, k)] = 0.0;
            if m != 0.0 {
                for j in k + 1..=last_col {
                    w[idx(i, j)] -= m * w[idx(k, j)];
                }
            }
        }
    }
    let mut u = vec![0.0; n * width];
    for i in 0..n {
        for d in 0..width {
            let j = i + d;
            if j < n {
                u[i * width + d] = w[idx(i, j)];
            }
        }
    }
    Ok(BandedFactor { n, lower: kl, width, u, l, pivots })
}

impl BandedFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len(self.n, x.len())?;
        let n = self.n;
        let kl = self.lower;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                let last = (k + kl).min(n - 1);
                for i in k + 1..=last {
                    x[i] -= self.l[k * kl + (i - k - 1)] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let row = &self.u[i * self.width..(i + 1) * self.width];
            let mut s = x[i];
            for d in 1..self.width {
                let j = i + d;
                if j >= n {
                    break;
                }
                s -= row[d] * x[j];
            }
            x[i] = s / row[0];
        }
        Ok(())
    }
}

/// Factor-then-solve.
pub fn banded_solve(f: &BandedFactor, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}
