//! Lower Hessenberg Toeplitz operator with FFT matvec.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Result};

/// Forward/inverse transforms for one length.
pub struct FftPlan {
    pub len: usize,
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

/// Shared plan for a power-of-two `len`, built once per process.
pub fn fft_plan(len: usize) -> Arc<FftPlan> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(len)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(FftPlan { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) })
        })
        .clone()
}

/// Circulant embedding length: smallest power of two `≥ 2n`.
pub fn embedding_len(n: usize) -> usize {
    (2 * n).next_power_of_two()
}

/// `n × n` matrix with entry `(i, j) = g_{i-j+1}` for `i ≥ j - 1`, zero above
/// the first superdiagonal:
///
/// ```text
/// [ g1 g0  0 ...  0 ]
/// [ g2 g1 g0 ...  0 ]
/// [ ...             ]
/// [ gn ...    g2 g1 ]
/// ```
#[derive(Clone)]
pub struct LowerHessenbergToeplitz {
    n: usize,
    /// `[g_1, ..., g_n]`
    first_col: Vec<f64>,
    super_diag: f64,
    plan: Arc<FftPlan>,
    /// Circulant eigenvalues of `G` and `Gᵀ`, pre-scaled by `1 / len`.
    spectrum: Vec<Complex64>,
    spectrum_t: Vec<Complex64>,
}

impl std::fmt::Debug for LowerHessenbergToeplitz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LowerHessenbergToeplitz")
            .field("n", &self.n)
            .field("super_diag", &self.super_diag)
            .field("embedding", &self.plan.len)
            .finish()
    }
}

impl LowerHessenbergToeplitz {
    /// Builds `G` from weights `g_0 ..= g_n` (`weights.len() ≥ n + 1`).
    pub fn from_weights(weights: &[f64], n: usize) -> Self {
        assert!(n >= 1 && weights.len() > n, "need g_0..=g_n for n = {n}");
        Self::new(weights[0], weights[1..=n].to_vec())
    }

    pub fn new(super_diag: f64, first_col: Vec<f64>) -> Self {
        let n = first_col.len();
        let len = embedding_len(n);
        let plan = fft_plan(len);
        let scale = 1.0 / len as f64;

        // G: column c = first_col, first row r = [g1, g0, 0, ...]
        let mut col = vec![Complex64::new(0.0, 0.0); len];
        for (k, &v) in first_col.iter().enumerate() {
            col[k].re = v;
        }
        if n > 1 {
            col[len - 1].re = super_diag;
        }
        // Gᵀ: column [g1, g0, 0, ...], first row [g1, ..., gn]
        let mut col_t = vec![Complex64::new(0.0, 0.0); len];
        col_t[0].re = first_col[0];
        if n > 1 {
            col_t[1].re = super_diag;
        }
        for k in 1..n {
            col_t[len - k].re = first_col[k];
        }
        plan.forward.process(&mut col);
        plan.forward.process(&mut col_t);
        for v in col.iter_mut().chain(col_t.iter_mut()) {
            *v *= scale;
        }
        Self { n, first_col, super_diag, plan, spectrum: col, spectrum_t: col_t }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn first_col(&self) -> &[f64] {
        &self.first_col
    }

    pub fn super_diag(&self) -> f64 {
        self.super_diag
    }

    /// Entry `(i, j)` (0-based).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j == i + 1 {
            self.super_diag
        } else if i >= j {
            self.first_col[i - j]
        } else {
            0.0
        }
    }

    pub fn embedding_len(&self) -> usize {
        self.plan.len
    }

    /// `G x` or `Gᵀ x`.
    pub fn matvec(&self, x: &[f64], transpose: bool) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.plan.len];
        let mut out = vec![0.0; self.n];
        let spec = if transpose { &self.spectrum_t } else { &self.spectrum };
        self.load(x, &mut buf);
        self.plan.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(spec) {
            *b *= s;
        }
        self.plan.inverse.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re;
        }
        Ok(out)
    }

    fn load(&self, x: &[f64], buf: &mut [Complex64]) {
        for (b, &v) in buf.iter_mut().zip(x) {
            *b = Complex64::new(v, 0.0);
        }
        for b in buf[self.n..].iter_mut() {
            *b = Complex64::new(0.0, 0.0);
        }
    }

    /// `(G x, Gᵀ x)` with one forward and one inverse transform: both products
    /// are real, so `ifft(Λ X + i Λᵀ X) = G x + i Gᵀ x`.
    ///
    /// `buf` must have length [`embedding_len`](Self::embedding_len); `scratch`
    /// is sized by the plan.
    pub fn matvec_pair_into(
        &self,
        x: &[f64],
        gx: &mut [f64],
        gtx: &mut [f64],
        buf: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(buf.len(), self.plan.len);
        self.load(x, buf);
        self.plan.forward.process_with_scratch(buf, scratch);
        let i = Complex64::new(0.0, 1.0);
        for ((b, s), st) in buf.iter_mut().zip(&self.spectrum).zip(&self.spectrum_t) {
            *b *= s + i * st;
        }
        self.plan.inverse.process_with_scratch(buf, scratch);
        for k in 0..self.n {
            gx[k] = buf[k].re;
            gtx[k] = buf[k].im;
        }
    }

    pub fn scratch_len(&self) -> usize {
        self.plan.forward.get_inplace_scratch_len().max(self.plan.inverse.get_inplace_scratch_len())
    }
}
