//! Tempered Grünwald–Letnikov weights.
//!
//! The shifted Grünwald formula for a tempered fractional derivative of order
//! `alpha` uses the coefficients
//!
//! ```text
//! g_1 = g~_1 - e^{h λ} (1 - e^{-h λ})^α
//! g_k = g~_k e^{-(k-1) h λ}          (k != 1)
//! ```
//!
//! where `g~_k = (-1)^k C(α, k)` are the plain Grünwald weights.

use crate::error::{Result, TfdeError};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 1.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(TfdeError::Domain(format!("alpha must lie in (1, 2), got {alpha}")))
    }
}

/// Plain Grünwald weights `g~_0 ..= g~_K` by the recurrence
/// `g~_k = g~_{k-1} (1 - (α + 1) / k)`.
pub fn untempered_weights(alpha: f64, k_max: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut g = Vec::with_capacity(k_max + 1);
    g.push(1.0);
    for k in 1..=k_max {
        let prev = g[k - 1];
        g.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    Ok(g)
}

/// `(1 - e^{-x})^α` without cancellation for small `x`.
fn one_minus_exp_neg_pow(x: f64, alpha: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let base = -(-x).exp_m1();
    (alpha * base.ln()).exp()
}

/// Weight sequence for a fixed `(alpha, lambda, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperedWeights {
    alpha: f64,
    lambda: f64,
    h: f64,
    g: Vec<f64>,
}

impl TemperedWeights {
    /// Builds `g_0 ..= g_K`.
    pub fn new(alpha: f64, lambda: f64, h: f64, k_max: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(TfdeError::Domain(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(TfdeError::Domain(format!("h must be > 0, got {h}")));
        }
        let mut g = untempered_weights(alpha, k_max)?;
        let hl = h * lambda;
        // e^{-(k-1) h λ} for k = 0 is e^{h λ}
        g[0] = hl.exp();
        if k_max >= 1 {
            g[1] -= hl.exp() * one_minus_exp_neg_pow(hl, alpha);
        }
        if hl > 0.0 {
            let decay = (-hl).exp();
            let mut factor = decay;
            for gk in g.iter_mut().skip(2) {
                *gk *= factor;
                factor *= decay;
            }
        }
        Ok(Self { alpha, lambda, h, g })
    }

    /// Wraps an arbitrary sequence, without validation. Used to build
    /// corrupted sequences for negative tests and synthetic operators.
    pub fn from_raw(alpha: f64, lambda: f64, h: f64, g: Vec<f64>) -> Self {
        Self { alpha, lambda, h, g }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }

    /// Largest index `K` held.
    pub fn k_max(&self) -> usize {
        self.g.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        self.g[k]
    }

    /// Runs the sign and partial-sum checks.
    pub fn check_properties(&self) -> WeightProperties {
        check_sign_structure(self)
    }
}

/// Outcome of the sign and partial-sum checks on a weight sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProperties {
    pub g1_negative: bool,
    pub others_positive: bool,
    pub partial_sums_negative: bool,
    /// `|S_j|` never grows once the sum turns negative.
    pub tail_shrinks: bool,
    /// Indices whose weight flushed to zero, or whose partial sum fell below
    /// the normal range; excluded from the corresponding test.
    pub underflowed: usize,
    pub first_violation: Option<usize>,
}

impl WeightProperties {
    pub fn all_hold(&self) -> bool {
        self.g1_negative && self.others_positive && self.partial_sums_negative && self.tail_shrinks
    }
}

/// `Σ_{k>K} g_k` for the exact weights, continuing the recurrence past `K`.
///
/// The full series sums to zero, so this is `-S_K` in exact arithmetic. For
/// `λ = 0` it is `-(-1)^K C(α-1, K)`; otherwise the terms decay geometrically
/// and are summed until negligible.
fn series_remainder(alpha: f64, hl: f64, k_max: usize) -> f64 {
    if k_max == 0 {
        return -hl.exp();
    }
    if hl == 0.0 {
        // (-1)^j C(α-1, j) = Π_{i≤j} (1 - α/i)
        let mut c = 1.0;
        for i in 1..=k_max {
            c *= 1.0 - alpha / i as f64;
        }
        return -c;
    }
    let decay = (-hl).exp();
    let mut gt = 1.0;
    for k in 1..=k_max {
        gt *= 1.0 - (alpha + 1.0) / k as f64;
    }
    let mut factor = ((k_max as f64 - 1.0) * -hl).exp();
    let mut tail = 0.0;
    for k in k_max + 1..k_max + 4_000_000 {
        gt *= 1.0 - (alpha + 1.0) / k as f64;
        factor *= decay;
        let term = gt * factor;
        tail += term;
        if term <= tail * 1e-18 {
            break;
        }
    }
    tail
}

/// Checks `g_1 < 0`, `g_k > 0` for `k != 1` and `S_j = Σ_{k≤j} g_k < 0` for `j ≥ 1`.
///
/// Partial sums are accumulated with compensated summation. Deep in the tail
/// `S_j` drops below the rounding error already present in the stored `O(1)`
/// leading weights, and there its sign is taken from the equivalent tail form
/// `S_j = -Σ_{k>j} g_k`, provided the two agree to within that floor.
pub fn check_sign_structure(w: &TemperedWeights) -> WeightProperties {
    let g = w.as_slice();
    let mut report = WeightProperties {
        g1_negative: g.len() < 2 || g[1] < 0.0,
        others_positive: true,
        partial_sums_negative: true,
        tail_shrinks: true,
        underflowed: 0,
        first_violation: None,
    };
    if !report.g1_negative {
        report.first_violation = Some(1);
    }
    let note = |k: usize, r: &mut WeightProperties| {
        if r.first_violation.is_none() {
            r.first_violation = Some(k);
        }
    };

    let k_max = g.len() - 1;
    // tail[j] = Σ_{k>j} g_k, summed backwards (smallest terms first)
    let mut tail = vec![0.0; g.len()];
    tail[k_max] = series_remainder(w.alpha(), w.h() * w.lambda(), k_max);
    for j in (0..k_max).rev() {
        tail[j] = tail[j + 1] + g[j + 1];
    }

    let eps = f64::EPSILON;
    let (mut sum, mut comp, mut abs_sum) = (0.0f64, 0.0f64, 0.0f64);
    let mut prev_abs = f64::INFINITY;
    for (k, &gk) in g.iter().enumerate() {
        if k != 1 {
            if gk == 0.0 && k > 1 {
                report.underflowed += 1;
            } else if !(gk > 0.0) {
                report.others_positive = false;
                note(k, &mut report);
            }
        }
        // Neumaier's variant of Kahan summation
        let t = sum + gk;
        comp += if sum.abs() >= gk.abs() { (sum - t) + gk } else { (gk - t) + sum };
        sum = t;
        abs_sum += gk.abs();
        if k == 0 || (gk == 0.0 && k > 1) {
            continue;
        }
        let forward = sum + comp;
        // each stored weight carries a few ulps of its own error
        let floor = 16.0 * eps * abs_sum;
        let s = if forward.abs() > floor {
            forward
        } else if (forward + tail[k]).abs() <= 2.0 * floor {
            if tail[k] < f64::MIN_POSITIVE {
                // below the normal range, the sign is not representable
                report.underflowed += 1;
                continue;
            }
            -tail[k]
        } else {
            forward
        };
        if !(s < 0.0) {
            report.partial_sums_negative = false;
            note(k, &mut report);
        }
        // the two sum forms may differ by up to the floor where they hand over
        if s.abs() > prev_abs + floor {
            report.tail_shrinks = false;
            note(k, &mut report);
        }
        prev_abs = s.abs();
    }
    report
}
