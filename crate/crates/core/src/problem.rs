//! Continuous problem description, space-time mesh and the built-in catalog.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Result, TfdeError};

/// Coefficient or initial-value function of `x`.
pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Source term (or its `u`-derivative) as a function of `(u, x, t)`.
pub type SourceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Nonlinear tempered fractional diffusion problem on `[a, b] × (0, T]`
/// with homogeneous Dirichlet data:
///
/// ```text
/// u_t = d+(x) D^{α,λ}_{a,x} u + d-(x) D^{α,λ}_{x,b} u + f(u, x, t)
/// ```
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub d_plus: SpaceFn,
    pub d_minus: SpaceFn,
    pub source: SourceFn,
    /// `∂f/∂u`; central differences are used when absent.
    pub source_du: Option<SourceFn>,
    pub u0: SpaceFn,
    pub lipschitz: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("t_final", &self.t_final)
            .field("alpha", &self.alpha)
            .field("lambda", &self.lambda)
            .field("has_source_du", &self.source_du.is_some())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Logs `msg` the first time it is seen; sweeps would otherwise repeat it per solve.
fn warn_once(msg: String) {
    static SEEN: OnceLock<Mutex<HashSet<String>>> = OnceLock::new();
    let mut seen = SEEN.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if seen.insert(msg.clone()) {
        log::warn!("{msg}");
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Names accepted by [`catalog`].
pub const CATALOG_NAMES: &[&str] = &["example1", "example1_literal", "example1_cubic", "example2"];

/// Looks up a built-in test problem. `alpha` and `lambda` default to 1.5 and 0;
/// use [`ProblemSpec::with_order`] to change them.
///
/// `example1` uses the source `u - u³`. Its source is often quoted as
/// `u - 3u`; `example1_literal` (`-2u`) and `example1_cubic` (`u - 3u³`) keep
/// the two other readings for comparison.
pub fn catalog(name: &str) -> Result<ProblemSpec> {
    let base = |name: &str| ProblemSpec {
        name: name.to_string(),
        a: -1.0,
        b: 1.0,
        t_final: 1.0,
        alpha: 1.5,
        lambda: 0.0,
        d_plus: Arc::new(|x: f64| 1.5 * (-x).exp()),
        d_minus: Arc::new(|x: f64| x.exp()),
        source: Arc::new(|u: f64, _x: f64, _t: f64| u - u * u * u),
        source_du: Some(Arc::new(|u: f64, _x: f64, _t: f64| 1.0 - 3.0 * u * u)),
        u0: Arc::new(|x: f64| ((PI * x).cos() - 1.0) * (PI * x).sin()),
        // |1 - 3u²| over |u| ≤ max|u0| = 3√3/4
        lipschitz: 4.1,
    };
    match name {
        "example1" => Ok(base(name)),
        "example1_literal" => {
            let mut spec = base(name);
            spec.source = Arc::new(|u: f64, _x: f64, _t: f64| u - 3.0 * u);
            spec.source_du = Some(Arc::new(|_u: f64, _x: f64, _t: f64| -2.0));
            spec.lipschitz = 2.0;
            Ok(spec)
        }
        "example1_cubic" => {
            let mut spec = base(name);
            spec.source = Arc::new(|u: f64, _x: f64, _t: f64| u - 3.0 * u * u * u);
            spec.source_du = Some(Arc::new(|u: f64, _x: f64, _t: f64| 1.0 - 9.0 * u * u));
            // |1 - 9u²| over |u| ≤ max|u0| ≈ 1.3
            spec.lipschitz = 16.0;
            Ok(spec)
        }
        "example2" => {
            let mut spec = base(name);
            spec.d_plus = Arc::new(|x: f64| if x < 0.0 { 1.5 * (-x).exp() } else { 2.0 * sech(x) });
            spec.d_minus = Arc::new(|x: f64| if x < 0.0 { x.exp() } else { 0.1 + sech(-x) });
            spec.source = Arc::new(|u: f64, _x: f64, _t: f64| -u * (1.0 - u));
            spec.source_du = Some(Arc::new(|u: f64, _x: f64, _t: f64| -1.0 + 2.0 * u));
            spec.u0 = Arc::new(|x: f64| {
                // 4 e^{10x} / (e^{10x} + 1)^2 written with e^{-10|x|} to avoid overflow
                let e = (-10.0 * x.abs()).exp();
                4.0 * e / ((1.0 + e) * (1.0 + e))
            });
            spec.lipschitz = 3.0;
            Ok(spec)
        }
        other => Err(TfdeError::Lookup(other.to_string())),
    }
}

impl ProblemSpec {
    pub fn with_order(mut self, alpha: f64, lambda: f64) -> Self {
        self.alpha = alpha;
        self.lambda = lambda;
        self
    }

    pub fn with_source(mut self, source: SourceFn, source_du: Option<SourceFn>) -> Self {
        self.source = source;
        self.source_du = source_du;
        self
    }

    pub fn with_initial(mut self, u0: SpaceFn) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_coefficients(mut self, d_plus: SpaceFn, d_minus: SpaceFn) -> Self {
        self.d_plus = d_plus;
        self.d_minus = d_minus;
        self
    }

    /// `f ≡ 0` with `∂f/∂u ≡ 0`.
    pub fn without_source(self) -> Self {
        self.with_source(Arc::new(|_, _, _| 0.0), Some(Arc::new(|_, _, _| 0.0)))
    }

    pub fn f(&self, u: f64, x: f64, t: f64) -> f64 {
        (self.source)(u, x, t)
    }

    /// `∂f/∂u`, falling back to a central difference with step `√ε (1 + |u|)`.
    pub fn df_du(&self, u: f64, x: f64, t: f64) -> f64 {
        match &self.source_du {
            Some(d) => d(u, x, t),
            None => {
                let step = f64::EPSILON.sqrt() * (1.0 + u.abs());
                (self.f(u + step, x, t) - self.f(u - step, x, t)) / (2.0 * step)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) {
            return Err(TfdeError::Domain(format!("need a < b, got [{}, {}]", self.a, self.b)));
        }
        if !(self.t_final > 0.0) {
            return Err(TfdeError::Domain(format!("T must be > 0, got {}", self.t_final)));
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(TfdeError::Domain(format!("alpha must lie in (1, 2), got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TfdeError::Domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        // The schemes impose u = 0 on the boundary regardless of u0(a), u0(b).
        for (label, x) in [("a", self.a), ("b", self.b)] {
            let v = (self.u0)(x);
            if v.abs() > 1e-12 {
                warn_once(format!("{}: u0({label}) = {v:e} is overridden by zero Dirichlet data", self.name));
            }
        }
        Ok(())
    }
}

/// Uniform space-time grid `x_i = a + i h`, `t_j = j τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub n: usize,
    pub m: usize,
}

impl Mesh {
    pub fn new(a: f64, b: f64, t_final: f64, n: usize, m: usize) -> Result<Self> {
        if n < 2 {
            return Err(TfdeError::Domain(format!("need N >= 2 space subdivisions, got {n}")));
        }
        if m < 1 {
            return Err(TfdeError::Domain(format!("need M >= 1 time steps, got {m}")));
        }
        Ok(Self { a, b, t_final, n, m })
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.m as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.m {
            self.t_final
        } else {
            j as f64 * self.tau()
        }
    }

    /// Number of interior unknowns per time level, `N - 1`.
    pub fn interior(&self) -> usize {
        self.n - 1
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.n).map(|i| self.x(i)).collect()
    }
}

/// Mesh for `spec` with `n` space and `m` time subdivisions.
pub fn build_mesh(spec: &ProblemSpec, n: usize, m: usize) -> Result<Mesh> {
    Mesh::new(spec.a, spec.b, spec.t_final, n, m)
}

/// Hypothesis checks made before a solve. Violations are reported, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Interior nodes where `d+(x_i) < d-(x_i)`.
    pub coefficient_order_violations: usize,
    /// `τ L`; the nonlinear scheme estimates assume this is below one.
    pub tau_l: f64,
}

/// Checks coefficient positivity (fatal) and the `d+ ≥ d-`, `τ L < 1`
/// hypotheses (warnings).
pub fn check_hypotheses(spec: &ProblemSpec, mesh: &Mesh) -> Result<Diagnostics> {
    let mut violations = 0;
    for x in mesh.interior_nodes() {
        let (dp, dm) = ((spec.d_plus)(x), (spec.d_minus)(x));
        if !(dp > 0.0 && dm > 0.0) {
            return Err(TfdeError::Domain(format!(
                "diffusion coefficients must be positive, got d+({x}) = {dp}, d-({x}) = {dm}"
            )));
        }
        if dp < dm {
            violations += 1;
        }
    }
    if violations > 0 {
        warn_once(format!("{}: d+(x) < d-(x) at {violations} of {} interior nodes", spec.name, mesh.interior()));
    }
    let tau_l = mesh.tau() * spec.lipschitz;
    if tau_l >= 1.0 {
        warn_once(format!("{}: tau * L = {tau_l} >= 1", spec.name));
    }
    Ok(Diagnostics { coefficient_order_violations: violations, tau_l })
}
