//! Deterministic numerical integration of complex-valued integrands.
//!
//! Two schemes cover the needs of the shell-kernel oracles and the
//! finite-coupling evaluator:
//!
//! * [`integrate`]: globally adaptive Gauss-Kronrod 7/15 with a worklist
//!   ordered by error estimate (ties broken by interval position, so runs are
//!   bit-reproducible). Good for peaked but non-oscillatory integrands such
//!   as regulated Lorentzians.
//! * [`simpson_converged`]: composite Simpson on a uniform grid with step
//!   doubling until two refinements agree. Preferred for highly oscillatory
//!   integrands where the caller can bound the phase slope and choose the
//!   initial resolution; adaptive schemes waste most of their budget
//!   re-discovering uniform oscillation.
//!
//! [`richardson3`] eliminates the linear and quadratic terms of a scalar
//! model `I(eta) = I* + B eta + C eta^2` from three evaluations at
//! `eta0, eta0/2, eta0/4`.

use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadError {
    #[error("bad interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("integrand returned a non-finite value near x={0}")]
    NonFinite(f64),
    #[error(
        "quadrature did not converge: estimated error {error:.3e} exceeds tolerance {tolerance:.3e} after {panels} panels"
    )]
    NonConvergence { error: f64, tolerance: f64, panels: usize },
}

#[derive(Debug, Clone)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Number of equal panels the interval starts from; must be large enough
    /// that no feature narrower than a panel is missed entirely.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-13, initial_panels: 16, max_panels: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: C64,
    /// Sum of per-panel |K15 - G7| estimates (Simpson: |refined - coarse|).
    pub abs_error: f64,
    pub panels: usize,
}

// 15-point Kronrod abscissae on [-1, 1] (positive half) and weights; the
// embedded 7-point Gauss rule uses every second node. QUADPACK DQK15 values.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Kronrod panel: returns (K15 value, |K15 - G7| estimate).
pub fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let fsum = f(center - dx) + f(center + dx);
        k += WGK[i] * fsum;
        if i % 2 == 1 {
            g += WG[i / 2] * fsum;
        }
    }
    (k * half, ((k - g) * half).norm())
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: C64,
    err: f64,
}

/// Globally adaptive GK15 over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(QuadError::BadInterval(a, b));
    }
    let n0 = opts.initial_panels.max(1);
    let mut panels: Vec<Panel> = Vec::with_capacity(n0);
    for i in 0..n0 {
        let pa = a + (b - a) * i as f64 / n0 as f64;
        let pb = a + (b - a) * (i + 1) as f64 / n0 as f64;
        let (value, err) = gk15(&mut f, pa, pb);
        if !value.is_finite() {
            return Err(QuadError::NonFinite(0.5 * (pa + pb)));
        }
        panels.push(Panel { a: pa, b: pb, value, err });
    }
    loop {
        let total: C64 = panels.iter().map(|p| p.value).sum();
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.norm());
        if total_err <= tol {
            return Ok(QuadResult { value: total, abs_error: total_err, panels: panels.len() });
        }
        if panels.len() >= opts.max_panels {
            return Err(QuadError::NonConvergence {
                error: total_err,
                tolerance: tol,
                panels: panels.len(),
            });
        }
        // Split the worst panel; ties broken by position for determinism.
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| {
                x.err
                    .total_cmp(&y.err)
                    .then(y.a.total_cmp(&x.a))
            })
            .map(|(i, _)| i)
            .expect("non-empty panel list");
        let Panel { a: pa, b: pb, .. } = panels[worst];
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // Interval exhausted at machine precision.
            return Err(QuadError::NonConvergence {
                error: total_err,
                tolerance: tol,
                panels: panels.len(),
            });
        }
        let (v1, e1) = gk15(&mut f, pa, mid);
        let (v2, e2) = gk15(&mut f, mid, pb);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(QuadError::NonFinite(mid));
        }
        panels[worst] = Panel { a: pa, b: mid, value: v1, err: e1 };
        panels.push(Panel { a: mid, b: pb, value: v2, err: e2 });
    }
}

/// Composite Simpson with `2 * half_steps` uniform intervals.
pub fn simpson_uniform<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64, half_steps: usize) -> C64 {
    let n = 2 * half_steps.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    let mut odd = C64::new(0.0, 0.0);
    let mut even = C64::new(0.0, 0.0);
    for i in 1..n {
        let x = a + h * i as f64;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    acc += 4.0 * odd + 2.0 * even;
    acc * (h / 3.0)
}

/// Simpson with step doubling: refines until successive values agree within
/// tolerance, then returns the finer value.
pub fn simpson_converged<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    initial_half_steps: usize,
    rel_tol: f64,
    abs_tol: f64,
    max_doublings: usize,
) -> Result<QuadResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(QuadError::BadInterval(a, b));
    }
    let mut half_steps = initial_half_steps.max(1);
    let mut prev = simpson_uniform(&mut f, a, b, half_steps);
    for _ in 0..max_doublings {
        half_steps *= 2;
        let cur = simpson_uniform(&mut f, a, b, half_steps);
        if !cur.is_finite() {
            return Err(QuadError::NonFinite(0.5 * (a + b)));
        }
        let err = (cur - prev).norm();
        let tol = abs_tol.max(rel_tol * cur.norm());
        if err <= tol {
            return Ok(QuadResult { value: cur, abs_error: err, panels: half_steps });
        }
        prev = cur;
    }
    let err = prev.norm() * rel_tol + 1.0;
    Err(QuadError::NonConvergence {
        error: err,
        tolerance: abs_tol.max(rel_tol * prev.norm()),
        panels: half_steps,
    })
}

/// Eliminates `B eta + C eta^2` from evaluations at `eta0, eta0/2, eta0/4`:
/// returns `(i0 - 6 i1 + 8 i2) / 3`.
pub fn richardson3(i0: C64, i1: C64, i2: C64) -> C64 {
    (i0 - 6.0 * i1 + 8.0 * i2) / 3.0
}
