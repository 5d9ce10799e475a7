//! Physical data and the spectral objects built from it: the energy-violation
//! function, its zero shells, the two-point kernels of both sectors, and lazy
//! momentum functions (expression trees evaluated per probe momentum).
//!
//! Normalization fixed once for the whole crate: `int dtau e^{i Delta tau}
//! := 2 pi delta(Delta)`, so every shell sum carries an explicit `2 pi` and
//! the eta-regulated oracle uses the Lorentzian `2 eta / (Delta^2 + eta^2)`.

use crate::quad::{self, QuadError, QuadOptions};
use crate::C64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate energy shell at l={l}: |dDelta/dk|={slope:.3e} below tolerance (golden-rule density diverges)")]
    DegenerateShell { l: f64, slope: f64 },
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

/// Global physical constants and numerical thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub hbar: f64,
    pub mass: f64,
    /// Spatial dimension, 1 or 3. Shell resolution requires 1.
    pub dim: usize,
    /// Shells with |dDelta/dk| below this are treated as tangent (error).
    pub root_tol: f64,
    /// Relative tolerance handed to quadratures.
    pub quad_tol: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0, dim: 1, root_tol: 1e-6, quad_tol: 1e-9 }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if !(self.hbar > 0.0 && self.mass > 0.0 && self.root_tol > 0.0 && self.quad_tol > 0.0) {
            return Err(SpectralError::InvalidParams(
                "hbar, mass, root_tol, quad_tol must all be positive".into(),
            ));
        }
        if self.dim != 1 && self.dim != 3 {
            return Err(SpectralError::InvalidParams(format!(
                "dim must be 1 or 3, got {}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Reservoir dispersion `omega(k) >= 0`, a function of `|k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dispersion {
    Constant { omega0: f64 },
    /// `omega0 + |k|^2 / (2 mu)`.
    Quadratic { omega0: f64, mu: f64 },
    /// `c |k|`.
    Linear { c: f64 },
}

impl Dispersion {
    pub fn validate(&self) -> Result<(), SpectralError> {
        let ok = match *self {
            Dispersion::Constant { omega0 } => omega0 >= 0.0,
            Dispersion::Quadratic { omega0, mu } => omega0 >= 0.0 && mu > 0.0,
            Dispersion::Linear { c } => c > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SpectralError::InvalidParams(
                "dispersion needs omega0 >= 0, mu > 0, c > 0".into(),
            ))
        }
    }

    pub fn omega_abs(&self, k_abs: f64) -> f64 {
        match *self {
            Dispersion::Constant { omega0 } => omega0,
            Dispersion::Quadratic { omega0, mu } => omega0 + k_abs * k_abs / (2.0 * mu),
            Dispersion::Linear { c } => c * k_abs,
        }
    }

    pub fn omega(&self, k: &[f64]) -> f64 {
        self.omega_abs(k.iter().map(|x| x * x).sum::<f64>().sqrt())
    }
}

/// Gaussian form factor `g(k) = A exp(-|k - k0|^2 / (2 sigma^2))`.
///
/// The family is closed under conjugation and pointwise products, which keeps
/// every kernel evaluation closed-form.
#[derive(Debug, Clone, PartialEq)]
pub struct FormFactor {
    pub amp: C64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl FormFactor {
    pub fn new(amp: C64, center: Vec<f64>, width: f64) -> Result<Self, SpectralError> {
        if !(width > 0.0) {
            return Err(SpectralError::InvalidParams(format!(
                "form-factor width must be positive, got {width}"
            )));
        }
        if center.is_empty() {
            return Err(SpectralError::InvalidParams("empty form-factor center".into()));
        }
        Ok(Self { amp, center, width })
    }

    pub fn gaussian_1d(amp: C64, center: f64, width: f64) -> Result<Self, SpectralError> {
        Self::new(amp, vec![center], width)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, k: &[f64]) -> Result<C64, SpectralError> {
        if k.len() != self.center.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.center.len(),
                got: k.len(),
            });
        }
        let d2: f64 = k
            .iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) * (x - c))
            .sum();
        Ok(self.amp * (-d2 / (2.0 * self.width * self.width)).exp())
    }

    pub fn eval_1d(&self, k: f64) -> C64 {
        debug_assert_eq!(self.center.len(), 1);
        let d = k - self.center[0];
        self.amp * (-d * d / (2.0 * self.width * self.width)).exp()
    }

    pub fn conj(&self) -> Self {
        Self { amp: self.amp.conj(), center: self.center.clone(), width: self.width }
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { amp: c * self.amp, center: self.center.clone(), width: self.width }
    }

    /// Interval carrying all but `exp(-n^2/2)` of the 1-d envelope.
    pub fn support_1d(&self, n_sigma: f64) -> (f64, f64) {
        (self.center[0] - n_sigma * self.width, self.center[0] + n_sigma * self.width)
    }
}

/// Pointwise product `conj(f) * g` as a member of the Gaussian family.
pub fn conj_mul(f: &FormFactor, g: &FormFactor) -> Result<FormFactor, SpectralError> {
    if f.dim() != g.dim() {
        return Err(SpectralError::DimensionMismatch { expected: f.dim(), got: g.dim() });
    }
    let (s1, s2) = (f.width * f.width, g.width * g.width);
    let s = (s1 * s2) / (s1 + s2);
    let center: Vec<f64> = f
        .center
        .iter()
        .zip(&g.center)
        .map(|(a, b)| s * (a / s1 + b / s2))
        .collect();
    let d2: f64 = f
        .center
        .iter()
        .zip(&g.center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let amp = f.amp.conj() * g.amp * (-d2 / (2.0 * (s1 + s2))).exp();
    Ok(FormFactor { amp, center, width: s.sqrt() })
}

/// Energy violation `Delta(l, k) = -(1/m) l.k + omega(k) + (hbar/2m)|k|^2`.
pub fn delta_energy(
    pp: &PhysParams,
    disp: &Dispersion,
    l: &[f64],
    k: &[f64],
) -> Result<f64, SpectralError> {
    if l.len() != pp.dim || k.len() != pp.dim {
        return Err(SpectralError::DimensionMismatch {
            expected: pp.dim,
            got: if l.len() != pp.dim { l.len() } else { k.len() },
        });
    }
    let lk: f64 = l.iter().zip(k).map(|(a, b)| a * b).sum();
    let k2: f64 = k.iter().map(|x| x * x).sum();
    Ok(-lk / pp.mass + disp.omega(k) + 0.5 * pp.hbar * k2 / pp.mass)
}

/// Scalar version for the d=1 shell machinery.
pub fn delta_energy_1d(pp: &PhysParams, disp: &Dispersion, l: f64, k: f64) -> f64 {
    -l * k / pp.mass + disp.omega_abs(k.abs()) + 0.5 * pp.hbar * k * k / pp.mass
}

/// A zero of `Delta(l, .)` with the density factor dividing the shell sum.
/// For a kink root (linear dispersion at k=0) the jacobian is the harmonic
/// mean of the one-sided slopes, because each side contributes half a delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellRoot {
    pub k: f64,
    pub jacobian: f64,
}

fn quadratic_shell(
    a: f64,
    b: f64,
    c: f64,
    l: f64,
    root_tol: f64,
) -> Result<Vec<ShellRoot>, SpectralError> {
    // Roots of a k^2 + b k + c with a > 0; |Delta'| = sqrt(disc) at both.
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Ok(Vec::new());
    }
    let jac = disc.sqrt();
    if jac < root_tol {
        return Err(SpectralError::DegenerateShell { l, slope: jac });
    }
    let r1 = (-b - jac) / (2.0 * a);
    let r2 = (-b + jac) / (2.0 * a);
    Ok(vec![ShellRoot { k: r1, jacobian: jac }, ShellRoot { k: r2, jacobian: jac }])
}

/// All real zeros of `Delta(l, .)` in d=1, with their density factors;
/// closed-form per dispersion branch.
pub fn shell_roots(
    pp: &PhysParams,
    disp: &Dispersion,
    l: f64,
) -> Result<Vec<ShellRoot>, SpectralError> {
    if pp.dim != 1 {
        return Err(SpectralError::Unsupported("shell resolution requires dim = 1"));
    }
    let a = 0.5 * pp.hbar / pp.mass;
    let b = -l / pp.mass;
    let mut roots = match *disp {
        Dispersion::Constant { omega0 } => quadratic_shell(a, b, omega0, l, pp.root_tol)?,
        Dispersion::Quadratic { omega0, mu } => {
            quadratic_shell(a + 0.5 / mu, b, omega0, l, pp.root_tol)?
        }
        Dispersion::Linear { c } => {
            // Piecewise: Delta = a k^2 + (b +- c) k on k >= 0 / k <= 0.
            // k = 0 is always a root (omega(0) = 0); its one-sided slopes are
            // b + c (right) and b - c (left).
            let (sr, sl) = (b + c, b - c);
            if sr.abs() < pp.root_tol || sl.abs() < pp.root_tol {
                return Err(SpectralError::DegenerateShell {
                    l,
                    slope: sr.abs().min(sl.abs()),
                });
            }
            let harmonic = 2.0 / (1.0 / sr.abs() + 1.0 / sl.abs());
            let mut out = vec![ShellRoot { k: 0.0, jacobian: harmonic }];
            let right = -sr / a;
            if right > 0.0 {
                // |2 a k + sr| at the root = |sr|.
                out.push(ShellRoot { k: right, jacobian: sr.abs() });
            }
            let left = -sl / a;
            if left < 0.0 {
                out.push(ShellRoot { k: left, jacobian: sl.abs() });
            }
            out
        }
    };
    roots.sort_by(|x, y| x.k.total_cmp(&y.k));
    for r in &roots {
        debug_assert!(delta_energy_1d(pp, disp, l, r.k).abs() < 1e-9 * (1.0 + l.abs()));
    }
    Ok(roots)
}

/// Shell sum `2 pi sum_r F(k_r) / jac_r` for a Gaussian-family kernel `F`.
pub fn transform_value(
    pp: &PhysParams,
    disp: &Dispersion,
    kernel: &FormFactor,
    l: f64,
) -> Result<C64, SpectralError> {
    let mut acc = C64::new(0.0, 0.0);
    for r in shell_roots(pp, disp, l)? {
        acc += kernel.eval_1d(r.k) / r.jacobian;
    }
    Ok(2.0 * PI * acc)
}

/// Two-point kernel `(f|g)_l = 2 pi sum_roots conj(f)(k_r) g(k_r) / jac_r`.
pub fn pairing_kernel(
    pp: &PhysParams,
    disp: &Dispersion,
    f: &FormFactor,
    g: &FormFactor,
    l: f64,
) -> Result<C64, SpectralError> {
    transform_value(pp, disp, &conj_mul(f, g)?, l)
}

/// Upper bound for |dDelta/dk| over `[lo, hi]` (panel sizing only).
pub(crate) fn delta_slope_bound(pp: &PhysParams, disp: &Dispersion, l: f64, lo: f64, hi: f64) -> f64 {
    let kmax = lo.abs().max(hi.abs());
    let base = (pp.hbar * kmax + l.abs()) / pp.mass;
    base + match *disp {
        Dispersion::Constant { .. } => 0.0,
        Dispersion::Quadratic { mu, .. } => kmax / mu,
        Dispersion::Linear { c } => c,
    }
}

/// Independent oracle for [`pairing_kernel`]: the time integral regulated by
/// `e^{-eta |tau|}` turns the shell delta into a Lorentzian,
/// `int dk conj(f) g(k) 2 eta / (Delta^2 + eta^2)`, integrated adaptively.
pub fn pairing_kernel_regulated(
    pp: &PhysParams,
    disp: &Dispersion,
    f: &FormFactor,
    g: &FormFactor,
    l: f64,
    eta: f64,
) -> Result<C64, SpectralError> {
    transform_regulated(pp, disp, &conj_mul(f, g)?, l, eta)
}

/// Same regulated integral for an already-multiplied kernel.
pub fn transform_regulated(
    pp: &PhysParams,
    disp: &Dispersion,
    kernel: &FormFactor,
    l: f64,
    eta: f64,
) -> Result<C64, SpectralError> {
    if !(eta > 0.0) {
        return Err(SpectralError::InvalidParams(format!("eta must be positive, got {eta}")));
    }
    let (lo, hi) = kernel.support_1d(9.0);
    let slope = delta_slope_bound(pp, disp, l, lo, hi).max(1e-3);
    // The Lorentzian ridge has width eta/slope; panels at a quarter of that
    // guarantee the initial scan cannot step over it.
    let peak_width = eta / slope;
    let initial = ((hi - lo) / (4.0 * peak_width)).ceil().max(32.0) as usize;
    let initial = initial.min(60_000);
    let opts = QuadOptions {
        rel_tol: pp.quad_tol.max(1e-12),
        abs_tol: 1e-13,
        initial_panels: initial,
        max_panels: initial + 4000,
    };
    let r = quad::integrate(
        |k| {
            let d = delta_energy_1d(pp, disp, l, k);
            kernel.eval_1d(k) * (2.0 * eta / (d * d + eta * eta))
        },
        lo,
        hi,
        &opts,
    )?;
    Ok(r.value)
}

/// Characteristic size of `Delta` over the kernel support, used to pick the
/// starting regulator.
pub fn delta_scale(pp: &PhysParams, disp: &Dispersion, kernel: &FormFactor, l: f64) -> f64 {
    let c = kernel.center[0];
    let w = kernel.width;
    [-3.0, -1.0, 0.0, 1.0, 3.0]
        .iter()
        .map(|s| delta_energy_1d(pp, disp, l, c + s * w).abs())
        .fold(1.0_f64, f64::max)
}

/// Richardson-extrapolated regulated kernel: evaluates at
/// `eta0, eta0/2, eta0/4` with `eta0 = 1e-2 x` the characteristic `Delta`
/// scale and removes the linear and quadratic regulator error.
pub fn pairing_kernel_extrapolated(
    pp: &PhysParams,
    disp: &Dispersion,
    f: &FormFactor,
    g: &FormFactor,
    l: f64,
) -> Result<C64, SpectralError> {
    let eta0 = 1e-2 * delta_scale(pp, disp, &conj_mul(f, g)?, l);
    let i0 = pairing_kernel_regulated(pp, disp, f, g, l, eta0)?;
    let i1 = pairing_kernel_regulated(pp, disp, f, g, l, eta0 / 2.0)?;
    let i2 = pairing_kernel_regulated(pp, disp, f, g, l, eta0 / 4.0)?;
    Ok(quad::richardson3(i0, i1, i2))
}

/// Frequency-shell kernel of the responseless sector:
/// `2 pi sum_{omega(k)=omega_probe} conj(f) g(k) / |omega'(k)|` in d=1.
/// Constant dispersion has no frequency shell and is rejected.
pub fn bose_kernel(
    pp: &PhysParams,
    disp: &Dispersion,
    omega_probe: f64,
    f: &FormFactor,
    g: &FormFactor,
) -> Result<C64, SpectralError> {
    if pp.dim != 1 {
        return Err(SpectralError::Unsupported("frequency shell requires dim = 1"));
    }
    let kernel = conj_mul(f, g)?;
    let roots: Vec<(f64, f64)> = match *disp {
        Dispersion::Constant { .. } => {
            return Err(SpectralError::Unsupported(
                "constant dispersion has no frequency shell (omega'(k) = 0 everywhere)",
            ));
        }
        Dispersion::Quadratic { omega0, mu } => {
            if omega_probe < omega0 {
                Vec::new()
            } else {
                let k = (2.0 * mu * (omega_probe - omega0)).sqrt();
                let slope = k / mu;
                if slope < pp.root_tol {
                    return Err(SpectralError::DegenerateShell { l: omega_probe, slope });
                }
                vec![(-k, slope), (k, slope)]
            }
        }
        Dispersion::Linear { c } => {
            if omega_probe < 0.0 {
                Vec::new()
            } else if omega_probe / c < pp.root_tol {
                return Err(SpectralError::DegenerateShell { l: omega_probe, slope: 0.0 });
            } else {
                let k = omega_probe / c;
                vec![(-k, c), (k, c)]
            }
        }
    };
    let mut acc = C64::new(0.0, 0.0);
    for (k, slope) in roots {
        acc += kernel.eval_1d(k) / slope;
    }
    Ok(2.0 * PI * acc)
}

/// Fourier kernel `K(v) = int d^dk conj(f) g(k) e^{i Delta(l,k) v}`.
///
/// Constant/Quadratic dispersion: closed-form complex Gaussian integral,
/// factorized per axis (the quadratic form is isotropic). Linear dispersion:
/// adaptive quadrature, d=1 only.
pub fn time_kernel(
    pp: &PhysParams,
    disp: &Dispersion,
    f: &FormFactor,
    g: &FormFactor,
    l: &[f64],
    v: f64,
) -> Result<C64, SpectralError> {
    if l.len() != pp.dim {
        return Err(SpectralError::DimensionMismatch { expected: pp.dim, got: l.len() });
    }
    let kernel = conj_mul(f, g)?;
    if kernel.dim() != pp.dim {
        return Err(SpectralError::DimensionMismatch { expected: pp.dim, got: kernel.dim() });
    }
    let (quad_a, omega0) = match *disp {
        Dispersion::Constant { omega0 } => (0.5 * pp.hbar / pp.mass, omega0),
        Dispersion::Quadratic { omega0, mu } => (0.5 * pp.hbar / pp.mass + 0.5 / mu, omega0),
        Dispersion::Linear { c } => {
            if pp.dim != 1 {
                return Err(SpectralError::Unsupported(
                    "linear-dispersion time kernel requires dim = 1",
                ));
            }
            // Oscillation-aware adaptive quadrature over the envelope support.
            let (lo, hi) = kernel.support_1d(9.0);
            let slope = delta_slope_bound(pp, disp, l[0], lo, hi) + c;
            let cycles = (v.abs() * slope * (hi - lo)) / (2.0 * PI);
            let initial = ((3.0 * cycles).ceil() as usize).clamp(32, 60_000);
            let opts = QuadOptions {
                rel_tol: pp.quad_tol.max(1e-12),
                abs_tol: 1e-13,
                initial_panels: initial,
                max_panels: initial + 4000,
            };
            let r = quad::integrate(
                |k| {
                    let d = delta_energy_1d(pp, disp, l[0], k);
                    kernel.eval_1d(k) * C64::new(0.0, d * v).exp()
                },
                lo,
                hi,
                &opts,
            )?;
            return Ok(r.value);
        }
    };
    // Per axis: int dk exp(-(k-c)^2/2s^2) exp(i v (A k^2 + B_i k)) with
    // B = -l/m, times the constant-phase factor e^{i v omega0}.
    let s2 = kernel.width * kernel.width;
    let alpha = C64::new(1.0 / (2.0 * s2), -v * quad_a);
    let mut acc = kernel.amp * C64::new(0.0, v * omega0).exp();
    for i in 0..pp.dim {
        let c = kernel.center[i];
        let beta = C64::new(c / s2, -v * l[i] / pp.mass);
        let gamma = -c * c / (2.0 * s2);
        acc *= (C64::new(PI, 0.0) / alpha).sqrt() * (beta * beta / (4.0 * alpha) + gamma).exp();
    }
    Ok(acc)
}

/// Immutable bundle of constants + dispersion threaded through momentum
/// functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCtx {
    pub pp: PhysParams,
    pub disp: Dispersion,
}

impl SpectralCtx {
    pub fn new(pp: PhysParams, disp: Dispersion) -> Self {
        Self { pp, disp }
    }
}

enum NodeKind {
    Const(C64),
    /// `p -> 2 pi sum_{Delta(p,.)=0} kernel(k_r)/jac_r`.
    Transform { kernel: FormFactor, ctx: SpectralCtx },
    /// `p -> 2 pi sum_roots interior(p - hbar k_r) kernel(k_r)/jac_r`.
    Convolve { interior: PElement, kernel: FormFactor, ctx: SpectralCtx },
    Sum(Vec<PElement>),
    Product(Vec<PElement>),
    Scale(C64, PElement),
}

struct PNode {
    kind: NodeKind,
    cache: Mutex<HashMap<u64, C64>>,
}

/// A lazily evaluable momentum function `p -> C`. Shells move with `p`, so
/// values are computed per requested probe and memoized per node; trees are
/// immutable and cheap to clone (shared nodes).
#[derive(Clone)]
pub struct PElement {
    node: Arc<PNode>,
}

impl std::fmt::Debug for PElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.node.kind {
            NodeKind::Const(c) => write!(f, "Const({c})"),
            NodeKind::Transform { .. } => write!(f, "Transform"),
            NodeKind::Convolve { interior, .. } => write!(f, "Convolve({interior:?})"),
            NodeKind::Sum(v) => write!(f, "Sum(x{})", v.len()),
            NodeKind::Product(v) => write!(f, "Product(x{})", v.len()),
            NodeKind::Scale(c, x) => write!(f, "Scale({c}, {x:?})"),
        }
    }
}

impl PElement {
    fn from_kind(kind: NodeKind) -> Self {
        Self { node: Arc::new(PNode { kind, cache: Mutex::new(HashMap::new()) }) }
    }

    pub fn constant(c: C64) -> Self {
        Self::from_kind(NodeKind::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(C64::new(0.0, 0.0))
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    /// The transform of a Gaussian-family kernel (shell sum as a function of
    /// the probe momentum).
    pub fn transform(kernel: FormFactor, ctx: SpectralCtx) -> Self {
        Self::from_kind(NodeKind::Transform { kernel, ctx })
    }

    /// Emission-vertex composition: evaluates `interior` at the recoiled
    /// momentum `p - hbar k_r` inside the shell sum of `kernel`.
    pub fn convolve(interior: PElement, kernel: FormFactor, ctx: SpectralCtx) -> Self {
        Self::from_kind(NodeKind::Convolve { interior, kernel, ctx })
    }

    pub fn sum(terms: Vec<PElement>) -> Self {
        Self::from_kind(NodeKind::Sum(terms))
    }

    pub fn product(factors: Vec<PElement>) -> Self {
        Self::from_kind(NodeKind::Product(factors))
    }

    pub fn scale(c: C64, inner: PElement) -> Self {
        Self::from_kind(NodeKind::Scale(c, inner))
    }

    /// True if this is literally the constant zero (used to prune terms).
    pub fn is_const_zero(&self) -> bool {
        matches!(self.node.kind, NodeKind::Const(c) if c == C64::new(0.0, 0.0))
    }

    /// True if this is literally the constant one (used to prune factors).
    pub fn is_const_one(&self) -> bool {
        matches!(self.node.kind, NodeKind::Const(c) if c == C64::new(1.0, 0.0))
    }

    pub fn eval(&self, p: f64) -> Result<C64, SpectralError> {
        if let Some(v) = self.node.cache.lock().unwrap().get(&p.to_bits()) {
            return Ok(*v);
        }
        let v = match &self.node.kind {
            NodeKind::Const(c) => *c,
            NodeKind::Transform { kernel, ctx } => {
                transform_value(&ctx.pp, &ctx.disp, kernel, p)?
            }
            NodeKind::Convolve { interior, kernel, ctx } => {
                let mut acc = C64::new(0.0, 0.0);
                for r in shell_roots(&ctx.pp, &ctx.disp, p)? {
                    acc += interior.eval(p - ctx.pp.hbar * r.k)? * kernel.eval_1d(r.k)
                        / r.jacobian;
                }
                2.0 * PI * acc
            }
            NodeKind::Sum(terms) => {
                let mut acc = C64::new(0.0, 0.0);
                for t in terms {
                    acc += t.eval(p)?;
                }
                acc
            }
            NodeKind::Product(factors) => {
                let mut acc = C64::new(1.0, 0.0);
                for t in factors {
                    acc *= t.eval(p)?;
                }
                acc
            }
            NodeKind::Scale(c, inner) => c * inner.eval(p)?,
        };
        self.node.cache.lock().unwrap().insert(p.to_bits(), v);
        Ok(v)
    }

    /// Pointwise agreement on a probe grid within `tol` (absolute +
    /// relative); the declared equality notion for momentum functions.
    pub fn approx_eq_on(
        &self,
        other: &PElement,
        grid: &[f64],
        tol: f64,
    ) -> Result<bool, SpectralError> {
        for &p in grid {
            let (a, b) = (self.eval(p)?, other.eval(p)?);
            if (a - b).norm() > tol * (1.0 + a.norm().max(b.norm())) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Composes `x` into the outermost emission vertex of `y` (the vertex whose
/// shell is evaluated at the outer probe momentum). For a bare transform this
/// is exactly `convolve(x, kernel)`; an occupied interior multiplies
/// pointwise; sums and scalings distribute. `y` must expose a vertex:
/// constants and bare products do not.
pub fn star(x: &PElement, y: &PElement) -> Result<PElement, SpectralError> {
    match &y.node.kind {
        NodeKind::Transform { kernel, ctx } => {
            Ok(PElement::convolve(x.clone(), kernel.clone(), *ctx))
        }
        NodeKind::Convolve { interior, kernel, ctx } => Ok(PElement::convolve(
            PElement::product(vec![x.clone(), interior.clone()]),
            kernel.clone(),
            *ctx,
        )),
        NodeKind::Sum(terms) => Ok(PElement::sum(
            terms.iter().map(|t| star(x, t)).collect::<Result<_, _>>()?,
        )),
        NodeKind::Scale(c, inner) => Ok(PElement::scale(*c, star(x, inner)?)),
        NodeKind::Const(_) | NodeKind::Product(_) => Err(SpectralError::Unsupported(
            "right operand of the vertex composition must expose an emission vertex",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pp1() -> PhysParams {
        PhysParams::default()
    }

    fn om1() -> Dispersion {
        Dispersion::Constant { omega0: 1.0 }
    }

    fn unit_gauss() -> FormFactor {
        FormFactor::gaussian_1d(C64::new(1.0, 0.0), 0.0, 1.0).unwrap()
    }

    #[test]
    fn delta_energy_examples() {
        let pp = pp1();
        assert_eq!(delta_energy(&pp, &om1(), &[0.0], &[2.0]).unwrap(), 3.0);
        assert_eq!(delta_energy(&pp, &om1(), &[5.0], &[0.0]).unwrap(), 1.0);
        let root = 2.0 + 2.0_f64.sqrt();
        assert!(delta_energy(&pp, &om1(), &[2.0], &[root]).unwrap().abs() < 1e-12);
        assert!(delta_energy(&pp, &om1(), &[0.0, 0.0], &[2.0]).is_err());
    }

    #[test]
    fn shell_roots_quadratic_dispersionless() {
        let pp = pp1();
        let roots = shell_roots(&pp, &om1(), 2.0).unwrap();
        assert_eq!(roots.len(), 2);
        let s2 = 2.0_f64.sqrt();
        assert!((roots[0].k - (2.0 - s2)).abs() < 1e-12);
        assert!((roots[1].k - (2.0 + s2)).abs() < 1e-12);
        assert!((roots[0].jacobian - s2).abs() < 1e-12);
        assert!((roots[1].jacobian - s2).abs() < 1e-12);

        assert!(shell_roots(&pp, &om1(), 0.0).unwrap().is_empty());

        let err = shell_roots(&pp, &om1(), 2.0_f64.sqrt());
        assert!(matches!(err, Err(SpectralError::DegenerateShell { .. })));
    }

    #[test]
    fn shell_roots_linear_kink() {
        let pp = pp1();
        let disp = Dispersion::Linear { c: 1.0 };
        let roots = shell_roots(&pp, &disp, 3.0).unwrap();
        // k=0 kink (one-sided slopes -2 and -4, harmonic mean 8/3) plus the
        // k>0 branch root at k=4 with slope 2.
        assert_eq!(roots.len(), 2);
        assert_eq!(roots[0].k, 0.0);
        assert!((roots[0].jacobian - 8.0 / 3.0).abs() < 1e-12);
        assert!((roots[1].k - 4.0).abs() < 1e-12);
        assert!((roots[1].jacobian - 2.0).abs() < 1e-12);
        for r in &roots {
            assert!(delta_energy_1d(&pp, &disp, 3.0, r.k).abs() < 1e-12);
        }
        // Tangency where a one-sided slope vanishes (l = c m).
        assert!(matches!(
            shell_roots(&pp, &disp, 1.0),
            Err(SpectralError::DegenerateShell { .. })
        ));
    }

    #[test]
    fn pairing_kernel_frozen_value() {
        let pp = pp1();
        let g = unit_gauss();
        let v = pairing_kernel(&pp, &om1(), &g, &g, 2.0).unwrap();
        let s2 = 2.0_f64.sqrt();
        let expect = (2.0 * PI / s2)
            * ((-(2.0 - s2) * (2.0 - s2)).exp() + (-(2.0 + s2) * (2.0 + s2)).exp());
        assert!((v.re - expect).abs() < 1e-12);
        assert!((v.re - 3.152418481053545).abs() < 1e-12);
        assert!(v.im.abs() < 1e-15);
        // No shell: zero.
        assert_eq!(pairing_kernel(&pp, &om1(), &g, &g, 0.0).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn pairing_kernel_conjugate_symmetry_and_positivity() {
        let pp = pp1();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let f = FormFactor::gaussian_1d(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..1.5),
            )
            .unwrap();
            let g = FormFactor::gaussian_1d(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..1.5),
            )
            .unwrap();
            let l = rng.gen_range(2.1..4.0);
            let fg = pairing_kernel(&pp, &om1(), &f, &g, l).unwrap();
            let gf = pairing_kernel(&pp, &om1(), &g, &f, l).unwrap();
            assert!((fg - gf.conj()).norm() < 1e-12 * (1.0 + fg.norm()));
            let ff = pairing_kernel(&pp, &om1(), &f, &f, l).unwrap();
            assert!(ff.re >= 0.0 && ff.im.abs() < 1e-14);
        }
    }

    #[test]
    fn regulated_oracle_matches_shell_formula() {
        let pp = pp1();
        let g = unit_gauss();
        let exact = pairing_kernel(&pp, &om1(), &g, &g, 2.0).unwrap();
        let orac = pairing_kernel_extrapolated(&pp, &om1(), &g, &g, 2.0).unwrap();
        assert!(
            (orac - exact).norm() / exact.norm() < 1e-4,
            "oracle {orac} vs exact {exact}"
        );
        // Envelope far from every root: only the O(eta/Delta_far^2)
        // Lorentzian tail survives.
        let far = FormFactor::gaussian_1d(C64::new(1.0, 0.0), -30.0, 0.5).unwrap();
        let v = pairing_kernel_regulated(&pp, &om1(), &far, &far, 2.0, 0.05).unwrap();
        assert!(v.norm() < 1e-5);
        // Fixed eta, f = g: real and positive.
        let v = pairing_kernel_regulated(&pp, &om1(), &g, &g, 2.0, 0.1).unwrap();
        assert!(v.re > 0.0 && v.im.abs() < 1e-12);
    }

    #[test]
    fn regulated_oracle_randomized_dispersions() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let pp = pp1();
        let mut checked = 0;
        while checked < 5 {
            let disp = if rng.gen() {
                Dispersion::Constant { omega0: rng.gen_range(0.5..1.5) }
            } else {
                Dispersion::Quadratic { omega0: rng.gen_range(0.3..1.0), mu: rng.gen_range(0.8..2.0) }
            };
            let f = FormFactor::gaussian_1d(C64::new(1.0, 0.3), rng.gen_range(-0.5..0.5), 1.0)
                .unwrap();
            let l = rng.gen_range(2.2..4.0);
            let Ok(exact) = pairing_kernel(&pp, &disp, &f, &f, l) else { continue };
            if exact.norm() < 1e-3 {
                continue;
            }
            let orac = pairing_kernel_extrapolated(&pp, &disp, &f, &f, l).unwrap();
            assert!(
                (orac - exact).norm() / exact.norm() < 1e-3,
                "disp {disp:?} l {l}: {orac} vs {exact}"
            );
            checked += 1;
        }
    }

    #[test]
    fn bose_kernel_frozen_value() {
        let pp = pp1();
        let disp = Dispersion::Linear { c: 1.0 };
        let g = unit_gauss();
        let v = bose_kernel(&pp, &disp, 1.0, &g, &g).unwrap();
        let expect = 4.0 * PI * (-1.0_f64).exp();
        assert!((v.re - expect).abs() < 1e-12);
        assert!((v.re - 4.622909399163687).abs() < 1e-12);
        // Probe below the dispersion minimum.
        let quad = Dispersion::Quadratic { omega0: 2.0, mu: 1.0 };
        assert_eq!(bose_kernel(&pp, &quad, 1.0, &g, &g).unwrap(), C64::new(0.0, 0.0));
        // Constant dispersion rejected.
        assert!(matches!(
            bose_kernel(&pp, &om1(), 1.0, &g, &g),
            Err(SpectralError::Unsupported(_))
        ));
        // Linearity in a real scale.
        let g2 = g.scaled(C64::new(2.0, 0.0));
        let v2 = bose_kernel(&pp, &disp, 1.0, &g2, &g).unwrap();
        assert!((v2 - 2.0 * v).norm() < 1e-12);
    }

    #[test]
    fn time_kernel_at_zero_is_envelope_integral() {
        let pp = pp1();
        let g = unit_gauss();
        let v = time_kernel(&pp, &om1(), &g, &g, &[2.0], 0.0).unwrap();
        assert!((v.re - PI.sqrt()).abs() < 1e-12);
        assert!(v.im.abs() < 1e-15);
        // d=3 closed form: product of three axis integrals.
        let pp3 = PhysParams { dim: 3, ..pp1() };
        let g3 = FormFactor::new(C64::new(1.0, 0.0), vec![0.0; 3], 1.0).unwrap();
        let v3 = time_kernel(&pp3, &om1(), &g3, &g3, &[0.3, -0.2, 0.1], 0.0).unwrap();
        assert!((v3.re - PI.sqrt().powi(3)).abs() < 1e-12);
    }

    #[test]
    fn time_kernel_conjugation() {
        let pp = pp1();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let f = FormFactor::gaussian_1d(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.7..1.3),
            )
            .unwrap();
            let g = FormFactor::gaussian_1d(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.7..1.3),
            )
            .unwrap();
            let v = rng.gen_range(-3.0..3.0);
            let l = [rng.gen_range(-2.0..2.0)];
            let a = time_kernel(&pp, &om1(), &f, &g, &l, -v).unwrap();
            let b = time_kernel(&pp, &om1(), &g, &f, &l, v).unwrap();
            assert!((a - b.conj()).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    /// Integrating the time kernel against the exponential regulator must
    /// reproduce the Lorentzian-regulated shell integral (Fourier identity
    /// int dv e^{i Delta v - eta|v|} = 2 eta/(Delta^2+eta^2)).
    #[test]
    fn time_kernel_fourier_consistency() {
        let pp = pp1();
        let g = unit_gauss();
        let eta = 0.3;
        let vmax = 80.0;
        let opts = QuadOptions { initial_panels: 512, max_panels: 12_000, ..Default::default() };
        let lhs = quad::integrate(
            |v| {
                time_kernel(&pp, &om1(), &g, &g, &[2.0], v).unwrap()
                    * (-eta * v.abs()).exp()
            },
            -vmax,
            vmax,
            &opts,
        )
        .unwrap()
        .value;
        let rhs = pairing_kernel_regulated(&pp, &om1(), &g, &g, 2.0, eta).unwrap();
        assert!((lhs - rhs).norm() < 1e-6 * (1.0 + rhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn time_kernel_linear_dispersion_vs_direct_quadrature() {
        let pp = pp1();
        let disp = Dispersion::Linear { c: 0.7 };
        let g = unit_gauss();
        let v = 2.5;
        let fast = time_kernel(&pp, &disp, &g, &g, &[1.8], v).unwrap();
        let slow = quad::integrate(
            |k| {
                let d = delta_energy_1d(&pp, &disp, 1.8, k);
                C64::new((-k * k).exp(), 0.0) * C64::new(0.0, d * v).exp()
            },
            -9.0,
            9.0,
            &QuadOptions { initial_panels: 512, max_panels: 8000, ..Default::default() },
        )
        .unwrap()
        .value;
        assert!((fast - slow).norm() < 1e-9);
    }

    #[test]
    fn conj_mul_matches_pointwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let f = FormFactor::gaussian_1d(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.4..2.0),
            )
            .unwrap();
            let g = FormFactor::gaussian_1d(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.4..2.0),
            )
            .unwrap();
            let prod = conj_mul(&f, &g).unwrap();
            for _ in 0..5 {
                let k = rng.gen_range(-4.0..4.0);
                let direct = f.eval_1d(k).conj() * g.eval_1d(k);
                assert!((prod.eval_1d(k) - direct).norm() < 1e-12 * (1.0 + direct.norm()));
            }
        }
    }

    #[test]
    fn pelement_transform_and_convolve() {
        let ctx = SpectralCtx::new(pp1(), om1());
        let g = unit_gauss();
        let kernel = conj_mul(&g, &g).unwrap();
        let t = PElement::transform(kernel.clone(), ctx);
        let direct = pairing_kernel(&ctx.pp, &ctx.disp, &g, &g, 2.0).unwrap();
        assert_eq!(t.eval(2.0).unwrap(), direct);
        // Convolution with a constant interior is scalar multiplication.
        let c = PElement::constant(C64::new(0.0, 2.0));
        let conv = PElement::convolve(c, kernel.clone(), ctx);
        let v = conv.eval(2.0).unwrap();
        assert!((v - C64::new(0.0, 2.0) * direct).norm() < 1e-13);
        // Frozen nested value at p=3.
        let nested = PElement::convolve(PElement::transform(kernel.clone(), ctx), kernel, ctx);
        let v = nested.eval(3.0).unwrap();
        assert!((v.re - 4.976603024617203).abs() < 1e-10, "got {v}");
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn pelement_algebra_and_memoization() {
        let ctx = SpectralCtx::new(pp1(), om1());
        let g = unit_gauss();
        let kernel = conj_mul(&g, &g).unwrap();
        let t = PElement::transform(kernel, ctx);
        let s = PElement::sum(vec![t.clone(), PElement::scale(C64::new(2.0, 0.0), t.clone())]);
        let prod = PElement::product(vec![t.clone(), t.clone()]);
        let base = t.eval(2.5).unwrap();
        assert!((s.eval(2.5).unwrap() - 3.0 * base).norm() < 1e-13);
        assert!((prod.eval(2.5).unwrap() - base * base).norm() < 1e-13);
        // Memoized evaluation is bit-stable.
        assert_eq!(t.eval(2.5).unwrap(), base);
        assert!(t.approx_eq_on(&t, &[2.1, 2.5, 3.0], 1e-12).unwrap());
    }

    #[test]
    fn star_inserts_into_the_outer_vertex() {
        let ctx = SpectralCtx::new(pp1(), om1());
        let g = unit_gauss();
        let kernel = conj_mul(&g, &g).unwrap();
        let t = PElement::transform(kernel.clone(), ctx);
        // x * transform == convolve(x, kernel).
        let x = PElement::constant(C64::new(3.0, 0.0));
        let via_star = star(&x, &t).unwrap();
        let direct = PElement::convolve(x.clone(), kernel.clone(), ctx);
        assert_eq!(via_star.eval(2.0).unwrap(), direct.eval(2.0).unwrap());
        // Occupied vertex: interiors multiply.
        let occupied = PElement::convolve(t.clone(), kernel.clone(), ctx);
        let starred = star(&x, &occupied).unwrap();
        let expect = PElement::convolve(
            PElement::product(vec![x.clone(), t.clone()]),
            kernel,
            ctx,
        );
        assert_eq!(starred.eval(3.0).unwrap(), expect.eval(3.0).unwrap());
        // No vertex to insert into.
        assert!(star(&x, &PElement::one()).is_err());
        // Distributes over sums and scalings.
        let y = PElement::scale(C64::new(0.5, 0.0), PElement::sum(vec![t.clone(), t.clone()]));
        let sy = star(&x, &y).unwrap();
        let expect = PElement::scale(C64::new(0.5, 0.0), PElement::sum(vec![
            star(&x, &t).unwrap(),
            star(&x, &t).unwrap(),
        ]));
        assert_eq!(sy.eval(2.0).unwrap(), expect.eval(2.0).unwrap());
    }
}
