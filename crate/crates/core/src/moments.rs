//! Vacuum correlators of the collective field operators.
//!
//! Four evaluations of the same family of numbers, used to check each other:
//!
//! * [`limit_moment`]: the closed shell formula. The surviving pairing's
//!   nesting forest is walked outermost-first; every pair contributes a
//!   `2 pi sum_roots kernel / jacobian` factor at the recoiled momentum of its
//!   enclosing pairs.
//! * [`limit_moment_oscillatory`]: the same limit obtained by regulated brute
//!   force. Each pair's time integral is damped by `e^{-eta |tau|}`, giving a
//!   Lorentzian in the energy violation, and `eta -> 0` is removed by
//!   Richardson extrapolation. Slow; exists to certify the shell formula.
//! * [`bose_moment`]: the responseless sector. A Gaussian Wick sum over all
//!   pairings with the frequency-shell kernel, no recoil.
//! * [`prelimit_moment`]: the correlator at finite coupling `lambda`, before
//!   the limit. The two time integrals of every pair reduce exactly to
//!   boundary factors `phi(z) = (e^z - 1)/z` of the accumulated Weyl phase,
//!   leaving one momentum integral per pair, done by uniform Simpson grids
//!   sized from an analytic bound on the integrand's oscillation rate.

use crate::partitions::{EpsilonSeq, Pair, Pairing, PartitionError, Role};
use crate::quad::{self, QuadError, QuadOptions, QuadResult};
use crate::spectral::{
    bose_kernel, conj_mul, delta_energy_1d, delta_slope_bound, shell_roots, transform_regulated,
    Dispersion, FormFactor, PhysParams, ShellRoot, SpectralError,
};
use crate::weyl::{multiply_chain, WeylError, WeylOp};
use crate::C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error("{what} has length {got}, operator word has length {want}")]
    LengthMismatch { what: &'static str, want: usize, got: usize },
    #[error("time windows must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("coupling must be positive and finite, got {0}")]
    BadCoupling(f64),
    #[error("regulator must be positive and finite, got {0}")]
    BadRegulator(f64),
    #[error("probe momentum must be finite")]
    BadProbe,
    #[error("{0}")]
    Unsupported(&'static str),
}

/// One correlator instance: which operator word, over which time windows,
/// with which form factors, at which (diagonal) particle momentum.
#[derive(Debug, Clone)]
pub struct CorrelatorSpec {
    pub eps: EpsilonSeq,
    pub times: Vec<f64>,
    pub factors: Vec<FormFactor>,
    pub probe_p: Vec<f64>,
}

impl CorrelatorSpec {
    pub fn new(
        eps: EpsilonSeq,
        times: Vec<f64>,
        factors: Vec<FormFactor>,
        probe_p: Vec<f64>,
    ) -> Result<Self, MomentError> {
        let want = eps.len();
        if times.len() != want {
            return Err(MomentError::LengthMismatch { what: "times", want, got: times.len() });
        }
        if factors.len() != want {
            return Err(MomentError::LengthMismatch { what: "factors", want, got: factors.len() });
        }
        for &t in &times {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(MomentError::BadTime(t));
            }
        }
        if probe_p.is_empty() || probe_p.iter().any(|x| !x.is_finite()) {
            return Err(MomentError::BadProbe);
        }
        for f in &factors {
            if f.dim() != probe_p.len() {
                return Err(MomentError::Spectral(SpectralError::DimensionMismatch {
                    expected: probe_p.len(),
                    got: f.dim(),
                }));
            }
        }
        Ok(Self { eps, times, factors, probe_p })
    }

    /// Number of pairs `n` (half the word length).
    pub fn order(&self) -> usize {
        self.eps.order()
    }

    /// `prod_pairs min(T_absorber, T_emitter)`.
    pub fn time_factor(&self, pairing: &Pairing) -> f64 {
        pairing
            .pairs()
            .iter()
            .map(|pr| self.times[pr.absorber - 1].min(self.times[pr.emitter - 1]))
            .product()
    }

    /// `conj(g_absorber) g_emitter` for one pair, as a closed-form kernel.
    fn pair_kernel(&self, pr: &Pair) -> Result<FormFactor, SpectralError> {
        conj_mul(&self.factors[pr.absorber - 1], &self.factors[pr.emitter - 1])
    }

    fn p1(&self) -> f64 {
        self.probe_p[0]
    }
}

/// Output of [`limit_moment`], keeping the shell roots each pair was summed
/// over (inner pairs are resolved once per enclosing root combination).
#[derive(Debug, Clone)]
pub struct MomentResult {
    pub value: C64,
    pub per_pair_shell_data: Vec<(Pair, Vec<ShellRoot>)>,
    pub time_factor: f64,
}

impl MomentResult {
    fn zero() -> Self {
        Self { value: C64::new(0.0, 0.0), per_pair_shell_data: Vec::new(), time_factor: 0.0 }
    }
}

fn check_physics(spec: &CorrelatorSpec, pp: &PhysParams, disp: &Dispersion) -> Result<(), MomentError> {
    pp.validate()?;
    disp.validate()?;
    if spec.probe_p.len() != pp.dim {
        return Err(MomentError::Spectral(SpectralError::DimensionMismatch {
            expected: pp.dim,
            got: spec.probe_p.len(),
        }));
    }
    if pp.dim != 1 {
        return Err(MomentError::Unsupported("correlator evaluation requires dim = 1"));
    }
    Ok(())
}

fn shell_branch(
    pair_ids: &[usize],
    l: f64,
    pp: &PhysParams,
    disp: &Dispersion,
    kernels: &[FormFactor],
    children: &[Vec<usize>],
    roots_used: &mut [Vec<ShellRoot>],
) -> Result<C64, MomentError> {
    let mut prod = C64::new(1.0, 0.0);
    for &h in pair_ids {
        let roots = shell_roots(pp, disp, l)?;
        let mut shell_sum = C64::new(0.0, 0.0);
        for r in &roots {
            // Everything nested inside pair h sees the recoiled momentum.
            let inner =
                shell_branch(&children[h], l - pp.hbar * r.k, pp, disp, kernels, children, roots_used)?;
            shell_sum += kernels[h].eval_1d(r.k) / r.jacobian * inner;
        }
        roots_used[h].extend_from_slice(&roots);
        prod *= 2.0 * PI * shell_sum;
    }
    Ok(prod)
}

/// The limiting correlator in closed form.
///
/// Zero unless the word admits its unique non-crossing pairing. Each pair's
/// time integral collapses onto the energy shell of the violation at the
/// momentum left over by all enclosing emissions, so the value is the time
/// factor times a product, over the nesting forest, of shell sums
/// `2 pi sum_roots conj(g_abs) g_em (k) / |dDelta/dk|`.
pub fn limit_moment(
    spec: &CorrelatorSpec,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<MomentResult, MomentError> {
    check_physics(spec, pp, disp)?;
    let Some(pairing) = spec.eps.wigner_pairing() else {
        return Ok(MomentResult::zero());
    };
    let forest = pairing.nesting_forest()?;
    let kernels = pairing
        .pairs()
        .iter()
        .map(|pr| spec.pair_kernel(pr))
        .collect::<Result<Vec<_>, _>>()?;
    let mut roots_used = vec![Vec::new(); pairing.order()];
    let bare = shell_branch(
        &forest.roots,
        spec.p1(),
        pp,
        disp,
        &kernels,
        &forest.children,
        &mut roots_used,
    )?;
    let time_factor = spec.time_factor(&pairing);
    Ok(MomentResult {
        value: time_factor * bare,
        per_pair_shell_data: pairing.pairs().iter().copied().zip(roots_used).collect(),
        time_factor,
    })
}

/// Regulated Lorentzian `2 eta / (x^2 + eta^2)` (a smeared `2 pi delta`).
fn lorentzian(x: f64, eta: f64) -> f64 {
    2.0 * eta / (x * x + eta * eta)
}

/// Brute-force cross-check of [`limit_moment`] for `n <= 2`.
///
/// Evaluates the momentum integrals with each pair's shell delta replaced by
/// the `eta`-regulated Lorentzian (the damped time integral), at
/// `eta, eta/2, eta/4`, and removes the regulator by Richardson
/// extrapolation. Inner pairs are integrated at the recoiled momentum, which
/// is exactly the printed phase coupling between enclosed pairs.
pub fn limit_moment_oscillatory(
    spec: &CorrelatorSpec,
    pp: &PhysParams,
    disp: &Dispersion,
    eta: f64,
) -> Result<C64, MomentError> {
    check_physics(spec, pp, disp)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(MomentError::BadRegulator(eta));
    }
    let Some(pairing) = spec.eps.wigner_pairing() else {
        return Ok(C64::new(0.0, 0.0));
    };
    if pairing.order() > 2 {
        return Err(MomentError::Unsupported("oscillatory cross-check covers n <= 2 only"));
    }
    let p = spec.p1();
    let kernels = pairing
        .pairs()
        .iter()
        .map(|pr| spec.pair_kernel(pr))
        .collect::<Result<Vec<_>, _>>()?;
    let forest = pairing.nesting_forest()?;

    let single = |eta: f64| -> Result<C64, MomentError> {
        if kernels.len() == 1 {
            return Ok(transform_regulated(pp, disp, &kernels[0], p, eta)?);
        }
        if forest.roots.len() == 2 {
            // Disjoint pairs: no recoil coupling, the integral factorizes.
            let a = transform_regulated(pp, disp, &kernels[0], p, eta)?;
            let b = transform_regulated(pp, disp, &kernels[1], p, eta)?;
            return Ok(a * b);
        }
        let outer = forest.roots[0];
        let inner = forest.children[outer][0];
        let ko = &kernels[outer];
        let (lo, hi) = ko.support_1d(9.0);
        let slope = delta_slope_bound(pp, disp, p, lo, hi).max(1e-3);
        // Panels at a quarter of the Lorentzian ridge width, as in the
        // one-pair regulated kernel; capped because every sample runs a full
        // inner quadrature.
        let initial = (((hi - lo) * slope) / (4.0 * eta)).ceil().clamp(32.0, 6000.0) as usize;
        let opts = QuadOptions {
            rel_tol: pp.quad_tol.max(1e-8),
            abs_tol: 1e-12,
            initial_panels: initial,
            max_panels: initial + 3000,
        };
        let mut inner_err: Option<MomentError> = None;
        let r = quad::integrate(
            |k| {
                let lor = lorentzian(delta_energy_1d(pp, disp, p, k), eta);
                match transform_regulated(pp, disp, &kernels[inner], p - pp.hbar * k, eta) {
                    Ok(v) => ko.eval_1d(k) * lor * v,
                    Err(e) => {
                        inner_err.get_or_insert(MomentError::Spectral(e));
                        C64::new(0.0, 0.0)
                    }
                }
            },
            lo,
            hi,
            &opts,
        )?;
        if let Some(e) = inner_err {
            return Err(e);
        }
        Ok(r.value)
    };

    let i0 = single(eta)?;
    let i1 = single(eta / 2.0)?;
    let i2 = single(eta / 4.0)?;
    Ok(spec.time_factor(&pairing) * quad::richardson3(i0, i1, i2))
}

/// Responseless-sector correlator: Gaussian Wick sum over all pairings, each
/// pair weighted by its overlap time and the frequency-shell kernel at the
/// probing frequency. No recoil, hence no pairing is suppressed.
pub fn bose_moment(
    eps: &EpsilonSeq,
    times: &[f64],
    factors: &[FormFactor],
    omega_probe: f64,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<C64, MomentError> {
    pp.validate()?;
    disp.validate()?;
    let want = eps.len();
    if times.len() != want {
        return Err(MomentError::LengthMismatch { what: "times", want, got: times.len() });
    }
    if factors.len() != want {
        return Err(MomentError::LengthMismatch { what: "factors", want, got: factors.len() });
    }
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(MomentError::BadTime(t));
        }
    }
    if !omega_probe.is_finite() {
        return Err(MomentError::BadProbe);
    }
    let mut total = C64::new(0.0, 0.0);
    for pairing in eps.enumerate_pairings() {
        let mut term = C64::new(1.0, 0.0);
        for pr in pairing.pairs() {
            let overlap = times[pr.absorber - 1].min(times[pr.emitter - 1]);
            term *= overlap
                * bose_kernel(
                    pp,
                    disp,
                    omega_probe,
                    &factors[pr.absorber - 1],
                    &factors[pr.emitter - 1],
                )?;
        }
        total += term;
    }
    Ok(total)
}

/// A real quadratic polynomial in at most two momentum variables.
#[derive(Debug, Clone, Copy, Default)]
struct KPoly {
    c: f64,
    a1: f64,
    a2: f64,
    q11: f64,
    q22: f64,
    q12: f64,
}

impl KPoly {
    fn eval(&self, k1: f64, k2: f64) -> f64 {
        self.c
            + self.a1 * k1
            + self.a2 * k2
            + self.q11 * k1 * k1
            + self.q22 * k2 * k2
            + self.q12 * k1 * k2
    }

    fn sub(&self, o: &KPoly) -> KPoly {
        KPoly {
            c: self.c - o.c,
            a1: self.a1 - o.a1,
            a2: self.a2 - o.a2,
            q11: self.q11 - o.q11,
            q22: self.q22 - o.q22,
            q12: self.q12 - o.q12,
        }
    }

    fn scale(&self, s: f64) -> KPoly {
        KPoly {
            c: self.c * s,
            a1: self.a1 * s,
            a2: self.a2 * s,
            q11: self.q11 * s,
            q22: self.q22 * s,
            q12: self.q12 * s,
        }
    }

    fn add(&self, o: &KPoly) -> KPoly {
        KPoly {
            c: self.c + o.c,
            a1: self.a1 + o.a1,
            a2: self.a2 + o.a2,
            q11: self.q11 + o.q11,
            q22: self.q22 + o.q22,
            q12: self.q12 + o.q12,
        }
    }

    /// Upper bound for `|d/dk_axis|` on the box `|k1| <= m1, |k2| <= m2`.
    fn slope_bound(&self, axis: usize, m1: f64, m2: f64) -> f64 {
        if axis == 0 {
            self.a1.abs() + 2.0 * self.q11.abs() * m1 + self.q12.abs() * m2
        } else {
            self.a2.abs() + 2.0 * self.q22.abs() * m2 + self.q12.abs() * m1
        }
    }
}

/// The two phase coefficients of one pair after the detail/gross time change
/// of variables: the full phase is `sum_h zeta_h u_h / lambda^2 + gamma_h v_h`
/// with `u` the emitter's gross time and `v` the absorber's relative time.
#[derive(Debug, Clone, Copy)]
struct PairForms {
    gamma: KPoly,
    zeta: KPoly,
}

/// Exact accumulated phase of the operator word at the given pair momenta and
/// per-operator times: Weyl chain phase, its momentum action on the probe
/// state, and the free reservoir phases.
fn word_phase(
    eps: &EpsilonSeq,
    pair_of: &[usize],
    taus: &[f64],
    k: [f64; 2],
    p: f64,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<f64, MomentError> {
    let len = eps.len();
    let mut ops = Vec::with_capacity(len);
    let mut omega_part = 0.0;
    for j in 1..=len {
        let kj = k[pair_of[j - 1].min(1)];
        let tau = taus[j - 1];
        let (sigma, omega_sign) = match eps.role(j)? {
            Role::Creator => (-1.0, 1.0),
            Role::Annihilator => (1.0, -1.0),
        };
        ops.push(WeylOp::new(vec![sigma * tau * kj / pp.mass], vec![sigma * kj], 0.0)?);
        omega_part += omega_sign * disp.omega(&[kj]) * tau;
    }
    let chain = multiply_chain(&ops, pp.hbar)?;
    // Both members of a pair carry the same momentum with opposite sign, so
    // the total position displacement cancels and the word stays diagonal.
    assert!(
        chain.b[0].abs() < 1e-12,
        "pair momentum transfer must cancel, residual {}",
        chain.b[0]
    );
    Ok(chain.phase + chain.a[0] * p + omega_part)
}

/// Fits the quadratic momentum dependence of `word_phase` at a fixed time
/// pattern from six probe points, then verifies the fit off-grid.
fn fit_kpoly(
    eps: &EpsilonSeq,
    pair_of: &[usize],
    taus: &[f64],
    p: f64,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<KPoly, MomentError> {
    let ph = |k: [f64; 2]| word_phase(eps, pair_of, taus, k, p, pp, disp);
    let v0 = ph([0.0, 0.0])?;
    let vp1 = ph([1.0, 0.0])?;
    let vm1 = ph([-1.0, 0.0])?;
    let vp2 = ph([0.0, 1.0])?;
    let vm2 = ph([0.0, -1.0])?;
    let v11 = ph([1.0, 1.0])?;
    let a1 = 0.5 * (vp1 - vm1);
    let q11 = 0.5 * (vp1 + vm1) - v0;
    let a2 = 0.5 * (vp2 - vm2);
    let q22 = 0.5 * (vp2 + vm2) - v0;
    let q12 = v11 - v0 - a1 - a2 - q11 - q22;
    let poly = KPoly { c: v0, a1, a2, q11, q22, q12 };
    let (x1, x2) = (0.618_033_988_749_894_9, -0.732_050_807_568_877_2);
    let direct = ph([x1, x2])?;
    let fitted = poly.eval(x1, x2);
    assert!(
        (direct - fitted).abs() <= 1e-9 * (1.0 + direct.abs()),
        "word phase must be quadratic in the pair momenta (got {direct} vs fit {fitted})"
    );
    Ok(poly)
}

fn extract_pair_forms(
    eps: &EpsilonSeq,
    pairing: &Pairing,
    p: f64,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<Vec<PairForms>, MomentError> {
    let len = eps.len();
    let mut pair_of = vec![0usize; len];
    for (h, pr) in pairing.pairs().iter().enumerate() {
        pair_of[pr.emitter - 1] = h;
        pair_of[pr.absorber - 1] = h;
    }
    let mut out = Vec::with_capacity(pairing.order());
    for pr in pairing.pairs() {
        let mut taus = vec![0.0; len];
        taus[pr.absorber - 1] = 1.0;
        let gamma = fit_kpoly(eps, &pair_of, &taus, p, pp, disp)?;
        taus[pr.emitter - 1] = 1.0;
        let zeta = fit_kpoly(eps, &pair_of, &taus, p, pp, disp)?;
        out.push(PairForms { gamma, zeta });
    }
    Ok(out)
}

/// `phi(i x) = (e^{ix} - 1)/(i x)` for real `x`, series-stable near zero.
fn phi_i(x: f64) -> C64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        C64::new(
            1.0 - x2 / 6.0 * (1.0 - x2 / 20.0),
            0.5 * x * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0)),
        )
    } else {
        let (s, c) = x.sin_cos();
        C64::new(s / x, (1.0 - c) / x)
    }
}

/// Both boundary factors of one pair's exactly-integrated time variables.
fn pair_factor(gamma: f64, zeta: f64, t_emit: f64, t_abs: f64, lam2: f64) -> C64 {
    t_emit * phi_i((zeta - gamma) * t_emit / lam2) * (t_abs / lam2) * phi_i(gamma * t_abs / lam2)
}

/// Fastest oscillation rate (rad per unit momentum along `axis`) among the
/// exponentials of one pair's boundary factors on the integration box.
fn pair_rate_bound(
    f: &PairForms,
    t_emit: f64,
    t_abs: f64,
    lam2: f64,
    axis: usize,
    m1: f64,
    m2: f64,
) -> f64 {
    let abs_side = f.gamma.slope_bound(axis, m1, m2) * t_abs / lam2;
    let emit_side = f.zeta.sub(&f.gamma).slope_bound(axis, m1, m2) * t_emit / lam2;
    // Product term e^{i(X+Y)}: its phase is zeta*t_emit + gamma*(t_abs - t_emit).
    let both = f
        .zeta
        .scale(t_emit)
        .add(&f.gamma.scale(t_abs - t_emit))
        .slope_bound(axis, m1, m2)
        / lam2;
    abs_side.max(emit_side).max(both)
}

/// Uniform tensor-product Simpson pass; `a`/`b` are the separable axis
/// amplitudes (hoisted out of the inner loop), `g` the coupled factor.
fn tensor_simpson_pass(
    a: &mut dyn FnMut(f64) -> C64,
    b: &mut dyn FnMut(f64) -> C64,
    g: &mut dyn FnMut(f64, f64) -> C64,
    ax1: (f64, f64, usize),
    ax2: (f64, f64, usize),
) -> C64 {
    fn axis_nodes(lo: f64, hi: f64, half: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let n = 2 * half;
        let h = (hi - lo) / n as f64;
        let mut xs = Vec::with_capacity(n + 1);
        let mut ws = Vec::with_capacity(n + 1);
        for i in 0..=n {
            xs.push(lo + h * i as f64);
            ws.push(if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            });
        }
        (xs, ws, h / 3.0)
    }
    let (x1, w1, s1) = axis_nodes(ax1.0, ax1.1, ax1.2);
    let (x2, w2, s2) = axis_nodes(ax2.0, ax2.1, ax2.2);
    let col: Vec<C64> = x2.iter().zip(&w2).map(|(&k2, &w)| w * b(k2)).collect();
    let mut total = C64::new(0.0, 0.0);
    for (i, &k1) in x1.iter().enumerate() {
        let mut row = C64::new(0.0, 0.0);
        for (j, &k2) in x2.iter().enumerate() {
            row += col[j] * g(k1, k2);
        }
        total += w1[i] * a(k1) * row;
    }
    total * s1 * s2
}

/// Step-doubling driver around [`tensor_simpson_pass`] with the standard
/// fourth-order error estimate.
#[allow(clippy::too_many_arguments)]
fn tensor_simpson_converged(
    a: &mut dyn FnMut(f64) -> C64,
    b: &mut dyn FnMut(f64) -> C64,
    g: &mut dyn FnMut(f64, f64) -> C64,
    ax1: (f64, f64),
    ax2: (f64, f64),
    half0: (usize, usize),
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    const MAX_DOUBLINGS: usize = 6;
    const MAX_POINTS: u64 = 3_000_000_000;
    let (mut h1, mut h2) = (half0.0.max(16), half0.1.max(16));
    let mut prev = tensor_simpson_pass(a, b, g, (ax1.0, ax1.1, h1), (ax2.0, ax2.1, h2));
    let mut err = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        h1 *= 2;
        h2 *= 2;
        let points = (2 * h1 as u64 + 1) * (2 * h2 as u64 + 1);
        if points > MAX_POINTS {
            break;
        }
        let cur = tensor_simpson_pass(a, b, g, (ax1.0, ax1.1, h1), (ax2.0, ax2.1, h2));
        err = (cur - prev).norm() / 15.0;
        if !cur.is_finite() {
            return Err(QuadError::NonFinite(0.5 * (ax1.0 + ax1.1)));
        }
        if err <= rel_tol * cur.norm() + abs_tol {
            return Ok(QuadResult { value: cur, abs_error: err, panels: (2 * h1) * (2 * h2) });
        }
        prev = cur;
    }
    Err(QuadError::NonConvergence { error: err, tolerance: rel_tol, panels: (2 * h1) * (2 * h2) })
}

fn prelimit_pairing(
    spec: &CorrelatorSpec,
    pp: &PhysParams,
    disp: &Dispersion,
    lambda: f64,
    pairing: &Pairing,
) -> Result<C64, MomentError> {
    // An empty window in either slot kills the pair's time integral exactly.
    for pr in pairing.pairs() {
        if spec.times[pr.emitter - 1] == 0.0 || spec.times[pr.absorber - 1] == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
    }
    let lam2 = lambda * lambda;
    let forms = extract_pair_forms(&spec.eps, pairing, spec.p1(), pp, disp)?;
    let kernels = pairing
        .pairs()
        .iter()
        .map(|pr| spec.pair_kernel(pr))
        .collect::<Result<Vec<_>, _>>()?;
    let te: Vec<f64> = pairing.pairs().iter().map(|pr| spec.times[pr.emitter - 1]).collect();
    let ta: Vec<f64> = pairing.pairs().iter().map(|pr| spec.times[pr.absorber - 1]).collect();

    if pairing.order() == 1 {
        let (lo, hi) = kernels[0].support_1d(9.0);
        let m1 = lo.abs().max(hi.abs());
        let rate = pair_rate_bound(&forms[0], te[0], ta[0], lam2, 0, m1, 0.0);
        let half0 = (((hi - lo) * rate) / 1.4).ceil().clamp(64.0, 4e6) as usize;
        let f0 = forms[0];
        let r = quad::simpson_converged(
            |k| {
                kernels[0].eval_1d(k)
                    * pair_factor(f0.gamma.eval(k, 0.0), f0.zeta.eval(k, 0.0), te[0], ta[0], lam2)
            },
            lo,
            hi,
            half0,
            pp.quad_tol.max(1e-12),
            1e-13,
            10,
        )?;
        return Ok(r.value);
    }

    // n = 2: one tensor grid, axis h carrying pair h's momentum. 6.5 sigma
    // tails are already orders below the quadrature tolerance floor.
    let (lo1, hi1) = kernels[0].support_1d(6.5);
    let (lo2, hi2) = kernels[1].support_1d(6.5);
    let m1 = lo1.abs().max(hi1.abs());
    let m2 = lo2.abs().max(hi2.abs());
    let rate1: f64 = (0..2)
        .map(|h| pair_rate_bound(&forms[h], te[h], ta[h], lam2, 0, m1, m2))
        .sum();
    let rate2: f64 = (0..2)
        .map(|h| pair_rate_bound(&forms[h], te[h], ta[h], lam2, 1, m1, m2))
        .sum();
    let half1 = (((hi1 - lo1) * rate1) / 1.4).ceil().clamp(48.0, 2e5) as usize;
    let half2 = (((hi2 - lo2) * rate2) / 1.4).ceil().clamp(48.0, 2e5) as usize;
    let (f0, f1) = (forms[0], forms[1]);
    let (te0, ta0, te1, ta1) = (te[0], ta[0], te[1], ta[1]);
    let r = tensor_simpson_converged(
        &mut |k1| kernels[0].eval_1d(k1),
        &mut |k2| kernels[1].eval_1d(k2),
        &mut |k1, k2| {
            pair_factor(f0.gamma.eval(k1, k2), f0.zeta.eval(k1, k2), te0, ta0, lam2)
                * pair_factor(f1.gamma.eval(k1, k2), f1.zeta.eval(k1, k2), te1, ta1, lam2)
        },
        (lo1, hi1),
        (lo2, hi2),
        (half1, half2),
        pp.quad_tol.max(1e-8),
        1e-12,
    )?;
    Ok(r.value)
}

/// Correlator at finite coupling, per pairing.
///
/// After the gross/relative change of time variables, the accumulated phase
/// is exactly affine in those variables with quadratic-in-momentum
/// coefficients (`gamma`, `zeta` per pair, extracted from the Weyl chain by
/// probing). Both time integrals then evaluate in closed form to `phi`
/// boundary factors, and only the momentum integrals are done numerically.
/// Crossing pairings keep a residual `zeta/lambda^2` gross-time phase and die
/// out as `lambda -> 0`; non-crossing ones concentrate on the energy shell.
///
/// Returns the sum and each pairing's contribution, in enumeration order.
pub fn prelimit_moment(
    spec: &CorrelatorSpec,
    pp: &PhysParams,
    disp: &Dispersion,
    lambda: f64,
) -> Result<(C64, Vec<(Pairing, C64)>), MomentError> {
    check_physics(spec, pp, disp)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MomentError::BadCoupling(lambda));
    }
    if spec.order() > 2 {
        return Err(MomentError::Unsupported("finite-coupling quadrature covers n <= 2 only"));
    }
    if matches!(disp, Dispersion::Linear { .. }) {
        return Err(MomentError::Unsupported(
            "finite-coupling phases require a polynomial dispersion branch (constant or quadratic)",
        ));
    }
    let mut per = Vec::new();
    let mut total = C64::new(0.0, 0.0);
    for pairing in spec.eps.enumerate_pairings() {
        let v = prelimit_pairing(spec, pp, disp, lambda, &pairing)?;
        total += v;
        per.push((pairing, v));
    }
    Ok((total, per))
}
