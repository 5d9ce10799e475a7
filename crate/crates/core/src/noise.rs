//! Symbolic noise-algebra route.
//!
//! The third evaluation of the limit correlators. A word of ladder symbols
//! `A(alpha (x) f)` / `A+(alpha (x) f)` is reduced purely algebraically: the
//! scaled free relation
//!
//! ```text
//! alpha(tau, k) alpha+(tau', k') = delta(tau' - 2 tau) delta(k - k')
//! ```
//!
//! contracts adjacent annihilator-creator neighbours (free statistics admit
//! no crossing contractions), each contraction substituting the creator's
//! variables `(tau', k') -> (2 tau, k)` with no extra Jacobian and merging
//! the pair's two Weyl displacements into a single momentum boost
//! `W(-(tau/m) k, 0)` times the scalar phase `e^{i hbar tau k^2 / 2m}`. The
//! surviving plan is evaluated on a momentum eigenstate: every pair's `tau`
//! integral produces an energy shell at the momentum left over by its
//! enclosing pairs, and the bra-ket time windows contribute a plain
//! `min(T, T')` overlap per pair.

use crate::moments::CorrelatorSpec;
use crate::partitions::{EpsilonSeq, Pair, Pairing, PartitionError, Role};
use crate::spectral::{
    conj_mul, delta_energy_1d, shell_roots, Dispersion, FormFactor, PhysParams, SpectralError,
};
use crate::weyl::{action_angle, momentum_action, multiply, WeylError, WeylOp};
use crate::C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error("{what} has length {got}, word has length {want}")]
    LengthMismatch { what: &'static str, want: usize, got: usize },
    #[error("time windows must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("{0}")]
    Unsupported(&'static str),
}

/// One ladder symbol `A^eps(chi_[0,T] (x) f)`: its role, the length of its
/// time window, and its reservoir form factor.
#[derive(Debug, Clone)]
pub struct NoiseSymbol {
    pub role: Role,
    pub window: f64,
    pub factor: FormFactor,
}

/// An ordered word of ladder symbols; index 1 is the rightmost factor (the
/// first to act on the vacuum).
#[derive(Debug, Clone)]
pub struct NoiseWord {
    symbols: Vec<NoiseSymbol>,
}

impl NoiseWord {
    pub fn new(
        eps: &EpsilonSeq,
        windows: &[f64],
        factors: &[FormFactor],
    ) -> Result<Self, NoiseError> {
        let want = eps.len();
        if windows.len() != want {
            return Err(NoiseError::LengthMismatch { what: "windows", want, got: windows.len() });
        }
        if factors.len() != want {
            return Err(NoiseError::LengthMismatch { what: "factors", want, got: factors.len() });
        }
        for &t in windows {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(NoiseError::BadTime(t));
            }
        }
        let symbols = eps
            .roles()
            .iter()
            .zip(windows)
            .zip(factors)
            .map(|((&role, &window), factor)| NoiseSymbol { role, window, factor: factor.clone() })
            .collect();
        Ok(Self { symbols })
    }

    pub fn from_spec(spec: &CorrelatorSpec) -> Self {
        Self::new(&spec.eps, &spec.times, &spec.factors).expect("spec is validated on construction")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[NoiseSymbol] {
        &self.symbols
    }
}

/// Record of one contraction `alpha(tau,k) alpha+(tau',k')`: the matched word
/// positions, the variable substitutions it enforced, the bra-ket overlap of
/// the two time windows, and the coefficients of the merged Weyl factor
/// (displacement `boost_per_tau_k * tau k` in the boost slot only, scalar
/// phase `phase_per_tau_k2 * tau k^2`, reservoir phase
/// `freq_per_tau * omega(k) tau`).
#[derive(Debug, Clone, Copy)]
pub struct Substitution {
    pub pair: Pair,
    /// Creator time eliminated as `tau' = tau_scale * tau`; the relation's
    /// delta fixes the scale to 2 and contributes no Jacobian factor.
    pub tau_scale: f64,
    /// `<chi_[0,T_abs], chi_[0,T_em]> = min(T_abs, T_em)`.
    pub overlap: f64,
    pub boost_per_tau_k: f64,
    pub phase_per_tau_k2: f64,
    pub freq_per_tau: f64,
}

/// Fully contracted word: the pairing, one substitution record and one
/// momentum kernel `conj(f_abs) f_em` per pair (aligned with
/// `pairing.pairs()`), and the accumulated bra-ket scalar. The residual Weyl
/// factor of pair `h` at any `(tau, k)` is reproduced by
/// [`ContractionPlan::merged_factor`]; at each nesting level the residual
/// chain is the product of the level's merged factors.
#[derive(Debug, Clone)]
pub struct ContractionPlan {
    pub pairing: Pairing,
    pub subs: Vec<Substitution>,
    pub kernels: Vec<FormFactor>,
    pub braket_scalar: f64,
}

/// Annihilator Weyl displacement `W((tau/m) k, k)`.
fn absorber_op(tau: f64, k: f64, mass: f64) -> WeylOp {
    WeylOp::new(vec![tau * k / mass], vec![k], 0.0).expect("1d lengths agree")
}

/// Creator Weyl displacement `W(-(tau/m) k, -k)`.
fn emitter_op(tau: f64, k: f64, mass: f64) -> WeylOp {
    WeylOp::new(vec![-tau * k / mass], vec![-k], 0.0).expect("1d lengths agree")
}

impl ContractionPlan {
    /// The merged Weyl factor of pair `h` at annihilator time `tau` and pair
    /// momentum `k`: the annihilator's displacement times the creator's at
    /// the substituted time `tau_scale * tau`.
    pub fn merged_factor(
        &self,
        h: usize,
        tau: f64,
        k: f64,
        pp: &PhysParams,
    ) -> Result<WeylOp, NoiseError> {
        let s = &self.subs[h];
        Ok(multiply(
            &absorber_op(tau, k, pp.mass),
            &emitter_op(s.tau_scale * tau, k, pp.mass),
            pp.hbar,
        )?)
    }
}

/// Free reduction of a word to its contraction plan, or `None` when the word
/// annihilates the vacuum (equivalently, when no full contraction exists).
///
/// Repeatedly contracts the innermost adjacent annihilator-creator
/// neighbours; each contraction eliminates the creator's variables via
/// `delta(tau' - 2 tau) delta(k - k')`, takes the bra-ket overlap of the two
/// time windows, and merges the two Weyl displacements with one group-law
/// multiplication (the transfer slots cancel, leaving a pure boost). The
/// resulting pairing is always the word's unique non-crossing one.
pub fn reduce_word(
    word: &NoiseWord,
    pp: &PhysParams,
) -> Result<Option<ContractionPlan>, NoiseError> {
    pp.validate()?;
    // Positions still in play, ascending; entry i+1 stands immediately left
    // of entry i in the operator product.
    let mut remaining: Vec<usize> = (1..=word.len()).collect();
    let mut records: Vec<(Pair, Substitution, FormFactor)> = Vec::with_capacity(word.len() / 2);
    loop {
        let Some(i) = (0..remaining.len().saturating_sub(1)).find(|&i| {
            word.symbols[remaining[i] - 1].role == Role::Creator
                && word.symbols[remaining[i + 1] - 1].role == Role::Annihilator
        }) else {
            break;
        };
        let (emitter, absorber) = (remaining[i], remaining[i + 1]);
        let em = &word.symbols[emitter - 1];
        let ab = &word.symbols[absorber - 1];
        let pair = Pair { absorber, emitter };

        // Merge the pair's Weyl factors once at two probe values and read off
        // the (bilinear, quadratic) coefficients of the boost and the phase.
        let mut coeffs = [(0.0, 0.0); 2];
        for (slot, &(tau, k)) in [(1.0, 1.0), (1.5, -0.7)].iter().enumerate() {
            let merged = multiply(
                &absorber_op(tau, k, pp.mass),
                &emitter_op(2.0 * tau, k, pp.mass),
                pp.hbar,
            )?;
            assert!(
                merged.b[0].abs() < 1e-15,
                "pair transfer slots must cancel, residual {}",
                merged.b[0]
            );
            coeffs[slot] = (merged.a[0] / (tau * k), merged.phase / (tau * k * k));
        }
        assert!(
            (coeffs[0].0 - coeffs[1].0).abs() < 1e-12 && (coeffs[0].1 - coeffs[1].1).abs() < 1e-12,
            "merged factor must scale bilinearly in (tau, k)"
        );
        let sub = Substitution {
            pair,
            tau_scale: 2.0,
            overlap: ab.window.min(em.window),
            boost_per_tau_k: coeffs[0].0,
            phase_per_tau_k2: coeffs[0].1,
            // e^{-i omega tau} from the annihilator, e^{+i omega 2 tau} from
            // the substituted creator.
            freq_per_tau: 2.0 - 1.0,
        };
        records.push((pair, sub, conj_mul(&ab.factor, &em.factor)?));
        remaining.remove(i + 1);
        remaining.remove(i);
    }
    if !remaining.is_empty() {
        return Ok(None);
    }
    records.sort_by_key(|(pair, _, _)| pair.emitter);
    let pairing = Pairing::from_pairs(records.iter().map(|(pair, _, _)| *pair).collect());
    assert!(pairing.is_noncrossing(), "free contraction can never cross");
    let braket_scalar = records.iter().map(|(_, sub, _)| sub.overlap).product();
    let (subs, kernels) = records.into_iter().map(|(_, sub, kern)| (sub, kern)).unzip();
    Ok(Some(ContractionPlan { pairing, subs, kernels, braket_scalar }))
}

/// The phase rate (coefficient of `tau`) of pair `h` at pair momentum `k`,
/// acting on the momentum eigenstate `|l>`: merged-factor action angle plus
/// the reservoir frequency. Vanishing rate is the pair's energy shell.
fn pair_phase_rate(
    plan: &ContractionPlan,
    h: usize,
    k: f64,
    l: f64,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<f64, NoiseError> {
    let merged = plan.merged_factor(h, 1.0, k, pp)?;
    Ok(action_angle(&merged, &[l], pp.hbar) + plan.subs[h].freq_per_tau * disp.omega(&[k]))
}

fn eval_level(
    plan: &ContractionPlan,
    level: &[usize],
    children: &[Vec<usize>],
    l: f64,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<C64, NoiseError> {
    let mut prod = C64::new(1.0, 0.0);
    for &h in level {
        // The symbolically merged phase rate must be the energy violation of
        // this momentum sector; spot-check away from any shell.
        for k_chk in [0.37, -1.13] {
            let rate = pair_phase_rate(plan, h, k_chk, l, pp, disp)?;
            let want = delta_energy_1d(pp, disp, l, k_chk);
            assert!(
                (rate - want).abs() <= 1e-9 * (1.0 + want.abs()),
                "merged phase rate {rate} disagrees with energy violation {want}"
            );
        }
        let roots = shell_roots(pp, disp, l)?;
        let mut shell_sum = C64::new(0.0, 0.0);
        for r in &roots {
            let rate = pair_phase_rate(plan, h, r.k, l, pp, disp)?;
            assert!(rate.abs() <= 1e-6 * (1.0 + l.abs()), "shell root must kill the phase rate");
            // The emission half of the pair shifts every momentum sector
            // nested inside it.
            let (_, shifted) = momentum_action(&emitter_op(0.0, r.k, pp.mass), &[l], pp.hbar);
            let inner = eval_level(plan, &children[h], children, shifted[0], pp, disp)?;
            shell_sum += plan.kernels[h].eval_1d(r.k) / r.jacobian * inner;
        }
        prod *= 2.0 * PI * shell_sum;
    }
    Ok(prod)
}

/// Evaluates a contraction plan on the momentum eigenstate `|probe_p>`: for
/// each pair, outermost first, the `tau` integral of the merged boost's
/// oscillation collapses onto the energy shell (resolved by the shell-root
/// finder), and pairs nested inside an emission see the recoiled momentum.
pub fn evaluate_plan(
    plan: &ContractionPlan,
    pp: &PhysParams,
    disp: &Dispersion,
    probe_p: &[f64],
) -> Result<C64, NoiseError> {
    pp.validate()?;
    disp.validate()?;
    if pp.dim != 1 {
        return Err(NoiseError::Unsupported("plan evaluation requires dim = 1"));
    }
    if probe_p.len() != 1 || !probe_p[0].is_finite() {
        return Err(NoiseError::Spectral(SpectralError::DimensionMismatch {
            expected: 1,
            got: probe_p.len(),
        }));
    }
    let forest = plan.pairing.nesting_forest()?;
    let bare = eval_level(plan, &forest.roots, &forest.children, probe_p[0], pp, disp)?;
    Ok(plan.braket_scalar * bare)
}

/// Full noise-algebra route for one correlator: build the word, reduce it,
/// evaluate the plan. Trivial words give zero.
pub fn noise_moment(
    spec: &CorrelatorSpec,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<C64, NoiseError> {
    let word = NoiseWord::from_spec(spec);
    match reduce_word(&word, pp)? {
        None => Ok(C64::new(0.0, 0.0)),
        Some(plan) => evaluate_plan(&plan, pp, disp, &spec.probe_p),
    }
}
