//! Exact symbolic algebra of Weyl operators.
//!
//! `W(a, b) = exp(i(a.p + b.q))` with `[q_j, p_l] = i hbar delta_{jl}`. An
//! operator is stored as `(a, b, phase)` meaning `e^{i phase} W(a, b)`; the
//! phase is kept as a real angle and summed exactly, so long products do not
//! drift the way accumulated complex factors would. Comparison is modulo 2 pi.
//!
//! Chain products follow the word convention used everywhere in this crate:
//! index 1 is the rightmost factor, so `multiply_chain(&[x1, x2, x3])`
//! represents the operator `x3 * x2 * x1`.

use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeylError {
    #[error("dimension mismatch: left operand has d={0}, right has d={1}")]
    DimensionMismatch(usize, usize),
    #[error("empty operator chain")]
    EmptyChain,
}

/// `e^{i phase} W(a, b)`; `a` multiplies the momentum operator, `b` position.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylOp {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub phase: f64,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(u, v)| u * v).sum()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let mut r = x % TAU;
    if r <= -std::f64::consts::PI {
        r += TAU;
    } else if r > std::f64::consts::PI {
        r -= TAU;
    }
    r
}

/// True if two phases agree modulo 2 pi within `tol`.
pub fn phases_eq(x: f64, y: f64, tol: f64) -> bool {
    wrap_angle(x - y).abs() <= tol
}

impl WeylOp {
    pub fn new(a: Vec<f64>, b: Vec<f64>, phase: f64) -> Result<Self, WeylError> {
        if a.len() != b.len() {
            return Err(WeylError::DimensionMismatch(a.len(), b.len()));
        }
        Ok(Self { a, b, phase })
    }

    pub fn identity(dim: usize) -> Self {
        Self { a: vec![0.0; dim], b: vec![0.0; dim], phase: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `W(a,b)^+ = e^{-i phase} W(-a,-b)`.
    pub fn adjoint(&self) -> Self {
        Self {
            a: self.a.iter().map(|x| -x).collect(),
            b: self.b.iter().map(|x| -x).collect(),
            phase: -self.phase,
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.a.iter().chain(&self.b).all(|&x| x.abs() <= tol)
            && phases_eq(self.phase, 0.0, tol)
    }
}

/// Group law; `w1` is the left factor:
/// `W(a1,b1) W(a2,b2) = e^{i(hbar/2)(a1.b2 - a2.b1)} W(a1+a2, b1+b2)`.
pub fn multiply(w1: &WeylOp, w2: &WeylOp, hbar: f64) -> Result<WeylOp, WeylError> {
    if w1.dim() != w2.dim() {
        return Err(WeylError::DimensionMismatch(w1.dim(), w2.dim()));
    }
    let a: Vec<f64> = w1.a.iter().zip(&w2.a).map(|(x, y)| x + y).collect();
    let b: Vec<f64> = w1.b.iter().zip(&w2.b).map(|(x, y)| x + y).collect();
    let phase =
        w1.phase + w2.phase + 0.5 * hbar * (dot(&w1.a, &w2.b) - dot(&w2.a, &w1.b));
    Ok(WeylOp { a, b, phase })
}

/// Product of a whole word, `ws[0]` being the rightmost factor.
///
/// Closed form of the left-fold: the result is `W(sum a_j, sum b_j)` with
/// phase `sum phase_j - (hbar/2) sum_{j<l} (a_j.b_l - a_l.b_j)` (the sign
/// reflects that larger indices stand further left).
pub fn multiply_chain(ws: &[WeylOp], hbar: f64) -> Result<WeylOp, WeylError> {
    let first = ws.first().ok_or(WeylError::EmptyChain)?;
    let dim = first.dim();
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    let mut phase = 0.0;
    for (j, w) in ws.iter().enumerate() {
        if w.dim() != dim {
            return Err(WeylError::DimensionMismatch(dim, w.dim()));
        }
        phase += w.phase;
        for l in ws[j + 1..].iter() {
            phase -= 0.5 * hbar * (dot(&w.a, &l.b) - dot(&l.a, &w.b));
        }
        for (acc, x) in a.iter_mut().zip(&w.a) {
            *acc += x;
        }
        for (acc, x) in b.iter_mut().zip(&w.b) {
            *acc += x;
        }
    }
    Ok(WeylOp { a, b, phase })
}

/// Free evolution `exp(i t p^2 / 2m)` acts as `W(a,b) -> W(a + (t/m) b, b)`.
pub fn evolve_free(w: &WeylOp, t: f64, mass: f64) -> WeylOp {
    WeylOp {
        a: w.a.iter().zip(&w.b).map(|(x, y)| x + (t / mass) * y).collect(),
        b: w.b.clone(),
        phase: w.phase,
    }
}

/// Action on a momentum eigenstate:
/// `W(a,b)|p> = e^{i(a.p + hbar a.b/2)} |p + hbar b>`.
/// Returns the total complex phase factor (including the stored phase) and
/// the shifted momentum.
pub fn momentum_action(w: &WeylOp, p: &[f64], hbar: f64) -> (num_complex::Complex64, Vec<f64>) {
    let angle = action_angle(w, p, hbar);
    let shifted = p.iter().zip(&w.b).map(|(x, y)| x + hbar * y).collect();
    (num_complex::Complex64::from_polar(1.0, angle), shifted)
}

/// Real angle of [`momentum_action`]'s phase factor:
/// `phase + a.p + hbar a.b/2`.
pub fn action_angle(w: &WeylOp, p: &[f64], hbar: f64) -> f64 {
    w.phase + dot(&w.a, p) + 0.5 * hbar * dot(&w.a, &w.b)
}
