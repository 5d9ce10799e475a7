//! Free (full Fock space) statistics over a finite test space.
//!
//! Serves as the brute-force oracle for everything combinatorial: a dense
//! truncated full Fock space `Gamma(T) = (+)_n T^{(x)n}` with explicit
//! creator/annihilator matrices validates the pairing formula
//! ([`free_moment_combinatorial`]), and the bra-ket contraction rule
//! ([`braket_reduce`]) used by the noise-algebra reduction. Dense tensors are
//! deliberate: these run at dimension <= 4 and word length <= 8, where
//! clarity beats performance.

use crate::partitions::{EpsilonSeq, Role};
use crate::C64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("test-vector dimension {0} does not match space dimension {1}")]
    DimensionMismatch(usize, usize),
    #[error("word needs {0} test vectors, got {1}")]
    WordLengthMismatch(usize, usize),
    #[error("truncation level {cap} too small: norm {loss:.3e} was dropped, the result would be representation-dependent")]
    TruncationLoss { cap: usize, loss: f64 },
}

/// Element of the truncated full Fock space: `levels[n]` holds the dense
/// coordinates of the `n`-particle tensor (length `dim^n`, slot 1 most
/// significant). Norm dropped past the truncation level accumulates in
/// `truncation_loss`.
#[derive(Debug, Clone)]
pub struct FockVector {
    dim: usize,
    cap: usize,
    levels: Vec<Vec<C64>>,
    truncation_loss: f64,
}

impl FockVector {
    /// The vacuum `1 (+) 0 (+) ...`.
    pub fn vacuum(dim: usize, cap: usize) -> Self {
        Self { dim, cap, levels: vec![vec![C64::new(1.0, 0.0)]], truncation_loss: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncation_loss(&self) -> f64 {
        self.truncation_loss
    }

    pub fn vacuum_component(&self) -> C64 {
        self.levels[0][0]
    }

    pub fn norm_sq(&self) -> f64 {
        self.levels.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in self.levels.iter().zip(&other.levels) {
            for (x, y) in a.iter().zip(b) {
                acc += x.conj() * y;
            }
        }
        acc
    }

    fn check_dim(&self, g: &[C64]) -> Result<(), FockError> {
        if g.len() != self.dim {
            return Err(FockError::DimensionMismatch(g.len(), self.dim));
        }
        Ok(())
    }

    /// `b^+(g)`: prepends `g` to every tensor, shifting levels up; whatever
    /// would land past the truncation level is dropped into the loss tally.
    pub fn apply_creator(&self, g: &[C64]) -> Result<Self, FockError> {
        self.check_dim(g)?;
        let top = (self.levels.len()).min(self.cap);
        let mut levels: Vec<Vec<C64>> = Vec::with_capacity(top + 1);
        levels.push(vec![C64::new(0.0, 0.0)]);
        for n in 0..top {
            let src = &self.levels[n];
            let mut dst = vec![C64::new(0.0, 0.0); src.len() * self.dim];
            for (i0, gi) in g.iter().enumerate() {
                for (r, v) in src.iter().enumerate() {
                    dst[i0 * src.len() + r] = gi * v;
                }
            }
            levels.push(dst);
        }
        let mut loss = self.truncation_loss;
        if self.levels.len() > self.cap {
            let dropped: f64 = self.levels[self.cap].iter().map(|z| z.norm_sqr()).sum();
            let gnorm: f64 = g.iter().map(|z| z.norm_sqr()).sum();
            loss += (dropped * gnorm).sqrt();
        }
        Ok(Self { dim: self.dim, cap: self.cap, levels, truncation_loss: loss })
    }

    /// `b(g)`: contracts `conj(g)` against the first tensor slot, shifting
    /// levels down; kills the vacuum.
    pub fn apply_annihilator(&self, g: &[C64]) -> Result<Self, FockError> {
        self.check_dim(g)?;
        let mut levels: Vec<Vec<C64>> = Vec::with_capacity(self.levels.len().max(1) - 1);
        levels.push(vec![C64::new(0.0, 0.0)]);
        for n in 1..self.levels.len() {
            let src = &self.levels[n];
            let block = src.len() / self.dim;
            let mut dst = vec![C64::new(0.0, 0.0); block];
            for (i0, gi) in g.iter().enumerate() {
                let gc = gi.conj();
                for r in 0..block {
                    dst[r] += gc * src[i0 * block + r];
                }
            }
            if n == 1 {
                levels[0] = dst;
            } else {
                levels.push(dst);
            }
        }
        Ok(Self {
            dim: self.dim,
            cap: self.cap,
            levels,
            truncation_loss: self.truncation_loss,
        })
    }
}

/// Vacuum moment `<Psi, prod_j b^{eps_j}(g_j) Psi>` by direct matrix
/// evaluation; `gs[j-1]` belongs to word index `j` (index 1 acts first).
/// Any truncation loss is an error: pick `cap >= ` the maximal prefix height.
pub fn free_moment_oracle(
    eps: &EpsilonSeq,
    gs: &[Vec<C64>],
    cap: usize,
) -> Result<C64, FockError> {
    if gs.len() != eps.len() {
        return Err(FockError::WordLengthMismatch(eps.len(), gs.len()));
    }
    let dim = gs.first().map_or(1, Vec::len);
    let mut v = FockVector::vacuum(dim, cap);
    for (j0, g) in gs.iter().enumerate() {
        v = match eps.roles()[j0] {
            Role::Creator => v.apply_creator(g)?,
            Role::Annihilator => v.apply_annihilator(g)?,
        };
    }
    if v.truncation_loss() > 0.0 {
        return Err(FockError::TruncationLoss { cap, loss: v.truncation_loss() });
    }
    Ok(v.vacuum_component())
}

/// Pairing formula for the same moment: zero for trivial words, else the
/// product of `<g_absorber, g_emitter>` over the unique non-crossing pairing.
pub fn free_moment_combinatorial(eps: &EpsilonSeq, gs: &[Vec<C64>]) -> Result<C64, FockError> {
    if gs.len() != eps.len() {
        return Err(FockError::WordLengthMismatch(eps.len(), gs.len()));
    }
    let Some(pairing) = eps.wigner_pairing() else {
        return Ok(C64::new(0.0, 0.0));
    };
    let mut acc = C64::new(1.0, 0.0);
    for p in pairing.pairs() {
        let bra = &gs[p.absorber - 1];
        let ket = &gs[p.emitter - 1];
        if bra.len() != ket.len() {
            return Err(FockError::DimensionMismatch(bra.len(), ket.len()));
        }
        acc *= bra.iter().zip(ket).map(|(x, y)| x.conj() * y).sum::<C64>();
    }
    Ok(acc)
}

/// One token of a bra-ket word; the label indexes a caller-supplied
/// scalar-product table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BraKet {
    Bra(usize),
    Ket(usize),
}

/// A word of bras and kets in left-to-right reading order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BraKetWord {
    pub tokens: Vec<BraKet>,
}

/// Outcome of [`braket_reduce`]: the accumulated scalar, the contracted
/// (bra, ket) label pairs in contraction order, and whatever word is left.
#[derive(Debug, Clone, PartialEq)]
pub struct BraKetReduction {
    pub scalar: C64,
    pub contractions: Vec<(usize, usize)>,
    pub residual: BraKetWord,
}

impl BraKetWord {
    pub fn new(tokens: Vec<BraKet>) -> Self {
        Self { tokens }
    }

    /// Contracts a bra immediately LEFT of a ket into the scalar
    /// `gram(bra, ket)`, repeatedly, choosing among current adjacencies via
    /// `pick(count) -> index` (used to exercise confluence in tests).
    pub fn reduce_with<G, P>(&self, gram: G, mut pick: P) -> BraKetReduction
    where
        G: Fn(usize, usize) -> C64,
        P: FnMut(usize) -> usize,
    {
        let mut tokens = self.tokens.clone();
        let mut scalar = C64::new(1.0, 0.0);
        let mut contractions = Vec::new();
        loop {
            let sites: Vec<usize> = (0..tokens.len().saturating_sub(1))
                .filter(|&i| matches!((tokens[i], tokens[i + 1]), (BraKet::Bra(_), BraKet::Ket(_))))
                .collect();
            if sites.is_empty() {
                return BraKetReduction { scalar, contractions, residual: BraKetWord { tokens } };
            }
            let site = sites[pick(sites.len()) % sites.len()];
            let (BraKet::Bra(a), BraKet::Ket(b)) = (tokens[site], tokens[site + 1]) else {
                unreachable!()
            };
            scalar *= gram(a, b);
            contractions.push((a, b));
            tokens.drain(site..=site + 1);
        }
    }

    /// Deterministic reduction (always the leftmost adjacency).
    pub fn reduce<G: Fn(usize, usize) -> C64>(&self, gram: G) -> BraKetReduction {
        self.reduce_with(gram, |_| 0)
    }
}
