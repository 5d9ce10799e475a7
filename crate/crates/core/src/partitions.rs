//! Pair partitions of creation/annihilation words.
//!
//! A word of `2n` operator factors is indexed `1..=2n`, index 1 being the
//! rightmost factor (the first to act on the vacuum). Each index carries a
//! [`Role`]: `Creator` (emission) or `Annihilator` (absorption). A vacuum
//! expectation is nonzero only if the word is *non-trivial*: creators and
//! annihilators balance and every prefix (from index 1 upward) sees at least
//! as many creators as annihilators, so no annihilator ever hits the vacuum.
//!
//! Pairings match each annihilator index `mbar` with a creator index
//! `m < mbar`. Free (non-crossing) statistics select exactly one such
//! pairing, produced by [`EpsilonSeq::wigner_pairing`]; the finite-coupling
//! evaluator sums over all of them ([`EpsilonSeq::enumerate_pairings`]).

use std::fmt;
use thiserror::Error;

/// Hard cap on word length (2n <= 16); pairing counts grow factorially.
pub const MAX_WORD_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("empty word")]
    Empty,
    #[error("word length {0} is odd; only balanced words of even length are supported")]
    OddLength(usize),
    #[error("word length {0} exceeds the supported maximum {MAX_WORD_LEN}")]
    TooLong(usize),
    #[error("cannot parse role {0:?}; expected '0' (annihilator) or '1' (creator)")]
    BadRole(String),
    #[error("index {0} is out of range for a word of length {1}")]
    IndexOutOfRange(usize, usize),
    #[error("pairing is crossing; nesting structure is defined only for non-crossing pairings")]
    Crossing,
}

/// Role of one factor in a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// `b(g)` / absorption; kills the vacuum.
    Annihilator,
    /// `b^+(g)` / emission.
    Creator,
}

/// Creation/annihilation pattern of a word, indexed `1..=len`, index 1 rightmost.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpsilonSeq {
    roles: Vec<Role>,
}

impl EpsilonSeq {
    /// Builds a sequence from roles listed from index 1 upward.
    pub fn new(roles: Vec<Role>) -> Result<Self, PartitionError> {
        if roles.is_empty() {
            return Err(PartitionError::Empty);
        }
        if roles.len() % 2 != 0 {
            return Err(PartitionError::OddLength(roles.len()));
        }
        if roles.len() > MAX_WORD_LEN {
            return Err(PartitionError::TooLong(roles.len()));
        }
        Ok(Self { roles })
    }

    /// Parses `"1,0"` or `"10"` style strings, index 1 first.
    pub fn parse(s: &str) -> Result<Self, PartitionError> {
        let mut roles = Vec::new();
        for tok in s.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            // Allow both comma-separated and contiguous digit strings.
            for ch in tok.chars() {
                match ch {
                    '0' => roles.push(Role::Annihilator),
                    '1' => roles.push(Role::Creator),
                    _ => return Err(PartitionError::BadRole(tok.to_string())),
                }
            }
        }
        Self::new(roles)
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Number of pairs in a balanced word.
    pub fn order(&self) -> usize {
        self.roles.len() / 2
    }

    /// Role at 1-based index `j` (index 1 = rightmost factor).
    pub fn role(&self, j: usize) -> Result<Role, PartitionError> {
        self.roles
            .get(j.wrapping_sub(1))
            .copied()
            .ok_or(PartitionError::IndexOutOfRange(j, self.roles.len()))
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    /// Ballot test: balanced, and no prefix has more annihilators than
    /// creators. Trivial words have vanishing vacuum expectation.
    pub fn is_nontrivial(&self) -> bool {
        let mut level: i64 = 0;
        for &r in &self.roles {
            match r {
                Role::Creator => level += 1,
                Role::Annihilator => {
                    level -= 1;
                    if level < 0 {
                        return false;
                    }
                }
            }
        }
        level == 0
    }

    /// The unique non-crossing pairing, via a single stack scan: creators
    /// push, annihilators pop their most recent open creator. Returns `None`
    /// for trivial words.
    pub fn wigner_pairing(&self) -> Option<Pairing> {
        let mut stack: Vec<usize> = Vec::with_capacity(self.order());
        let mut pairs = Vec::with_capacity(self.order());
        for (j0, &r) in self.roles.iter().enumerate() {
            let j = j0 + 1;
            match r {
                Role::Creator => stack.push(j),
                Role::Annihilator => {
                    let m = stack.pop()?;
                    pairs.push(Pair { absorber: j, emitter: m });
                }
            }
        }
        if stack.is_empty() {
            Some(Pairing::from_pairs(pairs))
        } else {
            None
        }
    }

    /// All pairings matching each annihilator with an earlier creator,
    /// in a deterministic order (lexicographic in the emitter chosen for
    /// each annihilator, annihilators taken in ascending index order).
    /// Empty for trivial words.
    pub fn enumerate_pairings(&self) -> Vec<Pairing> {
        let creators: Vec<usize> = (1..=self.len())
            .filter(|&j| self.roles[j - 1] == Role::Creator)
            .collect();
        let annihilators: Vec<usize> = (1..=self.len())
            .filter(|&j| self.roles[j - 1] == Role::Annihilator)
            .collect();
        if creators.len() != annihilators.len() {
            return Vec::new();
        }
        let n = creators.len();
        let mut out = Vec::new();
        let mut used = vec![false; n];
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        fn rec(
            creators: &[usize],
            annihilators: &[usize],
            used: &mut [bool],
            chosen: &mut Vec<usize>,
            out: &mut Vec<Pairing>,
        ) {
            let a_idx = chosen.len();
            if a_idx == annihilators.len() {
                let pairs = annihilators
                    .iter()
                    .zip(chosen.iter())
                    .map(|(&mbar, &ci)| Pair { absorber: mbar, emitter: creators[ci] })
                    .collect();
                out.push(Pairing::from_pairs(pairs));
                return;
            }
            let mbar = annihilators[a_idx];
            for ci in 0..creators.len() {
                if !used[ci] && creators[ci] < mbar {
                    used[ci] = true;
                    chosen.push(ci);
                    rec(creators, annihilators, used, chosen, out);
                    chosen.pop();
                    used[ci] = false;
                }
            }
        }
        rec(&creators, &annihilators, &mut used, &mut chosen, &mut out);
        let _ = n;
        out
    }
}

impl fmt::Display for EpsilonSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.roles.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(match r {
                Role::Annihilator => "0",
                Role::Creator => "1",
            })?;
        }
        Ok(())
    }
}

/// One matched pair: the absorber (annihilator) index and the emitter
/// (creator) index it contracts against; always `emitter < absorber`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub absorber: usize,
    pub emitter: usize,
}

/// A pair partition of `1..=2n`, stored with emitters ascending (canonical).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pairing {
    pairs: Vec<Pair>,
}

/// Nesting structure of a non-crossing pairing: a forest ordered by interval
/// containment. `children[h]` lists the pairs directly inside pair `h`;
/// `roots` the pairs inside no other pair. Indices refer to `Pairing::pairs()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestingForest {
    pub roots: Vec<usize>,
    pub children: Vec<Vec<usize>>,
}

impl Pairing {
    pub(crate) fn from_pairs(mut pairs: Vec<Pair>) -> Self {
        pairs.sort_by_key(|p| p.emitter);
        for p in &pairs {
            debug_assert!(p.emitter < p.absorber);
        }
        Self { pairs }
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Number of pairs `n`.
    pub fn order(&self) -> usize {
        self.pairs.len()
    }

    /// Two pairs cross iff their intervals `(emitter, absorber)` overlap
    /// without containment.
    pub fn is_noncrossing(&self) -> bool {
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                let (a1, a2) = (a.emitter, a.absorber);
                let (b1, b2) = (b.emitter, b.absorber);
                let crossed = (a1 < b1 && b1 < a2 && a2 < b2) || (b1 < a1 && a1 < b2 && b2 < a2);
                if crossed {
                    return false;
                }
            }
        }
        true
    }

    /// Indices of the pairs strictly enclosing pair `h` (non-crossing only).
    /// For non-crossing pairings enclosure is interval containment.
    pub fn enclosing_pairs(&self, h: usize) -> Result<Vec<usize>, PartitionError> {
        if h >= self.pairs.len() {
            return Err(PartitionError::IndexOutOfRange(h, self.pairs.len()));
        }
        if !self.is_noncrossing() {
            return Err(PartitionError::Crossing);
        }
        let target = self.pairs[h];
        Ok((0..self.pairs.len())
            .filter(|&r| {
                r != h
                    && self.pairs[r].emitter < target.emitter
                    && target.absorber < self.pairs[r].absorber
            })
            .collect())
    }

    /// Containment forest of a non-crossing pairing, outermost pairs as roots.
    pub fn nesting_forest(&self) -> Result<NestingForest, PartitionError> {
        if !self.is_noncrossing() {
            return Err(PartitionError::Crossing);
        }
        let n = self.pairs.len();
        // Parent of h = the enclosing pair with the largest emitter (tightest).
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for h in 0..n {
            let enc = self.enclosing_pairs(h)?;
            parent[h] = enc
                .into_iter()
                .max_by_key(|&r| self.pairs[r].emitter);
        }
        let mut children = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for h in 0..n {
            match parent[h] {
                Some(p) => children[p].push(h),
                None => roots.push(h),
            }
        }
        Ok(NestingForest { roots, children })
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, p) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({},{})", p.absorber, p.emitter)?;
        }
        f.write_str("}")
    }
}
