//! Vacuum correlation functions of an interacting-free quantum noise.
//!
//! A particle with momentum operator `p` couples to a reservoir through
//! exponential (Weyl) operators; in the stochastic limit the rescaled
//! collective reservoir operators converge to a noise whose statistics are
//! free (only non-crossing pair partitions survive) but whose contraction
//! kernels depend on the particle momentum through energy-shell constraints.
//! This crate computes the limit correlators three independent ways and the
//! finite-coupling correlators they approximate:
//!
//! * [`moments::limit_moment`]: closed-form evaluation over the unique
//!   non-crossing pairing, resolving each energy-shell delta exactly,
//! * [`interacting`]: a Fock-space representation whose scalar products are
//!   momentum functions, evaluated by nested transform/convolution operators,
//! * [`noise`]: symbolic reduction of noise-algebra words to the same shell
//!   sums,
//! * [`moments::prelimit_moment`]: the finite-coupling moment before the
//!   limit, as an explicit oscillatory integral over all pairings, exhibiting
//!   the decay of crossing terms.
//!
//! Module layout mirrors the dependency order: [`partitions`] (combinatorics),
//! [`weyl`] (phase algebra), [`free_fock`] (free-probability oracle),
//! [`quad`] (quadrature), [`spectral`] (dispersions, shells, kernels,
//! momentum functions), then the three evaluation routes.
//!
//! Conventions used throughout: operator words are indexed `1..=2n` with
//! index 1 the RIGHTMOST factor (the first to act on the vacuum); a pair is
//! written `(absorber, emitter)` with `emitter < absorber`; `hbar` and the
//! particle mass are explicit parameters, never assumed 1.

pub mod free_fock;
pub mod interacting;
pub mod moments;
pub mod noise;
pub mod partitions;
pub mod quad;
pub mod spectral;
pub mod weyl;

/// Complex scalar used across the crate.
pub type C64 = num_complex::Complex64;

pub use moments::{CorrelatorSpec, MomentError, MomentResult};
pub use noise::{ContractionPlan, NoiseError, NoiseWord};
pub use partitions::{EpsilonSeq, Pairing, PartitionError, Role};
pub use spectral::{Dispersion, FormFactor, PhysParams, ShellRoot, SpectralError};
pub use weyl::WeylOp;
