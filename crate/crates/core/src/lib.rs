//! Simulation and verification lab for Thompson Sampling on continuum-armed
//! bandits whose reward functions have `M` Lipschitz derivatives.
//!
//! The crate is organised around six subsystems:
//!
//! - [`funclass`] — the smooth function classes `F_{C,M,L}` and their
//!   difference class `G_{C,M,L}`: grid representations, membership checks,
//!   prior samplers, and the extremal / bump constructions.
//! - [`noise`] — `(σ², b)`-sub-exponential reward-noise families with
//!   samplers and empirical MGF / tail verification.
//! - [`agent`] — particle Thompson sampling, least-squares confidence sets,
//!   and baseline policies (fixed-grid UCB, zooming, uniform random).
//! - [`eluder`] — ε-dependence tests, greedy eluder-dimension witnesses with
//!   per-step certificates, and the counting upper bound.
//! - [`bounds`] — closed-form evaluation of the ball-width function, covering
//!   numbers, regret-bound expressions, exponents, and the parametric-class
//!   specialisations.
//! - [`harness`] — experiment orchestration: episodes, Bayesian-regret Monte
//!   Carlo, exponent fitting, the adversarial arm coupling, and CSV/SVG export.
//!
//! Everything is deterministic given a seed: replications derive independent
//! generator streams from `(master seed, horizon, replication index)`, so
//! results do not depend on scheduling or thread count.

pub mod agent;
pub mod bounds;
pub mod eluder;
pub mod funclass;
pub mod harness;
pub mod noise;
pub mod poly;
pub(crate) mod rngutil;

pub use funclass::{FunctionClassSpec, GridFunction};

/// A seeded generator stream for driving library routines from callers;
/// `(seed, tag)` pairs map to well-separated ChaCha states.
pub fn seed_stream(seed: u64, tag: u64) -> rand_chacha::ChaCha12Rng {
    rngutil::stream(seed, tag)
}
