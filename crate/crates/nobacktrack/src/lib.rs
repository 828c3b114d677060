//! Finite-state Markov chain toolkit built around one construction: turning
//! any irreducible reversible chain into a non-reversible chain on directed
//! pairs of states that avoids backtracking, without ever increasing the
//! asymptotic variance of time-average estimators.
//!
//! The pieces:
//!
//! - [`chain`]: transition matrices, stationary distributions, invariance /
//!   detailed-balance / irreducibility checks, Metropolis-Hastings.
//! - [`variance`]: exact asymptotic variance through the Poisson equation,
//!   and seeded empirical estimation with replication.
//! - [`lift`]: the pair-space lift, the plain and modified Gibbs update
//!   kernels, kernel condition checks, and the on-the-fly update sampler.
//! - [`blocks`]: elementary dominated pairs, delta-marked coupled
//!   simulation, block segmentation and statistics, stratified block
//!   streams, and the two variance-equivalence harnesses.
//! - [`examples`]: the line walk, rectangle walk, the four-state
//!   counterexample, the printed 3x3 decomposition matrices, and seeded
//!   random reversible chains.
//! - [`io`]: the chain JSON format shared with the command-line tool.
//!
//! Everything is deterministic given explicit seeds; nothing reads ambient
//! entropy.

pub mod blocks;
pub mod chain;
pub mod error;
pub mod examples;
pub mod io;
pub mod lift;
pub mod rng;
pub mod stats;
pub mod variance;

/// Default tolerance for stochasticity checks (row sums, probability
/// vectors).
pub const TOL_STOCHASTIC: f64 = 1e-9;

/// Default tolerance for linear-algebra identities (invariance, detailed
/// balance, Poisson residuals).
pub const TOL_LINEAR: f64 = 1e-10;

pub use chain::{
    check_detailed_balance, check_invariant, check_irreducible, metropolize,
    stationary_distribution, Distribution, FiniteChain, StateFunction,
};
pub use error::{Error, Result};
pub use lift::{
    build_nobacktrack, expand_states, gibbs_kernel, lift_chain, lift_distribution, lift_function,
    liu_kernel, sample_update, verify_update_conditions, ExpandedChain, UpdateKernel,
};
pub use variance::{
    empirical_estimate, exact_asymptotic_variance, replicated_variance, simulate, solve_poisson,
    InitialState, Trajectory, VarianceReport,
};
