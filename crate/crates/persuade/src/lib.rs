//! Solvers, oracles and Monte-Carlo verifiers for signaling in two-candidate
//! district-based elections.
//!
//! A sender who observes the state of nature commits to a signaling scheme
//! and tries to maximize the probability that candidate `C0` wins a
//! district-based majority election. The crate provides:
//!
//! - [`private::solve_private`]: the exact LP over per-voter marginal
//!   recommendation probabilities, with marginal repair and an explicit
//!   coupling attaining the k-out-of-n coverage bound;
//! - [`public::solve_public`]: the grid LP over q-uniform posteriors for
//!   (relaxed, epsilon-persuasive) public signaling;
//! - [`semipublic::solve_semipublic`]: one posterior distribution per
//!   district plus the cross-district aggregation LP;
//! - [`oracle`]: exact brute-force oracles for small instances and
//!   Monte-Carlo checks of the comparative-stability inequalities;
//! - [`io`]: the JSON instance format, generators and report export.

pub mod audit;
pub mod election;
pub mod io;
pub mod lp;
pub mod oracle;
pub mod private;
pub mod public;
pub mod rng;
pub mod semipublic;
