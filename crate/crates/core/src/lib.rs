//! Optimistic representation-selecting reinforcement learning for bilinear
//! episodic MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: exact tabular episodic MDPs with a dynamic-programming oracle.
//! - [`representation`]: feature maps, bilinear factorizations, norm
//!   constants, coverage diagnostics and instance generators.
//! - [`learner`]: the ReLEX learner (per-representation ridge regression,
//!   confidence bonuses, min-over-representations optimistic planning).
//! - [`harness`]: experiments with exact regret accounting, phase detection
//!   and empirical audits.
//! - [`cli`]: configuration, artifacts and the `relex` command line.

pub mod cli;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod mdp;
pub mod representation;
pub mod rng;

pub use error::{Error, Result};
