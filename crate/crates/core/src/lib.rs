//! Learning Stackelberg equilibria from noisy bandit feedback.
//!
//! Tabular games live in [`game`] and episodic MDPs in [`mdp`].
//! Learners: [`bandit`], [`bandit_rl`], [`linear`], [`simultaneous`].

pub mod bandit;
pub mod bandit_rl;
pub mod error;
pub mod game;
pub mod instances;
pub mod linear;
pub mod lp;
pub mod mdp;
pub mod reward_free;
pub mod simultaneous;

pub use error::{Error, Result};
