//! Evolved potential-based reward shaping on top of ensemble inverse RL.
//!
//! The crate is organised around the stages of the imitation pipeline:
//!
//! * [`env`]: finite-horizon tabular MDPs, a point-mass controller, rollouts
//!   and the transfer wrappers (trembling hand, randomised dynamics).
//! * [`policy`]: tabular and MLP policies, a clipped policy-gradient trainer,
//!   exact oracles (value iteration, soft value iteration), behavioural cloning
//!   and training-curve bookkeeping.
//! * [`shaping`]: potentials and the potential-based shaping transform.
//! * [`evo`]: the OpenAI-ES optimiser and the shaping-evolution outer loop.
//! * [`irl`]: moment-matching IRL with buffers, ensembles and policy resets,
//!   and the composition with evolved shaping.
//! * [`pipeline`]: experiment specs, seeded orchestration and CSV export.

pub mod env;
pub mod error;
pub mod evo;
pub mod irl;
pub mod nn;
pub(crate) mod par;
pub mod pipeline;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod shaping;
pub mod stats;

pub use error::{Error, Result};
