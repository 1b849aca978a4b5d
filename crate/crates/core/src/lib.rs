//! Confident Monte-Carlo planning for discounted MDPs whose action space is a
//! product of per-agent action sets.
//!
//! The planners only query the simulator at states it has already returned,
//! keep a small core set of diverse state-action pairs, and use uncertainty
//! checks that avoid enumerating the joint action space.

pub mod coreset;
pub mod error;
pub mod features;
pub mod kernel;
pub mod linalg;
pub mod mdp;
pub mod planner;
pub mod rng;
pub mod uncertainty;

pub use error::{Error, Result};
