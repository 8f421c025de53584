//! Laboratory for online learning in episodic Markov persuasion processes.
//!
//! A sender observes per-state outcomes and commits to a direct signaling
//! policy; myopic receivers follow the recommended actions. The crate
//! simulates that interaction, runs the optimistic persuasive policy search
//! learners under full and partial feedback, and measures cumulative regret
//! and persuasiveness violation against the LP-computed offline optimum.

pub mod bench;
pub mod error;
pub mod estimation;
pub mod instance;
pub mod learners;
pub mod lp;
pub mod metrics;
pub mod occupancy;
pub mod persuasion;
pub mod programs;
pub mod simulator;

pub use error::{Error, Result};
