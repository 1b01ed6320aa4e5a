//! Stochastic approximation with cone-monotone quasi-contractive operators.
//!
//! The crate tracks the sandwich sequences that bracket the SA error,
//! instantiates the recursion as synchronous Q-learning, evaluates the
//! resulting finite-sample bounds and runs the hard-MDP simulation study.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cone;
pub mod error;
pub mod experiments;
pub mod lemmas;
pub mod mdp;
mod parse;
pub mod problems;
pub mod qlearn;
pub mod rng;
pub mod sa;
pub mod schedules;
pub mod stats;

pub use cone::{cone_leq, gauge_norm, GaugeElement, GaugeVector, OrthantCone};
pub use error::{Error, Result};
pub use mdp::{Mdp, QTable, TransitionSample};
pub use problems::ProblemSpec;
pub use qlearn::{q_learning_run, QlearnConfig};
pub use sa::{run_sa, SaOperator, SaTrace, SandwichState};
pub use schedules::{ScheduleSpec, StepsizeSchedule};
