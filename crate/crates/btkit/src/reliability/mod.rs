//! Reliability of stochastic behavior trees: marking graphs, Markov models, mean
//! times to succeed and fail, outcome probabilities over time, a deterministic-time
//! variant, a Monte Carlo cross-check and quick static estimators.

pub mod compose;
pub mod deterministic;
pub mod estimators;
pub mod markov;
pub mod montecarlo;
pub mod mrg;
pub mod profile;

use thiserror::Error;

pub use compose::{analyze, compose_profiles, Composition, GridPoint, NodeResult, ReliabilityReport};
pub use deterministic::{deterministic_transient, DeterministicReport};
pub use estimators::{static_success_probability, utility_propagate};
pub use markov::{build_dtmc, build_generator, sojourn_times, MarkovModel, MeanTimes};
pub use montecarlo::{monte_carlo, sample_action, MonteCarloReport};
pub use mrg::{build_mrg, Marking, Mrg, NodeType, StateClass};
pub use profile::{ActionProfile, LeafProfile, ProfileKind, ProfileSet, Timing, CONDITION_EPSILON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReliabilityError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("hybrid actions are analyzed by simulation only")]
    HybridNeedsSimulation,
    #[error("transient marking {0} has no feasible event")]
    NoFeasibleEvent(usize),
    #[error("transient integration diverged")]
    IntegrationDiverged,
    #[error("time {0} has no common step with the other times")]
    NoCommonStep(f64),
    #[error("the static estimator does not handle Parallel nodes")]
    ParallelUnsupported,
    #[error("value out of range for {0}")]
    OutOfRange(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no profile for leaf {0}")]
    MissingProfile(String),
    #[error("invalid time grid point {0}")]
    InvalidGrid(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
