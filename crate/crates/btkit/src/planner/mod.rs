//! Goal-driven synthesis of behavior trees by backchaining from conditions to
//! actions that achieve them, interleaved with execution.

pub mod domains;
pub mod pabt;
pub mod world;

use crate::engine::TickError;
use thiserror::Error;

pub use pabt::{
    backchain_ppa, pabt_run, Conflict, ConflictRecord, ExpansionRecord, Outcome, Perturbation, PlanConfig, PlanRun,
    PlannedTree, Refinement, TickRecord,
};
pub use world::{ActionTemplate, Binding, Domain, Fluent, Precondition, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no action template achieves {0}")]
    NoAchiever(String),
    #[error("no valid grounding for {0}")]
    NoValidGrounding(String),
    #[error("unknown or non-ground node {0}")]
    UnknownNode(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("the goal must contain at least one condition")]
    EmptyGoal,
    #[error(transparent)]
    Tick(#[from] TickError),
}
