//! Behavior trees: a tick engine with exact classical semantics, state-space
//! verification of compositions, Markov reliability analysis, PA-BT planning and
//! converters from other control architectures.

pub mod converters;
pub mod engine;
pub mod format;
pub mod memory;
pub mod planner;
pub mod reliability;
pub mod statespace;
pub mod tree;

pub use engine::{reset, tick, ExecutionContext, FakeClock, TickError, Value};
pub use memory::emulate_memory;
pub use tree::{BTNode, DecoratorPolicy, NodeKind, Status};
