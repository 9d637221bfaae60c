//! Tick engine.
//!
//! `tick` walks the tree once from the root. Runtime state (memory of memory nodes,
//! decorator counters and timers, the set of running leaves) lives in the
//! [`ExecutionContext`], keyed by node id or, for nodes without an id, by path.
//!
//! Leaves whose behavior name starts with `bb:` are built-in blackboard leaves:
//! `bb:is:KEY` (condition, Success iff KEY is truthy), `bb:set:KEY` and
//! `bb:clear:PREFIX` (actions, always Success). `bb:clear:` removes every key equal
//! to PREFIX followed by ASCII digits only.

use crate::tree::{BTNode, DecoratorPolicy, NodeKind, Status};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TickError {
    #[error("no driver registered for leaf `{0}`")]
    UnknownLeafId(String),
    #[error("malformed tree at {0}")]
    MalformedTree(String),
    #[error("condition `{0}` returned Running")]
    ConditionReturnedRunning(String),
    #[error("no custom decorator rule named `{0}`")]
    UnknownDecorator(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn truthy(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Text(s) => !s.is_empty(),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}
impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}
impl From<f64> for Value {
    fn from(f: f64) -> Self {
        Value::Float(f)
    }
}
impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}
impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

pub type Blackboard = BTreeMap<String, Value>;

pub trait Clock: Send {
    /// Current time in seconds.
    fn now(&self) -> f64;
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Manually advanced clock; clones share the same time.
#[derive(Clone, Default)]
pub struct FakeClock(Arc<AtomicU64>);

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn set(&self, t: f64) {
        self.0.store(t.to_bits(), Ordering::SeqCst);
    }
    pub fn advance(&self, dt: f64) {
        self.set(self.now() + dt);
    }
}

impl Clock for FakeClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::SeqCst))
    }
}

type ActionFn = Box<dyn FnMut(&mut Blackboard) -> Status + Send>;
type ConditionFn = Box<dyn FnMut(&Blackboard) -> Status + Send>;
type HaltFn = Box<dyn FnMut(&mut Blackboard) + Send>;
type RuleFn = Box<dyn FnMut(Status) -> Status + Send>;

/// One leaf evaluation within a tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafTick {
    pub node: String,
    pub behavior: String,
    pub status: Status,
}

#[derive(Default)]
struct Runtime {
    memory: HashMap<String, Vec<Option<Status>>>,
    failures: HashMap<String, u32>,
    timers: HashMap<String, (f64, u64)>,
    running: HashMap<String, String>,
}

pub struct ExecutionContext {
    pub blackboard: Blackboard,
    actions: HashMap<String, ActionFn>,
    conditions: HashMap<String, ConditionFn>,
    halts: HashMap<String, HaltFn>,
    rules: HashMap<String, RuleFn>,
    clock: Box<dyn Clock>,
    rt: Runtime,
    /// Number of completed root ticks.
    pub tick_count: u64,
    /// Leaves evaluated during the most recent tick, in evaluation order.
    pub trace: Vec<LeafTick>,
    /// Leaves halted after the most recent tick, as (node key, behavior).
    pub halted: Vec<(String, String)>,
    ticked_now: HashSet<String>,
    running_now: HashMap<String, String>,
}

impl Default for ExecutionContext {
    fn default() -> Self {
        Self::new()
    }
}

impl ExecutionContext {
    pub fn new() -> Self {
        Self::with_clock(Box::new(SystemClock::default()))
    }

    pub fn with_clock(clock: Box<dyn Clock>) -> Self {
        ExecutionContext {
            blackboard: Blackboard::new(),
            actions: HashMap::new(),
            conditions: HashMap::new(),
            halts: HashMap::new(),
            rules: HashMap::new(),
            clock,
            rt: Runtime::default(),
            tick_count: 0,
            trace: Vec::new(),
            halted: Vec::new(),
            ticked_now: HashSet::new(),
            running_now: HashMap::new(),
        }
    }

    pub fn register_action<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: FnMut(&mut Blackboard) -> Status + Send + 'static,
    {
        self.actions.insert(name.into(), Box::new(f));
    }

    pub fn register_condition<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: FnMut(&Blackboard) -> Status + Send + 'static,
    {
        self.conditions.insert(name.into(), Box::new(f));
    }

    /// Convenience for boolean predicates.
    pub fn register_predicate<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: Fn(&Blackboard) -> bool + Send + 'static,
    {
        self.register_condition(name, move |bb| if f(bb) { Status::Success } else { Status::Failure });
    }

    pub fn register_halt<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: FnMut(&mut Blackboard) + Send + 'static,
    {
        self.halts.insert(name.into(), Box::new(f));
    }

    pub fn register_rule<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: FnMut(Status) -> Status + Send + 'static,
    {
        self.rules.insert(name.into(), Box::new(f));
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    /// Remembered child statuses of the memory node with the given key, if any.
    pub fn memory_of(&self, key: &str) -> Option<&[Option<Status>]> {
        self.rt.memory.get(key).map(|v| v.as_slice())
    }

    /// Keys and behaviors of the leaves that returned Running in the last tick.
    pub fn running_leaves(&self) -> Vec<(String, String)> {
        let mut v: Vec<_> = self.rt.running.iter().map(|(k, b)| (k.clone(), b.clone())).collect();
        v.sort();
        v
    }

    fn halt_leaf(&mut self, key: String, behavior: String) {
        if let Some(h) = self.halts.get_mut(&behavior) {
            h(&mut self.blackboard);
        }
        self.halted.push((key, behavior));
    }
}

/// Ticks the tree once from the root and returns the root status.
pub fn tick(tree: &BTNode, ctx: &mut ExecutionContext) -> Result<Status, TickError> {
    ctx.trace.clear();
    ctx.halted.clear();
    ctx.ticked_now.clear();
    ctx.running_now.clear();
    ctx.tick_count += 1;
    let root_key = key_of(tree, "r");
    let result = tick_node(tree, root_key, ctx);
    let prev = std::mem::take(&mut ctx.rt.running);
    let mut stale: Vec<(String, String)> =
        prev.into_iter().filter(|(k, _)| !ctx.ticked_now.contains(k)).collect();
    stale.sort();
    for (k, b) in stale {
        ctx.halt_leaf(k, b);
    }
    ctx.rt.running = std::mem::take(&mut ctx.running_now);
    result
}

/// Clears memory, decorator counters and timers, halting any running leaves.
pub fn reset(_tree: &BTNode, ctx: &mut ExecutionContext) {
    ctx.halted.clear();
    let mut running: Vec<_> = std::mem::take(&mut ctx.rt.running).into_iter().collect();
    running.sort();
    for (k, b) in running {
        ctx.halt_leaf(k, b);
    }
    ctx.rt = Runtime::default();
}

fn key_of(node: &BTNode, path: &str) -> String {
    if node.id.is_empty() {
        path.to_string()
    } else {
        node.id.clone()
    }
}

fn child_key(node: &BTNode, parent_path: &str, i: usize) -> (String, String) {
    let path = format!("{parent_path}.{i}");
    (key_of(&node.children[i], &path), path)
}

fn tick_node(node: &BTNode, path: String, ctx: &mut ExecutionContext) -> Result<Status, TickError> {
    let key = key_of(node, &path);
    let n = node.children.len();
    match &node.kind {
        NodeKind::Sequence => {
            for i in 0..n {
                let s = tick_child(node, &path, i, ctx)?;
                if s != Status::Success {
                    return Ok(s);
                }
            }
            Ok(Status::Success)
        }
        NodeKind::Fallback => {
            for i in 0..n {
                let s = tick_child(node, &path, i, ctx)?;
                if s != Status::Failure {
                    return Ok(s);
                }
            }
            Ok(Status::Failure)
        }
        NodeKind::Parallel(m) => {
            if *m < 1 || *m > n {
                return Err(TickError::MalformedTree(key));
            }
            let (mut succ, mut fail) = (0, 0);
            for i in 0..n {
                match tick_child(node, &path, i, ctx)? {
                    Status::Success => succ += 1,
                    Status::Failure => fail += 1,
                    Status::Running => {}
                }
            }
            Ok(if succ >= *m {
                Status::Success
            } else if fail > n - m {
                Status::Failure
            } else {
                Status::Running
            })
        }
        NodeKind::SequenceMemory | NodeKind::FallbackMemory => {
            if n == 0 {
                return Err(TickError::MalformedTree(key));
            }
            let (pass, stop) = if node.kind == NodeKind::SequenceMemory {
                (Status::Success, Status::Failure)
            } else {
                (Status::Failure, Status::Success)
            };
            let mut mem = ctx.rt.memory.remove(&key).unwrap_or_else(|| vec![None; n]);
            mem.resize(n, None);
            for i in 0..n {
                if mem[i].is_some() {
                    continue;
                }
                let s = match tick_child(node, &path, i, ctx) {
                    Ok(s) => s,
                    Err(e) => {
                        ctx.rt.memory.insert(key, mem);
                        return Err(e);
                    }
                };
                if s == pass {
                    mem[i] = Some(s);
                } else if s == stop {
                    return Ok(stop);
                } else {
                    ctx.rt.memory.insert(key, mem);
                    return Ok(Status::Running);
                }
            }
            Ok(pass)
        }
        NodeKind::Decorator(policy) => {
            if n != 1 {
                return Err(TickError::MalformedTree(key));
            }
            match policy {
                DecoratorPolicy::Invert => Ok(tick_child(node, &path, 0, ctx)?.invert()),
                DecoratorPolicy::MaxNTries(limit) => {
                    let count = ctx.rt.failures.get(&key).copied().unwrap_or(0);
                    if count >= *limit {
                        return Ok(Status::Failure);
                    }
                    let s = tick_child(node, &path, 0, ctx)?;
                    match s {
                        Status::Failure => {
                            ctx.rt.failures.insert(key, count + 1);
                        }
                        Status::Success => {
                            ctx.rt.failures.remove(&key);
                        }
                        Status::Running => {}
                    }
                    Ok(s)
                }
                DecoratorPolicy::MaxTSeconds(limit) => {
                    let now = ctx.clock.now();
                    let tick_no = ctx.tick_count;
                    let start = match ctx.rt.timers.get(&key) {
                        Some(&(start, last)) if last + 1 == tick_no => start,
                        _ => now,
                    };
                    if now - start > *limit {
                        ctx.rt.timers.remove(&key);
                        return Ok(Status::Failure);
                    }
                    let s = tick_child(node, &path, 0, ctx)?;
                    if s == Status::Running {
                        ctx.rt.timers.insert(key, (start, tick_no));
                    } else {
                        ctx.rt.timers.remove(&key);
                    }
                    Ok(s)
                }
                DecoratorPolicy::Custom(name) => {
                    if !ctx.rules.contains_key(name) {
                        return Err(TickError::UnknownDecorator(name.clone()));
                    }
                    let s = tick_child(node, &path, 0, ctx)?;
                    let rule = ctx.rules.get_mut(name).expect("checked above");
                    Ok(rule(s))
                }
            }
        }
        NodeKind::Action(b) => {
            if n != 0 {
                return Err(TickError::MalformedTree(key));
            }
            let s = run_action(b, ctx)?;
            record(ctx, key, b, s);
            Ok(s)
        }
        NodeKind::Condition(b) => {
            if n != 0 {
                return Err(TickError::MalformedTree(key));
            }
            let s = run_condition(b, ctx)?;
            record(ctx, key, b, s);
            Ok(s)
        }
    }
}

fn tick_child(node: &BTNode, path: &str, i: usize, ctx: &mut ExecutionContext) -> Result<Status, TickError> {
    let (_, p) = child_key(node, path, i);
    tick_node(&node.children[i], p, ctx)
}

fn record(ctx: &mut ExecutionContext, key: String, behavior: &str, s: Status) {
    ctx.ticked_now.insert(key.clone());
    if s == Status::Running {
        ctx.running_now.insert(key.clone(), behavior.to_string());
    }
    ctx.trace.push(LeafTick { node: key, behavior: behavior.to_string(), status: s });
}

fn run_action(b: &str, ctx: &mut ExecutionContext) -> Result<Status, TickError> {
    if let Some(k) = b.strip_prefix("bb:set:") {
        ctx.blackboard.insert(k.to_string(), Value::Bool(true));
        return Ok(Status::Success);
    }
    if let Some(prefix) = b.strip_prefix("bb:clear:") {
        ctx.blackboard.retain(|k, _| match k.strip_prefix(prefix) {
            Some(rest) => rest.is_empty() || !rest.bytes().all(|c| c.is_ascii_digit()),
            None => true,
        });
        return Ok(Status::Success);
    }
    match ctx.actions.get_mut(b) {
        Some(f) => Ok(f(&mut ctx.blackboard)),
        None => Err(TickError::UnknownLeafId(b.to_string())),
    }
}

fn run_condition(b: &str, ctx: &mut ExecutionContext) -> Result<Status, TickError> {
    if let Some(k) = b.strip_prefix("bb:is:") {
        let on = ctx.blackboard.get(k).map(Value::truthy).unwrap_or(false);
        return Ok(if on { Status::Success } else { Status::Failure });
    }
    let s = match ctx.conditions.get_mut(b) {
        Some(f) => f(&ctx.blackboard),
        None => return Err(TickError::UnknownLeafId(b.to_string())),
    };
    if s == Status::Running {
        return Err(TickError::ConditionReturnedRunning(b.to_string()));
    }
    Ok(s)
}
