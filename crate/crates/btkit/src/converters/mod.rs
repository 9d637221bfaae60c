//! Behavior trees built from other control architectures: decision trees,
//! subsumption stacks, teleo-reactive programs, finite state machines and
//! families of controllers with known regions of attraction.
//!
//! Converted trees use only Fallback, Sequence, Condition and Action nodes. The
//! helpers [`durative_step`], [`subsumption_step`] and [`fsm_context`] bind the leaf
//! behaviors each construction assumes.

use crate::engine::{tick, ExecutionContext, TickError, Value};
use crate::statespace::{Predicate, RegionSpec, SampledDomain, StateSpaceBT};
use crate::tree::{action, condition, fallback, sequence, BTNode, NodeKind, Status};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvertError {
    #[error("state machine is nondeterministic: {0}")]
    NondeterministicFSM(String),
    #[error("no remaining controller has its goal region inside the accumulated region (placed {placed:?}, left {leftover:?})")]
    NoProgress { placed: Vec<String>, leftover: Vec<String> },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error(transparent)]
    Tick(#[from] TickError),
}

// ---------------------------------------------------------------- decision trees

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecisionTree {
    Action(String),
    Predicate { name: String, yes: Box<DecisionTree>, no: Box<DecisionTree> },
}

impl DecisionTree {
    pub fn leaf(name: &str) -> Self {
        DecisionTree::Action(name.into())
    }

    pub fn ask(name: &str, yes: DecisionTree, no: DecisionTree) -> Self {
        DecisionTree::Predicate { name: name.into(), yes: Box::new(yes), no: Box::new(no) }
    }

    /// Action reached for the given predicate values (missing ones read as false).
    pub fn decide(&self, values: &BTreeMap<String, bool>) -> &str {
        match self {
            DecisionTree::Action(a) => a,
            DecisionTree::Predicate { name, yes, no } => {
                if values.get(name).copied().unwrap_or(false) {
                    yes.decide(values)
                } else {
                    no.decide(values)
                }
            }
        }
    }

    /// Distinct predicate names in first-visit order.
    pub fn predicates(&self) -> Vec<String> {
        fn go(t: &DecisionTree, out: &mut Vec<String>) {
            if let DecisionTree::Predicate { name, yes, no } = t {
                if !out.contains(name) {
                    out.push(name.clone());
                }
                go(yes, out);
                go(no, out);
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

/// A robot deciding between charging, handling an object and searching.
pub fn example_robot_dt() -> DecisionTree {
    use DecisionTree as D;
    D::ask(
        "BatteryLow",
        D::leaf("GoCharge"),
        D::ask(
            "ObjectFound",
            D::ask("ObjectGrasped", D::leaf("PlaceObject"), D::leaf("GraspObject")),
            D::ask("HumanNearby", D::leaf("AskForHelp"), D::leaf("SearchObject")),
        ),
    )
}

/// Each predicate node becomes `Fallback(Sequence(P, yes), no)`.
pub fn dt_to_bt(dt: &DecisionTree) -> BTNode {
    match dt {
        DecisionTree::Action(a) => action(a.clone()),
        DecisionTree::Predicate { name, yes, no } => {
            fallback(vec![sequence(vec![condition(name.clone()), dt_to_bt(yes)]), dt_to_bt(no)])
        }
    }
}

/// Ticks `tree` once with conditions read from `values` (absent means false) and
/// every action returning Running. Returns the action that ran, if any.
pub fn durative_step(tree: &BTNode, values: &BTreeMap<String, bool>) -> Result<Option<String>, TickError> {
    let mut ctx = ExecutionContext::new();
    let ran = Arc::new(Mutex::new(None));
    for leaf in tree.leaves() {
        let name = leaf.leaf_name().unwrap_or_default().to_string();
        match leaf.kind {
            NodeKind::Condition(_) => {
                let v = values.get(&name).copied().unwrap_or(false);
                ctx.register_predicate(name, move |_| v);
            }
            NodeKind::Action(_) => {
                let (r, n) = (Arc::clone(&ran), name.clone());
                ctx.register_action(name, move |_| {
                    *r.lock().expect("leaf log") = Some(n.clone());
                    Status::Running
                });
            }
            _ => {}
        }
    }
    tick(tree, &mut ctx)?;
    let out = ran.lock().expect("leaf log").clone();
    Ok(out)
}

// ---------------------------------------------------------------- subsumption

/// Controller names from highest to lowest priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsumptionStack {
    pub controllers: Vec<String>,
}

impl SubsumptionStack {
    pub fn new(names: &[&str]) -> Self {
        SubsumptionStack { controllers: names.iter().map(|s| s.to_string()).collect() }
    }

    /// The highest-priority controller that wants to run.
    pub fn arbitrate(&self, wants: &BTreeMap<String, bool>) -> Option<&str> {
        self.controllers.iter().find(|c| wants.get(*c).copied().unwrap_or(false)).map(String::as_str)
    }
}

/// Stop if overheated, else recharge if needed, else do other tasks.
pub fn example_subsumption() -> SubsumptionStack {
    SubsumptionStack::new(&["StopIfOverheated", "RechargeIfNeeded", "DoOtherTasks"])
}

/// Fallback of controller actions in priority order. Each action is expected to
/// return Running while its controller wants control and Failure otherwise.
pub fn subsumption_to_bt(stack: &SubsumptionStack) -> Result<BTNode, ConvertError> {
    match stack.controllers.as_slice() {
        [] => Err(ConvertError::Empty("subsumption stack")),
        [one] => Ok(action(one.clone())),
        many => Ok(fallback(many.iter().map(|c| action(c.clone())).collect())),
    }
}

/// Ticks a converted stack once where each controller action returns the given
/// status (absent means Failure). Returns the root status and the action that ran.
pub fn subsumption_step(tree: &BTNode, statuses: &BTreeMap<String, Status>) -> Result<(Status, Option<String>), TickError> {
    let mut ctx = ExecutionContext::new();
    let ran = Arc::new(Mutex::new(None));
    for leaf in tree.leaves() {
        let name = leaf.leaf_name().unwrap_or_default().to_string();
        let s = statuses.get(&name).copied().unwrap_or(Status::Failure);
        let (r, n) = (Arc::clone(&ran), name.clone());
        ctx.register_action(name, move |_| {
            if s == Status::Running {
                *r.lock().expect("leaf log") = Some(n.clone());
            }
            s
        });
    }
    let status = tick(tree, &mut ctx)?;
    let out = ran.lock().expect("leaf log").clone();
    Ok((status, out))
}

// ---------------------------------------------------------------- teleo-reactive

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrRule {
    /// `None` is a catch-all rule.
    pub condition: Option<String>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrProgram {
    pub rules: Vec<TrRule>,
}

impl TrProgram {
    pub fn new(rules: &[(Option<&str>, &str)]) -> Self {
        TrProgram {
            rules: rules
                .iter()
                .map(|(c, a)| TrRule { condition: c.map(String::from), action: a.to_string() })
                .collect(),
        }
    }

    /// Action of the first rule whose condition holds.
    pub fn select(&self, values: &BTreeMap<String, bool>) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| r.condition.as_ref().map_or(true, |c| values.get(c).copied().unwrap_or(false)))
            .map(|r| r.action.as_str())
    }
}

/// Navigate to a location: idle there, drive forward when heading right, else rotate.
pub fn goto_program() -> TrProgram {
    TrProgram::new(&[(Some("Equal(pos,loc)"), "Idle"), (Some("HeadingTowards(loc)"), "GoForwards"), (None, "Rotate")])
}

/// `Fallback(Sequence(c1, a1), ..., Sequence(cm, am))`, with a catch-all rule as a bare action.
pub fn tr_to_bt(tr: &TrProgram) -> Result<BTNode, ConvertError> {
    if tr.rules.is_empty() {
        return Err(ConvertError::Empty("teleo-reactive program"));
    }
    let mut options: Vec<BTNode> = tr
        .rules
        .iter()
        .map(|r| match &r.condition {
            Some(c) => sequence(vec![condition(c.clone()), action(r.action.clone())]),
            None => action(r.action.clone()),
        })
        .collect();
    Ok(if options.len() == 1 { options.pop().expect("one rule") } else { fallback(options) })
}

/// Checks on recorded runs that each rule's action reaches a higher-priority
/// condition without ever leaving its own. Each run is a sequence of condition
/// valuations (one entry per rule, in rule order) observed while the action of the
/// first rule true at step 0 executes.
pub fn stronger_regression_holds(runs: &[Vec<Vec<bool>>]) -> Result<(), RegressionViolation> {
    for (r, run) in runs.iter().enumerate() {
        let Some(first) = run.first() else { continue };
        let Some(i) = first.iter().position(|&b| b) else { continue };
        if i == 0 {
            continue;
        }
        let mut reached = false;
        for (k, v) in run.iter().enumerate().skip(1) {
            if v[..i].iter().any(|&b| b) {
                reached = true;
                break;
            }
            if !v[i] {
                return Err(RegressionViolation { run: r, step: k, rule: i, kind: ViolationKind::LeftOwnCondition });
            }
        }
        if !reached {
            return Err(RegressionViolation { run: r, step: run.len() - 1, rule: i, kind: ViolationKind::NotReached });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    LeftOwnCondition,
    NotReached,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegressionViolation {
    pub run: usize,
    pub step: usize,
    /// Zero-based rule whose action was executing.
    pub rule: usize,
    pub kind: ViolationKind,
}

// ---------------------------------------------------------------- state machines

pub const STATE_KEY: &str = "state";
pub const EVENT_KEY: &str = "event";
pub const ACTION_KEY: &str = "action";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    /// `None` fires unconditionally.
    pub event: Option<String>,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmSpec {
    pub states: Vec<String>,
    pub initial: String,
    pub transitions: Vec<Transition>,
    /// Action executed while in each state.
    pub actions: BTreeMap<String, String>,
}

impl FsmSpec {
    pub fn validate(&self) -> Result<(), ConvertError> {
        if self.states.is_empty() {
            return Err(ConvertError::Empty("state set"));
        }
        let known: BTreeSet<&String> = self.states.iter().collect();
        for s in std::iter::once(&self.initial).chain(self.transitions.iter().flat_map(|t| [&t.from, &t.to])) {
            if !known.contains(s) {
                return Err(ConvertError::UnknownState(s.clone()));
            }
        }
        for (i, a) in self.transitions.iter().enumerate() {
            for b in &self.transitions[i + 1..] {
                let clash = a.from == b.from && (a.event == b.event || a.event.is_none() || b.event.is_none());
                if clash && a.to != b.to {
                    let ev = |t: &Transition| t.event.clone().unwrap_or_else(|| "always".into());
                    return Err(ConvertError::NondeterministicFSM(format!(
                        "{} on {} goes to {} and on {} to {}",
                        a.from,
                        ev(a),
                        a.to,
                        ev(b),
                        b.to
                    )));
                }
            }
        }
        Ok(())
    }

    /// Next state after one step in `state` with the (optional) current event.
    pub fn step(&self, state: &str, event: Option<&str>) -> String {
        self.transitions
            .iter()
            .find(|t| t.from == state && (t.event.is_none() || t.event.as_deref() == event))
            .map(|t| t.to.clone())
            .unwrap_or_else(|| state.to_string())
    }

    pub fn action_of(&self, state: &str) -> Option<&str> {
        self.actions.get(state).map(String::as_str)
    }
}

/// Two states that swap on every step.
pub fn toggle_fsm() -> FsmSpec {
    FsmSpec {
        states: vec!["Off".into(), "On".into()],
        initial: "Off".into(),
        transitions: vec![
            Transition { from: "Off".into(), event: None, to: "On".into() },
            Transition { from: "On".into(), event: None, to: "Off".into() },
        ],
        actions: [("Off", "LightOff"), ("On", "LightOn")].iter().map(|(s, a)| (s.to_string(), a.to_string())).collect(),
    }
}

/// Approach a ball, grasp it and throw it; losing the ball sends the robot back.
pub fn grab_and_throw_fsm() -> FsmSpec {
    let tr = |f: &str, e: &str, t: &str| Transition { from: f.into(), event: Some(e.into()), to: t.into() };
    FsmSpec {
        states: ["Approach", "Grasp", "Throw", "Done"].map(String::from).to_vec(),
        initial: "Approach".into(),
        transitions: vec![
            tr("Approach", "BallClose", "Grasp"),
            tr("Grasp", "BallGrasped", "Throw"),
            tr("Grasp", "BallLost", "Approach"),
            tr("Throw", "BallLost", "Approach"),
            tr("Throw", "BallThrown", "Done"),
        ],
        actions: [("Approach", "ApproachBall"), ("Grasp", "GraspBall"), ("Throw", "ThrowBall"), ("Done", "Idle")]
            .iter()
            .map(|(s, a)| (s.to_string(), a.to_string()))
            .collect(),
    }
}

fn state_condition(s: &str) -> String {
    format!("{STATE_KEY} == {s}")
}

fn transition_action(t: &Transition) -> String {
    match &t.event {
        Some(e) => format!("on {e} goto {}", t.to),
        None => format!("goto {}", t.to),
    }
}

/// Fallback over states; state `s` becomes
/// `Sequence(state == s, action(s), transition updates of s...)`.
pub fn fsm_to_bt(fsm: &FsmSpec) -> Result<BTNode, ConvertError> {
    fsm.validate()?;
    let branches = fsm
        .states
        .iter()
        .map(|s| {
            let mut kids = vec![condition(state_condition(s))];
            if let Some(a) = fsm.action_of(s) {
                kids.push(action(a));
            }
            kids.extend(fsm.transitions.iter().filter(|t| &t.from == s).map(|t| action(transition_action(t))));
            sequence(kids)
        })
        .collect();
    Ok(fallback(branches))
}

/// Context for a converted state machine. The state variable starts at the initial
/// state; state actions record themselves under [`ACTION_KEY`]; a transition update
/// writes the state variable when its event equals the blackboard [`EVENT_KEY`].
/// Determinism makes every update that fires within one state agree.
pub fn fsm_context(fsm: &FsmSpec) -> ExecutionContext {
    let mut ctx = ExecutionContext::new();
    ctx.blackboard.insert(STATE_KEY.into(), fsm.initial.clone().into());
    for s in &fsm.states {
        let want = Value::Text(s.clone());
        ctx.register_predicate(state_condition(s), move |bb| bb.get(STATE_KEY) == Some(&want));
    }
    for a in fsm.actions.values() {
        let name = a.clone();
        ctx.register_action(a.clone(), move |bb| {
            bb.insert(ACTION_KEY.into(), name.clone().into());
            Status::Success
        });
    }
    for t in &fsm.transitions {
        let t2 = t.clone();
        ctx.register_action(transition_action(t), move |bb| {
            if t2.event.as_ref().map_or(true, |e| bb.get(EVENT_KEY) == Some(&Value::Text(e.clone()))) {
                bb.insert(STATE_KEY.into(), t2.to.clone().into());
            }
            Status::Success
        });
    }
    ctx
}

/// Runs the converted tree over an event script, one tick per event, and returns
/// the (state after the tick, action executed) pairs.
pub fn fsm_run(tree: &BTNode, fsm: &FsmSpec, events: &[Option<&str>]) -> Result<Vec<(String, String)>, ConvertError> {
    let mut ctx = fsm_context(fsm);
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        match e {
            Some(e) => ctx.blackboard.insert(EVENT_KEY.into(), (*e).into()),
            None => ctx.blackboard.remove(EVENT_KEY),
        };
        ctx.blackboard.remove(ACTION_KEY);
        tick(tree, &mut ctx)?;
        let text = |k: &str| match ctx.blackboard.get(k) {
            Some(Value::Text(s)) => s.clone(),
            _ => String::new(),
        };
        out.push((text(STATE_KEY), text(ACTION_KEY)));
    }
    Ok(out)
}

// ---------------------------------------------------------------- controller families

#[derive(Clone)]
pub struct Controller {
    pub name: String,
    /// Success region.
    pub goal: Predicate,
    /// Region of attraction.
    pub attraction: Predicate,
}

impl Controller {
    pub fn from_spec(bt: &StateSpaceBT, spec: &RegionSpec) -> Self {
        let att = spec.attraction.clone().unwrap_or_else(|| spec.running.clone());
        Controller { name: bt.name.clone(), goal: spec.success.clone(), attraction: att }
    }
}

impl std::fmt::Debug for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Controller").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub struct ControllerFamily {
    pub controllers: Vec<Controller>,
    /// Index of the controller achieving the overall goal.
    pub goal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BurridgeOrder {
    pub tree: BTNode,
    pub order: Vec<String>,
}

/// Starts from the goal controller and repeatedly appends (in family order) a
/// controller whose goal region lies, on every sample, inside the union of the
/// regions of attraction gathered so far.
pub fn burridge_order(family: &ControllerFamily, domain: &SampledDomain) -> Result<BurridgeOrder, ConvertError> {
    let Some(first) = family.controllers.get(family.goal) else {
        return Err(ConvertError::Empty("controller family"));
    };
    let mut placed = vec![first.clone()];
    let mut rest: Vec<Controller> =
        family.controllers.iter().enumerate().filter(|(i, _)| *i != family.goal).map(|(_, c)| c.clone()).collect();
    let mut covered: Vec<bool> = domain.points.iter().map(|x| (first.attraction)(x)).collect();
    while !rest.is_empty() {
        let next = rest.iter().position(|c| domain.points.iter().zip(&covered).all(|(x, &cov)| cov || !(c.goal)(x)));
        let Some(k) = next else {
            return Err(ConvertError::NoProgress {
                placed: placed.iter().map(|c| c.name.clone()).collect(),
                leftover: rest.iter().map(|c| c.name.clone()).collect(),
            });
        };
        let c = rest.remove(k);
        for (cov, x) in covered.iter_mut().zip(&domain.points) {
            *cov = *cov || (c.attraction)(x);
        }
        placed.push(c);
    }
    let order: Vec<String> = placed.iter().map(|c| c.name.clone()).collect();
    let tree = if order.len() == 1 { action(order[0].clone()) } else { fallback(order.iter().map(|n| action(n.clone())).collect()) };
    Ok(BurridgeOrder { tree, order })
}

/// True when the tree uses only Fallback, Sequence, Condition and Action nodes.
pub fn uses_basic_nodes_only(tree: &BTNode) -> bool {
    matches!(tree.kind, NodeKind::Fallback | NodeKind::Sequence | NodeKind::Condition(_) | NodeKind::Action(_))
        && tree.children.iter().all(uses_basic_nodes_only)
}
