//! Planning and acting with behavior trees: the tree grows by replacing failed
//! conditions with postcondition-precondition-action subtrees while it is executed
//! against a symbolic world.

use super::world::{Binding, Domain, Fluent, Precondition, WorldState};
use super::PlanError;
use crate::engine::{tick, ExecutionContext};
use crate::tree::{BTNode, NodeKind, Status};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

/// One achieving option: a template with its binding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ppa {
    pub template: usize,
    /// Bindings fixed by unifying an effect with the expanded condition.
    pub binding: Binding,
    /// Complete binding chosen by the latest refinement.
    pub refined: Option<Binding>,
    /// Condition leaf this option was expanded from.
    pub source: String,
}

impl Ppa {
    pub fn full(&self) -> &Binding {
        self.refined.as_ref().unwrap_or(&self.binding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondLeaf {
    pub pattern: Fluent,
    /// The option whose precondition this is; `None` for goal conditions.
    pub ppa: Option<usize>,
}

/// A behavior tree whose leaves are bound to fluents and ground actions.
#[derive(Debug, Clone, Serialize)]
pub struct PlannedTree {
    pub root: BTNode,
    pub conditions: BTreeMap<String, CondLeaf>,
    /// Action leaf id to its option.
    pub actions: BTreeMap<String, usize>,
    pub ppas: Vec<Ppa>,
    /// Conditions already expanded, in expansion order.
    pub expanded: Vec<Fluent>,
    next_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conflict {
    pub earlier_action: String,
    pub effect: Fluent,
    pub precondition: Fluent,
}

fn path_to(node: &BTNode, id: &str) -> Option<Vec<usize>> {
    if node.id == id {
        return Some(vec![]);
    }
    for (i, c) in node.children.iter().enumerate() {
        if let Some(mut p) = path_to(c, id) {
            p.insert(0, i);
            return Some(p);
        }
    }
    None
}

fn at_path<'a>(node: &'a BTNode, path: &[usize]) -> &'a BTNode {
    path.iter().fold(node, |n, &i| &n.children[i])
}

fn at_path_mut<'a>(node: &'a mut BTNode, path: &[usize]) -> &'a mut BTNode {
    path.iter().fold(node, |n, &i| &mut n.children[i])
}

fn collect_ids(node: &BTNode, out: &mut Vec<String>) {
    if node.kind.is_leaf() {
        out.push(node.id.clone());
    }
    for c in &node.children {
        collect_ids(c, out);
    }
}

impl PlannedTree {
    /// A single goal is the bare condition; several form a Sequence.
    pub fn new(goal: &[Fluent]) -> Result<Self, PlanError> {
        if goal.is_empty() {
            return Err(PlanError::EmptyGoal);
        }
        let mut t = PlannedTree {
            root: BTNode::new(NodeKind::Sequence, vec![]),
            conditions: BTreeMap::new(),
            actions: BTreeMap::new(),
            ppas: Vec::new(),
            expanded: Vec::new(),
            next_id: 0,
        };
        let mut leaves: Vec<BTNode> = goal.iter().map(|g| t.condition_leaf(g.clone(), None)).collect();
        t.root = if leaves.len() == 1 { leaves.pop().expect("one goal") } else { t.control(NodeKind::Sequence, leaves) };
        Ok(t)
    }

    fn fresh(&mut self, prefix: char) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    fn control(&mut self, kind: NodeKind, children: Vec<BTNode>) -> BTNode {
        let id = self.fresh('n');
        BTNode::new(kind, children).with_id(id)
    }

    fn condition_leaf(&mut self, pattern: Fluent, ppa: Option<usize>) -> BTNode {
        let id = self.fresh('c');
        let label = pattern.to_string();
        self.conditions.insert(id.clone(), CondLeaf { pattern, ppa });
        BTNode::new(NodeKind::Condition(label), vec![]).with_id(id)
    }

    /// Fluent of a condition leaf under the current bindings, if fully ground.
    pub fn condition_fluent(&self, id: &str) -> Option<Fluent> {
        let c = self.conditions.get(id)?;
        let g = match c.ppa {
            Some(p) => c.pattern.substitute(self.ppas[p].full()),
            None => c.pattern.clone(),
        };
        g.is_ground().then_some(g)
    }

    pub fn action_label(&self, id: &str, domain: &Domain) -> Option<String> {
        let p = &self.ppas[*self.actions.get(id)?];
        Some(domain.templates[p.template].label(p.full()))
    }

    /// Refreshes leaf names after bindings changed.
    pub fn relabel(&mut self, domain: &Domain) {
        fn go(n: &mut BTNode, t: &PlannedTree, d: &Domain) {
            match &mut n.kind {
                NodeKind::Condition(name) => {
                    if let Some(c) = t.conditions.get(&n.id) {
                        let b = c.ppa.map(|p| t.ppas[p].full().clone()).unwrap_or_default();
                        *name = c.pattern.substitute(&b).to_string();
                    }
                }
                NodeKind::Action(name) => {
                    if let Some(l) = t.action_label(&n.id, d) {
                        *name = l;
                    }
                }
                _ => {}
            }
            for c in &mut n.children {
                go(c, t, d);
            }
        }
        let mut root = std::mem::replace(&mut self.root, BTNode::new(NodeKind::Sequence, vec![]));
        go(&mut root, self, domain);
        self.root = root;
    }

    /// Replaces the failed condition `cond_id` by `Fallback(c, option...)`, where the
    /// options of several achievers sit under a Fallback with memory. Returns the id of
    /// the new subtree.
    pub fn expand_tree(&mut self, cond_id: &str, domain: &Domain, world: &WorldState) -> Result<String, PlanError> {
        let path = path_to(&self.root, cond_id).ok_or_else(|| PlanError::UnknownNode(cond_id.into()))?;
        let cf = self.condition_fluent(cond_id).ok_or_else(|| PlanError::UnknownNode(cond_id.into()))?;
        let achievers = domain.achievers(&cf, world);
        if achievers.is_empty() {
            return Err(PlanError::NoAchiever(cf.to_string()));
        }
        let statics = domain.static_names();
        let mut options = Vec::new();
        for (ti, b) in achievers {
            let pi = self.ppas.len();
            self.ppas.push(Ppa { template: ti, binding: b, refined: None, source: cond_id.to_string() });
            let template = &domain.templates[ti];
            let mut kids = Vec::new();
            for p in template.con.clone() {
                if domain.is_static(&p, &statics) {
                    continue;
                }
                kids.push(match p {
                    Precondition::Fluent(f) => self.condition_leaf(f, Some(pi)),
                    Precondition::Any(fs) => {
                        let leaves = fs.into_iter().map(|f| self.condition_leaf(f, Some(pi))).collect();
                        self.control(NodeKind::Fallback, leaves)
                    }
                });
            }
            let aid = self.fresh('a');
            self.actions.insert(aid.clone(), pi);
            let label = domain.templates[ti].label(&self.ppas[pi].binding);
            kids.push(BTNode::new(NodeKind::Action(label), vec![]).with_id(aid));
            options.push(if kids.len() == 1 { kids.pop().expect("action") } else { self.control(NodeKind::Sequence, kids) });
        }
        let alt = if options.len() == 1 { options.pop().expect("one option") } else { self.control(NodeKind::FallbackMemory, options) };
        let cf_node = at_path(&self.root, &path).clone();
        let sub = self.control(NodeKind::Fallback, vec![cf_node, alt]);
        let sid = sub.id.clone();
        *at_path_mut(&mut self.root, &path) = sub;
        Ok(sid)
    }

    /// First condition in breadth-first order that failed in the last tick and has
    /// not been expanded yet; it is recorded as expanded.
    pub fn get_condition_to_expand(&mut self, last: &HashMap<String, Status>) -> Option<String> {
        let mut queue = VecDeque::from([&self.root]);
        let mut found = None;
        while let Some(n) = queue.pop_front() {
            if matches!(n.kind, NodeKind::Condition(_)) && last.get(&n.id) == Some(&Status::Failure) {
                if let Some(f) = self.condition_fluent(&n.id) {
                    if !self.expanded.contains(&f) {
                        found = Some((n.id.clone(), f));
                        break;
                    }
                }
            }
            queue.extend(n.children.iter());
        }
        let (id, f) = found?;
        self.expanded.push(f);
        Some(id)
    }

    /// Conditions of the new subtree's actions that are made false by actions that
    /// must succeed before the subtree is ticked: those in left siblings of its
    /// Sequence ancestors.
    pub fn detect_conflict(&self, subtree_id: &str, domain: &Domain) -> Vec<Conflict> {
        let Some(path) = path_to(&self.root, subtree_id) else { return vec![] };
        let sub = at_path(&self.root, &path);
        let mut inside = Vec::new();
        collect_ids(sub, &mut inside);
        let own: HashSet<usize> = inside.iter().filter_map(|id| self.actions.get(id).copied()).collect();
        let pres: Vec<Fluent> = inside
            .iter()
            .filter_map(|id| self.conditions.get(id).map(|c| (id, c)))
            .filter(|(_, c)| c.ppa.is_some_and(|p| own.contains(&p)))
            .map(|(_, c)| c.pattern.substitute(self.ppas[c.ppa.expect("filtered")].full()))
            .collect();
        let mut earlier = Vec::new();
        for depth in 0..path.len() {
            let parent = at_path(&self.root, &path[..depth]);
            if matches!(parent.kind, NodeKind::Sequence | NodeKind::SequenceMemory) {
                for sib in &parent.children[..path[depth]] {
                    collect_ids(sib, &mut earlier);
                }
            }
        }
        let mut out = Vec::new();
        for id in earlier {
            let Some(&p) = self.actions.get(&id) else { continue };
            let ppa = &self.ppas[p];
            let t = &domain.templates[ppa.template];
            let adds: Vec<Fluent> = t.eff.iter().filter(|e| !e.negated).map(|e| e.substitute(ppa.full())).collect();
            for e in &t.eff {
                let e = e.substitute(ppa.full());
                for pre in &pres {
                    if e.negates(pre) && !adds.contains(pre) {
                        out.push(Conflict { earlier_action: t.label(ppa.full()), effect: e.clone(), precondition: pre.clone() });
                    }
                }
            }
        }
        out
    }

    /// Moves the subtree one step left within its Sequence; when it is already
    /// leftmost, lifts it immediately left of the nearest ancestor that is a
    /// Sequence child, leaving its condition behind. Returns false when there is
    /// nowhere left to go.
    pub fn increase_priority(&mut self, subtree_id: &str) -> bool {
        let Some(path) = path_to(&self.root, subtree_id) else { return false };
        if path.is_empty() {
            return false;
        }
        let (ppath, k) = (&path[..path.len() - 1], path[path.len() - 1]);
        let parent = at_path_mut(&mut self.root, ppath);
        if matches!(parent.kind, NodeKind::Sequence | NodeKind::SequenceMemory) && k > 0 {
            parent.children.swap(k - 1, k);
            return true;
        }
        for j in (1..path.len()).rev() {
            let gp = at_path(&self.root, &path[..j - 1]);
            if !matches!(gp.kind, NodeKind::Sequence | NodeKind::SequenceMemory) {
                continue;
            }
            let sub = at_path(&self.root, &path).clone();
            let first = &sub.children[0];
            let leftover = match self.conditions.get(&first.id).cloned() {
                Some(c) => {
                    let label = first.leaf_name().unwrap_or_default().to_string();
                    let id = self.fresh('c');
                    self.conditions.insert(id.clone(), c);
                    BTNode::new(NodeKind::Condition(label), vec![]).with_id(id)
                }
                None => return false,
            };
            *at_path_mut(&mut self.root, &path) = leftover;
            at_path_mut(&mut self.root, &path[..j - 1]).children.insert(path[j - 1], sub);
            return true;
        }
        false
    }

    /// Chooses complete bindings for options with unbound parameters. Among the
    /// completions whose static conditions hold, the winner maximizes the vector of
    /// currently satisfied conditions compared lexicographically in declaration
    /// order, so earlier conditions steer the binding. Ties keep the current choice,
    /// then the first completion in object order.
    pub fn refine_actions(&mut self, domain: &Domain, world: &WorldState) -> Result<Vec<Refinement>, PlanError> {
        let statics = domain.static_names();
        let mut events = Vec::new();
        for i in 0..self.ppas.len() {
            let t = &domain.templates[self.ppas[i].template];
            // Options follow their source condition when a parent option is re-bound.
            if let Some(cf) = self.condition_fluent(&self.ppas[i].source) {
                let rebound = t.eff.iter().find_map(|e| e.unify(&cf, &Binding::new()));
                if let Some(b) = rebound.filter(|b| *b != self.ppas[i].binding) {
                    let from = t.label(self.ppas[i].full());
                    self.ppas[i].binding = b;
                    self.ppas[i].refined = None;
                    let to = t.label(&self.ppas[i].binding);
                    if t.params.iter().all(|p| self.ppas[i].binding.contains_key(p)) {
                        events.push(Refinement { option: i, from: Some(from), to });
                    }
                }
            }
            let ppa = &mut self.ppas[i];
            if t.params.iter().all(|p| ppa.binding.contains_key(p)) {
                continue;
            }
            let mut best: Option<(Vec<bool>, Binding)> = None;
            for cand in domain.completions(t, &ppa.binding) {
                if !t.con.iter().filter(|p| domain.is_static(p, &statics)).all(|p| p.holds(world, &cand)) {
                    continue;
                }
                let score: Vec<bool> = t.con.iter().map(|p| p.holds(world, &cand)).collect();
                let better = match &best {
                    None => true,
                    Some((s, _)) => score > *s || (score == *s && ppa.refined.as_ref() == Some(&cand)),
                };
                if better {
                    best = Some((score, cand));
                }
            }
            let (_, chosen) = best.ok_or_else(|| PlanError::NoValidGrounding(t.label(&ppa.binding)))?;
            if ppa.refined.as_ref() != Some(&chosen) {
                events.push(Refinement { option: i, from: ppa.refined.as_ref().map(|b| t.label(b)), to: t.label(&chosen) });
                ppa.refined = Some(chosen);
            }
        }
        self.relabel(domain);
        Ok(events)
    }

    /// Copy of the tree whose leaf names are the (unique) node ids, for dispatch.
    fn dispatch_tree(&self) -> BTNode {
        fn go(n: &BTNode) -> BTNode {
            let kind = match &n.kind {
                NodeKind::Condition(_) => NodeKind::Condition(n.id.clone()),
                NodeKind::Action(_) => NodeKind::Action(n.id.clone()),
                k => k.clone(),
            };
            BTNode { id: n.id.clone(), kind, children: n.children.iter().map(go).collect() }
        }
        go(&self.root)
    }

    fn labels(&self) -> HashMap<String, String> {
        let mut m = HashMap::new();
        fn go(n: &BTNode, m: &mut HashMap<String, String>) {
            if let Some(l) = n.leaf_name() {
                m.insert(n.id.clone(), l.to_string());
            }
            n.children.iter().for_each(|c| go(c, m));
        }
        go(&self.root, &mut m);
        m
    }

    fn context(&self, domain: &Domain, shared: &Arc<Mutex<Shared>>) -> ExecutionContext {
        let mut ctx = ExecutionContext::new();
        for id in self.conditions.keys() {
            let f = self.condition_fluent(id);
            let s = Arc::clone(shared);
            ctx.register_predicate(id.clone(), move |_| f.as_ref().is_some_and(|f| s.lock().expect("world lock").world.holds(f)));
        }
        for (id, &p) in &self.actions {
            let ppa = &self.ppas[p];
            let t = domain.templates[ppa.template].clone();
            let b = ppa.full().clone();
            let ground = t.params.iter().all(|v| b.contains_key(v));
            let label = t.label(&b);
            let (s, key) = (Arc::clone(shared), id.clone());
            ctx.register_action(id.clone(), move |_| {
                let mut sh = s.lock().expect("world lock");
                if !ground || !t.con.iter().all(|c| c.holds(&sh.world, &b)) {
                    sh.progress.remove(&key);
                    return Status::Failure;
                }
                let done = {
                    let n = sh.progress.entry(key.clone()).or_insert(0);
                    *n += 1;
                    *n >= t.duration
                };
                if !done {
                    return Status::Running;
                }
                sh.progress.remove(&key);
                let eff: Vec<Fluent> = t.eff.iter().map(|e| e.substitute(&b)).collect();
                sh.world.apply(&eff);
                sh.executed.push(label.clone());
                Status::Success
            });
            let (s, key) = (Arc::clone(shared), id.clone());
            ctx.register_halt(id.clone(), move |_| {
                s.lock().expect("world lock").progress.remove(&key);
            });
        }
        ctx
    }
}

struct Shared {
    world: WorldState,
    progress: HashMap<String, u32>,
    executed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub option: usize,
    pub from: Option<String>,
    pub to: String,
}

/// External change applied just before the given (zero-based) tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perturbation {
    pub before_tick: u64,
    pub effects: Vec<Fluent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanConfig {
    /// Expansion rounds, each following a failed tick.
    pub max_iterations: usize,
    pub max_ticks: u64,
    /// Bound on priority increases per expansion.
    pub max_priority_steps: usize,
    pub perturbations: Vec<Perturbation>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { max_iterations: 100, max_ticks: 10_000, max_priority_steps: 64, perturbations: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafStatus {
    pub leaf: String,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickRecord {
    pub tick: u64,
    pub status: Status,
    pub leaves: Vec<LeafStatus>,
    pub halted: Vec<String>,
    pub perturbation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionRecord {
    pub iteration: usize,
    pub after_tick: u64,
    pub condition: String,
    pub subtree: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictRecord {
    pub subtree: String,
    pub conflicts: Vec<Conflict>,
    pub moves: usize,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail")]
pub enum Outcome {
    Success,
    BudgetExhausted,
    CannotExpand(String),
    NoValidGrounding(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanRun {
    pub outcome: Outcome,
    pub tree: PlannedTree,
    pub world: WorldState,
    pub ticks: Vec<TickRecord>,
    pub expansions: Vec<ExpansionRecord>,
    pub refinements: Vec<Refinement>,
    pub conflicts: Vec<ConflictRecord>,
    /// Ground actions in completion order.
    pub executed: Vec<String>,
}

/// Runs the plan-and-act loop until the goal holds, the budget runs out, or a
/// failed condition has no achiever.
pub fn pabt_run(goal: &[Fluent], domain: &Domain, world: WorldState, config: &PlanConfig) -> Result<PlanRun, PlanError> {
    for t in &domain.templates {
        t.validate()?;
    }
    let mut tree = PlannedTree::new(goal)?;
    let shared = Arc::new(Mutex::new(Shared { world, progress: HashMap::new(), executed: Vec::new() }));
    let (mut ticks, mut expansions, mut refinements, mut conflicts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut iteration = 0;
    let mut count = 0u64;
    let outcome = 'outer: loop {
        let snapshot = shared.lock().expect("world lock").world.clone();
        match tree.refine_actions(domain, &snapshot) {
            Ok(ev) => refinements.extend(ev),
            Err(PlanError::NoValidGrounding(l)) => break Outcome::NoValidGrounding(l),
            Err(e) => return Err(e),
        }
        let exec = tree.dispatch_tree();
        let labels = tree.labels();
        let mut ctx = tree.context(domain, &shared);
        loop {
            if count >= config.max_ticks {
                break 'outer Outcome::BudgetExhausted;
            }
            let mut note = None;
            for p in config.perturbations.iter().filter(|p| p.before_tick == count) {
                let mut sh = shared.lock().expect("world lock");
                sh.world.perturb(&p.effects);
                note = sh.world.log.last().cloned();
            }
            let status = tick(&exec, &mut ctx)?;
            ticks.push(TickRecord {
                tick: count,
                status,
                leaves: ctx.trace.iter().map(|l| LeafStatus { leaf: labels[&l.node].clone(), status: l.status }).collect(),
                halted: ctx.halted.iter().map(|(k, _)| labels.get(k).cloned().unwrap_or_else(|| k.clone())).collect(),
                perturbation: note,
            });
            count += 1;
            match status {
                Status::Success => break 'outer Outcome::Success,
                Status::Failure => break,
                Status::Running => {}
            }
        }
        if iteration >= config.max_iterations {
            break Outcome::BudgetExhausted;
        }
        iteration += 1;
        let snapshot = shared.lock().expect("world lock").world.clone();
        match tree.refine_actions(domain, &snapshot) {
            Ok(ev) if !ev.is_empty() => {
                // A stale grounding caused the failure: retry before expanding.
                refinements.extend(ev);
                continue;
            }
            Ok(_) => {}
            Err(PlanError::NoValidGrounding(l)) => break Outcome::NoValidGrounding(l),
            Err(e) => return Err(e),
        }
        let last: HashMap<String, Status> = ctx.trace.iter().map(|l| (l.node.clone(), l.status)).collect();
        let Some(cid) = tree.get_condition_to_expand(&last) else { continue };
        let label = tree.condition_fluent(&cid).map(|f| f.to_string()).unwrap_or_default();
        let snapshot = shared.lock().expect("world lock").world.clone();
        let sub = match tree.expand_tree(&cid, domain, &snapshot) {
            Ok(s) => s,
            Err(PlanError::NoAchiever(f)) => break Outcome::CannotExpand(f),
            Err(e) => return Err(e),
        };
        expansions.push(ExpansionRecord { iteration, after_tick: count, condition: label, subtree: sub.clone() });
        match tree.refine_actions(domain, &snapshot) {
            Ok(ev) => refinements.extend(ev),
            Err(PlanError::NoValidGrounding(l)) => break Outcome::NoValidGrounding(l),
            Err(e) => return Err(e),
        }
        let found = tree.detect_conflict(&sub, domain);
        if !found.is_empty() {
            let mut moves = 0;
            let mut resolved = false;
            while moves < config.max_priority_steps {
                if !tree.increase_priority(&sub) {
                    break;
                }
                moves += 1;
                if tree.detect_conflict(&sub, domain).is_empty() {
                    resolved = true;
                    break;
                }
            }
            conflicts.push(ConflictRecord { subtree: sub, conflicts: found, moves, resolved });
        }
        tree.relabel(domain);
    };
    tree.relabel(domain);
    let sh = Arc::try_unwrap(shared).map(|m| m.into_inner().expect("world lock")).unwrap_or_else(|a| {
        let g = a.lock().expect("world lock");
        Shared { world: g.world.clone(), progress: HashMap::new(), executed: g.executed.clone() }
    });
    Ok(PlanRun { outcome, tree, world: sh.world, ticks, expansions, refinements, conflicts, executed: sh.executed })
}

/// Offline backchaining: every precondition is replaced by its achieving
/// subtree, recursively, up to `depth` levels. Options appear in template order.
pub fn backchain_ppa(goal: &Fluent, domain: &Domain, depth: usize) -> BTNode {
    fn go(c: &Fluent, d: &Domain, depth: usize, seen: &mut Vec<Fluent>) -> BTNode {
        let cond = BTNode::new(NodeKind::Condition(c.to_string()), vec![]);
        if depth == 0 || seen.contains(c) {
            return cond;
        }
        let mut options = Vec::new();
        seen.push(c.clone());
        for t in &d.templates {
            for e in &t.eff {
                let Some(b) = e.unify(c, &Binding::new()) else { continue };
                let mut kids: Vec<BTNode> = t
                    .con
                    .iter()
                    .map(|p| match p {
                        Precondition::Fluent(f) => go(&f.substitute(&b), d, depth - 1, seen),
                        Precondition::Any(fs) => BTNode::new(
                            NodeKind::Fallback,
                            fs.iter().map(|f| go(&f.substitute(&b), d, depth - 1, seen)).collect(),
                        ),
                    })
                    .collect();
                kids.push(BTNode::new(NodeKind::Action(t.label(&b)), vec![]));
                options.push(if kids.len() == 1 { kids.pop().expect("action") } else { BTNode::new(NodeKind::Sequence, kids) });
            }
        }
        seen.pop();
        if options.is_empty() {
            return cond;
        }
        let mut children = vec![cond];
        children.extend(options);
        BTNode::new(NodeKind::Fallback, children)
    }
    go(goal, domain, depth, &mut Vec::new())
}
