//! Behavior tree data model: statuses, node kinds and structural validation.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Result of ticking a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
    Running,
}

impl Status {
    pub fn invert(self) -> Status {
        match self {
            Status::Success => Status::Failure,
            Status::Failure => Status::Success,
            Status::Running => Status::Running,
        }
    }

    pub fn is_done(self) -> bool {
        self != Status::Running
    }

    pub const ALL: [Status; 3] = [Status::Success, Status::Failure, Status::Running];
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Success => "Success",
            Status::Failure => "Failure",
            Status::Running => "Running",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecoratorPolicy {
    Invert,
    /// Fails without ticking the child once the child has failed `n` times since the last reset.
    MaxNTries(u32),
    /// Fails without ticking the child once it has been running longer than the given seconds.
    MaxTSeconds(f64),
    /// A rule registered by name in the execution context.
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Parallel(usize),
    SequenceMemory,
    FallbackMemory,
    Decorator(DecoratorPolicy),
    Action(String),
    Condition(String),
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Action(_) | NodeKind::Condition(_))
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, NodeKind::SequenceMemory | NodeKind::FallbackMemory)
    }
}

/// A behavior tree node. An empty `id` means "identify me by my path from the root".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BTNode {
    pub id: String,
    pub kind: NodeKind,
    pub children: Vec<BTNode>,
}

impl BTNode {
    pub fn new(kind: NodeKind, children: Vec<BTNode>) -> Self {
        BTNode { id: String::new(), kind, children }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Name of the behavior or predicate for leaves.
    pub fn leaf_name(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Action(n) | NodeKind::Condition(n) => Some(n),
            _ => None,
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(BTNode::size).sum::<usize>()
    }

    /// Leaves in depth-first, left-to-right order.
    pub fn leaves(&self) -> Vec<&BTNode> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a BTNode, out: &mut Vec<&'a BTNode>) {
            if n.kind.is_leaf() {
                out.push(n);
            }
            for c in &n.children {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Fills every empty id with the node's path, e.g. `r`, `r.0`, `r.0.2`.
    pub fn assign_path_ids(&mut self) {
        fn go(n: &mut BTNode, path: String) {
            if n.id.is_empty() {
                n.id = path.clone();
            }
            for (i, c) in n.children.iter_mut().enumerate() {
                go(c, format!("{path}.{i}"));
            }
        }
        go(self, "r".to_string());
    }

    pub fn find(&self, id: &str) -> Option<&BTNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

pub fn sequence(children: Vec<BTNode>) -> BTNode {
    BTNode::new(NodeKind::Sequence, children)
}

pub fn fallback(children: Vec<BTNode>) -> BTNode {
    BTNode::new(NodeKind::Fallback, children)
}

pub fn parallel(m: usize, children: Vec<BTNode>) -> BTNode {
    BTNode::new(NodeKind::Parallel(m), children)
}

pub fn sequence_memory(children: Vec<BTNode>) -> BTNode {
    BTNode::new(NodeKind::SequenceMemory, children)
}

pub fn fallback_memory(children: Vec<BTNode>) -> BTNode {
    BTNode::new(NodeKind::FallbackMemory, children)
}

pub fn decorator(policy: DecoratorPolicy, child: BTNode) -> BTNode {
    BTNode::new(NodeKind::Decorator(policy), vec![child])
}

pub fn invert(child: BTNode) -> BTNode {
    decorator(DecoratorPolicy::Invert, child)
}

pub fn action(name: impl Into<String>) -> BTNode {
    BTNode::new(NodeKind::Action(name.into()), vec![])
}

pub fn condition(name: impl Into<String>) -> BTNode {
    BTNode::new(NodeKind::Condition(name.into()), vec![])
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    EmptyControlNode,
    LeafWithChildren,
    DecoratorArity(usize),
    ParallelThreshold { m: usize, n: usize },
    DuplicateId,
    EmptyLeafName,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match &self.rule {
            Rule::EmptyControlNode => "control node has no children".to_string(),
            Rule::LeafWithChildren => "leaf node has children".to_string(),
            Rule::DecoratorArity(n) => format!("decorator must have exactly one child, found {n}"),
            Rule::ParallelThreshold { m, n } => format!("parallel threshold {m} outside 1..={n}"),
            Rule::DuplicateId => "duplicate node id".to_string(),
            Rule::EmptyLeafName => "leaf has an empty name".to_string(),
        };
        write!(f, "node {}: {}", self.node, msg)
    }
}

/// Checks the structural invariants; an empty list means the tree is well formed.
pub fn validate(tree: &BTNode) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    fn go(n: &BTNode, path: String, seen: &mut HashSet<String>, out: &mut Vec<Violation>) {
        let name = if n.id.is_empty() { path.clone() } else { n.id.clone() };
        let mut push = |rule| out.push(Violation { node: name.clone(), rule });
        if !n.id.is_empty() && !seen.insert(n.id.clone()) {
            push(Rule::DuplicateId);
        }
        match &n.kind {
            NodeKind::Action(b) | NodeKind::Condition(b) => {
                if !n.children.is_empty() {
                    push(Rule::LeafWithChildren);
                }
                if b.is_empty() {
                    push(Rule::EmptyLeafName);
                }
            }
            NodeKind::Decorator(_) => {
                if n.children.len() != 1 {
                    push(Rule::DecoratorArity(n.children.len()));
                }
            }
            NodeKind::Parallel(m) => {
                if n.children.is_empty() {
                    push(Rule::EmptyControlNode);
                }
                if *m < 1 || *m > n.children.len() {
                    push(Rule::ParallelThreshold { m: *m, n: n.children.len() });
                }
            }
            _ => {
                if n.children.is_empty() {
                    push(Rule::EmptyControlNode);
                }
            }
        }
        for (i, c) in n.children.iter().enumerate() {
            go(c, format!("{path}.{i}"), seen, out);
        }
    }
    go(tree, "r".to_string(), &mut seen, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_threshold_above_arity_is_reported() {
        let t = parallel(3, vec![action("a"), action("b")]);
        let v = validate(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::ParallelThreshold { m: 3, n: 2 });
    }

    #[test]
    fn action_with_child_is_reported() {
        let mut a = action("a");
        a.children.push(condition("c"));
        let v = validate(&a);
        assert_eq!(v[0].rule, Rule::LeafWithChildren);
    }

    #[test]
    fn pacman_style_tree_is_valid() {
        let t = fallback(vec![
            sequence(vec![condition("GhostClose"), action("AvoidGhost")]),
            action("EatPills"),
        ]);
        assert!(validate(&t).is_empty());
    }

    #[test]
    fn duplicate_ids_are_reported() {
        let t = sequence(vec![action("a").with_id("x"), action("b").with_id("x")]);
        assert_eq!(validate(&t)[0].rule, Rule::DuplicateId);
    }

    #[test]
    fn path_ids_fill_gaps() {
        let mut t = sequence(vec![action("a"), fallback(vec![condition("c")]).with_id("f")]);
        t.assign_path_ids();
        assert_eq!(t.id, "r");
        assert_eq!(t.children[0].id, "r.0");
        assert_eq!(t.children[1].id, "f");
        assert_eq!(t.children[1].children[0].id, "r.1.0");
    }
}
