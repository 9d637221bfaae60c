//! Marking reachability graphs of Sequence, Fallback and Parallel nodes.

use serde::Serialize;
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeType {
    Sequence,
    Fallback,
    Parallel(usize),
}

/// Outcome vector of the children: -1 failed, 0 pending, +1 succeeded.
pub type Marking = Vec<i8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateClass {
    Transient,
    Failure,
    Success,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub child: usize,
    /// +1 for a success event, -1 for a failure event.
    pub outcome: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mrg {
    pub node: NodeType,
    pub n: usize,
    /// Canonical order: transient markings (the zero marking first), then failure, then success.
    pub markings: Vec<Marking>,
    pub class: Vec<StateClass>,
    pub edges: Vec<Edge>,
}

impl Mrg {
    pub fn count(&self, c: StateClass) -> usize {
        self.class.iter().filter(|k| **k == c).count()
    }

    pub fn out_edges(&self, i: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == i)
    }

    /// Children that may resolve next in marking `i`.
    pub fn feasible(&self, i: usize) -> Vec<usize> {
        feasible(self.node, &self.markings[i])
    }
}

pub fn classify(node: NodeType, m: &[i8]) -> StateClass {
    let n = m.len();
    let succ = m.iter().filter(|v| **v == 1).count();
    let fail = m.iter().filter(|v| **v == -1).count();
    match node {
        NodeType::Sequence => {
            if fail > 0 {
                StateClass::Failure
            } else if succ == n {
                StateClass::Success
            } else {
                StateClass::Transient
            }
        }
        NodeType::Fallback => {
            if succ > 0 {
                StateClass::Success
            } else if fail == n {
                StateClass::Failure
            } else {
                StateClass::Transient
            }
        }
        NodeType::Parallel(k) => {
            if succ >= k {
                StateClass::Success
            } else if fail > n - k {
                StateClass::Failure
            } else {
                StateClass::Transient
            }
        }
    }
}

/// Children allowed to resolve from marking `m`; empty for absorbing markings.
pub fn feasible(node: NodeType, m: &[i8]) -> Vec<usize> {
    if classify(node, m) != StateClass::Transient {
        return vec![];
    }
    match node {
        NodeType::Sequence | NodeType::Fallback => {
            let need = if node == NodeType::Sequence { 1 } else { -1 };
            match m.iter().position(|v| *v == 0) {
                Some(h) if m[..h].iter().all(|v| *v == need) => vec![h],
                _ => vec![],
            }
        }
        NodeType::Parallel(_) => (0..m.len()).filter(|&h| m[h] == 0).collect(),
    }
}

/// All markings reachable from the zero marking through feasible events.
pub fn build_mrg(node: NodeType, n: usize) -> Mrg {
    assert!(n >= 1, "a node needs at least one child");
    if let NodeType::Parallel(k) = node {
        assert!(k >= 1 && k <= n, "parallel threshold out of range");
    }
    let start: Marking = vec![0; n];
    let mut index: HashMap<Marking, usize> = HashMap::new();
    let mut found: Vec<Marking> = vec![start.clone()];
    index.insert(start.clone(), 0);
    let mut raw_edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let m = found[i].clone();
        for h in feasible(node, &m) {
            for outcome in [1i8, -1] {
                let mut next = m.clone();
                next[h] = outcome;
                let j = *index.entry(next.clone()).or_insert_with(|| {
                    found.push(next.clone());
                    queue.push_back(found.len() - 1);
                    found.len() - 1
                });
                raw_edges.push((i, j, h, outcome));
            }
        }
    }
    let classes: Vec<StateClass> = found.iter().map(|m| classify(node, m)).collect();
    let mut order: Vec<usize> = (0..found.len()).collect();
    let rank = |c: StateClass| match c {
        StateClass::Transient => 0,
        StateClass::Failure => 1,
        StateClass::Success => 2,
    };
    order.sort_by_key(|&i| (rank(classes[i]), i));
    let mut new_pos = vec![0; found.len()];
    for (pos, &old) in order.iter().enumerate() {
        new_pos[old] = pos;
    }
    let mut edges: Vec<Edge> = raw_edges
        .into_iter()
        .map(|(i, j, h, o)| Edge { from: new_pos[i], to: new_pos[j], child: h, outcome: o })
        .collect();
    edges.sort_by_key(|e| (e.from, e.child, -e.outcome));
    Mrg {
        node,
        n,
        markings: order.iter().map(|&i| found[i].clone()).collect(),
        class: order.iter().map(|&i| classes[i]).collect(),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_of_two() {
        let g = build_mrg(NodeType::Sequence, 2);
        assert_eq!(g.markings.len(), 5);
        assert_eq!(g.count(StateClass::Transient), 2);
        assert_eq!(g.count(StateClass::Failure), 2);
        assert_eq!(g.count(StateClass::Success), 1);
        assert_eq!(g.markings[0], vec![0, 0]);
    }

    #[test]
    fn fallback_of_three() {
        let g = build_mrg(NodeType::Fallback, 3);
        assert_eq!(g.markings.len(), 7);
        assert_eq!(g.count(StateClass::Transient), 3);
        assert_eq!(g.count(StateClass::Success), 3);
        assert_eq!(g.count(StateClass::Failure), 1);
    }

    #[test]
    fn parallel_all_must_succeed() {
        let g = build_mrg(NodeType::Parallel(2), 2);
        let succ: Vec<_> = g.markings.iter().zip(&g.class).filter(|(_, c)| **c == StateClass::Success).map(|(m, _)| m.clone()).collect();
        assert_eq!(succ, vec![vec![1, 1]]);
        for (m, c) in g.markings.iter().zip(&g.class) {
            if m.contains(&-1) {
                assert_eq!(*c, StateClass::Failure);
            }
        }
    }

    #[test]
    fn absorbing_markings_have_no_out_edges() {
        for node in [NodeType::Sequence, NodeType::Fallback, NodeType::Parallel(2)] {
            let g = build_mrg(node, 3);
            for (i, c) in g.class.iter().enumerate() {
                if *c != StateClass::Transient {
                    assert_eq!(g.out_edges(i).count(), 0);
                }
            }
        }
    }
}
