//! Bottom-up analysis of a whole tree: every control node is reduced to an
//! equivalent action (outcome probabilities and mean times) for its parent.

use super::markov::{MarkovModel, MeanTimes};
use super::mrg::{NodeType, StateClass};
use super::profile::{LeafProfile, ProfileKind, ProfileSet, Timing};
use super::ReliabilityError;
use crate::tree::{BTNode, NodeKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    pub ps: f64,
    pub pf: f64,
    pub prun: f64,
}

/// Reduced description of one control node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResult {
    pub path: String,
    pub node: NodeType,
    pub ps: f64,
    pub pf: f64,
    pub mtts: Option<f64>,
    pub mttf: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Composition {
    /// Control nodes in post-order; the root comes last.
    pub nodes: Vec<NodeResult>,
    pub root: MarkovModel,
    pub root_mean: MeanTimes,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub mtts: Option<f64>,
    pub mttf: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub ps_inf: f64,
    pub pf_inf: f64,
    pub grid: Vec<GridPoint>,
    pub notes: Vec<String>,
}

struct Walker<'a> {
    profiles: &'a ProfileSet,
    nodes: Vec<NodeResult>,
    saw_condition: bool,
    saw_memory: bool,
    saw_deterministic: bool,
}

impl Walker<'_> {
    fn leaf(&mut self, node: &BTNode) -> Result<Timing, ReliabilityError> {
        let name = node.leaf_name().expect("leaf");
        let p = self.profiles.get(name).ok_or_else(|| ReliabilityError::MissingProfile(name.to_string()))?;
        match p {
            LeafProfile::Condition { .. } => self.saw_condition = true,
            LeafProfile::Action(a) if a.kind == ProfileKind::Deterministic => self.saw_deterministic = true,
            _ => {}
        }
        p.timing()
    }

    fn control(&mut self, node: &BTNode, path: &str) -> Result<(MarkovModel, MeanTimes), ReliabilityError> {
        let kind = match &node.kind {
            NodeKind::Sequence => NodeType::Sequence,
            NodeKind::Fallback => NodeType::Fallback,
            NodeKind::SequenceMemory => {
                self.saw_memory = true;
                NodeType::Sequence
            }
            NodeKind::FallbackMemory => {
                self.saw_memory = true;
                NodeType::Fallback
            }
            NodeKind::Parallel(m) => NodeType::Parallel(*m),
            NodeKind::Decorator(_) => return Err(ReliabilityError::Unsupported("decorators in analyzed trees".into())),
            NodeKind::Action(_) | NodeKind::Condition(_) => unreachable!("leaves handled by caller"),
        };
        if node.children.is_empty() {
            return Err(ReliabilityError::Unsupported(format!("control node {path} without children")));
        }
        if let NodeType::Parallel(m) = kind {
            if m == 0 || m > node.children.len() {
                return Err(ReliabilityError::InvalidArgument(format!("parallel threshold {m} at {path}")));
            }
        }
        let mut timings = Vec::with_capacity(node.children.len());
        for (i, c) in node.children.iter().enumerate() {
            timings.push(self.timing(c, &format!("{path}.{i}"))?);
        }
        let model = MarkovModel::new(kind, &timings)?;
        let mean = model.mean_times();
        self.nodes.push(NodeResult {
            path: path.to_string(),
            node: kind,
            ps: mean.ps_inf,
            pf: mean.pf_inf,
            mtts: mean.mtts,
            mttf: mean.mttf,
        });
        Ok((model, mean))
    }

    fn timing(&mut self, node: &BTNode, path: &str) -> Result<Timing, ReliabilityError> {
        if node.kind.is_leaf() {
            return self.leaf(node);
        }
        let (_, m) = self.control(node, path)?;
        let pf = 1.0 - m.ps_inf;
        // A branch of probability zero never contributes, so its time is immaterial.
        let ts = m.mtts.unwrap_or(1.0);
        let tf = m.mttf.unwrap_or(1.0);
        Ok(Timing { ps: m.ps_inf, pf, ts, tf })
    }
}

/// Reduces every control node bottom-up and keeps the Markov model of the root.
/// A leaf root is analyzed as a one-child Sequence.
pub fn compose_profiles(tree: &BTNode, profiles: &ProfileSet) -> Result<Composition, ReliabilityError> {
    let mut w = Walker { profiles, nodes: Vec::new(), saw_condition: false, saw_memory: false, saw_deterministic: false };
    let (root, root_mean) = if tree.kind.is_leaf() {
        let t = w.leaf(tree)?;
        let model = MarkovModel::new(NodeType::Sequence, &[t])?;
        let mean = model.mean_times();
        (model, mean)
    } else {
        w.control(tree, "r")?
    };
    let mut notes = Vec::new();
    if w.saw_condition {
        notes.push(format!("conditions modeled as instantaneous actions with sojourn {:e}", super::CONDITION_EPSILON));
    }
    if w.saw_memory {
        notes.push("memory nodes analyzed as their memory-less counterparts".into());
    }
    if w.saw_deterministic {
        notes.push("deterministic leaves enter the Markov model through their mean times".into());
    }
    if root_mean.mtts.is_none() {
        notes.push("no success marking is reachable: mtts undefined".into());
    }
    if root_mean.mttf.is_none() {
        notes.push("no failure marking is reachable: mttf undefined".into());
    }
    Ok(Composition { nodes: w.nodes, root, root_mean, notes })
}

/// Root report with outcome probabilities sampled on `grid`.
pub fn analyze(tree: &BTNode, profiles: &ProfileSet, grid: &[f64]) -> Result<ReliabilityReport, ReliabilityError> {
    let c = compose_profiles(tree, profiles)?;
    let pis = c.root.transient(grid)?;
    let grid = grid
        .iter()
        .zip(&pis)
        .map(|(&t, pi)| {
            let (ps, pf) = c.root.absorbed(pi);
            GridPoint { t, ps, pf, prun: (1.0 - ps - pf).max(0.0) }
        })
        .collect();
    let m = c.root_mean;
    Ok(ReliabilityReport {
        mtts: m.mtts,
        mttf: m.mttf,
        mu: m.mu(),
        nu: m.nu(),
        ps_inf: m.ps_inf,
        pf_inf: m.pf_inf,
        grid,
        notes: c.notes,
    })
}

impl Composition {
    /// Probability mass of the root's success and failure markings at time `t`.
    pub fn outcome_at(&self, t: f64) -> Result<(f64, f64), ReliabilityError> {
        let pi = self.root.transient(&[t])?;
        Ok(self.root.absorbed(&pi[0]))
    }

    pub fn root_success_markings(&self) -> usize {
        self.root.mrg.count(StateClass::Success)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::profile::ActionProfile;
    use crate::tree::{action, condition, fallback, sequence};

    fn set(items: &[(&str, LeafProfile)]) -> ProfileSet {
        items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn two_level_tree_matches_path_product() {
        let (pa, pb, pc) = (0.4, 0.7, 0.9);
        let p = set(&[
            ("a", LeafProfile::Action(ActionProfile::stochastic(pa, 1.0, 2.0))),
            ("b", LeafProfile::Action(ActionProfile::stochastic(pb, 0.5, 1.0))),
            ("c", LeafProfile::Action(ActionProfile::stochastic(pc, 0.3, 0.1))),
        ]);
        let t = sequence(vec![fallback(vec![action("a"), action("b")]), action("c")]);
        let c = compose_profiles(&t, &p).unwrap();
        let expect = (1.0 - (1.0 - pa) * (1.0 - pb)) * pc;
        assert!((c.root_mean.ps_inf - expect).abs() < 1e-12);
        assert_eq!(c.nodes.len(), 2);
    }

    #[test]
    fn certain_actions_always_succeed() {
        let p = set(&[("a", LeafProfile::Action(ActionProfile::stochastic(1.0, 1.0, 1.0)))]);
        let r = analyze(&sequence(vec![action("a"), action("a")]), &p, &[0.0, 100.0]).unwrap();
        assert!((r.ps_inf - 1.0).abs() < 1e-15);
        assert_eq!(r.mttf, None);
        assert!(r.grid[1].ps > 0.99);
    }

    #[test]
    fn leaf_root_is_wrapped() {
        let p = set(&[("a", LeafProfile::Action(ActionProfile::stochastic(0.25, 2.0, 4.0)))]);
        let r = analyze(&action("a"), &p, &[]).unwrap();
        assert!((r.mu.unwrap() - 2.0).abs() < 1e-12);
        assert!((r.nu.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn missing_profile_is_reported() {
        let e = compose_profiles(&fallback(vec![condition("x"), action("y")]), &ProfileSet::new()).unwrap_err();
        assert_eq!(e, ReliabilityError::MissingProfile("x".into()));
    }
}
