//! Quick static estimates: success probability by product rules and utility by max.

use super::ReliabilityError;
use crate::tree::{BTNode, DecoratorPolicy, NodeKind};
use std::collections::BTreeMap;

fn leaf_value(node: &BTNode, values: &BTreeMap<String, f64>, what: &str) -> Result<f64, ReliabilityError> {
    let name = node.leaf_name().expect("leaf");
    let v = *values.get(name).ok_or_else(|| ReliabilityError::MissingProfile(name.to_string()))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(ReliabilityError::OutOfRange(format!("{what} of {name}: {v}")));
    }
    Ok(v)
}

/// Sequence multiplies success probabilities; Fallback multiplies failure probabilities.
pub fn static_success_probability(tree: &BTNode, ps: &BTreeMap<String, f64>) -> Result<f64, ReliabilityError> {
    match &tree.kind {
        NodeKind::Action(_) | NodeKind::Condition(_) => leaf_value(tree, ps, "success probability"),
        NodeKind::Sequence | NodeKind::SequenceMemory => {
            tree.children.iter().try_fold(1.0, |acc, c| Ok(acc * static_success_probability(c, ps)?))
        }
        NodeKind::Fallback | NodeKind::FallbackMemory => {
            let fail = tree.children.iter().try_fold(1.0, |acc, c| Ok(acc * (1.0 - static_success_probability(c, ps)?)))?;
            Ok(1.0 - fail)
        }
        NodeKind::Parallel(_) => Err(ReliabilityError::ParallelUnsupported),
        NodeKind::Decorator(DecoratorPolicy::Invert) => Ok(1.0 - static_success_probability(&tree.children[0], ps)?),
        NodeKind::Decorator(p) => Err(ReliabilityError::Unsupported(format!("decorator {p:?} in static estimate"))),
    }
}

/// Every control node takes the largest utility among its children.
pub fn utility_propagate(tree: &BTNode, utilities: &BTreeMap<String, f64>) -> Result<f64, ReliabilityError> {
    if tree.kind.is_leaf() {
        return leaf_value(tree, utilities, "utility");
    }
    tree.children.iter().try_fold(0.0f64, |acc, c| Ok(acc.max(utility_propagate(c, utilities)?)))
}
