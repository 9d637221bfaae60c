//! Rewriting memory nodes into memory-free trees.
//!
//! Each child of a memory node is guarded by a blackboard flag `mem/<node>/<i>`.
//! A flag is set when the child reaches the status the node remembers and all flags
//! of the node are cleared when the node itself resolves.

use crate::tree::{action, condition, fallback, invert, sequence, BTNode, NodeKind};

/// Returns a memory-free tree whose status trace matches the input on any behavior of the leaves.
///
/// Memory nodes are replaced recursively; the rest of the tree is copied unchanged.
pub fn emulate_memory(tree: &BTNode) -> BTNode {
    rewrite(tree, "r")
}

fn rewrite(node: &BTNode, path: &str) -> BTNode {
    let key = if node.id.is_empty() { path.to_string() } else { node.id.clone() };
    let children: Vec<BTNode> = node
        .children
        .iter()
        .enumerate()
        .map(|(i, c)| rewrite(c, &format!("{path}.{i}")))
        .collect();
    let prefix = format!("mem/{key}/");
    let flag = |i: usize| format!("{prefix}{i}");
    let clear = || action(format!("bb:clear:{prefix}"));
    match node.kind {
        NodeKind::SequenceMemory => {
            let mut guarded: Vec<BTNode> = children
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    fallback(vec![
                        condition(format!("bb:is:{}", flag(i))),
                        sequence(vec![c, action(format!("bb:set:{}", flag(i)))]),
                        invert(clear()),
                    ])
                })
                .collect();
            guarded.push(clear());
            sequence(guarded).with_id(node.id.clone())
        }
        NodeKind::FallbackMemory => {
            let mut guarded: Vec<BTNode> = children
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    sequence(vec![
                        invert(condition(format!("bb:is:{}", flag(i)))),
                        fallback(vec![
                            sequence(vec![c, clear()]),
                            invert(action(format!("bb:set:{}", flag(i)))),
                        ]),
                    ])
                })
                .collect();
            guarded.push(invert(clear()));
            fallback(guarded).with_id(node.id.clone())
        }
        _ => BTNode { id: node.id.clone(), kind: node.kind.clone(), children },
    }
}
