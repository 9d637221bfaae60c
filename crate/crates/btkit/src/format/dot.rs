//! Graphviz rendering with the conventional node glyphs.

use crate::tree::{BTNode, DecoratorPolicy, NodeKind};
use std::fmt::Write;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn attrs(kind: &NodeKind) -> String {
    let (label, shape, extra) = match kind {
        NodeKind::Fallback => ("?".to_string(), "square", String::new()),
        NodeKind::Sequence => ("→".to_string(), "square", String::new()),
        NodeKind::FallbackMemory => ("?*".to_string(), "square", String::new()),
        NodeKind::SequenceMemory => ("→*".to_string(), "square", String::new()),
        NodeKind::Parallel(m) => ("⇉".to_string(), "square", format!(", xlabel=\"M={m}\"")),
        NodeKind::Decorator(p) => {
            let text = match p {
                DecoratorPolicy::Invert => "invert".to_string(),
                DecoratorPolicy::MaxNTries(n) => format!("max_tries={n}"),
                DecoratorPolicy::MaxTSeconds(t) => format!("max_seconds={t}"),
                DecoratorPolicy::Custom(n) => format!("custom={n}"),
            };
            (format!("δ {text}"), "diamond", String::new())
        }
        NodeKind::Action(n) => (n.clone(), "box", String::new()),
        NodeKind::Condition(n) => (n.clone(), "ellipse", String::new()),
    };
    format!("label=\"{}\", shape={shape}{extra}", escape(&label))
}

/// One DOT node per tree node, numbered in depth-first preorder; edges keep the
/// children's left-to-right order.
pub fn export_dot(tree: &BTNode) -> String {
    fn go(n: &BTNode, next: &mut usize, nodes: &mut String, edges: &mut String) {
        let me = *next;
        *next += 1;
        let _ = writeln!(nodes, "  n{me} [{}];", attrs(&n.kind));
        for c in &n.children {
            let _ = writeln!(edges, "  n{me} -> n{};", *next);
            go(c, next, nodes, edges);
        }
    }
    let (mut nodes, mut edges) = (String::new(), String::new());
    go(tree, &mut 0, &mut nodes, &mut edges);
    format!("digraph BT {{\n  ordering=out;\n  node [fontname=\"Helvetica\"];\n{nodes}{edges}}}\n")
}
