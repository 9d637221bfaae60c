//! Browser bindings. Each exported function takes document text and returns a
//! string; errors become JavaScript exceptions carrying the message.

use btkit::converters::{dt_to_bt, fsm_to_bt, subsumption_to_bt, tr_to_bt};
use btkit::format::{self, Document, FormatError};
use btkit::reliability;
use btkit::{BTNode, DecoratorPolicy, NodeKind};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn tree_of(text: &str) -> Result<(Document, BTNode), String> {
    let doc = format::parse(text).map_err(|e| e.to_string())?;
    let tree = doc.require_tree().map_err(|e| e.to_string())?.clone();
    Ok((doc, tree))
}

fn glyph(kind: &NodeKind) -> String {
    match kind {
        NodeKind::Fallback => "?".into(),
        NodeKind::Sequence => "→".into(),
        NodeKind::FallbackMemory => "?*".into(),
        NodeKind::SequenceMemory => "→*".into(),
        NodeKind::Parallel(m) => format!("⇉ M={m}"),
        NodeKind::Decorator(DecoratorPolicy::Invert) => "δ invert".into(),
        NodeKind::Decorator(DecoratorPolicy::MaxNTries(n)) => format!("δ max_tries={n}"),
        NodeKind::Decorator(DecoratorPolicy::MaxTSeconds(t)) => format!("δ max_seconds={t}"),
        NodeKind::Decorator(DecoratorPolicy::Custom(c)) => format!("δ {c}"),
        NodeKind::Action(a) => format!("[{a}]"),
        NodeKind::Condition(c) => format!("({c})"),
    }
}

/// Indented outline of the document's tree, one node per line.
pub fn outline_text(text: &str) -> Result<String, String> {
    fn go(n: &BTNode, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&glyph(&n.kind));
        out.push('\n');
        for c in &n.children {
            go(c, depth + 1, out);
        }
    }
    let (_, tree) = tree_of(text)?;
    let mut out = String::new();
    go(&tree, 0, &mut out);
    Ok(out)
}

pub fn dot_text(text: &str) -> Result<String, String> {
    tree_of(text).map(|(_, t)| format::export_dot(&t))
}

/// Reliability report as JSON with `points` samples on `[0, horizon]`.
pub fn reliability_json(text: &str, horizon: f64, points: usize) -> Result<String, String> {
    let (doc, tree) = tree_of(text)?;
    if doc.profiles.is_empty() {
        return Err(FormatError::MissingSection("profiles").to_string());
    }
    if points < 2 || !(horizon > 0.0) || !horizon.is_finite() {
        return Err("need at least two points and a positive horizon".into());
    }
    let grid: Vec<f64> = (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect();
    let r = reliability::analyze(&tree, &doc.profiles, &grid).map_err(|e| e.to_string())?;
    let v = json!({ "time_unit": doc.meta.time_unit, "report": r });
    Ok(v.to_string())
}

/// Converts the named section (`subsumption`, `teleoreactive`, `decision` or `fsm`)
/// and returns JSON with the behavior tree document, its outline and DOT.
pub fn convert_json(text: &str, from: &str) -> Result<String, String> {
    let doc = format::parse(text).map_err(|e| e.to_string())?;
    let missing = |s: &'static str| FormatError::MissingSection(s).to_string();
    let tree = match from {
        "subsumption" => subsumption_to_bt(doc.subsumption.as_ref().ok_or_else(|| missing("subsumption"))?),
        "teleoreactive" => tr_to_bt(doc.teleoreactive.as_ref().ok_or_else(|| missing("teleoreactive"))?),
        "decision" => Ok(dt_to_bt(doc.decision.as_ref().ok_or_else(|| missing("decision"))?)),
        "fsm" => fsm_to_bt(doc.fsm.as_ref().ok_or_else(|| missing("fsm"))?),
        other => return Err(format!("unknown source `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    let document = format::serialize(&Document::from_tree(tree.clone()));
    let outline = outline_text(&document)?;
    Ok(json!({ "document": document, "outline": outline, "dot": format::export_dot(&tree) }).to_string())
}

#[wasm_bindgen]
pub fn outline(text: &str) -> Result<String, JsValue> {
    outline_text(text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn dot(text: &str) -> Result<String, JsValue> {
    dot_text(text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn analyze_reliability(text: &str, horizon: f64, points: usize) -> Result<String, JsValue> {
    reliability_json(text, horizon, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn convert(text: &str, from: &str) -> Result<String, JsValue> {
    convert_json(text, from).map_err(|e| JsValue::from_str(&e))
}
