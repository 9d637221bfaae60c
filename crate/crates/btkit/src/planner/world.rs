//! Fluents, action templates and the closed-world symbolic state.

use super::PlanError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Variable name to object.
pub type Binding = BTreeMap<String, String>;

/// `name(args)` possibly negated. Arguments starting with `?` are variables; `_` is
/// a wildcard allowed in negative effects to delete every matching fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fluent {
    pub name: String,
    pub args: Vec<String>,
    pub negated: bool,
}

fn is_var(a: &str) -> bool {
    a.starts_with('?')
}

impl Fluent {
    pub fn new(name: &str, args: &[&str]) -> Self {
        Fluent { name: name.into(), args: args.iter().map(|s| s.to_string()).collect(), negated: false }
    }

    pub fn not(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    /// Parses `at(s1)`, `!at(s1)`, `not at(s1)` or `door_open`.
    pub fn parse(text: &str) -> Result<Self, PlanError> {
        let mut t = text.trim();
        let mut negated = false;
        if let Some(rest) = t.strip_prefix('!') {
            negated = true;
            t = rest.trim();
        } else if let Some(rest) = t.strip_prefix("not ") {
            negated = true;
            t = rest.trim();
        }
        let bad = || PlanError::Parse(format!("fluent `{text}`"));
        let (name, args) = match t.find('(') {
            Some(i) => {
                let inner = t[i + 1..].strip_suffix(')').ok_or_else(bad)?;
                let args: Vec<String> = if inner.trim().is_empty() {
                    vec![]
                } else {
                    inner.split(',').map(|a| a.trim().to_string()).collect()
                };
                (t[..i].trim(), args)
            }
            None => (t, vec![]),
        };
        let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || "_?-.".contains(c));
        if !ident(name) || !args.iter().all(|a| ident(a)) {
            return Err(bad());
        }
        Ok(Fluent { name: name.into(), args, negated })
    }

    pub fn is_ground(&self) -> bool {
        !self.args.iter().any(|a| is_var(a))
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.args.iter().filter(|a| is_var(a))
    }

    pub fn substitute(&self, b: &Binding) -> Fluent {
        let args = self.args.iter().map(|a| b.get(a).cloned().unwrap_or_else(|| a.clone())).collect();
        Fluent { name: self.name.clone(), args, negated: self.negated }
    }

    /// Extends `b` so that this pattern equals the ground fluent `target`.
    pub fn unify(&self, target: &Fluent, b: &Binding) -> Option<Binding> {
        if self.name != target.name || self.negated != target.negated || self.args.len() != target.args.len() {
            return None;
        }
        let mut out = b.clone();
        for (p, t) in self.args.iter().zip(&target.args) {
            if is_var(p) {
                match out.get(p) {
                    Some(v) if v != t => return None,
                    Some(_) => {}
                    None => {
                        out.insert(p.clone(), t.clone());
                    }
                }
            } else if p != t {
                return None;
            }
        }
        Some(out)
    }

    /// True when this (effect) fluent can make `pre` false. Unbound variables and
    /// wildcards match any argument.
    pub fn negates(&self, pre: &Fluent) -> bool {
        self.name == pre.name
            && self.negated != pre.negated
            && self.args.len() == pre.args.len()
            && self.args.iter().zip(&pre.args).all(|(a, b)| a == "_" || is_var(a) || is_var(b) || a == b)
    }
}

impl fmt::Display for Fluent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            write!(f, "({})", self.args.join(","))?;
        }
        Ok(())
    }
}

/// A precondition: a single fluent or a disjunction of fluents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precondition {
    Fluent(Fluent),
    Any(Vec<Fluent>),
}

impl Precondition {
    pub fn fluents(&self) -> Vec<&Fluent> {
        match self {
            Precondition::Fluent(f) => vec![f],
            Precondition::Any(fs) => fs.iter().collect(),
        }
    }

    pub fn holds(&self, world: &WorldState, b: &Binding) -> bool {
        self.fluents().iter().any(|f| {
            let g = f.substitute(b);
            g.is_ground() && world.holds(&g)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTemplate {
    pub name: String,
    pub params: Vec<String>,
    pub con: Vec<Precondition>,
    pub eff: Vec<Fluent>,
    /// Ticks until completion; the action returns Running for `duration - 1` ticks.
    pub duration: u32,
}

impl ActionTemplate {
    pub fn new(name: &str, params: &[&str], con: &[&str], eff: &[&str]) -> Result<Self, PlanError> {
        let t = ActionTemplate {
            name: name.into(),
            params: params.iter().map(|s| s.to_string()).collect(),
            con: con.iter().map(|c| Fluent::parse(c).map(Precondition::Fluent)).collect::<Result<_, _>>()?,
            eff: eff.iter().map(|e| Fluent::parse(e)).collect::<Result<_, _>>()?,
            duration: 1,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_duration(mut self, d: u32) -> Self {
        self.duration = d.max(1);
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let declared: BTreeSet<&String> = self.params.iter().collect();
        let used = self.eff.iter().flat_map(|e| e.vars()).chain(self.con.iter().flat_map(|c| c.fluents()).flat_map(|f| f.vars()));
        for v in used {
            if !declared.contains(v) {
                return Err(PlanError::InvalidTemplate(format!("{}: variable {v} is not a parameter", self.name)));
            }
        }
        if self.params.iter().any(|p| !is_var(p)) {
            return Err(PlanError::InvalidTemplate(format!("{}: parameters must start with `?`", self.name)));
        }
        Ok(())
    }

    /// `Name(a,b)` with unbound parameters shown as variables.
    pub fn label(&self, b: &Binding) -> String {
        if self.params.is_empty() {
            return self.name.clone();
        }
        let args: Vec<String> = self.params.iter().map(|p| b.get(p).cloned().unwrap_or_else(|| p.clone())).collect();
        format!("{}({})", self.name, args.join(","))
    }
}

/// Finite planning domain: objects (in declaration order) and templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub objects: Vec<String>,
    pub templates: Vec<ActionTemplate>,
}

impl Domain {
    /// Fluent names that no template changes.
    pub fn static_names(&self) -> BTreeSet<String> {
        let changed: BTreeSet<&String> = self.templates.iter().flat_map(|t| t.eff.iter().map(|e| &e.name)).collect();
        self.templates
            .iter()
            .flat_map(|t| t.con.iter().flat_map(|c| c.fluents()))
            .map(|f| &f.name)
            .filter(|n| !changed.contains(n))
            .cloned()
            .collect()
    }

    pub fn is_static(&self, p: &Precondition, statics: &BTreeSet<String>) -> bool {
        p.fluents().iter().all(|f| statics.contains(&f.name))
    }

    /// Templates (by index) and partial bindings whose effects produce `c`, in
    /// declaration order. Static preconditions that are ground under the binding
    /// must hold in `world`.
    pub fn achievers(&self, c: &Fluent, world: &WorldState) -> Vec<(usize, Binding)> {
        let statics = self.static_names();
        let mut out: Vec<(usize, Binding)> = Vec::new();
        for (i, t) in self.templates.iter().enumerate() {
            for e in &t.eff {
                let Some(b) = e.unify(c, &Binding::new()) else { continue };
                let static_ok = t.con.iter().filter(|p| self.is_static(p, &statics)).all(|p| {
                    let ground = p.fluents().iter().all(|f| f.substitute(&b).is_ground());
                    !ground || p.holds(world, &b)
                });
                if static_ok && !out.iter().any(|(j, bb)| *j == i && *bb == b) {
                    out.push((i, b));
                }
            }
        }
        out
    }

    /// All completions of `b` over the template's unbound parameters, in object order.
    pub fn completions(&self, t: &ActionTemplate, b: &Binding) -> Vec<Binding> {
        let free: Vec<&String> = t.params.iter().filter(|p| !b.contains_key(*p)).collect();
        let mut out = vec![b.clone()];
        for v in free {
            let mut next = Vec::with_capacity(out.len() * self.objects.len());
            for partial in &out {
                for o in &self.objects {
                    let mut nb = partial.clone();
                    nb.insert(v.clone(), o.clone());
                    next.push(nb);
                }
            }
            out = next;
        }
        out
    }
}

/// Set of true ground facts; everything else is false.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    facts: BTreeSet<(String, Vec<String>)>,
    /// External perturbations applied so far.
    pub log: Vec<String>,
}

impl WorldState {
    pub fn new(facts: &[Fluent]) -> Self {
        let mut w = WorldState::default();
        for f in facts {
            w.facts.insert((f.name.clone(), f.args.clone()));
        }
        w
    }

    pub fn holds(&self, f: &Fluent) -> bool {
        self.facts.contains(&(f.name.clone(), f.args.clone())) != f.negated
    }

    /// Applies negative effects (deletions) first, then positive ones.
    pub fn apply(&mut self, effects: &[Fluent]) {
        for e in effects.iter().filter(|e| e.negated) {
            self.facts.retain(|(n, a)| {
                !(n == &e.name && a.len() == e.args.len() && a.iter().zip(&e.args).all(|(x, y)| y == "_" || x == y))
            });
        }
        for e in effects.iter().filter(|e| !e.negated) {
            self.facts.insert((e.name.clone(), e.args.clone()));
        }
    }

    /// Applies an external change and records it.
    pub fn perturb(&mut self, effects: &[Fluent]) {
        self.apply(effects);
        self.log.push(effects.iter().map(Fluent::to_string).collect::<Vec<_>>().join(", "));
    }

    pub fn facts(&self) -> Vec<Fluent> {
        self.facts.iter().map(|(n, a)| Fluent { name: n.clone(), args: a.clone(), negated: false }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["at(s1)", "!hand(none)", "door_open", "blocks(?o,goal)"] {
            assert_eq!(Fluent::parse(s).unwrap().to_string(), s);
        }
        assert_eq!(Fluent::parse("not at(s1)").unwrap(), Fluent::new("at", &["s1"]).not());
        assert!(Fluent::parse("at(s1").is_err());
    }

    #[test]
    fn unification_binds_variables() {
        let p = Fluent::parse("at(?i,?p)").unwrap();
        let b = p.unify(&Fluent::parse("at(cube,goal)").unwrap(), &Binding::new()).unwrap();
        assert_eq!(b["?i"], "cube");
        assert!(p.unify(&Fluent::parse("!at(cube,goal)").unwrap(), &Binding::new()).is_none());
    }

    #[test]
    fn wildcard_delete() {
        let mut w = WorldState::new(&[Fluent::new("robot_at", &["a"]), Fluent::new("hand", &["none"])]);
        w.apply(&[Fluent::parse("!robot_at(_)").unwrap(), Fluent::parse("robot_at(b)").unwrap()]);
        assert!(w.holds(&Fluent::new("robot_at", &["b"])));
        assert!(!w.holds(&Fluent::new("robot_at", &["a"])));
        assert!(w.holds(&Fluent::new("hand", &["none"])));
    }

    #[test]
    fn negation_matching() {
        let e = Fluent::parse("!hand(none)").unwrap();
        assert!(e.negates(&Fluent::parse("hand(none)").unwrap()));
        assert!(!e.negates(&Fluent::parse("hand(cube)").unwrap()));
        assert!(Fluent::parse("!robot_at(_)").unwrap().negates(&Fluent::parse("robot_at(goal)").unwrap()));
    }

    #[test]
    fn template_variables_must_be_parameters() {
        assert!(ActionTemplate::new("Bad", &[], &[], &["at(?x)"]).is_err());
    }
}
