//! Text format for behavior tree documents.
//!
//! A document is a list of sections, each a keyword followed by a braced block.
//! A document may also be a single bare tree. Statements end with `;` (optional before `}`), `#` starts a comment, and names
//! containing whitespace or any of `{};:"#` are written in double quotes.
//!
//! ```text
//! meta { time_unit "s"; seed 7; tick 1; }
//! define Grasp { fallback { action OneHand; action TwoHands; } }
//! tree {
//!   sequence {
//!     fallback { condition BallFound; action FindBall; }
//!     use Grasp;
//!   }
//! }
//! profiles {
//!   FindBall: stochastic ps=0.3 mu=0.01 nu=0.0167;
//!   BallFound: condition ps=0.5;
//! }
//! script { OneHand: running running success; }
//! ```
//!
//! Node keywords: `sequence`, `fallback`, `sequence*`, `fallback*` (with memory),
//! `parallel(M)`, `decorator(invert | max_tries=N | max_seconds=T | custom=NAME)`,
//! `condition NAME`, `action NAME` and `use NAME`. A node keyword may be followed by
//! an explicit id in brackets, e.g. `action [a3] Pick;`.
//!
//! Other sections: `statespace { model humanoid; grid 50; steps 100; }`,
//! `planner { objects ...; template Name(?x) { con ...; eff ...; duration N; } world ...; goal ...; perturb K: ...; }`,
//! `subsumption { Highest; ...; Lowest; }`,
//! `teleoreactive { when C do A; else do A; }`,
//! `decision { if P { ... } else { ... } }` with `do A;` leaves, and
//! `fsm { initial S; state S do A; transition S -> T on E; }`.

pub mod dot;

pub use dot::export_dot;

use crate::converters::{DecisionTree, FsmSpec, SubsumptionStack, Transition, TrProgram, TrRule};
use crate::planner::{ActionTemplate, Domain, Fluent, Perturbation, Precondition};
use crate::reliability::{ActionProfile, LeafProfile, ProfileKind, ProfileSet};
use crate::tree::{BTNode, DecoratorPolicy, NodeKind, Status};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("arity error at {line}:{col}: {msg}")]
    Arity { line: usize, col: usize, msg: String },
    #[error("unresolved reference `{0}`")]
    UnresolvedReference(String),
    #[error("leaf `{0}` is bound in more than one section")]
    DuplicateBinding(String),
    #[error("document has no `{0}` section")]
    MissingSection(&'static str),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    /// Free-form time unit carried into reports unchanged.
    pub time_unit: Option<String>,
    pub seed: Option<u64>,
    /// Model time per tick when running profiled leaves.
    pub tick: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSection {
    pub model: String,
    pub grid: Option<usize>,
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSection {
    pub domain: Domain,
    pub world: Vec<Fluent>,
    pub goal: Vec<Fluent>,
    pub perturbations: Vec<Perturbation>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub meta: Meta,
    /// The tree with every `use` reference expanded.
    pub tree: Option<BTNode>,
    pub profiles: ProfileSet,
    /// Status sequences for leaves; the last entry repeats.
    pub scripts: BTreeMap<String, Vec<Status>>,
    pub statespace: Option<StateSpaceSection>,
    pub planner: Option<PlannerSection>,
    pub subsumption: Option<SubsumptionStack>,
    pub teleoreactive: Option<TrProgram>,
    pub decision: Option<DecisionTree>,
    pub fsm: Option<FsmSpec>,
}

impl Document {
    pub fn from_tree(tree: BTNode) -> Self {
        Document { tree: Some(tree), ..Document::default() }
    }

    pub fn require_tree(&self) -> Result<&BTNode, FormatError> {
        self.tree.as_ref().ok_or(FormatError::MissingSection("tree"))
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Semi,
    Colon,
    Word(String),
    Quoted(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SPECIAL: &str = "{};:\"#";

fn lex(src: &str) -> Result<Vec<Token>, FormatError> {
    let mut out = Vec::new();
    let mut it = src.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let bump = |c: char, line: &mut usize, col: &mut usize| {
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while let Some(&c) = it.peek() {
        let (l, k) = (line, col);
        match c {
            c if c.is_whitespace() => {
                it.next();
                bump(c, &mut line, &mut col);
            }
            '#' => {
                while let Some(&c) = it.peek() {
                    if c == '\n' {
                        break;
                    }
                    it.next();
                    bump(c, &mut line, &mut col);
                }
            }
            '{' | '}' | ';' | ':' => {
                it.next();
                bump(c, &mut line, &mut col);
                let tok = match c {
                    '{' => Tok::Open,
                    '}' => Tok::Close,
                    ';' => Tok::Semi,
                    _ => Tok::Colon,
                };
                out.push(Token { tok, line: l, col: k });
            }
            '"' => {
                it.next();
                bump(c, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    let Some(c) = it.next() else {
                        return Err(FormatError::Syntax { line: l, col: k, msg: "unterminated string".into() });
                    };
                    bump(c, &mut line, &mut col);
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(e) = it.next() else { continue };
                            bump(e, &mut line, &mut col);
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                }
                out.push(Token { tok: Tok::Quoted(s), line: l, col: k });
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = it.peek() {
                    if c.is_whitespace() || SPECIAL.contains(c) {
                        break;
                    }
                    s.push(c);
                    it.next();
                    bump(c, &mut line, &mut col);
                }
                out.push(Token { tok: Tok::Word(s), line: l, col: k });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    defines: BTreeMap<String, BTNode>,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Open => "`{`".into(),
        Tok::Close => "`}`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Word(w) => format!("`{w}`"),
        Tok::Quoted(q) => format!("\"{q}\""),
    }
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormatError> {
        let (line, col) = self.here();
        Err(FormatError::Syntax { line, col, msg: msg.into() })
    }

    fn expect(&mut self, want: Tok) -> Result<(), FormatError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let got = describe(t);
                self.err(format!("expected {}, found {got}", describe(&want)))
            }
            None => self.err(format!("expected {}, found end of input", describe(&want))),
        }
    }

    /// Consumes a `;` if present; a following `}` also ends a statement.
    fn end_statement(&mut self) -> Result<(), FormatError> {
        match self.peek() {
            Some(Tok::Semi) => {
                self.pos += 1;
                Ok(())
            }
            Some(Tok::Close) | None => Ok(()),
            Some(t) => {
                let got = describe(t);
                self.err(format!("expected `;`, found {got}"))
            }
        }
    }

    fn word(&mut self) -> Result<String, FormatError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            Some(t) => {
                let got = describe(t);
                self.err(format!("expected a keyword, found {got}"))
            }
            None => self.err("expected a keyword, found end of input"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), FormatError> {
        let at = self.pos;
        let w = self.word()?;
        if w == kw {
            Ok(())
        } else {
            self.pos = at;
            self.err(format!("expected `{kw}`, found `{w}`"))
        }
    }

    fn at_word(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w == kw)
    }

    /// Words and quoted strings up to a delimiter or one of `stop`, joined by spaces.
    fn name_until(&mut self, stop: &[&str]) -> Result<String, FormatError> {
        let mut parts = Vec::new();
        while let Some(t) = self.peek() {
            match t {
                Tok::Word(w) if stop.contains(&w.as_str()) => break,
                Tok::Word(w) | Tok::Quoted(w) => {
                    parts.push(w.clone());
                    self.pos += 1;
                }
                _ => break,
            }
        }
        if parts.is_empty() {
            return self.err("expected a name");
        }
        Ok(parts.join(" "))
    }

    fn name(&mut self) -> Result<String, FormatError> {
        self.name_until(&[])
    }

    /// Raw text of the statement up to `;` or `}`.
    fn rest(&mut self) -> Result<String, FormatError> {
        self.name()
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, FormatError> {
        let w = self.word()?;
        w.parse().or_else(|_| {
            self.pos -= 1;
            self.err(format!("expected {what}, found `{w}`"))
        })
    }

    // -------- tree nodes

    fn node(&mut self) -> Result<BTNode, FormatError> {
        let (line, col) = self.here();
        let kw = self.word()?;
        let id = match self.peek() {
            Some(Tok::Word(w)) if w.starts_with('[') && w.ends_with(']') && w.len() >= 2 => {
                let id = w[1..w.len() - 1].to_string();
                self.pos += 1;
                id
            }
            _ => String::new(),
        };
        let kind = match kw.as_str() {
            "sequence" => NodeKind::Sequence,
            "fallback" => NodeKind::Fallback,
            "sequence*" => NodeKind::SequenceMemory,
            "fallback*" => NodeKind::FallbackMemory,
            "condition" | "action" => {
                let name = self.name()?;
                self.end_statement()?;
                let k = if kw == "action" { NodeKind::Action(name) } else { NodeKind::Condition(name) };
                return Ok(BTNode::new(k, vec![]).with_id(id));
            }
            "use" => {
                let name = self.name()?;
                self.end_statement()?;
                return self.defines.get(&name).cloned().ok_or(FormatError::UnresolvedReference(name));
            }
            w if w.starts_with("parallel(") && w.ends_with(')') => {
                let m: usize = w["parallel(".len()..w.len() - 1]
                    .trim()
                    .parse()
                    .map_err(|_| FormatError::Syntax { line, col, msg: format!("bad threshold in `{w}`") })?;
                NodeKind::Parallel(m)
            }
            w if w.starts_with("decorator(") && w.ends_with(')') => {
                let inner = &w["decorator(".len()..w.len() - 1];
                let bad = || FormatError::Syntax { line, col, msg: format!("unknown decorator `{inner}`") };
                let policy = match inner.split_once('=') {
                    None if inner == "invert" => DecoratorPolicy::Invert,
                    Some(("max_tries", n)) => DecoratorPolicy::MaxNTries(n.parse().map_err(|_| bad())?),
                    Some(("max_seconds", t)) => DecoratorPolicy::MaxTSeconds(t.parse().map_err(|_| bad())?),
                    Some(("custom", n)) if !n.is_empty() => DecoratorPolicy::Custom(n.to_string()),
                    _ => return Err(bad()),
                };
                NodeKind::Decorator(policy)
            }
            other => return Err(FormatError::Syntax { line, col, msg: format!("unknown node keyword `{other}`") }),
        };
        self.expect(Tok::Open)?;
        let mut children = Vec::new();
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            children.push(self.node()?);
        }
        self.expect(Tok::Close)?;
        let arity = |msg: String| Err(FormatError::Arity { line, col, msg });
        match &kind {
            NodeKind::Parallel(m) if *m == 0 || *m > children.len() => {
                return arity(format!("parallel threshold {m} needs between 1 and {} children", children.len()));
            }
            NodeKind::Decorator(_) if children.len() != 1 => {
                return arity(format!("decorator needs exactly one child, found {}", children.len()));
            }
            _ if children.is_empty() => return arity(format!("`{kw}` needs at least one child")),
            _ => {}
        }
        Ok(BTNode::new(kind, children).with_id(id))
    }

    fn block_tree(&mut self) -> Result<BTNode, FormatError> {
        self.expect(Tok::Open)?;
        let n = self.node()?;
        self.expect(Tok::Close)?;
        Ok(n)
    }

    // -------- sections

    fn meta(&mut self, meta: &mut Meta) -> Result<(), FormatError> {
        self.expect(Tok::Open)?;
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            let key = self.word()?;
            match key.as_str() {
                "time_unit" => meta.time_unit = Some(self.name()?),
                "seed" => meta.seed = Some(self.number("an unsigned integer")?),
                "tick" => meta.tick = Some(self.number("a number")?),
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown meta key `{other}`"));
                }
            }
            self.end_statement()?;
        }
        self.expect(Tok::Close)
    }

    fn profiles(&mut self, out: &mut ProfileSet) -> Result<(), FormatError> {
        self.expect(Tok::Open)?;
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            let name = self.name()?;
            self.expect(Tok::Colon)?;
            let (line, col) = self.here();
            let kind = self.word()?;
            let mut kv = BTreeMap::new();
            while let Some(Tok::Word(w)) = self.peek() {
                let Some((k, v)) = w.split_once('=') else { return self.err(format!("expected key=value, found `{w}`")) };
                let v: f64 = match v.parse() {
                    Ok(v) => v,
                    Err(_) => return self.err(format!("`{v}` is not a number")),
                };
                kv.insert(k.to_string(), v);
                self.pos += 1;
            }
            let get = |k: &str| {
                kv.get(k).copied().ok_or_else(|| FormatError::Syntax { line, col, msg: format!("`{kind}` needs `{k}`") })
            };
            let allowed: &[&str] = match kind.as_str() {
                "stochastic" => &["ps", "mu", "nu"],
                "deterministic" => &["ps", "tau_s", "tau_f"],
                "hybrid_success" => &["ps", "tau_s", "nu"],
                "hybrid_failure" => &["ps", "mu", "tau_f"],
                "condition" => &["ps"],
                other => return Err(FormatError::Syntax { line, col, msg: format!("unknown profile kind `{other}`") }),
            };
            if let Some(k) = kv.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(FormatError::Syntax { line, col, msg: format!("`{kind}` does not take `{k}`") });
            }
            let p = match kind.as_str() {
                "stochastic" => LeafProfile::Action(ActionProfile::stochastic(get("ps")?, get("mu")?, get("nu")?)),
                "deterministic" => LeafProfile::Action(ActionProfile::deterministic(get("ps")?, get("tau_s")?, get("tau_f")?)),
                "hybrid_success" => LeafProfile::Action(ActionProfile::hybrid_det_success(get("ps")?, get("tau_s")?, get("nu")?)),
                "hybrid_failure" => LeafProfile::Action(ActionProfile::hybrid_det_failure(get("ps")?, get("mu")?, get("tau_f")?)),
                _ => LeafProfile::Condition { ps: get("ps")? },
            };
            if let LeafProfile::Action(a) = &p {
                a.validate().map_err(|e| FormatError::Invalid(format!("profile of {name}: {e}")))?;
            }
            if out.insert(name.clone(), p).is_some() {
                return Err(FormatError::DuplicateBinding(name));
            }
            self.end_statement()?;
        }
        self.expect(Tok::Close)
    }

    fn scripts(&mut self, out: &mut BTreeMap<String, Vec<Status>>) -> Result<(), FormatError> {
        self.expect(Tok::Open)?;
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            let name = self.name()?;
            self.expect(Tok::Colon)?;
            let mut seq = Vec::new();
            while let Some(Tok::Word(w)) = self.peek() {
                let s = match w.to_ascii_lowercase().as_str() {
                    "success" | "s" => Status::Success,
                    "failure" | "f" => Status::Failure,
                    "running" | "r" => Status::Running,
                    _ => return self.err(format!("`{w}` is not a status")),
                };
                seq.push(s);
                self.pos += 1;
            }
            if seq.is_empty() {
                return self.err("a script needs at least one status");
            }
            if out.insert(name.clone(), seq).is_some() {
                return Err(FormatError::DuplicateBinding(name));
            }
            self.end_statement()?;
        }
        self.expect(Tok::Close)
    }

    fn statespace(&mut self) -> Result<StateSpaceSection, FormatError> {
        self.expect(Tok::Open)?;
        let mut s = StateSpaceSection { model: String::new(), grid: None, steps: None };
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            match self.word()?.as_str() {
                "model" => s.model = self.word()?,
                "grid" => s.grid = Some(self.number("a grid resolution")?),
                "steps" => s.steps = Some(self.number("a step count")?),
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown statespace key `{other}`"));
                }
            }
            self.end_statement()?;
        }
        self.expect(Tok::Close)?;
        if s.model.is_empty() {
            return self.err("statespace needs a model");
        }
        Ok(s)
    }

    fn fluents(&mut self) -> Result<Vec<Fluent>, FormatError> {
        let (line, col) = self.here();
        if matches!(self.peek(), Some(Tok::Semi) | Some(Tok::Close)) {
            return Ok(vec![]);
        }
        let text = self.rest()?;
        split_top(&text)
            .into_iter()
            .map(|f| Fluent::parse(f.trim()).map_err(|e| FormatError::Syntax { line, col, msg: e.to_string() }))
            .collect()
    }

    fn preconditions(&mut self) -> Result<Vec<Precondition>, FormatError> {
        let (line, col) = self.here();
        if matches!(self.peek(), Some(Tok::Semi) | Some(Tok::Close)) {
            return Ok(vec![]);
        }
        let text = self.rest()?;
        let fl = |s: &str| Fluent::parse(s.trim()).map_err(|e| FormatError::Syntax { line, col, msg: e.to_string() });
        split_top(&text)
            .into_iter()
            .map(|item| {
                let alts: Vec<&str> = item.split('|').collect();
                if alts.len() == 1 {
                    Ok(Precondition::Fluent(fl(alts[0])?))
                } else {
                    Ok(Precondition::Any(alts.into_iter().map(fl).collect::<Result<_, _>>()?))
                }
            })
            .collect()
    }

    fn planner(&mut self) -> Result<PlannerSection, FormatError> {
        self.expect(Tok::Open)?;
        let mut p = PlannerSection {
            domain: Domain { objects: vec![], templates: vec![] },
            world: vec![],
            goal: vec![],
            perturbations: vec![],
        };
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            let (line, col) = self.here();
            match self.word()?.as_str() {
                "objects" => {
                    let text = if matches!(self.peek(), Some(Tok::Semi)) { String::new() } else { self.rest()? };
                    p.domain.objects = text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
                }
                "world" => p.world = self.fluents()?,
                "goal" => p.goal = self.fluents()?,
                "perturb" => {
                    let before_tick = self.number("a tick index")?;
                    self.expect(Tok::Colon)?;
                    p.perturbations.push(Perturbation { before_tick, effects: self.fluents()? });
                }
                "template" => {
                    let head = self.name()?;
                    let (name, params) = match head.split_once('(') {
                        Some((n, rest)) if rest.ends_with(')') => (
                            n.trim().to_string(),
                            rest[..rest.len() - 1].split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
                        ),
                        Some(_) => return Err(FormatError::Syntax { line, col, msg: format!("bad template head `{head}`") }),
                        None => (head.trim().to_string(), vec![]),
                    };
                    let mut t = ActionTemplate { name, params, con: vec![], eff: vec![], duration: 1 };
                    self.expect(Tok::Open)?;
                    while !matches!(self.peek(), Some(Tok::Close) | None) {
                        match self.word()?.as_str() {
                            "con" => t.con = self.preconditions()?,
                            "eff" => t.eff = self.fluents()?,
                            "duration" => t.duration = self.number("a duration in ticks")?,
                            other => {
                                self.pos -= 1;
                                return self.err(format!("unknown template key `{other}`"));
                            }
                        }
                        self.end_statement()?;
                    }
                    self.expect(Tok::Close)?;
                    t.validate().map_err(|e| FormatError::Syntax { line, col, msg: e.to_string() })?;
                    p.domain.templates.push(t);
                    continue;
                }
                other => return Err(FormatError::Syntax { line, col, msg: format!("unknown planner key `{other}`") }),
            }
            self.end_statement()?;
        }
        self.expect(Tok::Close)?;
        Ok(p)
    }

    fn subsumption(&mut self) -> Result<SubsumptionStack, FormatError> {
        self.expect(Tok::Open)?;
        let mut controllers = Vec::new();
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            controllers.push(self.name()?);
            self.end_statement()?;
        }
        self.expect(Tok::Close)?;
        Ok(SubsumptionStack { controllers })
    }

    fn teleoreactive(&mut self) -> Result<TrProgram, FormatError> {
        self.expect(Tok::Open)?;
        let mut rules = Vec::new();
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            let condition = if self.at_word("else") {
                self.pos += 1;
                None
            } else {
                self.keyword("when")?;
                Some(self.name_until(&["do"])?)
            };
            self.keyword("do")?;
            rules.push(TrRule { condition, action: self.name()? });
            self.end_statement()?;
        }
        self.expect(Tok::Close)?;
        Ok(TrProgram { rules })
    }

    fn decision_node(&mut self) -> Result<DecisionTree, FormatError> {
        if self.at_word("do") {
            self.pos += 1;
            let a = self.name()?;
            self.end_statement()?;
            return Ok(DecisionTree::Action(a));
        }
        self.keyword("if")?;
        let name = self.name()?;
        self.expect(Tok::Open)?;
        let yes = self.decision_node()?;
        self.expect(Tok::Close)?;
        self.keyword("else")?;
        self.expect(Tok::Open)?;
        let no = self.decision_node()?;
        self.expect(Tok::Close)?;
        Ok(DecisionTree::Predicate { name, yes: Box::new(yes), no: Box::new(no) })
    }

    fn fsm(&mut self) -> Result<FsmSpec, FormatError> {
        self.expect(Tok::Open)?;
        let mut f = FsmSpec { states: vec![], initial: String::new(), transitions: vec![], actions: BTreeMap::new() };
        while !matches!(self.peek(), Some(Tok::Close) | None) {
            match self.word()?.as_str() {
                "initial" => f.initial = self.name()?,
                "state" => {
                    let s = self.name_until(&["do"])?;
                    if self.at_word("do") {
                        self.pos += 1;
                        f.actions.insert(s.clone(), self.name()?);
                    }
                    f.states.push(s);
                }
                "transition" => {
                    let from = self.name_until(&["->"])?;
                    self.keyword("->")?;
                    let to = self.name_until(&["on"])?;
                    let event = if self.at_word("on") {
                        self.pos += 1;
                        Some(self.name()?)
                    } else {
                        None
                    };
                    f.transitions.push(Transition { from, event, to });
                }
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown fsm key `{other}`"));
                }
            }
            self.end_statement()?;
        }
        self.expect(Tok::Close)?;
        if f.initial.is_empty() {
            return self.err("fsm needs an initial state");
        }
        f.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(f)
    }
}

fn is_node_keyword(w: &str) -> bool {
    matches!(w, "sequence" | "fallback" | "sequence*" | "fallback*" | "condition" | "action" | "use")
        || w.starts_with("parallel(")
        || w.starts_with("decorator(")
}

/// Splits on commas outside parentheses.
fn split_top(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out.into_iter().filter(|s| !s.trim().is_empty()).collect()
}

/// Parses a document and checks that profile and script entries name leaves of the
/// tree and that no leaf is bound twice.
pub fn parse(text: &str) -> Result<Document, FormatError> {
    let toks = lex(text)?;
    let lines = text.lines().count().max(1);
    let last = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut p = Parser { toks, pos: 0, end: (lines, last), defines: BTreeMap::new() };
    let mut doc = Document::default();
    let mut seen = BTreeSet::new();
    while p.peek().is_some() {
        let (line, col) = p.here();
        let kw = p.word()?;
        if is_node_keyword(&kw) && !seen.contains("tree") {
            p.pos -= 1;
            seen.insert("tree".to_string());
            doc.tree = Some(p.node()?);
            continue;
        }
        if kw != "define" && !seen.insert(kw.clone()) {
            return Err(FormatError::Syntax { line, col, msg: format!("duplicate `{kw}` section") });
        }
        match kw.as_str() {
            "meta" => p.meta(&mut doc.meta)?,
            "define" => {
                let name = p.name()?;
                let t = p.block_tree()?;
                p.defines.insert(name, t);
            }
            "tree" => doc.tree = Some(p.block_tree()?),
            "profiles" => p.profiles(&mut doc.profiles)?,
            "script" => p.scripts(&mut doc.scripts)?,
            "statespace" => doc.statespace = Some(p.statespace()?),
            "planner" => doc.planner = Some(p.planner()?),
            "subsumption" => doc.subsumption = Some(p.subsumption()?),
            "teleoreactive" => doc.teleoreactive = Some(p.teleoreactive()?),
            "decision" => {
                p.expect(Tok::Open)?;
                doc.decision = Some(p.decision_node()?);
                p.expect(Tok::Close)?;
            }
            "fsm" => doc.fsm = Some(p.fsm()?),
            other => return Err(FormatError::Syntax { line, col, msg: format!("unknown section `{other}`") }),
        }
    }
    check_bindings(&doc)?;
    Ok(doc)
}

fn check_bindings(doc: &Document) -> Result<(), FormatError> {
    let mut kinds: BTreeMap<&str, bool> = BTreeMap::new();
    if let Some(t) = &doc.tree {
        for l in t.leaves() {
            kinds.insert(l.leaf_name().unwrap_or_default(), matches!(l.kind, NodeKind::Condition(_)));
        }
    }
    for (name, p) in &doc.profiles {
        let Some(&is_cond) = kinds.get(name.as_str()) else { return Err(FormatError::UnresolvedReference(name.clone())) };
        if is_cond != matches!(p, LeafProfile::Condition { .. }) {
            return Err(FormatError::Invalid(format!("profile kind of `{name}` does not match its leaf")));
        }
    }
    for name in doc.scripts.keys() {
        if !kinds.contains_key(name.as_str()) {
            return Err(FormatError::UnresolvedReference(name.clone()));
        }
        if doc.profiles.contains_key(name) {
            return Err(FormatError::DuplicateBinding(name.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- serializer

fn quote(s: &str) -> String {
    let plain = !s.is_empty()
        && !s.chars().any(|c| c.is_whitespace() || SPECIAL.contains(c) || c == '\\')
        && !s.starts_with('[')
        && !matches!(s, "do" | "on" | "->" | "else" | "when" | "if");
    if plain {
        s.to_string()
    } else {
        let mut q = String::from("\"");
        for c in s.chars() {
            match c {
                '"' => q.push_str("\\\""),
                '\\' => q.push_str("\\\\"),
                '\n' => q.push_str("\\n"),
                '\t' => q.push_str("\\t"),
                c => q.push(c),
            }
        }
        q.push('"');
        q
    }
}

fn write_node(out: &mut String, n: &BTNode, depth: usize) {
    let pad = "  ".repeat(depth);
    let id = if n.id.is_empty() { String::new() } else { format!(" [{}]", n.id) };
    let head = match &n.kind {
        NodeKind::Action(a) => {
            let _ = writeln!(out, "{pad}action{id} {};", quote(a));
            return;
        }
        NodeKind::Condition(c) => {
            let _ = writeln!(out, "{pad}condition{id} {};", quote(c));
            return;
        }
        NodeKind::Sequence => "sequence".to_string(),
        NodeKind::Fallback => "fallback".to_string(),
        NodeKind::SequenceMemory => "sequence*".to_string(),
        NodeKind::FallbackMemory => "fallback*".to_string(),
        NodeKind::Parallel(m) => format!("parallel({m})"),
        NodeKind::Decorator(p) => match p {
            DecoratorPolicy::Invert => "decorator(invert)".to_string(),
            DecoratorPolicy::MaxNTries(k) => format!("decorator(max_tries={k})"),
            DecoratorPolicy::MaxTSeconds(t) => format!("decorator(max_seconds={t})"),
            DecoratorPolicy::Custom(c) => format!("decorator(custom={c})"),
        },
    };
    let _ = writeln!(out, "{pad}{head}{id} {{");
    for c in &n.children {
        write_node(out, c, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Text form of a single tree, as it appears inside a `tree` block.
pub fn serialize_tree(tree: &BTNode) -> String {
    let mut s = String::new();
    write_node(&mut s, tree, 0);
    s
}

fn fluent_list(fs: &[Fluent]) -> String {
    fs.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_decision(out: &mut String, d: &DecisionTree, depth: usize) {
    let pad = "  ".repeat(depth);
    match d {
        DecisionTree::Action(a) => {
            let _ = writeln!(out, "{pad}do {};", quote(a));
        }
        DecisionTree::Predicate { name, yes, no } => {
            let _ = writeln!(out, "{pad}if {} {{", quote(name));
            write_decision(out, yes, depth + 1);
            let _ = writeln!(out, "{pad}}} else {{");
            write_decision(out, no, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

fn profile_text(p: &LeafProfile) -> String {
    match p {
        LeafProfile::Condition { ps } => format!("condition ps={ps}"),
        LeafProfile::Action(a) => {
            let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
            match a.kind {
                ProfileKind::Stochastic => format!("stochastic ps={} mu={} nu={}", a.ps, f(a.mu), f(a.nu)),
                ProfileKind::Deterministic => format!("deterministic ps={} tau_s={} tau_f={}", a.ps, f(a.tau_s), f(a.tau_f)),
                ProfileKind::HybridDetSuccess => format!("hybrid_success ps={} tau_s={} nu={}", a.ps, f(a.tau_s), f(a.nu)),
                ProfileKind::HybridDetFailure => format!("hybrid_failure ps={} mu={} tau_f={}", a.ps, f(a.mu), f(a.tau_f)),
            }
        }
    }
}

/// Canonical text of a document; `parse(serialize(d))` reproduces `d`.
pub fn serialize(doc: &Document) -> String {
    let mut out = String::new();
    let m = &doc.meta;
    if m.time_unit.is_some() || m.seed.is_some() || m.tick.is_some() {
        out.push_str("meta {\n");
        if let Some(u) = &m.time_unit {
            let _ = writeln!(out, "  time_unit {};", quote(u));
        }
        if let Some(s) = m.seed {
            let _ = writeln!(out, "  seed {s};");
        }
        if let Some(t) = m.tick {
            let _ = writeln!(out, "  tick {t};");
        }
        out.push_str("}\n");
    }
    if let Some(t) = &doc.tree {
        out.push_str("tree {\n");
        write_node(&mut out, t, 1);
        out.push_str("}\n");
    }
    if !doc.profiles.is_empty() {
        out.push_str("profiles {\n");
        for (k, p) in &doc.profiles {
            let _ = writeln!(out, "  {}: {};", quote(k), profile_text(p));
        }
        out.push_str("}\n");
    }
    if !doc.scripts.is_empty() {
        out.push_str("script {\n");
        for (k, seq) in &doc.scripts {
            let words: Vec<String> = seq.iter().map(|s| s.to_string().to_lowercase()).collect();
            let _ = writeln!(out, "  {}: {};", quote(k), words.join(" "));
        }
        out.push_str("}\n");
    }
    if let Some(s) = &doc.statespace {
        let _ = writeln!(out, "statespace {{\n  model {};", s.model);
        if let Some(g) = s.grid {
            let _ = writeln!(out, "  grid {g};");
        }
        if let Some(n) = s.steps {
            let _ = writeln!(out, "  steps {n};");
        }
        out.push_str("}\n");
    }
    if let Some(p) = &doc.planner {
        out.push_str("planner {\n");
        if !p.domain.objects.is_empty() {
            let _ = writeln!(out, "  objects {};", p.domain.objects.join(", "));
        }
        for t in &p.domain.templates {
            let params = if t.params.is_empty() { String::new() } else { format!("({})", t.params.join(", ")) };
            let con: Vec<String> = t
                .con
                .iter()
                .map(|c| match c {
                    Precondition::Fluent(f) => f.to_string(),
                    Precondition::Any(fs) => fs.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" | "),
                })
                .collect();
            let _ = writeln!(out, "  template {}{params} {{", t.name);
            let _ = writeln!(out, "    con {};", con.join(", "));
            let _ = writeln!(out, "    eff {};", fluent_list(&t.eff));
            let _ = writeln!(out, "    duration {};", t.duration);
            out.push_str("  }\n");
        }
        let _ = writeln!(out, "  world {};", fluent_list(&p.world));
        let _ = writeln!(out, "  goal {};", fluent_list(&p.goal));
        for q in &p.perturbations {
            let _ = writeln!(out, "  perturb {}: {};", q.before_tick, fluent_list(&q.effects));
        }
        out.push_str("}\n");
    }
    if let Some(s) = &doc.subsumption {
        out.push_str("subsumption {\n");
        for c in &s.controllers {
            let _ = writeln!(out, "  {};", quote(c));
        }
        out.push_str("}\n");
    }
    if let Some(tr) = &doc.teleoreactive {
        out.push_str("teleoreactive {\n");
        for r in &tr.rules {
            match &r.condition {
                Some(c) => {
                    let _ = writeln!(out, "  when {} do {};", quote(c), quote(&r.action));
                }
                None => {
                    let _ = writeln!(out, "  else do {};", quote(&r.action));
                }
            }
        }
        out.push_str("}\n");
    }
    if let Some(d) = &doc.decision {
        out.push_str("decision {\n");
        write_decision(&mut out, d, 1);
        out.push_str("}\n");
    }
    if let Some(f) = &doc.fsm {
        let _ = writeln!(out, "fsm {{\n  initial {};", quote(&f.initial));
        for s in &f.states {
            match f.actions.get(s) {
                Some(a) => {
                    let _ = writeln!(out, "  state {} do {};", quote(s), quote(a));
                }
                None => {
                    let _ = writeln!(out, "  state {};", quote(s));
                }
            }
        }
        for t in &f.transitions {
            let on = t.event.as_ref().map(|e| format!(" on {}", quote(e))).unwrap_or_default();
            let _ = writeln!(out, "  transition {} -> {}{on};", quote(&t.from), quote(&t.to));
        }
        out.push_str("}\n");
    }
    out
}
