use crate::{sim, Emit, Mode, Source};
use btkit::converters::{dt_to_bt, fsm_to_bt, subsumption_to_bt, tr_to_bt};
use btkit::format::{self, Document, FormatError};
use btkit::planner::{pabt_run, Outcome, PlanConfig, WorldState};
use btkit::reliability::deterministic::DEFAULT_PRECISION;
use btkit::reliability::{self, deterministic_transient, monte_carlo, LeafProfile};
use btkit::statespace::{
    battery, check_composition_lemma, check_fts, check_safety, execute, humanoid, BatteryModel, FtsReport, HumanoidModel,
    LemmaKind, SafetyProblem, SafetyReport,
};
use btkit::{tick, Status};
use serde_json::{json, Value};
use std::error::Error;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

pub const FORMAT_VERSION: &str = "1.0";

type Res = Result<u8, Box<dyn Error>>;

fn load(path: &Path) -> Result<Document, Box<dyn Error>> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?
    };
    Ok(format::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn resolve_seed(flag: Option<u64>, doc: &Document) -> (u64, &'static str) {
    match (flag, doc.meta.seed) {
        (Some(s), _) => (s, "flag"),
        (None, Some(s)) => (s, "document"),
        (None, None) => (0, "default"),
    }
}

fn header(command: &str, doc: &Document) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("format_version".into(), json!(FORMAT_VERSION));
    m.insert("command".into(), json!(command));
    m.insert("time_unit".into(), json!(doc.meta.time_unit));
    m
}

/// Writes to standard output; a closed reader (e.g. `| head`) ends the process quietly.
fn out(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing output: {e}");
        std::process::exit(3);
    }
}

fn emit(v: serde_json::Map<String, Value>) {
    out(&format!("{}\n", serde_json::to_string_pretty(&Value::Object(v)).expect("report is valid JSON")));
}

pub fn run(path: &Path, ticks: u64, seed: Option<u64>) -> Res {
    let doc = load(path)?;
    let tree = doc.require_tree()?.clone();
    let (seed, _) = resolve_seed(seed, &doc);
    let (mut ctx, clock) = sim::bind(&doc, seed)?;
    let dt = doc.meta.tick.unwrap_or(1.0);
    for k in 0..ticks {
        let time = k as f64 * dt;
        clock.set_time(time);
        let status = tick(&tree, &mut ctx)?;
        let leaves: Vec<Value> =
            ctx.trace.iter().map(|l| json!({"node": l.node, "leaf": l.behavior, "status": l.status})).collect();
        let halted: Vec<&str> = ctx.halted.iter().map(|(_, b)| b.as_str()).collect();
        let line = json!({"tick": k + 1, "time": time, "status": status, "leaves": leaves, "halted": halted});
        out(&format!("{line}\n"));
        match status {
            Status::Success => {
                eprintln!("root Success after {} ticks (seed {seed})", k + 1);
                return Ok(0);
            }
            Status::Failure => {
                eprintln!("root Failure after {} ticks (seed {seed})", k + 1);
                return Ok(1);
            }
            Status::Running => {}
        }
    }
    eprintln!("tick budget of {ticks} exhausted (seed {seed})");
    Ok(2)
}

pub struct AnalyzeFlags {
    pub grid: Option<usize>,
    pub horizon: Option<f64>,
    pub runs: usize,
    pub seed: Option<u64>,
}

fn parse_mode(s: &str) -> Option<Mode> {
    <Mode as clap::ValueEnum>::from_str(s, true).ok()
}

pub fn analyze(args: &[String], flags: AnalyzeFlags) -> Res {
    let (file, mode) = match args {
        [a] => (a.as_str(), None),
        [a, b] => match (parse_mode(a), parse_mode(b)) {
            (_, Some(m)) => (a.as_str(), Some(m)),
            (Some(m), None) => (b.as_str(), Some(m)),
            (None, None) => return Err(format!("`{b}` is not an analysis mode").into()),
        },
        _ => return Err("expected FILE [MODE]".into()),
    };
    let doc = load(Path::new(file))?;
    let mode = mode.unwrap_or(if doc.statespace.is_some() { Mode::Statespace } else { Mode::Reliability });
    let mut out = header("analyze", &doc);
    let result = match mode {
        Mode::Statespace => statespace(&doc, &flags)?,
        Mode::Reliability => reliability_report(&doc, &flags)?,
        Mode::Deterministic => {
            let tree = doc.require_tree()?;
            require_profiles(&doc)?;
            let horizon = flags.horizon.unwrap_or_else(|| longest_run(&doc));
            let r = deterministic_transient(tree, &doc.profiles, horizon, DEFAULT_PRECISION)?;
            json!({"horizon": horizon, "report": r})
        }
        Mode::Montecarlo => {
            let tree = doc.require_tree()?;
            let (seed, source) = resolve_seed(flags.seed, &doc);
            let horizon = match flags.horizon {
                Some(h) => h,
                None => default_horizon(&doc).unwrap_or(10.0),
            };
            let grid = time_grid(flags.grid.unwrap_or(11), horizon)?;
            let r = monte_carlo(tree, &doc.profiles, flags.runs, seed, &grid)?;
            let analytic = reliability::analyze(tree, &doc.profiles, &[]).ok();
            let rel = |e: Option<f64>, a: Option<f64>| match (e, a) {
                (Some(e), Some(a)) if a != 0.0 => Some((e - a).abs() / a.abs()),
                _ => None,
            };
            let comparison = analytic.map(|a| {
                json!({
                    "mu": a.mu, "nu": a.nu, "ps": a.ps_inf, "pf": a.pf_inf,
                    "mu_rel_error": rel(r.mu, a.mu), "nu_rel_error": rel(r.nu, a.nu),
                })
            });
            json!({"seed": seed, "seed_source": source, "report": r, "analytic": comparison})
        }
    };
    out.insert("analysis".into(), json!(format!("{mode:?}").to_lowercase()));
    out.insert("result".into(), result);
    emit(out);
    Ok(0)
}

fn require_profiles(doc: &Document) -> Result<(), FormatError> {
    if doc.profiles.is_empty() {
        Err(FormatError::MissingSection("profiles"))
    } else {
        Ok(())
    }
}

/// Five times the longer of the root's mean times, or 10 when neither is finite.
fn default_horizon(doc: &Document) -> Result<f64, Box<dyn Error>> {
    require_profiles(doc)?;
    let r = reliability::analyze(doc.require_tree()?, &doc.profiles, &[])?;
    let m = [r.mtts, r.mttf].into_iter().flatten().filter(|v| v.is_finite()).fold(0.0, f64::max);
    Ok(if m > 0.0 { 5.0 * m } else { 10.0 })
}

/// Sum over leaves of their longer fixed duration, an upper bound on any run.
fn longest_run(doc: &Document) -> f64 {
    let Some(tree) = &doc.tree else { return 0.0 };
    tree.leaves()
        .iter()
        .filter_map(|l| match doc.profiles.get(l.leaf_name()?) {
            Some(LeafProfile::Action(a)) => Some(a.tau_s.unwrap_or(0.0).max(a.tau_f.unwrap_or(0.0))),
            _ => None,
        })
        .sum()
}

fn time_grid(points: usize, horizon: f64) -> Result<Vec<f64>, Box<dyn Error>> {
    if points < 2 || !(horizon > 0.0) || !horizon.is_finite() {
        return Err("--grid needs at least 2 points and --horizon a positive time".into());
    }
    Ok((0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect())
}

fn reliability_report(doc: &Document, flags: &AnalyzeFlags) -> Result<Value, Box<dyn Error>> {
    let tree = doc.require_tree()?;
    require_profiles(doc)?;
    let horizon = match flags.horizon {
        Some(h) => h,
        None => default_horizon(doc)?,
    };
    let grid = time_grid(flags.grid.unwrap_or(11), horizon)?;
    let r = reliability::analyze(tree, &doc.profiles, &grid)?;
    let nodes = reliability::compose_profiles(tree, &doc.profiles)?.nodes;
    Ok(json!({
        "mtts": r.mtts, "mttf": r.mttf, "mu": r.mu, "nu": r.nu,
        "ps_inf": r.ps_inf, "pf_inf": r.pf_inf,
        "grid": r.grid, "nodes": nodes, "notes": r.notes,
    }))
}

fn fts_json(name: &str, r: &FtsReport) -> Value {
    json!({
        "name": name, "is_fts": r.is_fts, "declared_tau": r.declared_tau, "worst_tau": r.worst_tau,
        "checked": r.checked, "witnesses": r.witnesses.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
    })
}

fn safety_json(r: &SafetyReport) -> Value {
    json!({
        "safe": r.safe(),
        "max_step_length": r.max_step_length,
        "margin_holds": r.margin_holds,
        "guard_safe": r.guard_safe,
        "guard_fts": r.guard_fts.as_ref().map(|f| fts_json("GuaranteePower", f)),
        "starts_checked": r.starts_checked,
        "composition_safe": r.composition_safe,
        "violations": r.violations.iter().map(|(x, k)| json!({"start": x, "step": k})).collect::<Vec<_>>(),
        "min_clearance": r.min_clearance,
        "approximations": r.approximations,
    })
}

fn statespace(doc: &Document, flags: &AnalyzeFlags) -> Result<Value, Box<dyn Error>> {
    let sec = doc.statespace.as_ref().ok_or(FormatError::MissingSection("statespace"))?;
    let res = flags.grid.or(sec.grid);
    match sec.model.as_str() {
        "humanoid" => {
            let h = humanoid();
            let res = res.unwrap_or(50);
            let d = HumanoidModel::domain(res);
            let children = [("WalkHome", &h.walk, &h.walk_spec), ("SitToStand", &h.sit_to_stand, &h.sit_to_stand_spec), (
                "LieToSit",
                &h.lie_to_sit,
                &h.lie_to_sit_spec,
            )]
            .iter()
            .map(|(n, bt, spec)| check_fts(bt, spec, &d).map(|r| fts_json(n, &r)))
            .collect::<Result<Vec<_>, _>>()?;
            let first = check_composition_lemma(&LemmaKind::Fallback, &h.walk, &h.walk_spec, &h.sit_to_stand, &h.sit_to_stand_spec, &d)?;
            let second = check_composition_lemma(&LemmaKind::Fallback, &first.composed, &first.composed_spec, &h.lie_to_sit, &h.lie_to_sit_spec, &d)?;
            let lemma = |r: &btkit::statespace::LemmaReport| {
                json!({
                    "hypotheses_hold": r.hypotheses_hold,
                    "witnesses": r.hypothesis_witnesses.iter().map(|(n, x)| json!({"hypothesis": n, "x": x})).collect::<Vec<_>>(),
                    "tau": r.tau0,
                    "conclusion_holds": r.conclusion_holds,
                    "assumptions": r.assumptions,
                })
            };
            Ok(json!({
                "model": "humanoid",
                "grid": [res, res],
                "children": children,
                "lemmas": [lemma(&first), lemma(&second)],
                "combined": fts_json("Fallback(WalkHome, SitToStand, LieToSit)", &second.fts),
            }))
        }
        "battery" => {
            let b = battery();
            let res = res.unwrap_or(101);
            let steps = flags.horizon.map(|h| h as usize).or(sec.steps).unwrap_or(10_000);
            let problem = SafetyProblem {
                guard: b.guarantee_power.clone(),
                guard_spec: b.guard_spec.clone(),
                task: b.do_other_task.clone(),
                obstacle: b.obstacle.clone(),
                init: b.init.clone(),
                d: b.d,
                distance_to_success: Some(Arc::new(BatteryModel::distance_to_guard_success)),
                clearance: Some(Arc::new(|x: &[f64]| x[1])),
                steps,
            };
            let r = check_safety(&problem, &BatteryModel::domain(res))?;
            let t = execute(&b.combined(), &[80.0, 50.0], steps)?;
            let lowest = t.steps.iter().map(|s| s.x[1]).fold(f64::INFINITY, f64::min);
            Ok(json!({
                "model": "battery",
                "grid": [res, res],
                "steps": steps,
                "safety": safety_json(&r),
                "example_start": {"x0": [80.0, 50.0], "min_battery": lowest, "safe": lowest > 0.0},
            }))
        }
        other => Err(format!("unknown state-space model `{other}` (expected humanoid or battery)").into()),
    }
}

pub fn plan(path: &Path, max_iter: usize, max_ticks: u64) -> Res {
    let doc = load(path)?;
    let p = doc.planner.as_ref().ok_or(FormatError::MissingSection("planner"))?;
    let config = PlanConfig {
        max_iterations: max_iter,
        max_ticks,
        perturbations: p.perturbations.clone(),
        ..PlanConfig::default()
    };
    let run = pabt_run(&p.goal, &p.domain, WorldState::new(&p.world), &config)?;
    let code = match run.outcome {
        Outcome::Success => 0,
        Outcome::BudgetExhausted => 2,
        _ => 1,
    };
    eprintln!("planning outcome: {:?} after {} ticks, {} expansions", run.outcome, run.ticks.len(), run.expansions.len());
    let mut out = header("plan", &doc);
    out.insert("outcome".into(), serde_json::to_value(&run.outcome)?);
    out.insert("executed".into(), json!(run.executed));
    out.insert("expansions".into(), serde_json::to_value(&run.expansions)?);
    out.insert("conflicts".into(), serde_json::to_value(&run.conflicts)?);
    out.insert("refinements".into(), serde_json::to_value(&run.refinements)?);
    out.insert("ticks".into(), serde_json::to_value(&run.ticks)?);
    out.insert("world".into(), json!(run.world.facts().iter().map(|f| f.to_string()).collect::<Vec<_>>()));
    out.insert("tree".into(), json!(format::serialize_tree(&run.tree.root)));
    out.insert("dot".into(), json!(format::export_dot(&run.tree.root)));
    emit(out);
    Ok(code)
}

pub fn convert(path: &Path, from: Source, what: Emit) -> Res {
    let doc = load(path)?;
    let tree = match from {
        Source::Subsumption => subsumption_to_bt(doc.subsumption.as_ref().ok_or(FormatError::MissingSection("subsumption"))?)?,
        Source::Teleoreactive => tr_to_bt(doc.teleoreactive.as_ref().ok_or(FormatError::MissingSection("teleoreactive"))?)?,
        Source::Decision => dt_to_bt(doc.decision.as_ref().ok_or(FormatError::MissingSection("decision"))?),
        Source::Fsm => fsm_to_bt(doc.fsm.as_ref().ok_or(FormatError::MissingSection("fsm"))?)?,
    };
    let mut converted = Document::from_tree(tree);
    converted.meta = doc.meta.clone();
    let text = format::serialize(&converted);
    let dot = format::export_dot(converted.tree.as_ref().expect("converted tree"));
    match what {
        Emit::Bt => out(&text),
        Emit::Dot => out(&dot),
        Emit::Json => {
            let mut out = header("convert", &doc);
            out.insert("from".into(), json!(format!("{from:?}").to_lowercase()));
            out.insert("document".into(), json!(text));
            out.insert("dot".into(), json!(dot));
            emit(out);
        }
    }
    Ok(0)
}

pub fn export_dot(path: &Path) -> Res {
    let doc = load(path)?;
    out(&format::export_dot(doc.require_tree()?));
    Ok(0)
}
