use btkit::converters::{example_robot_dt, example_subsumption, goto_program, grab_and_throw_fsm, subsumption_to_bt};
use btkit::format::{parse, serialize};
use btkit::planner::{domains, WorldState};
use btkit::reliability::{self, ActionProfile, LeafProfile};
use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("golden").join(name)
}

fn bt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bt")).args(args).env_remove("BT_SEED").output().expect("bt runs")
}

fn bt_golden(cmd: &str, file: &str, extra: &[&str]) -> Output {
    let path = golden(file);
    let mut args = vec![cmd, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    bt(&args)
}

fn json(out: &Output) -> Value {
    assert!(out.status.success() || out.status.code() == Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON object")
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema").join(name);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&s).expect("schema compiles")
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn corpus() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(golden(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "bt"))
        .collect();
    v.sort();
    v
}

#[test]
fn golden_corpus_round_trips() {
    let files = corpus();
    assert!(files.len() >= 15);
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        let doc = parse(&text).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        let again = parse(&serialize(&doc)).unwrap();
        assert_eq!(again, doc, "{}", f.display());
        assert_eq!(serialize(&again), serialize(&doc));
    }
}

#[test]
fn golden_files_match_built_in_examples() {
    let load = |n: &str| parse(&std::fs::read_to_string(golden(n)).unwrap()).unwrap();
    for (file, scenario) in [("graph.bt", domains::graph()), ("cube.bt", domains::cube_world()), ("door.bt", domains::door())] {
        let p = load(file).planner.unwrap();
        assert_eq!(p.domain, scenario.domain, "{file}");
        assert_eq!(WorldState::new(&p.world), scenario.world, "{file}");
        assert_eq!(p.goal, scenario.goal, "{file}");
    }
    let cube = load("cube.bt").planner.unwrap();
    assert_eq!(cube.perturbations[0].before_tick, 7);
    assert_eq!(cube.perturbations[0].effects, domains::cube_obstruction());
    assert_eq!(load("subsumption.bt").subsumption.unwrap(), example_subsumption());
    assert_eq!(load("teleoreactive.bt").teleoreactive.unwrap(), goto_program());
    assert_eq!(load("decision.bt").decision.unwrap(), example_robot_dt());
    assert_eq!(load("fsm.bt").fsm.unwrap(), grab_and_throw_fsm());
}

#[test]
fn search_and_grasp_parses_and_analyzes() {
    let out = bt_golden("analyze", "search_and_grasp.bt", &["reliability"]);
    let r = json(&out);
    assert_eq!(r["analysis"], "reliability");
    assert_eq!(r["time_unit"], "s");
    let res = &r["result"];
    assert!((res["ps_inf"].as_f64().unwrap() - 0.888 * 0.55).abs() < 1e-9);
    assert_eq!(res["nodes"].as_array().unwrap().len(), 5);
    assert_valid(&schema("report.schema.json"), &r);
}

/// Mean time to success of a Fallback of exponential actions, conditioned on success.
fn fallback_mtts(leaves: &[(f64, f64, f64)]) -> f64 {
    let (mut reach, mut elapsed, mut mass, mut weighted) = (1.0, 0.0, 0.0, 0.0);
    for &(ps, mu, nu) in leaves {
        mass += reach * ps;
        weighted += reach * ps * (elapsed + 1.0 / mu);
        elapsed += 1.0 / nu;
        reach *= 1.0 - ps;
    }
    weighted / mass
}

#[test]
fn analyze_reliability_mtts_matches_closed_form() {
    let leaves = [(0.3, 0.01, 0.0167), (0.8, 0.01, 0.01), (0.2, 0.005, 0.0056)];
    let out = bt_golden("analyze", "search_fallback.bt", &["reliability", "--grid", "5", "--horizon", "400"]);
    let r = json(&out);
    let mtts = r["result"]["mtts"].as_f64().unwrap();
    let expect = fallback_mtts(&leaves);
    assert!((mtts - expect).abs() / expect < 1e-9, "{mtts} vs {expect}");

    let doc = parse(&std::fs::read_to_string(golden("search_fallback.bt")).unwrap()).unwrap();
    let lib = reliability::analyze(doc.tree.as_ref().unwrap(), &doc.profiles, &[]).unwrap();
    assert_eq!(Some(mtts), lib.mtts);
    assert_eq!(r["result"]["grid"].as_array().unwrap().len(), 5);
    assert_eq!(r["result"]["grid"][4]["t"], 400.0);
    let profile = doc.profiles["Search on the Floor"];
    assert_eq!(profile, LeafProfile::Action(ActionProfile::stochastic(0.3, 0.01, 0.0167)));
}

#[test]
fn mode_may_precede_the_file() {
    let a = bt_golden("analyze", "search_fallback.bt", &["reliability"]);
    let p = golden("search_fallback.bt");
    let b = bt(&["analyze", "reliability", p.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(bt_golden("analyze", "search_fallback.bt", &["nonsense"]).status.code(), Some(3));
}

#[test]
fn all_reports_validate_against_the_schema() {
    let v = schema("report.schema.json");
    let cases: &[(&str, &str, &[&str])] = &[
        ("analyze", "search_and_grasp.bt", &[]),
        ("analyze", "deterministic.bt", &["deterministic"]),
        ("analyze", "search_fallback.bt", &["montecarlo", "--runs", "500", "--seed", "3"]),
        ("analyze", "humanoid.bt", &["--grid", "20"]),
        ("analyze", "battery.bt", &["--grid", "21", "--horizon", "500"]),
        ("plan", "graph.bt", &[]),
        ("plan", "cube.bt", &[]),
        ("plan", "door.bt", &["--max-iter", "1"]),
        ("convert", "subsumption.bt", &["--from", "subsumption"]),
        ("convert", "teleoreactive.bt", &["--from", "teleoreactive"]),
        ("convert", "decision.bt", &["--from", "decision"]),
        ("convert", "fsm.bt", &["--from", "fsm"]),
    ];
    for (cmd, file, extra) in cases {
        let out = bt_golden(cmd, file, extra);
        assert_ne!(out.status.code(), Some(3), "{cmd} {file}: {}", String::from_utf8_lossy(&out.stderr));
        let r: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_valid(&v, &r);
        assert_eq!(r["format_version"], "1.0");
    }
}

#[test]
fn run_exit_codes() {
    assert_eq!(bt_golden("run", "certain_success.bt", &[]).status.code(), Some(0));
    assert_eq!(bt_golden("run", "certain_failure.bt", &[]).status.code(), Some(1));
    let out = bt_golden("run", "never_done.bt", &["--ticks", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let v = schema("trace.schema.json");
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 7);
    for l in lines {
        assert_valid(&v, &serde_json::from_str(l).unwrap());
    }
}

#[test]
fn run_trace_shows_running_then_success() {
    let out = bt_golden("run", "certain_success.bt", &[]);
    let statuses: Vec<String> = std::str::from_utf8(&out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["status"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(statuses, ["Running", "Running", "Success"]);
}

#[test]
fn seeded_runs_are_reproducible() {
    let path = golden("search_and_grasp.bt");
    let p = path.to_str().unwrap();
    let a = bt(&["run", p, "--seed", "5"]);
    let b = bt(&["run", p, "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());
    let env = Command::new(env!("CARGO_BIN_EXE_bt")).args(["run", p]).env("BT_SEED", "5").output().unwrap();
    assert_eq!(env.stdout, a.stdout);
    let flag_wins = Command::new(env!("CARGO_BIN_EXE_bt")).args(["run", p, "--seed", "6"]).env("BT_SEED", "5").output().unwrap();
    let six = bt(&["run", p, "--seed", "6"]);
    assert_eq!(flag_wins.stdout, six.stdout);
    let differs = (0..5).map(|s| bt(&["run", p, "--seed", &s.to_string()]).stdout).any(|o| o != a.stdout);
    assert!(differs);
    let m1 = bt(&["analyze", p, "montecarlo", "--runs", "2000", "--seed", "9"]);
    let m2 = bt(&["analyze", p, "montecarlo", "--runs", "2000", "--seed", "9"]);
    assert_eq!(m1.stdout, m2.stdout);
}

#[test]
fn plan_graph_reaches_goal() {
    let out = bt_golden("plan", "graph.bt", &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["outcome"]["kind"], "Success");
    assert_eq!(r["executed"], serde_json::json!(["s0->s1", "s1->s3", "s3->sg"]));
    let ticks = r["ticks"].as_array().unwrap();
    assert_eq!(ticks.last().unwrap()["status"], "Success");
    let tree = parse(r["tree"].as_str().unwrap()).unwrap();
    assert!(tree.tree.is_some());

    let budget = bt_golden("plan", "graph.bt", &["--max-iter", "1"]);
    assert_eq!(budget.status.code(), Some(2));
}

#[test]
fn convert_subsumption_gives_document_and_dot() {
    let r = json(&bt_golden("convert", "subsumption.bt", &["--from", "subsumption"]));
    let doc = parse(r["document"].as_str().unwrap()).unwrap();
    assert_eq!(doc.tree.unwrap(), subsumption_to_bt(&example_subsumption()).unwrap());
    let dot = r["dot"].as_str().unwrap();
    assert!(dot.starts_with("digraph BT {"));
    assert!(dot.contains("label=\"?\""));
    let raw = bt_golden("convert", "subsumption.bt", &["--from", "subsumption", "--emit", "dot"]);
    assert_eq!(std::str::from_utf8(&raw.stdout).unwrap(), dot);
}

#[test]
fn export_dot_is_deterministic() {
    let a = bt_golden("export-dot", "search_and_grasp.bt", &[]);
    let b = bt_golden("export-dot", "search_and_grasp.bt", &[]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.matches(" [label=").count(), 12);
    assert!(text.contains("label=\"→*\""));
}

#[test]
fn diagnostics_go_to_stderr_with_nonzero_exit() {
    let dir = std::env::temp_dir().join(format!("bt-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.bt");
    std::fs::write(&bad, "tree {\n  sequence {\n    acton A;\n  }\n}\n").unwrap();
    let out = bt(&["export-dot", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("3:5"), "{err}");

    let missing = bt_golden("plan", "search_fallback.bt", &[]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8(missing.stderr).unwrap().contains("no `planner` section"));

    let unbound = dir.join("unbound.bt");
    std::fs::write(&unbound, "sequence { action A; action B; } script { A: success; }").unwrap();
    let out = bt(&["run", unbound.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("`B`"));

    let unit = dir.join("unit.bt");
    std::fs::write(&unit, "meta { time_unit \"fortnights (approx.)\"; } action A; profiles { A: stochastic ps=1 mu=2 nu=1; }").unwrap();
    let r = json(&bt(&["analyze", unit.to_str().unwrap()]));
    assert_eq!(r["time_unit"], "fortnights (approx.)");
    assert_eq!(r["result"]["mtts"], 0.5);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn help_documents_exit_codes() {
    let out = bt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Exit codes"));
    assert!(text.contains("BT_SEED"));
    assert_eq!(bt(&["frobnicate"]).status.code(), Some(3));
}
