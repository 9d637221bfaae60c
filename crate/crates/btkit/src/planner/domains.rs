//! Built-in planning domains: graph search, a cube-moving robot and entering a house.

use super::world::{ActionTemplate, Domain, Fluent, WorldState};

/// A domain with its initial world and goal.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub domain: Domain,
    pub world: WorldState,
    pub goal: Vec<Fluent>,
}

fn f(s: &str) -> Fluent {
    Fluent::parse(s).expect("built-in fluent")
}

fn t(name: &str, params: &[&str], con: &[&str], eff: &[&str]) -> ActionTemplate {
    ActionTemplate::new(name, params, con, eff).expect("built-in template")
}

/// Directed edges `(from, to)` in declaration order.
pub const GRAPH_EDGES: [(&str, &str); 9] = [
    ("s5", "sg"),
    ("s3", "sg"),
    ("sg", "s5"),
    ("s4", "s5"),
    ("s1", "s3"),
    ("s4", "s3"),
    ("s2", "s4"),
    ("s0", "s1"),
    ("s0", "s2"),
];

/// Agent moving along graph edges from `s0` to `sg`; each move takes two ticks.
pub fn graph() -> Scenario {
    let templates = GRAPH_EDGES
        .iter()
        .map(|(a, b)| t(&format!("{a}->{b}"), &[], &[&format!("at({a})")], &[&format!("at({b})"), &format!("!at({a})")]).with_duration(2))
        .collect();
    let objects = ["s0", "s1", "s2", "s3", "s4", "s5", "sg"].map(String::from).to_vec();
    Scenario { domain: Domain { objects, templates }, world: WorldState::new(&[f("at(s0)")]), goal: vec![f("at(sg)")] }
}

/// Shortest edge count from `from` to `to` by breadth-first search.
pub fn graph_distance(from: &str, to: &str) -> Option<usize> {
    let mut frontier = vec![from.to_string()];
    let mut seen = vec![from.to_string()];
    for d in 0..=GRAPH_EDGES.len() {
        if frontier.iter().any(|s| s == to) {
            return Some(d);
        }
        let mut next = Vec::new();
        for s in &frontier {
            for (a, b) in GRAPH_EDGES {
                if a == s && !seen.iter().any(|x| x == b) {
                    seen.push(b.to_string());
                    next.push(b.to_string());
                }
            }
        }
        frontier = next;
    }
    None
}

/// A robot that must put the cube on the goal; moving takes three ticks.
pub fn cube_world() -> Scenario {
    let templates = vec![
        t("Place", &["?i", "?p"], &["hand(?i)", "robot_at(?p)", "item(?i)"], &["at(?i,?p)", "hand(none)", "!hand(?i)"]),
        t("Pick", &["?i", "?p"], &["at(?i,?p)", "robot_at(?p)", "hand(none)", "item(?i)"], &["hand(?i)", "!hand(none)", "!at(?i,?p)"]),
        t("MoveTo", &["?p"], &["clear(?p)"], &["robot_at(?p)", "!robot_at(_)"]).with_duration(3),
        t(
            "Push",
            &["?o", "?t", "?q"],
            &["blocks(?o,?t)", "at(?o,?q)", "robot_at(?q)", "hand(none)"],
            &["clear(?t)", "!blocks(?o,?t)", "at(?o,side)", "!at(?o,?q)"],
        ),
    ];
    let objects = ["cube", "sphere", "start", "home", "corridor", "goal", "side"].map(String::from).to_vec();
    let world = WorldState::new(&[
        f("item(cube)"),
        f("item(sphere)"),
        f("at(cube,home)"),
        f("at(sphere,side)"),
        f("hand(none)"),
        f("robot_at(start)"),
        f("clear(home)"),
        f("clear(corridor)"),
        f("clear(goal)"),
    ]);
    Scenario { domain: Domain { objects, templates }, world, goal: vec![f("at(cube,goal)")] }
}

/// The sphere rolls into the corridor and blocks the way to the goal.
pub fn cube_obstruction() -> Vec<Fluent> {
    ["!at(sphere,side)", "at(sphere,corridor)", "blocks(sphere,goal)", "!clear(goal)"].map(f).to_vec()
}

/// Getting inside a house through a door that may need opening or breaking.
pub fn door() -> Scenario {
    let templates = vec![
        t("GoInside", &[], &["DoorOpen"], &["IsInsideHouse"]),
        t("OpenDoor", &[], &["DoorUnlocked"], &["DoorOpen"]),
        t("BrakeDoorOpen", &[], &["HasCrowbar", "DoorWeak"], &["DoorOpen"]),
    ];
    Scenario {
        domain: Domain { objects: vec![], templates },
        world: WorldState::new(&[f("HasCrowbar"), f("DoorWeak")]),
        goal: vec![f("IsInsideHouse")],
    }
}
