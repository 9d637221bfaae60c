//! Leaf behaviors for `bt run`: scripted status sequences and sampled profiles.

use btkit::format::Document;
use btkit::reliability::{sample_action, LeafProfile};
use btkit::{ExecutionContext, NodeKind, Status};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

struct State {
    time: f64,
    rng: ChaCha8Rng,
    cursors: HashMap<String, usize>,
    /// Running profiled actions: sampled outcome and completion time.
    active: HashMap<String, (Status, f64)>,
}

/// Shared clock of a simulated run.
#[derive(Clone)]
pub struct Sim(Arc<Mutex<State>>);

impl Sim {
    pub fn set_time(&self, t: f64) {
        self.0.lock().expect("sim lock").time = t;
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Registers a behavior for every leaf of the tree. Leaves with neither a script
/// nor a profile are reported by name.
pub fn bind(doc: &Document, seed: u64) -> Result<(ExecutionContext, Sim), String> {
    let tree = doc.require_tree().map_err(|e| e.to_string())?;
    let sim = Sim(Arc::new(Mutex::new(State {
        time: 0.0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        cursors: HashMap::new(),
        active: HashMap::new(),
    })));
    let mut ctx = ExecutionContext::new();
    let mut seen = std::collections::BTreeSet::new();
    for leaf in tree.leaves() {
        let name = leaf.leaf_name().unwrap_or_default().to_string();
        if !seen.insert(name.clone()) {
            continue;
        }
        let is_action = matches!(leaf.kind, NodeKind::Action(_));
        if let Some(script) = doc.scripts.get(&name).cloned() {
            let (s, key) = (sim.clone(), name.clone());
            let next = move || {
                let mut st = s.0.lock().expect("sim lock");
                let i = st.cursors.entry(key.clone()).or_insert(0);
                let out = script[(*i).min(script.len() - 1)];
                *i += 1;
                out
            };
            if is_action {
                ctx.register_action(name, move |_| next());
            } else {
                ctx.register_condition(name, move |_| next());
            }
            continue;
        }
        match doc.profiles.get(&name).copied() {
            Some(LeafProfile::Condition { ps }) => {
                let s = sim.clone();
                ctx.register_condition(name, move |_| {
                    let mut st = s.0.lock().expect("sim lock");
                    if uniform(&mut st.rng) < ps {
                        Status::Success
                    } else {
                        Status::Failure
                    }
                });
            }
            Some(LeafProfile::Action(profile)) => {
                let (s, key) = (sim.clone(), name.clone());
                ctx.register_action(name.clone(), move |_| {
                    let mut st = s.0.lock().expect("sim lock");
                    let now = st.time;
                    let (outcome, done_at) = match st.active.get(&key) {
                        Some(a) => *a,
                        None => {
                            let (o, d) = sample_action(&profile, &mut st.rng);
                            st.active.insert(key.clone(), (o, now + d));
                            (o, now + d)
                        }
                    };
                    if now >= done_at {
                        st.active.remove(&key);
                        outcome
                    } else {
                        Status::Running
                    }
                });
                let (s, key) = (sim.clone(), name.clone());
                ctx.register_halt(name, move |_| {
                    s.0.lock().expect("sim lock").active.remove(&key);
                });
            }
            None => return Err(format!("leaf `{name}` has neither a script nor a profile")),
        }
    }
    Ok((ctx, sim))
}
