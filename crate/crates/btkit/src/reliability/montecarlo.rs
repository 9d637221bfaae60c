//! Seeded simulation of whole trees with sampled leaf outcomes and durations.

use super::compose::GridPoint;
use super::profile::{ActionProfile, LeafProfile, ProfileKind, ProfileSet, CONDITION_EPSILON};
use super::ReliabilityError;
use crate::tree::{BTNode, NodeKind, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Generator used for every run; run `i` draws from stream `i` of the seeded generator.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.3), stream = run index";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub seed: u64,
    pub generator: String,
    pub ps: f64,
    pub pf: f64,
    pub mtts: Option<f64>,
    pub mttf: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    /// Empirical outcome distribution functions at the requested times.
    pub grid: Vec<GridPoint>,
}

/// Exponential draw with the given rate.
pub fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Outcome and duration of one execution of an action.
pub fn sample_action(a: &ActionProfile, rng: &mut ChaCha8Rng) -> (Status, f64) {
    let success = rng.gen::<f64>() < a.ps;
    let t = match (a.kind, success) {
        (ProfileKind::Stochastic, true) | (ProfileKind::HybridDetFailure, true) => exponential(rng, a.mu.unwrap_or(f64::NAN)),
        (ProfileKind::Stochastic, false) | (ProfileKind::HybridDetSuccess, false) => exponential(rng, a.nu.unwrap_or(f64::NAN)),
        (ProfileKind::Deterministic, true) | (ProfileKind::HybridDetSuccess, true) => a.tau_s.unwrap_or(f64::NAN),
        (ProfileKind::Deterministic, false) | (ProfileKind::HybridDetFailure, false) => a.tau_f.unwrap_or(f64::NAN),
    };
    (if success { Status::Success } else { Status::Failure }, t)
}

fn check(node: &BTNode, profiles: &ProfileSet) -> Result<(), ReliabilityError> {
    match &node.kind {
        NodeKind::Action(n) | NodeKind::Condition(n) => match profiles.get(n) {
            None => Err(ReliabilityError::MissingProfile(n.clone())),
            Some(LeafProfile::Action(a)) => a.validate(),
            Some(LeafProfile::Condition { ps }) if !(0.0..=1.0).contains(ps) => {
                Err(ReliabilityError::InvalidProfile(format!("condition {n} probability {ps}")))
            }
            Some(_) => Ok(()),
        },
        NodeKind::Decorator(_) => Err(ReliabilityError::Unsupported("decorators in analyzed trees".into())),
        NodeKind::Parallel(m) if *m == 0 || *m > node.children.len() => {
            Err(ReliabilityError::InvalidArgument(format!("parallel threshold {m}")))
        }
        _ if node.children.is_empty() => Err(ReliabilityError::Unsupported("control node without children".into())),
        _ => node.children.iter().try_for_each(|c| check(c, profiles)),
    }
}

fn simulate(node: &BTNode, profiles: &ProfileSet, rng: &mut ChaCha8Rng) -> (Status, f64) {
    match &node.kind {
        NodeKind::Action(n) | NodeKind::Condition(n) => match profiles[n] {
            LeafProfile::Action(a) => sample_action(&a, rng),
            LeafProfile::Condition { ps } => {
                let s = if rng.gen::<f64>() < ps { Status::Success } else { Status::Failure };
                (s, CONDITION_EPSILON)
            }
        },
        NodeKind::Sequence | NodeKind::SequenceMemory | NodeKind::Fallback | NodeKind::FallbackMemory => {
            let go_on = if matches!(node.kind, NodeKind::Sequence | NodeKind::SequenceMemory) {
                Status::Success
            } else {
                Status::Failure
            };
            let mut t = 0.0;
            for c in &node.children {
                let (s, dt) = simulate(c, profiles, rng);
                t += dt;
                if s != go_on {
                    return (s, t);
                }
            }
            (go_on, t)
        }
        NodeKind::Parallel(m) => {
            let n = node.children.len();
            let mut events: Vec<(f64, usize, Status)> =
                node.children.iter().enumerate().map(|(h, c)| { let (s, t) = simulate(c, profiles, rng); (t, h, s) }).collect();
            events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut succ, mut fail) = (0, 0);
            for (t, _, s) in events {
                match s {
                    Status::Success => succ += 1,
                    _ => fail += 1,
                }
                if succ >= *m {
                    return (Status::Success, t);
                }
                if fail > n - m {
                    return (Status::Failure, t);
                }
            }
            unreachable!("every child resolves, so a threshold is met")
        }
        NodeKind::Decorator(_) => unreachable!("rejected by check"),
    }
}

/// Simulates `runs` independent executions of `tree`. The result depends only on
/// `(tree, profiles, runs, seed, grid)`, not on the number of worker threads.
pub fn monte_carlo(
    tree: &BTNode,
    profiles: &ProfileSet,
    runs: usize,
    seed: u64,
    grid: &[f64],
) -> Result<MonteCarloReport, ReliabilityError> {
    if runs == 0 {
        return Err(ReliabilityError::InvalidArgument("runs must be at least 1".into()));
    }
    check(tree, profiles)?;
    let outcomes: Vec<(Status, f64)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            simulate(tree, profiles, &mut rng)
        })
        .collect();
    let (mut ns, mut nf, mut ts, mut tf) = (0usize, 0usize, 0.0, 0.0);
    for &(s, t) in &outcomes {
        if s == Status::Success {
            ns += 1;
            ts += t;
        } else {
            nf += 1;
            tf += t;
        }
    }
    let mut succ_times: Vec<f64> = outcomes.iter().filter(|o| o.0 == Status::Success).map(|o| o.1).collect();
    let mut fail_times: Vec<f64> = outcomes.iter().filter(|o| o.0 != Status::Success).map(|o| o.1).collect();
    succ_times.sort_by(f64::total_cmp);
    fail_times.sort_by(f64::total_cmp);
    let n = runs as f64;
    let grid = grid
        .iter()
        .map(|&t| {
            let ps = succ_times.partition_point(|&x| x <= t) as f64 / n;
            let pf = fail_times.partition_point(|&x| x <= t) as f64 / n;
            GridPoint { t, ps, pf, prun: (1.0 - ps - pf).max(0.0) }
        })
        .collect();
    let mtts = (ns > 0).then(|| ts / ns as f64);
    let mttf = (nf > 0).then(|| tf / nf as f64);
    Ok(MonteCarloReport {
        runs,
        seed,
        generator: GENERATOR.to_string(),
        ps: ns as f64 / n,
        pf: nf as f64 / n,
        mtts,
        mttf,
        mu: mtts.map(|t| 1.0 / t),
        nu: mttf.map(|t| 1.0 / t),
        grid,
    })
}
