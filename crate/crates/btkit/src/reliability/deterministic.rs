//! Exact outcome distributions when every leaf has fixed success and failure times.
//! The probabilities are piecewise constant, changing only at sums of leaf times.

use super::compose::GridPoint;
use super::profile::{LeafProfile, ProfileKind, ProfileSet};
use super::ReliabilityError;
use crate::tree::{BTNode, NodeKind, Status};
use serde::Serialize;
use std::collections::BTreeMap;

/// Default resolution for finding the common time step.
pub const DEFAULT_PRECISION: f64 = 1e-6;

const MAX_GRID_POINTS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicReport {
    /// Largest step dividing every leaf time.
    pub step: f64,
    /// `(time, probability mass)` of each success jump, ordered by time.
    pub success_jumps: Vec<(f64, f64)>,
    pub failure_jumps: Vec<(f64, f64)>,
    /// Zero-order-hold samples at every multiple of `step` up to the horizon.
    pub grid: Vec<GridPoint>,
}

/// Outcome atoms keyed by (status, time in steps of the precision).
type Atoms = BTreeMap<(bool, u64), f64>;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Quantizer {
    precision: f64,
}

impl Quantizer {
    fn units(&self, t: f64) -> Result<u64, ReliabilityError> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(ReliabilityError::InvalidProfile(format!("time {t}")));
        }
        let k = (t / self.precision).round();
        if (k * self.precision - t).abs() > 1e-9 * t.max(1.0) {
            return Err(ReliabilityError::NoCommonStep(t));
        }
        Ok(k as u64)
    }
}

fn leaf_atoms(node: &BTNode, profiles: &ProfileSet, q: &Quantizer) -> Result<Atoms, ReliabilityError> {
    let name = node.leaf_name().expect("leaf");
    let p = profiles.get(name).ok_or_else(|| ReliabilityError::MissingProfile(name.to_string()))?;
    let mut a = Atoms::new();
    match p {
        LeafProfile::Condition { ps } => {
            add(&mut a, (true, 0), *ps);
            add(&mut a, (false, 0), 1.0 - ps);
        }
        LeafProfile::Action(ap) => {
            ap.validate()?;
            if ap.kind != ProfileKind::Deterministic {
                return Err(ReliabilityError::InvalidProfile(format!("{name} is not deterministic")));
            }
            add(&mut a, (true, q.units(ap.tau_s.expect("validated"))?), ap.ps);
            add(&mut a, (false, q.units(ap.tau_f.expect("validated"))?), ap.pf);
        }
    }
    Ok(a)
}

fn add(a: &mut Atoms, k: (bool, u64), p: f64) {
    if p > 0.0 {
        *a.entry(k).or_insert(0.0) += p;
    }
}

fn atoms(node: &BTNode, profiles: &ProfileSet, q: &Quantizer) -> Result<Atoms, ReliabilityError> {
    match &node.kind {
        NodeKind::Action(_) | NodeKind::Condition(_) => leaf_atoms(node, profiles, q),
        NodeKind::Sequence | NodeKind::SequenceMemory | NodeKind::Fallback | NodeKind::FallbackMemory => {
            // Sequence continues on success, Fallback on failure.
            let go_on = matches!(node.kind, NodeKind::Sequence | NodeKind::SequenceMemory);
            let mut acc = Atoms::new();
            add(&mut acc, (go_on, 0), 1.0);
            for c in &node.children {
                let child = atoms(c, profiles, q)?;
                let mut next = Atoms::new();
                for (&(s, t), &p) in &acc {
                    if s != go_on {
                        add(&mut next, (s, t), p);
                        continue;
                    }
                    for (&(cs, ct), &cp) in &child {
                        add(&mut next, (cs, t + ct), p * cp);
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
        NodeKind::Parallel(m) => {
            let n = node.children.len();
            if *m == 0 || *m > n {
                return Err(ReliabilityError::InvalidArgument(format!("parallel threshold {m}")));
            }
            let kids: Vec<Vec<((bool, u64), f64)>> = node
                .children
                .iter()
                .map(|c| atoms(c, profiles, q).map(|a| a.into_iter().collect()))
                .collect::<Result<_, _>>()?;
            let mut acc = Atoms::new();
            let mut idx = vec![0usize; n];
            loop {
                let mut events: Vec<(u64, usize, bool)> = Vec::with_capacity(n);
                let mut p = 1.0;
                for (h, &i) in idx.iter().enumerate() {
                    let ((s, t), cp) = kids[h][i];
                    p *= cp;
                    events.push((t, h, s));
                }
                events.sort();
                let (mut succ, mut fail) = (0, 0);
                for (t, _, s) in events {
                    if s {
                        succ += 1;
                    } else {
                        fail += 1;
                    }
                    if succ >= *m {
                        add(&mut acc, (true, t), p);
                        break;
                    }
                    if fail > n - m {
                        add(&mut acc, (false, t), p);
                        break;
                    }
                }
                let mut h = 0;
                loop {
                    if h == n {
                        return Ok(acc);
                    }
                    idx[h] += 1;
                    if idx[h] < kids[h].len() {
                        break;
                    }
                    idx[h] = 0;
                    h += 1;
                }
            }
        }
        NodeKind::Decorator(_) => Err(ReliabilityError::Unsupported("decorators in analyzed trees".into())),
    }
}

/// Step-function success and failure probabilities of the root up to `horizon`.
pub fn deterministic_transient(
    tree: &BTNode,
    profiles: &ProfileSet,
    horizon: f64,
    precision: f64,
) -> Result<DeterministicReport, ReliabilityError> {
    if !(precision > 0.0) || !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(ReliabilityError::InvalidArgument("precision must be positive and horizon finite".into()));
    }
    let q = Quantizer { precision };
    let mut step_units = 0u64;
    for leaf in tree.leaves() {
        if let Some(LeafProfile::Action(a)) = leaf.leaf_name().and_then(|n| profiles.get(n)) {
            for t in [a.tau_s, a.tau_f].into_iter().flatten() {
                step_units = gcd(step_units, q.units(t)?);
            }
        }
    }
    let dist = atoms(tree, profiles, &q)?;
    let step = if step_units == 0 { horizon.max(precision) } else { step_units as f64 * precision };
    let jumps = |want: bool| -> Vec<(f64, f64)> {
        dist.iter().filter(|((s, _), _)| *s == want).map(|(&(_, t), &p)| (t as f64 * precision, p)).collect()
    };
    let (success_jumps, failure_jumps) = (jumps(true), jumps(false));
    let count = (horizon / step + 1e-9).floor() as u64 + 1;
    if count > MAX_GRID_POINTS {
        return Err(ReliabilityError::InvalidArgument(format!("{count} grid points; raise the step or lower the horizon")));
    }
    let mut grid = Vec::with_capacity(count as usize);
    for k in 0..count {
        let t = k as f64 * step;
        let upto = |js: &[(f64, f64)]| js.iter().filter(|(jt, _)| *jt <= t + 0.5 * precision).map(|(_, p)| p).sum::<f64>();
        let (ps, pf) = (upto(&success_jumps), upto(&failure_jumps));
        grid.push(GridPoint { t, ps, pf, prun: (1.0 - ps - pf).max(0.0) });
    }
    Ok(DeterministicReport { step, success_jumps, failure_jumps, grid })
}

/// Outcome of the root as a map from (status, time) to probability, for tests and tooling.
pub fn outcome_atoms(tree: &BTNode, profiles: &ProfileSet, precision: f64) -> Result<Vec<(Status, f64, f64)>, ReliabilityError> {
    let q = Quantizer { precision };
    Ok(atoms(tree, profiles, &q)?
        .into_iter()
        .map(|((s, t), p)| (if s { Status::Success } else { Status::Failure }, t as f64 * precision, p))
        .collect())
}
