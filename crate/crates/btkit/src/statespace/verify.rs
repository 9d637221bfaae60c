use super::{
    compose_fallback, compose_parallel, compose_sequence, Predicate, RegionSpec, SampledDomain, StateSpaceBT,
    StateSpaceError,
};
use rayon::prelude::*;
use std::sync::Arc;

const MAX_WITNESSES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum FtsWitness {
    /// The trajectory left the region of attraction before reaching success.
    LeftAttraction { x0: Vec<f64>, step: usize, x: Vec<f64> },
    /// Success was not reached within the declared bound.
    Timeout { x0: Vec<f64>, tau: usize },
    NonFinite { x0: Vec<f64>, step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtsReport {
    pub is_fts: bool,
    pub declared_tau: usize,
    /// Largest observed number of steps to success over the sampled starts.
    pub worst_tau: usize,
    pub checked: usize,
    pub witnesses: Vec<FtsWitness>,
}

/// Checks finite-time success on every sampled start inside the region of attraction.
pub fn check_fts(bt: &StateSpaceBT, spec: &RegionSpec, domain: &SampledDomain) -> Result<FtsReport, StateSpaceError> {
    let attraction = spec
        .attraction
        .clone()
        .ok_or_else(|| StateSpaceError::InvalidArgument("region of attraction not declared".into()))?;
    let tau = spec.tau.ok_or_else(|| StateSpaceError::InvalidArgument("time bound not declared".into()))?;
    let starts = domain.filter(|x| attraction(x));
    let results: Vec<Result<usize, FtsWitness>> =
        starts.par_iter().map(|x0| time_to_success(bt, spec, &attraction, x0, tau)).collect();
    let mut worst = 0;
    let mut witnesses = Vec::new();
    let mut failed = false;
    for r in results {
        match r {
            Ok(k) => worst = worst.max(k),
            Err(w) => {
                failed = true;
                if witnesses.len() < MAX_WITNESSES {
                    witnesses.push(w);
                }
            }
        }
    }
    Ok(FtsReport { is_fts: !failed, declared_tau: tau, worst_tau: worst, checked: starts.len(), witnesses })
}

fn time_to_success(
    bt: &StateSpaceBT,
    spec: &RegionSpec,
    attraction: &Predicate,
    x0: &[f64],
    tau: usize,
) -> Result<usize, FtsWitness> {
    let mut x = x0.to_vec();
    for k in 0..=tau {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FtsWitness::NonFinite { x0: x0.to_vec(), step: k });
        }
        if (spec.success)(&x) {
            return Ok(k);
        }
        if !attraction(&x) {
            return Err(FtsWitness::LeftAttraction { x0: x0.to_vec(), step: k, x });
        }
        x = bt.f(&x);
    }
    Err(FtsWitness::Timeout { x0: x0.to_vec(), tau })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LemmaKind {
    Sequence,
    Fallback,
    /// Parallel with threshold `m` (1 or 2); `part1` lists the coordinates driven by the first child.
    Parallel { m: usize, part1: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub hypotheses_hold: bool,
    /// Named hypothesis and a sampled point where it fails.
    pub hypothesis_witnesses: Vec<(String, Vec<f64>)>,
    pub conclusion_holds: bool,
    pub tau0: usize,
    pub composed: StateSpaceBT,
    /// Regions of the composition with the concluded region of attraction and bound.
    pub composed_spec: RegionSpec,
    pub fts: FtsReport,
    pub assumptions: Vec<String>,
}

/// Checks the set hypotheses of a composition lemma on the sample and, independently,
/// whether the composition is FTS with the concluded region of attraction and bound.
pub fn check_composition_lemma(
    kind: &LemmaKind,
    bt1: &StateSpaceBT,
    spec1: &RegionSpec,
    bt2: &StateSpaceBT,
    spec2: &RegionSpec,
    domain: &SampledDomain,
) -> Result<LemmaReport, StateSpaceError> {
    let (a1, a2) = match (&spec1.attraction, &spec2.attraction) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => return Err(StateSpaceError::InvalidArgument("both children need a region of attraction".into())),
    };
    let (t1, t2) = match (spec1.tau, spec2.tau) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(StateSpaceError::InvalidArgument("both children need a time bound".into())),
    };
    let mut witnesses: Vec<(String, Vec<f64>)> = Vec::new();
    let mut assumptions = vec!["set relations are checked on the sampled points only".to_string()];
    for (name, bt, spec) in [("child 1 FTS", bt1, spec1), ("child 2 FTS", bt2, spec2)] {
        let rep = check_fts(bt, spec, domain)?;
        if !rep.is_fts {
            let x0 = match rep.witnesses.first() {
                Some(FtsWitness::LeftAttraction { x0, .. })
                | Some(FtsWitness::Timeout { x0, .. })
                | Some(FtsWitness::NonFinite { x0, .. }) => x0.clone(),
                None => vec![],
            };
            witnesses.push((name.to_string(), x0));
        }
    }
    let mut require = |name: &str, ok: &dyn Fn(&[f64]) -> bool| {
        if let Some(x) = domain.points.iter().find(|x| !ok(x)) {
            witnesses.push((name.to_string(), x.clone()));
        }
    };
    let (s1, s2, r1) = (spec1.success.clone(), spec2.success.clone(), spec1.running.clone());
    let (composed, attraction, tau0): (StateSpaceBT, Predicate, usize) = match kind {
        LemmaKind::Sequence => {
            require("S1 = R2' ∪ S2", &|x| s1(x) == (a2(x) || s2(x)));
            let (p, q) = (a1.clone(), a2.clone());
            (compose_sequence(bt1, bt2)?, Arc::new(move |x: &[f64]| p(x) || q(x)), t1 + t2)
        }
        LemmaKind::Fallback => {
            require("S2 ⊂ R1'", &|x| !s2(x) || a1(x));
            require("R1' = R1", &|x| a1(x) == r1(x));
            assumptions.push("the condition on R1' is read as R1' = R1".to_string());
            let (p, q) = (a1.clone(), a2.clone());
            (compose_fallback(bt1, bt2)?, Arc::new(move |x: &[f64]| p(x) || q(x)), t1 + t2)
        }
        LemmaKind::Parallel { m, part1 } => {
            let composed = compose_parallel(bt1, bt2, *m, part1, domain)?;
            let (p, q, u, v) = (a1.clone(), a2.clone(), s1.clone(), s2.clone());
            if *m == 1 {
                let att: Predicate = Arc::new(move |x: &[f64]| (p(x) || q(x)) && !(u(x) || v(x)));
                (composed, att, t1.min(t2))
            } else {
                let att: Predicate = Arc::new(move |x: &[f64]| (p(x) && q(x)) && !(u(x) && v(x)));
                (composed, att, t1.max(t2))
            }
        }
    };
    let mut composed_spec = RegionSpec::of(&composed).with_tau(tau0);
    composed_spec.attraction = Some(attraction);
    let fts = check_fts(&composed, &composed_spec, domain)?;
    Ok(LemmaReport {
        hypotheses_hold: witnesses.is_empty(),
        hypothesis_witnesses: witnesses,
        conclusion_holds: fts.is_fts,
        tau0,
        composed,
        composed_spec,
        fts,
        assumptions,
    })
}

pub type DistanceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Inputs of the safety check for `Sequence(guard, task)`.
#[derive(Clone)]
pub struct SafetyProblem {
    pub guard: StateSpaceBT,
    pub guard_spec: RegionSpec,
    pub task: StateSpaceBT,
    pub obstacle: Predicate,
    pub init: Predicate,
    /// Step length margin.
    pub d: f64,
    /// Exact distance to the guard's success region; sampled from the domain when absent.
    pub distance_to_success: Option<DistanceFn>,
    /// Optional scalar reported as its minimum along all trajectories (e.g. distance to the obstacle).
    pub clearance: Option<DistanceFn>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct SafetyReport {
    pub max_step_length: f64,
    pub margin_holds: bool,
    pub margin_witnesses: Vec<Vec<f64>>,
    pub guard_safe: bool,
    pub guard_fts: Option<FtsReport>,
    pub starts_checked: usize,
    pub composition_safe: bool,
    /// Start state and step index at which the obstacle was entered.
    pub violations: Vec<(Vec<f64>, usize)>,
    pub min_clearance: Option<f64>,
    pub approximations: Vec<String>,
}

impl SafetyReport {
    pub fn safe(&self) -> bool {
        self.margin_holds && self.guard_safe && self.composition_safe
    }
}

/// Verifies the safeguarding margin of the guard and simulates `Sequence(guard, task)`
/// from every sampled start in the initialization region.
pub fn check_safety(p: &SafetyProblem, domain: &SampledDomain) -> Result<SafetyReport, StateSpaceError> {
    let mut approximations =
        vec!["the reachable part of the state space is approximated by the sampled domain".to_string()];
    let mut max_step: f64 = 0.0;
    for x in &domain.points {
        let y = p.task.f(x);
        let step = norm(&diff(x, &y));
        max_step = max_step.max(step);
        if step >= p.d {
            return Err(StateSpaceError::StepLengthViolated { step, d: p.d, x: x.clone() });
        }
    }
    let dist: DistanceFn = match &p.distance_to_success {
        Some(f) => f.clone(),
        None => {
            approximations.push("distance to the success region is measured to sampled success points".to_string());
            let targets: Vec<Vec<f64>> = domain.filter(|x| (p.guard_spec.success)(x));
            Arc::new(move |x: &[f64]| {
                targets.iter().map(|s| norm(&diff(x, s))).fold(f64::INFINITY, f64::min)
            })
        }
    };
    let margin_witnesses: Vec<Vec<f64>> =
        domain.points.iter().filter(|x| dist(x) <= p.d && !(p.init)(x)).take(MAX_WITNESSES).cloned().collect();

    let starts = domain.filter(|x| (p.init)(x));
    let composed = compose_sequence(&p.guard, &p.task)?;
    let obstacle = p.obstacle.clone();
    let clearance = p.clearance.clone();
    let run = |bt: &StateSpaceBT, x0: &Vec<f64>, stop_on_done: bool| -> (Option<usize>, f64) {
        let mut x = x0.clone();
        let mut lowest = f64::INFINITY;
        for k in 0..=p.steps {
            if let Some(c) = &clearance {
                lowest = lowest.min(c(&x));
            }
            if obstacle(&x) {
                return (Some(k), lowest);
            }
            if stop_on_done && bt.r(&x) != crate::tree::Status::Running {
                break;
            }
            if k < p.steps {
                x = bt.f(&x);
            }
        }
        (None, lowest)
    };
    let guard_runs: Vec<(Option<usize>, f64)> = starts.par_iter().map(|x0| run(&p.guard, x0, true)).collect();
    let comp_runs: Vec<(Option<usize>, f64)> = starts.par_iter().map(|x0| run(&composed, x0, false)).collect();
    let guard_safe = guard_runs.iter().all(|(hit, _)| hit.is_none());
    let violations: Vec<(Vec<f64>, usize)> = starts
        .iter()
        .zip(&comp_runs)
        .filter_map(|(x0, (hit, _))| hit.map(|k| (x0.clone(), k)))
        .take(MAX_WITNESSES)
        .collect();
    let min_clearance = p.clearance.as_ref().map(|_| {
        guard_runs.iter().chain(&comp_runs).map(|(_, c)| *c).fold(f64::INFINITY, f64::min)
    });
    let guard_fts = if p.guard_spec.attraction.is_some() && p.guard_spec.tau.is_some() {
        let inside = SampledDomain { points: starts.clone(), ..domain.clone() };
        Some(check_fts(&p.guard, &p.guard_spec, &inside)?)
    } else {
        None
    };
    Ok(SafetyReport {
        max_step_length: max_step,
        margin_holds: margin_witnesses.is_empty(),
        margin_witnesses,
        guard_safe,
        guard_fts,
        starts_checked: starts.len(),
        composition_safe: violations.is_empty(),
        violations,
        min_clearance,
        approximations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chattering {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gradient: Vec<f64>,
    pub chatter_free: bool,
}

/// Projects both vector fields on the gradient of the switching function `s` at `x`.
///
/// The gradient is estimated by central differences with step `h`.
pub fn chattering_indicator(
    x: &[f64],
    s: &dyn Fn(&[f64]) -> f64,
    bt1: &StateSpaceBT,
    bt2: &StateSpaceBT,
    h: f64,
) -> Result<Chattering, StateSpaceError> {
    let gradient: Vec<f64> = (0..x.len())
        .map(|i| {
            let (mut up, mut dn) = (x.to_vec(), x.to_vec());
            up[i] += h;
            dn[i] -= h;
            (s(&up) - s(&dn)) / (2.0 * h)
        })
        .collect();
    let g = norm(&gradient);
    if g < 1e-12 {
        return Err(StateSpaceError::DegenerateGradient(g));
    }
    let lambda = |bt: &StateSpaceBT| dot(&gradient, &diff(x, &bt.f(x)));
    let (lambda1, lambda2) = (lambda(bt1), lambda(bt2));
    Ok(Chattering { lambda1, lambda2, chatter_free: lambda1 < 0.0 || lambda2 > 0.0, gradient })
}

fn diff(x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(a, b)| a - b).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
