//! Behavior trees as discrete-time dynamical systems.
//!
//! A [`StateSpaceBT`] is a map `x -> (status, next state)` with a fixed time step.
//! Compositions follow the usual switching rules and verification is done by
//! sampling explicit grids of start states.

mod models;
mod verify;

pub use models::{battery, humanoid, BatteryModel, HumanoidModel, EPS};
pub use verify::{
    chattering_indicator, check_composition_lemma, check_fts, check_safety, Chattering, FtsReport,
    FtsWitness, LemmaKind, LemmaReport, SafetyProblem, SafetyReport,
};

use crate::tree::Status;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub type Dynamics = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type StatusMap = Arc<dyn Fn(&[f64]) -> Status + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Debug, Error, PartialEq)]
pub enum StateSpaceError {
    #[error("dimension or time step mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dynamics of `{bt}` change dimension {dim} outside its partition at {x:?}")]
    PartitionViolation { bt: String, dim: usize, x: Vec<f64> },
    #[error("non-finite state {0:?}")]
    NonFiniteState(Vec<f64>),
    #[error("step length {step} is not below d = {d} at {x:?}")]
    StepLengthViolated { step: f64, d: f64, x: Vec<f64> },
    #[error("gradient norm {0} too small")]
    DegenerateGradient(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A behavior tree in functional form: dynamics `f`, return-status map `r`, step `dt`.
#[derive(Clone)]
pub struct StateSpaceBT {
    pub name: String,
    pub n: usize,
    pub dt: f64,
    f: Dynamics,
    r: StatusMap,
    bounds: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for StateSpaceBT {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateSpaceBT").field("name", &self.name).field("n", &self.n).field("dt", &self.dt).finish()
    }
}

impl StateSpaceBT {
    pub fn new<F, R>(name: impl Into<String>, n: usize, dt: f64, f: F, r: R) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        R: Fn(&[f64]) -> Status + Send + Sync + 'static,
    {
        StateSpaceBT { name: name.into(), n, dt, f: Arc::new(f), r: Arc::new(r), bounds: None }
    }

    /// Declares simulation bounds; execution stops with `OutOfDomain` when a state leaves them.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn f(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    pub fn r(&self, x: &[f64]) -> Status {
        (self.r)(x)
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        match &self.bounds {
            None => true,
            Some(b) => x.iter().zip(b).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }

    fn compatible(&self, other: &StateSpaceBT) -> Result<(), StateSpaceError> {
        if self.n != other.n || (self.dt - other.dt).abs() > 1e-12 {
            return Err(StateSpaceError::DimensionMismatch(format!(
                "{} has (n={}, dt={}), {} has (n={}, dt={})",
                self.name, self.n, self.dt, other.name, other.n, other.dt
            )));
        }
        Ok(())
    }

    /// Embeds this BT into a larger space: it acts on `dims` and leaves other coordinates fixed.
    pub fn lift(&self, n_total: usize, dims: Vec<usize>) -> Result<StateSpaceBT, StateSpaceError> {
        if dims.len() != self.n || dims.iter().any(|&d| d >= n_total) {
            return Err(StateSpaceError::DimensionMismatch(format!("cannot lift {} onto {:?}", self.name, dims)));
        }
        let (f, r) = (self.f.clone(), self.r.clone());
        let (df, dr) = (dims.clone(), dims);
        Ok(StateSpaceBT {
            name: self.name.clone(),
            n: n_total,
            dt: self.dt,
            f: Arc::new(move |x: &[f64]| {
                let sub: Vec<f64> = df.iter().map(|&d| x[d]).collect();
                let next = f(&sub);
                let mut out = x.to_vec();
                for (k, &d) in df.iter().enumerate() {
                    out[d] = next[k];
                }
                out
            }),
            r: Arc::new(move |x: &[f64]| {
                let sub: Vec<f64> = dr.iter().map(|&d| x[d]).collect();
                r(&sub)
            }),
            bounds: None,
        })
    }
}

/// `(r0, f0) = (r2, f2)` on the success region of `bt1`, `(r1, f1)` elsewhere.
pub fn compose_sequence(bt1: &StateSpaceBT, bt2: &StateSpaceBT) -> Result<StateSpaceBT, StateSpaceError> {
    bt1.compatible(bt2)?;
    Ok(switch(bt1, bt2, Status::Success, format!("Sequence({}, {})", bt1.name, bt2.name)))
}

/// `(r0, f0) = (r2, f2)` on the failure region of `bt1`, `(r1, f1)` elsewhere.
pub fn compose_fallback(bt1: &StateSpaceBT, bt2: &StateSpaceBT) -> Result<StateSpaceBT, StateSpaceError> {
    bt1.compatible(bt2)?;
    Ok(switch(bt1, bt2, Status::Failure, format!("Fallback({}, {})", bt1.name, bt2.name)))
}

fn switch(bt1: &StateSpaceBT, bt2: &StateSpaceBT, on: Status, name: String) -> StateSpaceBT {
    let (r1, r2, rr) = (bt1.r.clone(), bt2.r.clone(), bt1.r.clone());
    let (f1, f2) = (bt1.f.clone(), bt2.f.clone());
    StateSpaceBT {
        name,
        n: bt1.n,
        dt: bt1.dt,
        f: Arc::new(move |x: &[f64]| if rr(x) == on { f2(x) } else { f1(x) }),
        r: Arc::new(move |x: &[f64]| if r1(x) == on { r2(x) } else { r1(x) }),
        bounds: merge_bounds(&bt1.bounds, &bt2.bounds),
    }
}

fn merge_bounds(a: &Option<Vec<(f64, f64)>>, b: &Option<Vec<(f64, f64)>>) -> Option<Vec<(f64, f64)>> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| (x.0.max(y.0), x.1.min(y.1))).collect()),
        (Some(a), None) | (None, Some(a)) => Some(a.clone()),
        (None, None) => None,
    }
}

/// N-ary Sequence as a right fold: `Sequence(T1, Sequence(T2, T3))`.
pub fn sequence_of(bts: &[StateSpaceBT]) -> Result<StateSpaceBT, StateSpaceError> {
    fold_right(bts, compose_sequence)
}

/// N-ary Fallback as a right fold.
pub fn fallback_of(bts: &[StateSpaceBT]) -> Result<StateSpaceBT, StateSpaceError> {
    fold_right(bts, compose_fallback)
}

fn fold_right(
    bts: &[StateSpaceBT],
    op: fn(&StateSpaceBT, &StateSpaceBT) -> Result<StateSpaceBT, StateSpaceError>,
) -> Result<StateSpaceBT, StateSpaceError> {
    let (last, rest) = bts
        .split_last()
        .ok_or_else(|| StateSpaceError::InvalidArgument("empty composition".into()))?;
    rest.iter().rev().try_fold(last.clone(), |acc, bt| op(bt, &acc))
}

/// Parallel composition of two BTs acting on complementary coordinates.
///
/// `part1` lists the coordinates driven by `bt1`; all others are driven by `bt2`.
/// Each dynamics must leave the other part unchanged on every sampled point.
pub fn compose_parallel(
    bt1: &StateSpaceBT,
    bt2: &StateSpaceBT,
    m: usize,
    part1: &[usize],
    domain: &SampledDomain,
) -> Result<StateSpaceBT, StateSpaceError> {
    bt1.compatible(bt2)?;
    if m != 1 && m != 2 {
        return Err(StateSpaceError::InvalidArgument(format!("parallel threshold {m} must be 1 or 2")));
    }
    let n = bt1.n;
    let in1: Vec<bool> = (0..n).map(|d| part1.contains(&d)).collect();
    for x in &domain.points {
        let (y1, y2) = (bt1.f(x), bt2.f(x));
        for d in 0..n {
            let (moved, who) = if in1[d] { (y2[d] != x[d], bt2) } else { (y1[d] != x[d], bt1) };
            if moved {
                return Err(StateSpaceError::PartitionViolation { bt: who.name.clone(), dim: d, x: x.clone() });
            }
        }
    }
    let (f1, f2, r1, r2) = (bt1.f.clone(), bt2.f.clone(), bt1.r.clone(), bt2.r.clone());
    let mask = in1.clone();
    Ok(StateSpaceBT {
        name: format!("Parallel{m}({}, {})", bt1.name, bt2.name),
        n,
        dt: bt1.dt,
        f: Arc::new(move |x: &[f64]| {
            let (a, b) = (f1(x), f2(x));
            (0..x.len()).map(|d| if mask[d] { a[d] } else { b[d] }).collect()
        }),
        r: Arc::new(move |x: &[f64]| parallel_status(m, r1(x), r2(x))),
        bounds: merge_bounds(&bt1.bounds, &bt2.bounds),
    })
}

/// Return status of a two-child parallel node with threshold `m`.
pub fn parallel_status(m: usize, a: Status, b: Status) -> Status {
    use Status::*;
    let succ = [a, b].iter().filter(|s| **s == Success).count();
    let fail = [a, b].iter().filter(|s| **s == Failure).count();
    if succ >= m {
        Success
    } else if fail > 2 - m {
        Failure
    } else {
        Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Success,
    Failure,
    MaxSteps,
    OutOfDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub t: f64,
    pub x: Vec<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub reason: Termination,
}

impl Trajectory {
    /// Index of the step at which the BT returned Success, if it did.
    pub fn success_step(&self) -> Option<usize> {
        (self.reason == Termination::Success).then(|| self.steps.len() - 1)
    }

    pub fn last_state(&self) -> &[f64] {
        &self.steps.last().expect("trajectory has at least one step").x
    }
}

/// Iterates `x_{k+1} = f(x_k)` until the status is Success or Failure, or `max_steps` transitions.
pub fn execute(bt: &StateSpaceBT, x0: &[f64], max_steps: usize) -> Result<Trajectory, StateSpaceError> {
    if max_steps < 1 {
        return Err(StateSpaceError::InvalidArgument("max_steps must be at least 1".into()));
    }
    let mut steps = Vec::new();
    let mut x = x0.to_vec();
    for k in 0..=max_steps {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StateSpaceError::NonFiniteState(x));
        }
        let t = k as f64 * bt.dt;
        if !bt.in_bounds(&x) {
            let status = bt.r(&x);
            steps.push(Step { t, x, status });
            return Ok(Trajectory { steps, reason: Termination::OutOfDomain });
        }
        let status = bt.r(&x);
        let next = if status == Status::Running && k < max_steps { Some(bt.f(&x)) } else { None };
        steps.push(Step { t, x, status });
        match status {
            Status::Success => return Ok(Trajectory { steps, reason: Termination::Success }),
            Status::Failure => return Ok(Trajectory { steps, reason: Termination::Failure }),
            Status::Running => {}
        }
        match next {
            Some(n) => x = n,
            None => break,
        }
    }
    Ok(Trajectory { steps, reason: Termination::MaxSteps })
}

/// Region description used by the verification routines.
#[derive(Clone)]
pub struct RegionSpec {
    pub success: Predicate,
    pub failure: Predicate,
    pub running: Predicate,
    /// Region of attraction, a subset of the running region.
    pub attraction: Option<Predicate>,
    /// Completion time bound in steps.
    pub tau: Option<usize>,
}

impl fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionSpec").field("tau", &self.tau).field("has_attraction", &self.attraction.is_some()).finish()
    }
}

impl RegionSpec {
    /// Regions induced by the status map of `bt`.
    pub fn of(bt: &StateSpaceBT) -> Self {
        let (a, b, c) = (bt.r.clone(), bt.r.clone(), bt.r.clone());
        RegionSpec {
            success: Arc::new(move |x: &[f64]| a(x) == Status::Success),
            failure: Arc::new(move |x: &[f64]| b(x) == Status::Failure),
            running: Arc::new(move |x: &[f64]| c(x) == Status::Running),
            attraction: None,
            tau: None,
        }
    }

    pub fn with_attraction<P>(mut self, p: P) -> Self
    where
        P: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.attraction = Some(Arc::new(p));
        self
    }

    /// Uses the whole running region as region of attraction.
    pub fn attraction_is_running(mut self) -> Self {
        self.attraction = Some(self.running.clone());
        self
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn in_attraction(&self, x: &[f64]) -> bool {
        self.attraction.as_ref().map(|p| p(x)).unwrap_or(false)
    }

    /// Number of sampled points at which the three regions are not a partition.
    pub fn partition_violations(&self, domain: &SampledDomain) -> Vec<Vec<f64>> {
        domain
            .points
            .iter()
            .filter(|x| {
                let k = [(self.success)(x), (self.failure)(x), (self.running)(x)].iter().filter(|b| **b).count();
                k != 1
            })
            .cloned()
            .collect()
    }
}

/// A finite set of sample states.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDomain {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
    pub points: Vec<Vec<f64>>,
}

impl SampledDomain {
    /// Regular grid including both endpoints of every interval, in row-major order.
    pub fn grid(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self, StateSpaceError> {
        if bounds.is_empty() || bounds.len() != resolution.len() || resolution.iter().any(|&r| r == 0) {
            return Err(StateSpaceError::InvalidArgument("grid needs one positive resolution per bound".into()));
        }
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .zip(&resolution)
            .map(|(&(lo, hi), &r)| {
                if r == 1 {
                    vec![lo]
                } else {
                    (0..r).map(|i| lo + (hi - lo) * i as f64 / (r - 1) as f64).collect()
                }
            })
            .collect();
        let mut points = vec![vec![]];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        Ok(SampledDomain { bounds, resolution, points })
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self, StateSpaceError> {
        let n = points.first().map(|p| p.len()).ok_or_else(|| StateSpaceError::InvalidArgument("empty domain".into()))?;
        let bounds = (0..n)
            .map(|d| {
                let it = points.iter().map(|p| p[d]);
                (it.clone().fold(f64::INFINITY, f64::min), it.fold(f64::NEG_INFINITY, f64::max))
            })
            .collect();
        Ok(SampledDomain { bounds, resolution: vec![0; n], points })
    }

    pub fn filter(&self, p: impl Fn(&[f64]) -> bool) -> Vec<Vec<f64>> {
        self.points.iter().filter(|x| p(x)).cloned().collect()
    }
}
