//! Built-in worked models: a humanoid getting up and walking home, and a robot that
//! must never run out of battery.

use super::{compose_sequence, fallback_of, Predicate, RegionSpec, SampledDomain, StateSpaceBT};
use crate::tree::Status;
use std::sync::Arc;

/// Tolerance applied to region boundaries so that accumulated rounding (e.g. ten
/// increments of 0.03) lands on the intended side.
pub const EPS: f64 = 1e-9;

pub struct HumanoidModel {
    pub walk: StateSpaceBT,
    pub sit_to_stand: StateSpaceBT,
    pub lie_to_sit: StateSpaceBT,
    pub walk_spec: RegionSpec,
    pub sit_to_stand_spec: RegionSpec,
    pub lie_to_sit_spec: RegionSpec,
}

impl HumanoidModel {
    /// `Fallback(walk, sit_to_stand, lie_to_sit)`.
    pub fn combined(&self) -> StateSpaceBT {
        fallback_of(&[self.walk.clone(), self.sit_to_stand.clone(), self.lie_to_sit.clone()])
            .expect("humanoid children share dimension and step")
    }

    /// `{0 < x1 <= 0.5, 0 <= x2 <= 0.55}` sampled with `res` points per axis.
    pub fn domain(res: usize) -> SampledDomain {
        let lo = 0.5 / res as f64;
        SampledDomain::grid(vec![(lo, 0.5), (0.0, 0.55)], vec![res, res]).expect("valid grid")
    }
}

/// State `(x1, x2)`: horizontal distance to home and head height, with a 1 s step.
pub fn humanoid() -> HumanoidModel {
    let walk = StateSpaceBT::new(
        "WalkHome",
        2,
        1.0,
        |x| vec![x[0] - 0.1, x[1]],
        |x| {
            if x[0] <= EPS {
                Status::Success
            } else if x[1] >= 0.48 - EPS {
                Status::Running
            } else {
                Status::Failure
            }
        },
    );
    let sit_to_stand = StateSpaceBT::new(
        "SitToStand",
        2,
        1.0,
        |x| vec![x[0], x[1] + 0.05],
        |x| {
            if x[1] >= 0.48 - EPS {
                Status::Success
            } else if x[1] >= 0.3 - EPS {
                Status::Running
            } else {
                Status::Failure
            }
        },
    );
    let lie_to_sit = StateSpaceBT::new(
        "LieToSit",
        2,
        1.0,
        |x| vec![x[0], x[1] + 0.03],
        |x| if x[1] >= 0.3 - EPS { Status::Success } else { Status::Running },
    );
    let walk_spec = RegionSpec::of(&walk).attraction_is_running().with_tau(10);
    let sit_to_stand_spec = RegionSpec::of(&sit_to_stand).attraction_is_running().with_tau(4);
    let lie_to_sit_spec = RegionSpec::of(&lie_to_sit).with_attraction(|x| x[1] >= -EPS && x[1] < 0.3 - EPS).with_tau(10);
    HumanoidModel { walk, sit_to_stand, lie_to_sit, walk_spec, sit_to_stand_spec, lie_to_sit_spec }
}

pub struct BatteryModel {
    pub guarantee_power: StateSpaceBT,
    pub do_other_task: StateSpaceBT,
    pub guard_spec: RegionSpec,
    /// Empty battery.
    pub obstacle: Predicate,
    /// `x1 in [0, 100], x2 >= 15`.
    pub init: Predicate,
    pub d: f64,
}

impl BatteryModel {
    /// `Sequence(guarantee_power, do_other_task)`.
    pub fn combined(&self) -> StateSpaceBT {
        compose_sequence(&self.guarantee_power, &self.do_other_task).expect("battery children share dimension and step")
    }

    /// The reachable square `[0, 100]^2` sampled with `res` points per axis.
    pub fn domain(res: usize) -> SampledDomain {
        SampledDomain::grid(vec![(0.0, 100.0), (0.0, 100.0)], vec![res, res]).expect("valid grid")
    }

    /// Exact Euclidean distance to the success region of `guarantee_power`.
    pub fn distance_to_guard_success(x: &[f64]) -> f64 {
        if in_guard_success(x) {
            return 0.0;
        }
        let to_full = (100.0 - x[1]).max(0.0);
        let dx = (0.1 - x[0]).max(0.0);
        let dy = (20.0 - x[1]).max(0.0);
        to_full.min((dx * dx + dy * dy).sqrt())
    }
}

fn in_guard_success(x: &[f64]) -> bool {
    x[1] >= 100.0 || (x[0] >= 0.1 && x[1] > 20.0)
}

/// State `(x1, x2)`: distance to the charger and battery level, with a 10 s step.
pub fn battery() -> BatteryModel {
    let guarantee_power = StateSpaceBT::new(
        "GuaranteePower",
        2,
        10.0,
        |x| {
            if x[0] < 0.1 && x[1] < 100.0 {
                vec![x[0], x[1] + 1.0]
            } else {
                vec![x[0] - 1.0, x[1] - 0.1]
            }
        },
        |x| if in_guard_success(x) { Status::Success } else { Status::Running },
    );
    let do_other_task =
        StateSpaceBT::new("DoOtherTask", 2, 10.0, |x| vec![x[0] + (50.0 - x[0]) / 50.0, x[1] - 0.1], |_| Status::Running);
    let guard_spec = RegionSpec::of(&guarantee_power).attraction_is_running().with_tau(1100);
    BatteryModel {
        guarantee_power,
        do_other_task,
        guard_spec,
        obstacle: Arc::new(|x: &[f64]| x[1] <= 0.0),
        init: Arc::new(|x: &[f64]| (0.0..=100.0).contains(&x[0]) && x[1] >= 15.0),
        d: 5.0,
    }
}
