use super::ReliabilityError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sojourn used for condition leaves, which are treated as instantaneous.
pub const CONDITION_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// Exponential time to succeed (rate `mu`) and to fail (rate `nu`).
    Stochastic,
    /// Fixed times `tau_s` and `tau_f`.
    Deterministic,
    /// Fixed time to succeed, exponential time to fail.
    HybridDetSuccess,
    /// Exponential time to succeed, fixed time to fail.
    HybridDetFailure,
}

/// Outcome model of an action: it succeeds with probability `ps` after the success
/// time, and otherwise fails after the failure time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub kind: ProfileKind,
    pub ps: f64,
    pub pf: f64,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub tau_s: Option<f64>,
    pub tau_f: Option<f64>,
}

impl ActionProfile {
    pub fn stochastic(ps: f64, mu: f64, nu: f64) -> Self {
        ActionProfile { kind: ProfileKind::Stochastic, ps, pf: 1.0 - ps, mu: Some(mu), nu: Some(nu), tau_s: None, tau_f: None }
    }

    pub fn deterministic(ps: f64, tau_s: f64, tau_f: f64) -> Self {
        ActionProfile {
            kind: ProfileKind::Deterministic,
            ps,
            pf: 1.0 - ps,
            mu: Some(1.0 / tau_s),
            nu: Some(1.0 / tau_f),
            tau_s: Some(tau_s),
            tau_f: Some(tau_f),
        }
    }

    pub fn hybrid_det_success(ps: f64, tau_s: f64, nu: f64) -> Self {
        ActionProfile { kind: ProfileKind::HybridDetSuccess, ps, pf: 1.0 - ps, mu: None, nu: Some(nu), tau_s: Some(tau_s), tau_f: None }
    }

    pub fn hybrid_det_failure(ps: f64, mu: f64, tau_f: f64) -> Self {
        ActionProfile { kind: ProfileKind::HybridDetFailure, ps, pf: 1.0 - ps, mu: Some(mu), nu: None, tau_s: None, tau_f: Some(tau_f) }
    }

    pub fn validate(&self) -> Result<(), ReliabilityError> {
        let bad = |m: &str| Err(ReliabilityError::InvalidProfile(m.to_string()));
        if !(0.0..=1.0).contains(&self.ps) || !(0.0..=1.0).contains(&self.pf) || (self.ps + self.pf - 1.0).abs() > 1e-9 {
            return bad("probabilities must lie in [0, 1] and sum to 1");
        }
        let pos = |v: Option<f64>| v.map(|x| x > 0.0 && x.is_finite()).unwrap_or(false);
        let ok = match self.kind {
            ProfileKind::Stochastic => pos(self.mu) && pos(self.nu),
            ProfileKind::Deterministic => pos(self.tau_s) && pos(self.tau_f),
            ProfileKind::HybridDetSuccess => pos(self.tau_s) && pos(self.nu),
            ProfileKind::HybridDetFailure => pos(self.mu) && pos(self.tau_f),
        };
        if ok {
            Ok(())
        } else {
            bad("rates and times must be positive and finite for the profile kind")
        }
    }

    /// Mean times to succeed and to fail as used by the Markov analysis.
    pub fn mean_times(&self) -> Result<Timing, ReliabilityError> {
        self.validate()?;
        match self.kind {
            ProfileKind::Stochastic | ProfileKind::Deterministic => Ok(Timing {
                ps: self.ps,
                pf: self.pf,
                ts: 1.0 / self.mu.expect("validated"),
                tf: 1.0 / self.nu.expect("validated"),
            }),
            _ => Err(ReliabilityError::HybridNeedsSimulation),
        }
    }
}

/// Leaf description used by the analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LeafProfile {
    Action(ActionProfile),
    /// A condition that holds with the given probability.
    Condition { ps: f64 },
}

impl LeafProfile {
    pub fn success_probability(&self) -> f64 {
        match self {
            LeafProfile::Action(a) => a.ps,
            LeafProfile::Condition { ps } => *ps,
        }
    }

    pub fn timing(&self) -> Result<Timing, ReliabilityError> {
        match self {
            LeafProfile::Action(a) => a.mean_times(),
            LeafProfile::Condition { ps } => {
                if !(0.0..=1.0).contains(ps) {
                    return Err(ReliabilityError::InvalidProfile("condition probability outside [0, 1]".into()));
                }
                Ok(Timing { ps: *ps, pf: 1.0 - ps, ts: CONDITION_EPSILON, tf: CONDITION_EPSILON })
            }
        }
    }
}

/// Leaf profiles keyed by behavior name.
pub type ProfileSet = BTreeMap<String, LeafProfile>;

/// Outcome probabilities and mean (conditional) times of a child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub ps: f64,
    pub pf: f64,
    /// Mean time to succeed, given success.
    pub ts: f64,
    /// Mean time to fail, given failure.
    pub tf: f64,
}

impl Timing {
    /// Expected time until the child returns, `ps*ts + pf*tf`; zero-probability branches are ignored.
    pub fn mean_sojourn(&self) -> f64 {
        let a = if self.ps > 0.0 { self.ps * self.ts } else { 0.0 };
        let b = if self.pf > 0.0 { self.pf * self.tf } else { 0.0 };
        a + b
    }

    pub fn mu(&self) -> Option<f64> {
        (self.ps > 0.0).then(|| 1.0 / self.ts)
    }

    pub fn nu(&self) -> Option<f64> {
        (self.pf > 0.0).then(|| 1.0 / self.tf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_rates_are_inverse_times() {
        let p = ActionProfile::deterministic(0.5, 4.0, 2.0);
        assert_eq!(p.mu, Some(0.25));
        assert_eq!(p.nu, Some(0.5));
    }

    #[test]
    fn invalid_probability_is_rejected() {
        let mut p = ActionProfile::stochastic(0.5, 1.0, 1.0);
        p.pf = 0.7;
        assert!(p.validate().is_err());
    }

    #[test]
    fn hybrid_needs_simulation() {
        let p = ActionProfile::hybrid_det_success(0.5, 1.0, 1.0);
        assert_eq!(p.mean_times(), Err(ReliabilityError::HybridNeedsSimulation));
    }

    #[test]
    fn floor_search_sojourn() {
        let t = ActionProfile::stochastic(0.3, 0.01, 0.0167).mean_times().unwrap();
        assert!((t.mean_sojourn() - (30.0 + 0.7 / 0.0167)).abs() < 1e-9);
    }
}
