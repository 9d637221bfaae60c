//! Embedded chain, sojourn times, generator, mean absorption times and transient
//! probabilities of a single control node.

use super::mrg::{build_mrg, Mrg, NodeType, StateClass};
use super::profile::Timing;
use super::ReliabilityError;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Markings whose mean sojourn is below this are collapsed into their successors
/// when integrating the transient probabilities.
pub const VANISHING_SOJOURN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MarkovModel {
    pub mrg: Mrg,
    /// Row-stochastic one-step matrix in canonical order (transient, failure, success).
    pub p: DMatrix<f64>,
    /// Mean sojourn per marking; infinite for absorbing markings.
    pub sj: Vec<f64>,
    /// Generator with rows summing to zero; absorbing rows are zero.
    pub q: DMatrix<f64>,
    /// Mean time attributed to each transition of the embedded chain.
    pub edge_time: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanTimes {
    pub ps_inf: f64,
    pub pf_inf: f64,
    pub mtts: Option<f64>,
    pub mttf: Option<f64>,
}

impl MeanTimes {
    pub fn mu(&self) -> Option<f64> {
        self.mtts.map(|t| 1.0 / t)
    }
    pub fn nu(&self) -> Option<f64> {
        self.mttf.map(|t| 1.0 / t)
    }
}

/// Rate of leaving a marking because of child `h`: `1 / (ps/mu + pf/nu)`.
fn child_rate(t: &Timing) -> f64 {
    1.0 / t.mean_sojourn()
}

fn check_children(mrg: &Mrg, children: &[Timing]) -> Result<(), ReliabilityError> {
    if children.len() != mrg.n {
        return Err(ReliabilityError::InvalidProfile(format!("{} children profiled for a node with {}", children.len(), mrg.n)));
    }
    for c in children {
        if !(c.ps >= 0.0 && c.pf >= 0.0 && (c.ps + c.pf - 1.0).abs() < 1e-9) || c.mean_sojourn() <= 0.0 {
            return Err(ReliabilityError::InvalidProfile(format!("{c:?}")));
        }
    }
    Ok(())
}

/// One-step transition matrix over the markings.
pub fn build_dtmc(mrg: &Mrg, children: &[Timing]) -> Result<DMatrix<f64>, ReliabilityError> {
    check_children(mrg, children)?;
    let n = mrg.markings.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        if mrg.class[i] != StateClass::Transient {
            p[(i, i)] = 1.0;
            continue;
        }
        let feas = mrg.feasible(i);
        if feas.is_empty() {
            return Err(ReliabilityError::NoFeasibleEvent(i));
        }
        let total: f64 = feas.iter().map(|&h| child_rate(&children[h])).sum();
        for e in mrg.out_edges(i) {
            let c = &children[e.child];
            let share = child_rate(c) / total;
            p[(i, e.to)] += share * if e.outcome > 0 { c.ps } else { c.pf };
        }
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
        p[(i, i)] = (1.0 - off).max(0.0);
    }
    Ok(p)
}

/// `SJ_i = 1 / sum_h 1/(ps_h/mu_h + pf_h/nu_h)` over the children running in marking `i`.
pub fn sojourn_times(mrg: &Mrg, children: &[Timing]) -> Result<Vec<f64>, ReliabilityError> {
    check_children(mrg, children)?;
    (0..mrg.markings.len())
        .map(|i| {
            if mrg.class[i] != StateClass::Transient {
                return Ok(f64::INFINITY);
            }
            let feas = mrg.feasible(i);
            if feas.is_empty() {
                return Err(ReliabilityError::NoFeasibleEvent(i));
            }
            Ok(1.0 / feas.iter().map(|&h| child_rate(&children[h])).sum::<f64>())
        })
        .collect()
}

/// `q_ij = p_ij / SJ_i` off the diagonal, rows summing to zero.
pub fn build_generator(p: &DMatrix<f64>, sj: &[f64]) -> DMatrix<f64> {
    let n = p.nrows();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        if !sj[i].is_finite() {
            continue;
        }
        let mut out = 0.0;
        for j in 0..n {
            if i != j {
                q[(i, j)] = p[(i, j)] / sj[i];
                out += q[(i, j)];
            }
        }
        q[(i, i)] = -out;
    }
    q
}

impl MarkovModel {
    pub fn new(node: NodeType, children: &[Timing]) -> Result<Self, ReliabilityError> {
        let mrg = build_mrg(node, children.len());
        let p = build_dtmc(&mrg, children)?;
        let sj = sojourn_times(&mrg, children)?;
        let q = build_generator(&p, &sj);
        let n = mrg.markings.len();
        let mut edge_time = DMatrix::zeros(n, n);
        for i in 0..n {
            if mrg.class[i] != StateClass::Transient {
                continue;
            }
            let single = mrg.feasible(i).len() == 1;
            for e in mrg.out_edges(i) {
                let c = &children[e.child];
                edge_time[(i, e.to)] = if single {
                    if e.outcome > 0 {
                        c.ts
                    } else {
                        c.tf
                    }
                } else {
                    sj[i]
                };
            }
        }
        Ok(MarkovModel { mrg, p, sj, q, edge_time })
    }

    pub fn n_transient(&self) -> usize {
        self.mrg.count(StateClass::Transient)
    }

    /// Transient-to-transient block of the one-step matrix.
    pub fn t_block(&self) -> DMatrix<f64> {
        let k = self.n_transient();
        self.p.view((0, 0), (k, k)).into_owned()
    }

    /// True when `T^(k+1) = 0` for `k` transient markings.
    pub fn is_nilpotent(&self) -> bool {
        let t = self.t_block();
        let k = t.nrows();
        let mut m = DMatrix::identity(k, k);
        for _ in 0..=k {
            m = &m * &t;
        }
        m.iter().all(|v| v.abs() < 1e-15)
    }

    /// Mean times to absorption by first-step analysis on the acyclic chain.
    pub fn mean_times(&self) -> MeanTimes {
        let n = self.mrg.markings.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.mrg.markings[i].iter().filter(|v| **v != 0).count()));
        let mut absorb = [vec![0.0; n], vec![0.0; n]];
        let mut weighted = [vec![0.0; n], vec![0.0; n]];
        for &i in &order {
            match self.mrg.class[i] {
                StateClass::Failure => absorb[0][i] = 1.0,
                StateClass::Success => absorb[1][i] = 1.0,
                StateClass::Transient => {
                    for k in 0..2 {
                        let (mut a, mut w) = (0.0, 0.0);
                        for j in 0..n {
                            let pij = self.p[(i, j)];
                            if j == i || pij == 0.0 {
                                continue;
                            }
                            a += pij * absorb[k][j];
                            w += pij * (self.edge_time[(i, j)] * absorb[k][j] + weighted[k][j]);
                        }
                        absorb[k][i] = a;
                        weighted[k][i] = w;
                    }
                }
            }
        }
        let ratio = |k: usize| (absorb[k][0] > 0.0).then(|| weighted[k][0] / absorb[k][0]);
        MeanTimes { ps_inf: absorb[1][0], pf_inf: absorb[0][0], mtts: ratio(1), mttf: ratio(0) }
    }

    /// Mean times from the exponential/logarithm accumulation matrices.
    ///
    /// Exact only when every absorbing marking is reached by a single path, as for
    /// Sequence and Fallback nodes; meant as a cross-check on small models.
    pub fn exp_log_mean_times(&self) -> (Option<f64>, Option<f64>) {
        let k = self.n_transient();
        let n = self.p.nrows();
        let tcol = DMatrix::from_fn(k, k, |i, j| self.p[(j, i)]);
        let at = DMatrix::from_fn(k, k, |i, j| if self.p[(j, i)] > 0.0 { self.edge_time[(j, i)].exp() } else { 0.0 });
        let series = |m: &DMatrix<f64>| {
            let mut acc = DMatrix::identity(k, k);
            let mut pow = DMatrix::identity(k, k);
            for _ in 0..k {
                pow = &pow * m;
                acc += &pow;
            }
            acc
        };
        let (u, ua) = (series(&tcol), series(&at));
        let block = |class: StateClass| -> Option<f64> {
            let rows: Vec<usize> = (k..n).filter(|&i| self.mrg.class[i] == class).collect();
            let r = DMatrix::from_fn(rows.len(), k, |a, j| self.p[(j, rows[a])]);
            let a = DMatrix::from_fn(rows.len(), k, |a, j| {
                if self.p[(j, rows[a])] > 0.0 {
                    self.edge_time[(j, rows[a])].exp()
                } else {
                    0.0
                }
            });
            let uu = &r * &u;
            let h = &a * &ua;
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..rows.len() {
                let w = uu[(i, 0)];
                if w > 0.0 {
                    num += w * h[(i, 0)].ln();
                    den += w;
                }
            }
            (den > 0.0).then(|| num / den)
        };
        (block(StateClass::Success), block(StateClass::Failure))
    }

    /// Marking probabilities at each (nondecreasing) grid time, starting from the zero marking.
    pub fn transient(&self, grid: &[f64]) -> Result<Vec<DVector<f64>>, ReliabilityError> {
        let n = self.p.nrows();
        let vanishing: Vec<bool> =
            (0..n).map(|i| self.mrg.class[i] == StateClass::Transient && self.sj[i] < VANISHING_SOJOURN).collect();
        // Distribution over non-vanishing markings reached when leaving each vanishing one.
        let mut reach: Vec<Option<DVector<f64>>> = vec![None; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.mrg.markings[i].iter().filter(|v| **v != 0).count()));
        for &i in &order {
            if !vanishing[i] {
                continue;
            }
            let mut d = DVector::zeros(n);
            for j in 0..n {
                let pij = self.p[(i, j)];
                if j == i || pij == 0.0 {
                    continue;
                }
                match &reach[j] {
                    Some(r) => d += r * pij,
                    None => d[j] += pij,
                }
            }
            reach[i] = Some(d);
        }
        let mut qr: DMatrix<f64> = DMatrix::zeros(n, n);
        let mut lambda: f64 = 0.0;
        for i in 0..n {
            if vanishing[i] || !self.sj[i].is_finite() {
                continue;
            }
            let mut out = 0.0;
            for j in 0..n {
                let pij = self.p[(i, j)];
                if j == i || pij == 0.0 {
                    continue;
                }
                let rate = pij / self.sj[i];
                match &reach[j] {
                    Some(r) => {
                        for k in 0..n {
                            qr[(i, k)] += rate * r[k];
                        }
                    }
                    None => qr[(i, j)] += rate,
                }
                out += rate;
            }
            qr[(i, i)] -= out;
            lambda = lambda.max(-qr[(i, i)]);
        }
        let mut pi = match &reach[0] {
            Some(r) => r.clone(),
            None => {
                let mut v = DVector::zeros(n);
                v[0] = 1.0;
                v
            }
        };
        let pu = if lambda > 0.0 { DMatrix::identity(n, n) + &qr / lambda } else { DMatrix::identity(n, n) };
        let put = pu.transpose();
        let mut out = Vec::with_capacity(grid.len());
        let mut now = 0.0;
        for &t in grid {
            if !(t >= now) || !t.is_finite() {
                return Err(ReliabilityError::InvalidGrid(t));
            }
            let mut remaining = t - now;
            if lambda > 0.0 {
                while remaining > 0.0 {
                    let dt = remaining.min(40.0 / lambda);
                    pi = uniformized_step(&put, &pi, lambda * dt)?;
                    remaining -= dt;
                }
            }
            now = t;
            out.push(pi.clone());
        }
        Ok(out)
    }

    /// Probability mass in success and failure markings.
    pub fn absorbed(&self, pi: &DVector<f64>) -> (f64, f64) {
        let (mut s, mut f) = (0.0, 0.0);
        for (i, c) in self.mrg.class.iter().enumerate() {
            match c {
                StateClass::Success => s += pi[i],
                StateClass::Failure => f += pi[i],
                StateClass::Transient => {}
            }
        }
        (s, f)
    }
}

/// `pi * exp(Q dt)` by a truncated Poisson mixture of powers of the uniformized chain.
fn uniformized_step(put: &DMatrix<f64>, pi: &DVector<f64>, lam: f64) -> Result<DVector<f64>, ReliabilityError> {
    let mut weight = (-lam).exp();
    let mut term = pi.clone();
    let mut acc = &term * weight;
    let mut total = weight;
    let mut k = 0usize;
    while total < 1.0 - 1e-15 || (k as f64) < lam {
        k += 1;
        if k > 10_000 {
            return Err(ReliabilityError::IntegrationDiverged);
        }
        term = put * &term;
        weight *= lam / k as f64;
        acc += &term * weight;
        total += weight;
        if weight < 1e-300 && (k as f64) > lam {
            break;
        }
    }
    if !(total > 0.0) || acc.iter().any(|v| !v.is_finite()) {
        return Err(ReliabilityError::IntegrationDiverged);
    }
    Ok(acc / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ps: f64, ts: f64, tf: f64) -> Timing {
        Timing { ps, pf: 1.0 - ps, ts, tf }
    }

    #[test]
    fn single_child_sojourn_is_mean_time() {
        let m = MarkovModel::new(NodeType::Sequence, &[t(1.0, 10.0, 5.0)]).unwrap();
        assert!((m.sj[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_parallel_identical_children_halve_sojourn() {
        let c = t(0.4, 3.0, 7.0);
        let one = MarkovModel::new(NodeType::Sequence, &[c]).unwrap();
        let two = MarkovModel::new(NodeType::Parallel(2), &[c, c]).unwrap();
        assert!((two.sj[0] - one.sj[0] / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rows_are_stochastic_and_generator_rows_vanish() {
        let ch = [t(0.3, 100.0, 59.9), t(0.8, 100.0, 100.0), t(0.2, 200.0, 178.6)];
        for node in [NodeType::Sequence, NodeType::Fallback, NodeType::Parallel(1), NodeType::Parallel(2)] {
            let m = MarkovModel::new(node, &ch).unwrap();
            for i in 0..m.p.nrows() {
                assert!((m.p.row(i).sum() - 1.0).abs() < 1e-12);
                assert!(m.q.row(i).sum().abs() < 1e-12);
            }
            assert!(m.is_nilpotent());
        }
    }

    #[test]
    fn certain_action_generator_entry() {
        let m = MarkovModel::new(NodeType::Sequence, &[t(1.0, 4.0, 1.0)]).unwrap();
        let s = m.mrg.class.iter().position(|c| *c == StateClass::Success).unwrap();
        assert!((m.q[(0, 0)] + 0.25).abs() < 1e-12);
        assert!((m.q[(0, s)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sequence_of_certain_actions() {
        let m = MarkovModel::new(NodeType::Sequence, &[t(1.0, 2.0, 1.0), t(1.0, 2.0, 1.0)]).unwrap();
        let r = m.mean_times();
        assert!((r.mtts.unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(r.mttf, None);
    }

    #[test]
    fn fallback_paths_by_hand() {
        let m = MarkovModel::new(NodeType::Fallback, &[t(0.5, 1.0, 1.0), t(0.5, 1.0, 1.0), t(1.0, 1.0, 1.0)]).unwrap();
        assert!((m.mean_times().mtts.unwrap() - 1.75).abs() < 1e-12);
    }

    #[test]
    fn exp_log_agrees_with_first_step() {
        let m = MarkovModel::new(NodeType::Fallback, &[t(0.3, 3.0, 2.0), t(0.6, 1.5, 4.0), t(0.2, 2.0, 5.0)]).unwrap();
        let a = m.mean_times();
        let (s, f) = m.exp_log_mean_times();
        assert!((a.mtts.unwrap() - s.unwrap()).abs() < 1e-9);
        assert!((a.mttf.unwrap() - f.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn single_action_transient_is_exponential() {
        let mu = 0.1;
        let m = MarkovModel::new(NodeType::Sequence, &[t(1.0, 1.0 / mu, 1.0)]).unwrap();
        let pi = m.transient(&[1.0 / mu]).unwrap();
        let (s, _) = m.absorbed(&pi[0]);
        assert!((s - (1.0 - (-1.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn instantaneous_condition_is_collapsed() {
        let cond = Timing { ps: 0.5, pf: 0.5, ts: 1e-9, tf: 1e-9 };
        let m = MarkovModel::new(NodeType::Sequence, &[cond, t(1.0, 10.0, 1.0)]).unwrap();
        let pi = m.transient(&[0.0, 10.0, 1e4]).unwrap();
        let (s0, f0) = m.absorbed(&pi[0]);
        assert!(s0.abs() < 1e-12 && (f0 - 0.5).abs() < 1e-12);
        let (s, _) = m.absorbed(&pi[1]);
        assert!((s - 0.5 * (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        assert!((pi[2].sum() - 1.0).abs() < 1e-12);
    }
}
