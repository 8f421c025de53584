//! Offline optimum, expected regret and persuasiveness violation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::MppInstance;
use crate::lp::{solve, LpStatus};
use crate::occupancy::{exact_occupancy, OccupancyMeasure, SignalingPolicy};
use crate::persuasion::persuasiveness_report;
use crate::programs::{build_offline_lp, extract_occupancy};

/// Value and occupancy of the best persuasive policy under the true model.
pub fn compute_opt(inst: &MppInstance) -> Result<(f64, OccupancyMeasure)> {
    let sol = solve(&build_offline_lp(inst))?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::OfflineInfeasible);
    }
    let q = extract_occupancy(&sol, inst.shared_layout())?;
    Ok((sol.objective_value, q))
}

/// Expected sender value `r_Sᵀ q`.
pub fn sender_value(inst: &MppInstance, q: &OccupancyMeasure) -> f64 {
    q.dot_triplet(|x, w, a| inst.sender_mean(x, w, a))
}

/// `Σ q(x,ω,a) (r_R(x,ω,b^φ(a,x)) − r_R(x,ω,a))` with `q` induced by `phi`.
pub fn violation_of(inst: &MppInstance, phi: &SignalingPolicy, q: &OccupancyMeasure) -> f64 {
    let report = persuasiveness_report(inst, phi, 0.0);
    let layout = inst.layout();
    let total: f64 = layout
        .triplets()
        .map(|(x, w, a)| {
            let b = report.best_response(x, a);
            q.q_triplet(x, w, a) * (inst.receiver_mean(x, w, b) - inst.receiver_mean(x, w, a))
        })
        .sum();
    total.max(0.0)
}

/// One episode's expected terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub regret: f64,
    pub violation: f64,
}

/// Per-episode and cumulative regret and violation for one run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsLedger {
    pub opt_value: f64,
    #[serde(skip)]
    pub q_star: OccupancyMeasure,
    pub instant_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    pub instant_violation: Vec<f64>,
    pub cum_violation: Vec<f64>,
    pub lp_infeasible: Vec<bool>,
    pub explore_phase: Vec<bool>,
}

impl MetricsLedger {
    pub fn new(opt_value: f64, q_star: OccupancyMeasure) -> Self {
        MetricsLedger {
            opt_value,
            q_star,
            instant_regret: Vec::new(),
            cum_regret: Vec::new(),
            instant_violation: Vec::new(),
            cum_violation: Vec::new(),
            lp_infeasible: Vec::new(),
            explore_phase: Vec::new(),
        }
    }

    pub fn for_instance(inst: &MppInstance) -> Result<Self> {
        let (opt, q) = compute_opt(inst)?;
        Ok(MetricsLedger::new(opt, q))
    }

    pub fn len(&self) -> usize {
        self.instant_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant_regret.is_empty()
    }

    /// Evaluates `phi` against the truth and appends the episode.
    pub fn record(&mut self, inst: &MppInstance, phi: &SignalingPolicy, lp_infeasible: bool, explore: bool) -> Result<EpisodeMetrics> {
        let q = exact_occupancy(inst, phi)?;
        let m = EpisodeMetrics {
            regret: self.opt_value - sender_value(inst, &q),
            violation: violation_of(inst, phi, &q),
        };
        let prev_r = self.cum_regret.last().copied().unwrap_or(0.0);
        let prev_v = self.cum_violation.last().copied().unwrap_or(0.0);
        self.instant_regret.push(m.regret);
        self.cum_regret.push(prev_r + m.regret);
        self.instant_violation.push(m.violation);
        self.cum_violation.push(prev_v + m.violation);
        self.lp_infeasible.push(lp_infeasible);
        self.explore_phase.push(explore);
        Ok(m)
    }
}

/// `OPT − r_Sᵀ q_t` for the occupancy of `phi`.
pub fn episode_regret(ledger: &MetricsLedger, inst: &MppInstance, phi: &SignalingPolicy) -> Result<f64> {
    let q = exact_occupancy(inst, phi)?;
    Ok(ledger.opt_value - sender_value(inst, &q))
}

pub fn episode_violation(inst: &MppInstance, phi: &SignalingPolicy) -> Result<f64> {
    let q = exact_occupancy(inst, phi)?;
    Ok(violation_of(inst, phi, &q))
}

/// Index window covering the second half of a series of length `len`.
pub fn second_half(len: usize) -> std::ops::Range<usize> {
    len / 2..len
}

/// Least-squares slope of `log cum[i]` against `log (i + 1)` over `window`.
pub fn fit_growth_exponent(cum: &[f64], window: std::ops::Range<usize>) -> Result<f64> {
    if window.end > cum.len() || window.len() < 2 {
        return Err(Error::UndefinedFit(format!(
            "window {}..{} over {} points",
            window.start,
            window.end,
            cum.len()
        )));
    }
    let mut xs = Vec::with_capacity(window.len());
    let mut ys = Vec::with_capacity(window.len());
    for i in window {
        let v = cum[i];
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::UndefinedFit(format!("value {v} at t = {}", i + 1)));
        }
        xs.push(((i + 1) as f64).ln());
        ys.push(v.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, RewardSpec};
    use crate::occupancy::induced_policy;
    use crate::persuasion::fully_revealing_policy;
    use rand::{Rng, SeedableRng};

    fn det(v: f64) -> RewardSpec {
        RewardSpec::deterministic(v)
    }

    fn conflict(recv: [f64; 2]) -> MppInstance {
        InstanceBuilder::new(&[1, 1], 1, 2)
            .receiver(move |_, _, a| det(recv[a]))
            .sender(|_, _, a| det([0.0, 1.0][a]))
            .build()
            .unwrap()
    }

    fn two_outcomes() -> MppInstance {
        InstanceBuilder::new(&[1, 2, 1], 2, 2)
            .prior(|x, w| [[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]][x][w])
            .transition(|_, w, a, next| match next {
                3 => 1.0,
                _ if (next == 1) == (w == a) => 0.7,
                _ => 0.3,
            })
            .receiver(|x, w, a| det(((x + 2 * w + 3 * a) % 4) as f64 / 3.0))
            .sender(|x, w, a| det(((2 * x + w + a) % 3) as f64 / 2.0))
            .build()
            .unwrap()
    }

    #[test]
    fn single_outcome_conflict_has_zero_opt() {
        let inst = conflict([1.0, 0.0]);
        let (opt, q) = compute_opt(&inst).unwrap();
        assert_eq!(opt, 0.0);
        assert_eq!(q.q_triplet(0, 0, 0), 1.0);
        let ledger = MetricsLedger::new(opt, q);
        let always_a1 = SignalingPolicy::deterministic(inst.layout(), |_, _| 1);
        assert_eq!(episode_regret(&ledger, &inst, &always_a1).unwrap(), -1.0);
    }

    #[test]
    fn optimal_policy_has_zero_regret_and_violation() {
        let inst = two_outcomes();
        let mut ledger = MetricsLedger::for_instance(&inst).unwrap();
        let phi = induced_policy(&ledger.q_star.clone());
        let m = ledger.record(&inst, &phi, false, false).unwrap();
        assert!(m.regret.abs() < 1e-7);
        assert!(m.violation < 1e-7);
    }

    #[test]
    fn fully_revealing_is_persuasive_and_suboptimal() {
        let inst = two_outcomes();
        let ledger = MetricsLedger::for_instance(&inst).unwrap();
        let fr = fully_revealing_policy(&inst);
        assert!(episode_regret(&ledger, &inst, &fr).unwrap() >= -1e-9);
        assert_eq!(episode_violation(&inst, &fr).unwrap(), 0.0);
    }

    #[test]
    fn one_step_violation() {
        let inst = conflict([0.4, 0.6]);
        let always_a0 = SignalingPolicy::deterministic(inst.layout(), |_, _| 0);
        assert!((episode_violation(&inst, &always_a0).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn aligned_interests_make_full_revelation_optimal() {
        let inst = InstanceBuilder::new(&[1, 1], 2, 2)
            .prior(|_, w| [0.35, 0.65][w])
            .receiver(|_, w, a| det([[0.9, 0.2], [0.1, 0.6]][w][a]))
            .sender(|_, w, a| det([[0.9, 0.2], [0.1, 0.6]][w][a]))
            .build()
            .unwrap();
        let (opt, _) = compute_opt(&inst).unwrap();
        let fr = exact_occupancy(&inst, &fully_revealing_policy(&inst)).unwrap();
        assert!((opt - sender_value(&inst, &fr)).abs() < 1e-9);
    }

    #[test]
    fn ledger_keeps_prefix_sums() {
        let inst = two_outcomes();
        let mut ledger = MetricsLedger::for_instance(&inst).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let phi = SignalingPolicy::from_fn(inst.layout(), |_, _| {
                let p: f64 = rng.gen();
                vec![p, 1.0 - p]
            })
            .unwrap();
            let m = ledger.record(&inst, &phi, false, false).unwrap();
            assert!(m.violation >= 0.0);
        }
        let mut r = 0.0;
        let mut v = 0.0;
        for t in 0..ledger.len() {
            r += ledger.instant_regret[t];
            v += ledger.instant_violation[t];
            assert_eq!(ledger.cum_regret[t], r);
            assert_eq!(ledger.cum_violation[t], v);
        }
    }

    #[test]
    fn growth_exponents_of_known_series() {
        let n = 20_000;
        let linear: Vec<f64> = (1..=n).map(|t| t as f64).collect();
        let root: Vec<f64> = (1..=n).map(|t| (t as f64).sqrt()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let noisy: Vec<f64> = (1..=n).map(|t| 3.0 * (t as f64).powf(0.7) + rng.gen::<f64>()).collect();
        assert!((fit_growth_exponent(&linear, second_half(n)).unwrap() - 1.0).abs() < 0.01);
        assert!((fit_growth_exponent(&root, second_half(n)).unwrap() - 0.5).abs() < 0.01);
        assert!((fit_growth_exponent(&noisy, second_half(n)).unwrap() - 0.7).abs() < 0.05);
    }

    #[test]
    fn growth_fit_rejects_non_positive_values() {
        let series = [1.0, 2.0, 0.0, 4.0];
        assert!(matches!(fit_growth_exponent(&series, 0..4), Err(Error::UndefinedFit(_))));
        assert!(matches!(fit_growth_exponent(&series, 3..4), Err(Error::UndefinedFit(_))));
    }
}
