//! Visit counters, empirical estimators and confidence radii.
//!
//! Estimates used in episode `t` are built from episodes `1..t`, so
//! [`EstimatorState::update`] is called once an episode has finished.
//! Every radius uses the same `δ` verbatim:
//!
//! * transitions: `ε_t(x,ω,a) = sqrt(2 |X_{k(x)+1}| ln(T|X||Ω||A|/δ) / max{1, N_t(x,ω,a)})`
//! * priors: `ζ_t(x) = sqrt(2 |Ω| ln(T|X|/δ) / max{1, N_t(x)})`
//! * rewards, full feedback: `min{1, sqrt(ln(3T|X||Ω|/δ) / max{1, N_t(x,ω)})}`
//! * rewards, partial feedback: `min{1, sqrt(ln(3T|X||Ω||A|/δ) / max{1, N_t(x,ω,a)})}`

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Layout, MppInstance};
use crate::occupancy::SignalingPolicy;
use crate::simulator::{episode_rng, run_episode, EpisodeTrace, FeedbackMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sender,
    Receiver,
}

/// Learner-side statistics for one run.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorState {
    #[serde(skip)]
    layout: Arc<Layout>,
    horizon: usize,
    delta: f64,
    mode: FeedbackMode,
    episodes: u64,
    /// `N_t(x,ω,a,x′)`, tuple-indexed.
    n_tuple: Vec<u64>,
    /// `N_t(x,ω,a)`, by triplet id.
    n_triplet: Vec<u64>,
    /// `N_t(x,ω)`, by pair id.
    n_pair: Vec<u64>,
    /// `N_t(x)`.
    n_state: Vec<u64>,
    /// Number of reward observations per triplet id.
    n_reward: Vec<u64>,
    sum_sender: Vec<f64>,
    sum_receiver: Vec<f64>,
}

impl EstimatorState {
    pub fn new(layout: Arc<Layout>, horizon: usize, delta: f64, mode: FeedbackMode) -> Self {
        let triplets = layout.num_triplet_ids();
        EstimatorState {
            horizon,
            delta,
            mode,
            episodes: 0,
            n_tuple: vec![0; layout.num_tuples()],
            n_triplet: vec![0; triplets],
            n_pair: vec![0; layout.num_states() * layout.num_outcomes()],
            n_state: vec![0; layout.num_states()],
            n_reward: vec![0; triplets],
            sum_sender: vec![0.0; triplets],
            sum_receiver: vec![0.0; triplets],
            layout,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn update(&mut self, trace: &EpisodeTrace) -> Result<()> {
        if trace.mode != self.mode {
            return Err(Error::Shape(format!(
                "{:?} trace given to a {:?}-feedback estimator",
                trace.mode, self.mode
            )));
        }
        if trace.steps.len() != self.layout.num_layers() || trace.feedback.len() != trace.steps.len() {
            return Err(Error::Shape("trace length differs from the episode length".into()));
        }
        let layout = Arc::clone(&self.layout);
        for (step, obs) in trace.steps.iter().zip(&trace.feedback) {
            let tuple = layout
                .tuple_index(step.state, step.outcome, step.action, step.next)
                .ok_or_else(|| Error::Shape(format!("step {step:?} is not a layout tuple")))?;
            self.n_tuple[tuple] += 1;
            self.n_triplet[layout.triplet_id(step.state, step.outcome, step.action)] += 1;
            self.n_pair[layout.pair_id(step.state, step.outcome)] += 1;
            self.n_state[step.state] += 1;
            for o in obs {
                if o.action >= layout.num_actions() {
                    return Err(Error::Shape(format!("observed action {} out of range", o.action)));
                }
                let id = layout.triplet_id(step.state, step.outcome, o.action);
                self.n_reward[id] += 1;
                self.sum_sender[id] += o.sender;
                self.sum_receiver[id] += o.receiver;
            }
        }
        self.episodes += 1;
        Ok(())
    }

    pub fn count_tuple(&self, i: usize) -> u64 {
        self.n_tuple[i]
    }

    pub fn count_triplet(&self, x: usize, w: usize, a: usize) -> u64 {
        self.n_triplet[self.layout.triplet_id(x, w, a)]
    }

    pub fn count_pair(&self, x: usize, w: usize) -> u64 {
        self.n_pair[self.layout.pair_id(x, w)]
    }

    pub fn count_state(&self, x: usize) -> u64 {
        self.n_state[x]
    }

    pub fn count_rewards(&self, x: usize, w: usize, a: usize) -> u64 {
        self.n_reward[self.layout.triplet_id(x, w, a)]
    }

    /// `P̄_t(x′ | x, ω, a)` for tuple `i`.
    pub fn empirical_transition(&self, i: usize) -> f64 {
        let t = self.layout.tuples()[i];
        let n = self.count_triplet(t.state, t.outcome, t.action);
        self.n_tuple[i] as f64 / n.max(1) as f64
    }

    /// `μ̄_t(ω | x)`.
    pub fn empirical_prior(&self, x: usize, w: usize) -> f64 {
        self.count_pair(x, w) as f64 / self.n_state[x].max(1) as f64
    }

    pub fn empirical_reward(&self, x: usize, w: usize, a: usize, side: Side) -> f64 {
        let id = self.layout.triplet_id(x, w, a);
        let sum = match side {
            Side::Sender => self.sum_sender[id],
            Side::Receiver => self.sum_receiver[id],
        };
        sum / self.n_reward[id].max(1) as f64
    }

    fn log_term(&self, count: usize) -> f64 {
        (self.horizon as f64 * count as f64 / self.delta).ln()
    }

    pub fn bound_transition(&self, x: usize, w: usize, a: usize) -> f64 {
        let l = &self.layout;
        let next = l.next_layer(x).len() as f64;
        let log = self.log_term(l.num_states() * l.num_outcomes() * l.num_actions());
        (2.0 * next * log / self.count_triplet(x, w, a).max(1) as f64).sqrt()
    }

    pub fn bound_prior(&self, x: usize) -> f64 {
        let l = &self.layout;
        let log = self.log_term(l.num_states());
        (2.0 * l.num_outcomes() as f64 * log / self.n_state[x].max(1) as f64).sqrt()
    }

    /// Sender and receiver radii coincide; `side` is kept for call-site clarity.
    pub fn bound_reward(&self, x: usize, w: usize, a: usize, _side: Side) -> f64 {
        let l = &self.layout;
        let (log, n) = match self.mode {
            FeedbackMode::Full => (self.log_term(3 * l.num_states() * l.num_outcomes()), self.count_pair(x, w)),
            FeedbackMode::Partial => (
                self.log_term(3 * l.num_states() * l.num_outcomes() * l.num_actions()),
                self.count_triplet(x, w, a),
            ),
        };
        (log / n.max(1) as f64).sqrt().min(1.0)
    }

    /// Dense copy of all estimates and radii, as consumed by the LP builders.
    pub fn snapshot(&self) -> Estimates {
        let l = &self.layout;
        let mut est = Estimates::zeros(l);
        for i in 0..l.num_tuples() {
            est.transition[i] = self.empirical_transition(i);
        }
        for x in l.nonterminal_states() {
            est.prior_radius[x] = self.bound_prior(x);
            for w in 0..l.num_outcomes() {
                est.prior[l.pair_id(x, w)] = self.empirical_prior(x, w);
                for a in 0..l.num_actions() {
                    let id = l.triplet_id(x, w, a);
                    est.sender[id] = self.empirical_reward(x, w, a, Side::Sender);
                    est.receiver[id] = self.empirical_reward(x, w, a, Side::Receiver);
                    est.sender_radius[id] = self.bound_reward(x, w, a, Side::Sender);
                    est.receiver_radius[id] = self.bound_reward(x, w, a, Side::Receiver);
                    est.transition_radius[id] = self.bound_transition(x, w, a);
                }
            }
        }
        est
    }

    /// Counters and means, for post-mortem inspection.
    pub fn debug_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("estimator serializes");
        v["estimates"] = serde_json::to_value(self.snapshot()).expect("estimates serialize");
        v
    }
}

/// Point estimates and confidence radii in dense layout order.
///
/// Tuple-indexed: `transition`. Pair-indexed: `prior`. State-indexed:
/// `prior_radius`. Triplet-indexed: everything else.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimates {
    pub transition: Vec<f64>,
    pub prior: Vec<f64>,
    pub sender: Vec<f64>,
    pub receiver: Vec<f64>,
    pub transition_radius: Vec<f64>,
    pub prior_radius: Vec<f64>,
    pub sender_radius: Vec<f64>,
    pub receiver_radius: Vec<f64>,
}

impl Estimates {
    fn zeros(l: &Layout) -> Self {
        let triplets = l.num_triplet_ids();
        Estimates {
            transition: vec![0.0; l.num_tuples()],
            prior: vec![0.0; l.num_states() * l.num_outcomes()],
            sender: vec![0.0; triplets],
            receiver: vec![0.0; triplets],
            transition_radius: vec![0.0; triplets],
            prior_radius: vec![0.0; l.num_states()],
            sender_radius: vec![0.0; triplets],
            receiver_radius: vec![0.0; triplets],
        }
    }

    /// True parameters with all radii zero.
    pub fn from_truth(inst: &MppInstance) -> Self {
        let l = inst.layout();
        let mut est = Estimates::zeros(l);
        for (i, t) in l.tuples().iter().enumerate() {
            est.transition[i] = inst.transition(t.state, t.outcome, t.action, t.next);
        }
        for (x, w, a) in l.triplets() {
            let id = l.triplet_id(x, w, a);
            est.prior[l.pair_id(x, w)] = inst.prior(x, w);
            est.sender[id] = inst.sender_mean(x, w, a);
            est.receiver[id] = inst.receiver_mean(x, w, a);
        }
        est
    }

    /// Adds `extra` to every radius of the given kind.
    pub fn inflate(&mut self, transition: f64, prior: f64, sender: f64, receiver: f64) {
        self.transition_radius.iter_mut().for_each(|r| *r += transition);
        self.prior_radius.iter_mut().for_each(|r| *r += prior);
        self.sender_radius.iter_mut().for_each(|r| *r += sender);
        self.receiver_radius.iter_mut().for_each(|r| *r += receiver);
    }
}

/// Whether every true quantity lies inside its confidence set.
pub fn truth_within_bounds(inst: &MppInstance, est: &EstimatorState) -> bool {
    let l = inst.layout();
    for x in l.nonterminal_states() {
        let prior_l1: f64 = (0..l.num_outcomes())
            .map(|w| (inst.prior(x, w) - est.empirical_prior(x, w)).abs())
            .sum();
        if prior_l1 > est.bound_prior(x) {
            return false;
        }
    }
    for (x, w, a) in l.triplets() {
        let trans_l1: f64 = l
            .triplet_tuples(x, w, a)
            .map(|i| {
                let t = l.tuples()[i];
                (inst.transition(x, w, a, t.next) - est.empirical_transition(i)).abs()
            })
            .sum();
        if trans_l1 > est.bound_transition(x, w, a) {
            return false;
        }
        let sender_err = (inst.sender_mean(x, w, a) - est.empirical_reward(x, w, a, Side::Sender)).abs();
        let receiver_err = (inst.receiver_mean(x, w, a) - est.empirical_reward(x, w, a, Side::Receiver)).abs();
        if sender_err > est.bound_reward(x, w, a, Side::Sender) || receiver_err > est.bound_reward(x, w, a, Side::Receiver) {
            return false;
        }
    }
    true
}

/// Monte-Carlo frequency of the clean event: the fraction of `trials`
/// independent runs of `episodes` episodes under `policy` in which every
/// bound held before every episode. Trial `i` uses root seed `seed + i`.
pub fn clean_event_coverage(
    inst: &MppInstance,
    policy: &SignalingPolicy,
    episodes: usize,
    trials: usize,
    delta: f64,
    mode: FeedbackMode,
    seed: u64,
) -> f64 {
    let mut held = 0usize;
    for trial in 0..trials {
        let root = seed.wrapping_add(trial as u64);
        let mut est = EstimatorState::new(inst.shared_layout(), episodes, delta, mode);
        let mut ok = truth_within_bounds(inst, &est);
        for t in 0..episodes {
            if !ok {
                break;
            }
            let trace = run_episode(inst, policy, &mut episode_rng(root, t as u64), mode);
            est.update(&trace).expect("trace matches the estimator");
            ok = truth_within_bounds(inst, &est);
        }
        if ok {
            held += 1;
        }
    }
    if trials == 0 {
        return 1.0;
    }
    held as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, RewardSpec};
    use crate::simulator::{RewardObservation, Step};

    fn one_step_trace(mode: FeedbackMode, num_actions: usize) -> EpisodeTrace {
        let feedback = match mode {
            FeedbackMode::Full => (0..num_actions)
                .map(|a| RewardObservation { action: a, sender: 0.5, receiver: 0.25 * a as f64 })
                .collect(),
            FeedbackMode::Partial => vec![RewardObservation { action: 0, sender: 0.5, receiver: 0.0 }],
        };
        EpisodeTrace {
            mode,
            steps: vec![Step { state: 0, outcome: 0, action: 0, next: 1 }],
            feedback: vec![feedback],
        }
    }

    fn single_layer(mode: FeedbackMode) -> EstimatorState {
        let inst = InstanceBuilder::new(&[1, 1], 2, 2).build().unwrap();
        EstimatorState::new(inst.shared_layout(), 100, 0.1, mode)
    }

    #[test]
    fn first_observation_updates_all_counters() {
        let mut est = single_layer(FeedbackMode::Partial);
        est.update(&one_step_trace(FeedbackMode::Partial, 2)).unwrap();
        assert_eq!(est.count_tuple(0), 1);
        assert_eq!(est.count_triplet(0, 0, 0), 1);
        assert_eq!(est.count_pair(0, 0), 1);
        assert_eq!(est.count_state(0), 1);
        assert_eq!(est.empirical_transition(0), 1.0);
        assert_eq!(est.empirical_prior(0, 0), 1.0);
    }

    #[test]
    fn full_feedback_defines_every_action() {
        let mut est = single_layer(FeedbackMode::Full);
        est.update(&one_step_trace(FeedbackMode::Full, 2)).unwrap();
        assert_eq!(est.count_rewards(0, 0, 0), 1);
        assert_eq!(est.count_rewards(0, 0, 1), 1);
        assert_eq!(est.empirical_reward(0, 0, 1, Side::Receiver), 0.25);
        assert_eq!(est.count_rewards(0, 1, 0), 0);
    }

    #[test]
    fn partial_feedback_defines_only_the_played_action() {
        let mut est = single_layer(FeedbackMode::Partial);
        est.update(&one_step_trace(FeedbackMode::Partial, 2)).unwrap();
        assert_eq!(est.count_rewards(0, 0, 0), 1);
        assert_eq!(est.count_rewards(0, 0, 1), 0);
    }

    #[test]
    fn mismatched_trace_mode_is_rejected() {
        let mut est = single_layer(FeedbackMode::Full);
        assert!(est.update(&one_step_trace(FeedbackMode::Partial, 2)).is_err());
    }

    /// Layers (1, 2, 1): |X| = 4, |Ω| = 2, |A| = 2.
    fn counted(mode: FeedbackMode, state_visits: u64, pair_visits: u64, triplet_visits: u64) -> EstimatorState {
        let inst = InstanceBuilder::new(&[1, 2, 1], 2, 2).build().unwrap();
        let mut est = EstimatorState::new(inst.shared_layout(), 100, 0.1, mode);
        est.n_state[0] = state_visits;
        est.n_pair[0] = pair_visits;
        est.n_triplet[0] = triplet_visits;
        est
    }

    #[test]
    fn transition_radius_closed_form() {
        // sqrt(2 * 2 * ln(100 * 16 / 0.1) / 8)
        let est = counted(FeedbackMode::Full, 0, 0, 8);
        let expected = (4.0 * 16000f64.ln() / 8.0).sqrt();
        assert!((est.bound_transition(0, 0, 0) - expected).abs() < 1e-12);
        assert!((expected - 2.2001).abs() < 1e-4);
        assert_eq!(counted(FeedbackMode::Full, 0, 0, 0).bound_transition(0, 0, 0), counted(FeedbackMode::Full, 0, 0, 1).bound_transition(0, 0, 0));
        assert!(counted(FeedbackMode::Full, 0, 0, 1 << 40).bound_transition(0, 0, 0) < 1e-4);
    }

    #[test]
    fn prior_radius_closed_form() {
        let est = counted(FeedbackMode::Full, 16, 0, 0);
        let expected = (4.0 * 4000f64.ln() / 16.0).sqrt();
        assert!((est.bound_prior(0) - expected).abs() < 1e-12);
        assert!((expected - 1.4400).abs() < 1e-4);
        let doubled = counted(FeedbackMode::Full, 32, 0, 0).bound_prior(0);
        assert!((expected / doubled - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(counted(FeedbackMode::Full, 0, 0, 0).bound_prior(0), counted(FeedbackMode::Full, 1, 0, 0).bound_prior(0));
    }

    #[test]
    fn reward_radius_closed_form() {
        // Full feedback: sqrt(ln(3 * 100 * 4 * 2 / 0.1) / 25).
        let est = counted(FeedbackMode::Full, 0, 25, 0);
        let expected = (24000f64.ln() / 25.0).sqrt();
        assert!((est.bound_reward(0, 0, 1, Side::Sender) - expected).abs() < 1e-12);
        assert!((expected - 0.6352).abs() < 1e-4);
        assert_eq!(est.bound_reward(0, 0, 1, Side::Sender), est.bound_reward(0, 0, 1, Side::Receiver));
        assert_eq!(counted(FeedbackMode::Full, 0, 0, 0).bound_reward(0, 0, 0, Side::Sender), 1.0);

        // Partial feedback keys on the triplet counter and the |A| log term.
        let est = counted(FeedbackMode::Partial, 0, 25, 25);
        let expected = (48000f64.ln() / 25.0).sqrt();
        assert!((est.bound_reward(0, 0, 0, Side::Sender) - expected).abs() < 1e-12);
        assert_eq!(est.bound_reward(0, 0, 1, Side::Sender), 1.0);
    }

    #[test]
    fn radii_shrink_with_data_and_with_larger_delta() {
        let inst = InstanceBuilder::new(&[1, 2, 1], 2, 2).build().unwrap();
        for mode in [FeedbackMode::Full, FeedbackMode::Partial] {
            let mut prev = f64::INFINITY;
            for n in [0u64, 1, 2, 10, 1000] {
                let e = counted(mode, n, n, n);
                let all = e.bound_transition(0, 0, 0) + e.bound_prior(0) + e.bound_reward(0, 0, 0, Side::Sender);
                assert!(all <= prev);
                prev = all;
            }
            let loose = EstimatorState::new(inst.shared_layout(), 100, 0.01, mode);
            let tight = EstimatorState::new(inst.shared_layout(), 100, 0.5, mode);
            assert!(tight.bound_transition(0, 0, 0) <= loose.bound_transition(0, 0, 0));
            assert!(tight.bound_prior(0) <= loose.bound_prior(0));
        }
    }

    #[test]
    fn counters_stay_consistent_over_a_run() {
        let inst = InstanceBuilder::new(&[1, 2, 2, 1], 2, 3)
            .prior(|x, w| if w == 0 { 0.2 + 0.1 * x as f64 } else { 0.8 - 0.1 * x as f64 })
            .sender(|_, _, a| RewardSpec::bernoulli(0.3 * a as f64))
            .receiver(|_, w, _| RewardSpec::scaled_beta(1.0 + w as f64, 2.0))
            .build()
            .unwrap();
        let phi = SignalingPolicy::uniform(inst.layout());
        let l = inst.layout();
        for mode in [FeedbackMode::Full, FeedbackMode::Partial] {
            let mut est = EstimatorState::new(inst.shared_layout(), 200, 0.1, mode);
            for t in 0..200 {
                est.update(&run_episode(&inst, &phi, &mut episode_rng(2, t), mode)).unwrap();
                for (x, w, a) in l.triplets() {
                    let s: u64 = l.triplet_tuples(x, w, a).map(|i| est.count_tuple(i)).sum();
                    assert_eq!(s, est.count_triplet(x, w, a));
                    if s > 0 {
                        let p: f64 = l.triplet_tuples(x, w, a).map(|i| est.empirical_transition(i)).sum();
                        assert!((p - 1.0).abs() < 1e-12);
                    }
                    let r = est.empirical_reward(x, w, a, Side::Receiver);
                    assert!((0.0..=1.0).contains(&r));
                }
                for x in l.nonterminal_states() {
                    let s: u64 = (0..2).map(|w| est.count_pair(x, w)).sum();
                    assert_eq!(s, est.count_state(x));
                    for w in 0..2 {
                        let s: u64 = (0..3).map(|a| est.count_triplet(x, w, a)).sum();
                        assert_eq!(s, est.count_pair(x, w));
                        let obs: Vec<u64> = (0..3).map(|a| est.count_rewards(x, w, a)).collect();
                        if mode == FeedbackMode::Full {
                            assert!(obs.iter().all(|&o| o == est.count_pair(x, w)));
                        } else {
                            assert!((0..3).all(|a| obs[a] == est.count_triplet(x, w, a)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fully_deterministic_instance_is_always_covered() {
        let inst = InstanceBuilder::new(&[1, 2, 1], 1, 2)
            .transition(|_, _, a, next| if next == 3 || next == 1 + a { 1.0 } else { 0.0 })
            .sender(|_, _, a| RewardSpec::deterministic(0.5 * a as f64))
            .receiver(|_, _, _| RewardSpec::deterministic(0.7))
            .build()
            .unwrap();
        let phi = SignalingPolicy::uniform(inst.layout());
        // Uniform policy still randomizes actions, but every conditional
        // quantity is deterministic.
        assert_eq!(clean_event_coverage(&inst, &phi, 50, 20, 0.1, FeedbackMode::Full, 0), 1.0);
    }

    #[test]
    fn snapshot_of_truth_has_zero_radii() {
        let inst = InstanceBuilder::new(&[1, 2, 1], 2, 2).build().unwrap();
        let est = Estimates::from_truth(&inst);
        assert!(est.transition_radius.iter().all(|&r| r == 0.0));
        assert!((est.transition.iter().sum::<f64>() - 12.0).abs() < 1e-12);
    }
}
