//! One episode of sender-receivers interaction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::MppInstance;
use crate::occupancy::SignalingPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Rewards of every action at each visited `(x, ω)`.
    Full,
    /// Rewards of the played triplet only.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub outcome: usize,
    pub action: usize,
    pub next: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardObservation {
    pub action: usize,
    pub sender: f64,
    pub receiver: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub mode: FeedbackMode,
    pub steps: Vec<Step>,
    /// One entry per step: `|A|` observations in full mode, one in partial.
    pub feedback: Vec<Vec<RewardObservation>>,
}

/// Per-episode random stream: the run's root seed selects the ChaCha key
/// and the episode number selects the stream, so episode `t` draws the same
/// numbers regardless of the horizon or of earlier episodes.
pub fn episode_rng(root_seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(episode);
    rng
}

/// Inverse-CDF draw over `probs` in index order.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: impl IntoIterator<Item = f64> + Clone) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

/// Samples, at each layer: the outcome, the recommended action, the next
/// state, then the reward realizations exposed by `mode` (canonical action
/// order, sender before receiver). Receivers follow recommendations.
pub fn run_episode<R: Rng + ?Sized>(
    inst: &MppInstance,
    phi: &SignalingPolicy,
    rng: &mut R,
    mode: FeedbackMode,
) -> EpisodeTrace {
    let layout = inst.layout();
    let mut x = layout.initial_state();
    let mut steps = Vec::with_capacity(layout.num_layers());
    let mut feedback = Vec::with_capacity(layout.num_layers());
    for _ in 0..layout.num_layers() {
        let w = sample_index(rng, (0..layout.num_outcomes()).map(|w| inst.prior(x, w)));
        let a = sample_index(rng, phi.row(x, w).iter().copied());
        let next_layer = layout.next_layer(x);
        let next = next_layer[sample_index(rng, next_layer.iter().map(|&n| inst.transition(x, w, a, n)))];
        let observe = |b: usize, rng: &mut R| RewardObservation {
            action: b,
            sender: inst.sender_reward(x, w, b).sample(rng),
            receiver: inst.receiver_reward(x, w, b).sample(rng),
        };
        let obs = match mode {
            FeedbackMode::Full => (0..layout.num_actions()).map(|b| observe(b, rng)).collect(),
            FeedbackMode::Partial => vec![observe(a, rng)],
        };
        steps.push(Step {
            state: x,
            outcome: w,
            action: a,
            next,
        });
        feedback.push(obs);
        x = next;
    }
    EpisodeTrace { mode, steps, feedback }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceBuilder, RewardSpec};
    use crate::occupancy::exact_occupancy;

    #[test]
    fn deterministic_instance_ignores_the_seed() {
        let inst = InstanceBuilder::new(&[1, 2, 1], 2, 2)
            .prior(|_, w| if w == 1 { 1.0 } else { 0.0 })
            .transition(|_, _, a, next| if next == 1 + a { 1.0 } else { 0.0 })
            .sender(|_, _, a| RewardSpec::deterministic(0.1 * a as f64))
            .build()
            .unwrap();
        let phi = SignalingPolicy::deterministic(inst.layout(), |_, _| 1);
        let a = run_episode(&inst, &phi, &mut episode_rng(1, 0), FeedbackMode::Full);
        let b = run_episode(&inst, &phi, &mut episode_rng(99, 7), FeedbackMode::Full);
        assert_eq!(a, b);
        assert_eq!(a.steps[0], Step { state: 0, outcome: 1, action: 1, next: 2 });
        assert_eq!(a.steps[1].next, 3);
    }

    #[test]
    fn single_layer_gives_one_step_and_mode_sized_feedback() {
        let inst = InstanceBuilder::new(&[1, 1], 2, 3)
            .receiver(|_, _, _| RewardSpec::bernoulli(0.5))
            .build()
            .unwrap();
        let phi = SignalingPolicy::uniform(inst.layout());
        let full = run_episode(&inst, &phi, &mut episode_rng(3, 1), FeedbackMode::Full);
        assert_eq!(full.steps.len(), 1);
        assert_eq!((full.steps[0].state, full.steps[0].next), (0, 1));
        assert_eq!(full.feedback[0].len(), 3);
        let partial = run_episode(&inst, &phi, &mut episode_rng(3, 1), FeedbackMode::Partial);
        assert_eq!(partial.feedback[0].len(), 1);
        assert_eq!(partial.feedback[0][0].action, partial.steps[0].action);
    }

    #[test]
    fn episode_streams_are_independent_of_each_other() {
        let mut a = episode_rng(5, 3);
        let mut b = episode_rng(5, 3);
        let mut c = episode_rng(5, 4);
        let (x, y, z): (u64, u64, u64) = (a.gen(), b.gen(), c.gen());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn visit_frequencies_match_exact_occupancy() {
        let inst = InstanceBuilder::new(&[1, 2, 1], 2, 2)
            .prior(|x, w| if w == 0 { 0.3 + 0.2 * x as f64 } else { 0.7 - 0.2 * x as f64 })
            .transition(|_, w, a, next| match next {
                3 => 1.0,
                _ if (next == 1) == (w == a) => 0.8,
                _ => 0.2,
            })
            .build()
            .unwrap();
        let phi = SignalingPolicy::from_fn(inst.layout(), |x, w| vec![0.4 + 0.1 * (x + w) as f64, 0.6 - 0.1 * (x + w) as f64]).unwrap();
        let q = exact_occupancy(&inst, &phi).unwrap();
        let layout = inst.layout();
        let episodes = 100_000;
        let mut counts = vec![0u64; layout.num_tuples()];
        for t in 0..episodes {
            let trace = run_episode(&inst, &phi, &mut episode_rng(11, t), FeedbackMode::Partial);
            for s in &trace.steps {
                counts[layout.tuple_index(s.state, s.outcome, s.action, s.next).unwrap()] += 1;
            }
        }
        let n = episodes as f64;
        let within = counts
            .iter()
            .enumerate()
            .filter(|&(i, &c)| {
                let p = q.get(i);
                (c as f64 / n - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt() + 1e-12
            })
            .count();
        assert!(within as f64 >= 0.95 * counts.len() as f64, "{within}/{}", counts.len());
    }
}
