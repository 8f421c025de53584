//! Receiver best responses and persuasiveness of direct signaling schemes.

use crate::error::{Error, Result};
use crate::instance::{Layout, MppInstance};
use crate::occupancy::SignalingPolicy;

/// Scores within this distance of the maximum count as ties.
pub const TIE_TOL: f64 = 1e-9;

/// Argmax of `receiver_score`, ties broken by `sender_score` and then by
/// lowest index.
pub fn argmax_favoring_sender(receiver_score: &[f64], sender_score: &[f64]) -> usize {
    let best = receiver_score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut choice = None::<usize>;
    for (a, &r) in receiver_score.iter().enumerate() {
        if r < best - TIE_TOL {
            continue;
        }
        match choice {
            Some(c) if sender_score[a] <= sender_score[c] + TIE_TOL => {}
            _ => choice = Some(a),
        }
    }
    choice.unwrap_or(0)
}

/// Receiver's best response `b^φ(a, x)` to recommendation `a` in state `x`.
///
/// Maximizes the unnormalized posterior score
/// `Σ_ω μ(ω|x) φ(a|x,ω) r_R(x,ω,a′)` over `a′`.
pub fn best_response(inst: &MppInstance, phi: &SignalingPolicy, x: usize, a: usize) -> Result<usize> {
    let layout = inst.layout();
    if layout.is_terminal(x) {
        return Err(Error::TerminalState(x));
    }
    Ok(best_response_unchecked(inst, phi, x, a))
}

fn best_response_unchecked(inst: &MppInstance, phi: &SignalingPolicy, x: usize, a: usize) -> usize {
    let layout = inst.layout();
    let na = layout.num_actions();
    let mut recv = vec![0.0; na];
    let mut send = vec![0.0; na];
    for w in 0..layout.num_outcomes() {
        let weight = inst.prior(x, w) * phi.prob(x, w, a);
        if weight == 0.0 {
            continue;
        }
        for b in 0..na {
            recv[b] += weight * inst.receiver_mean(x, w, b);
            send[b] += weight * inst.sender_mean(x, w, b);
        }
    }
    argmax_favoring_sender(&recv, &send)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersuasivenessReport {
    num_actions: usize,
    gap: Vec<f64>,
    best_response: Vec<usize>,
    pub is_persuasive: bool,
    pub min_gap: f64,
}

impl PersuasivenessReport {
    /// `Σ_ω μ(ω|x) φ(a|x,ω) (r_R(x,ω,a) − r_R(x,ω,b^φ(a,x)))`.
    pub fn gap(&self, x: usize, a: usize) -> f64 {
        self.gap[x * self.num_actions + a]
    }

    pub fn best_response(&self, x: usize, a: usize) -> usize {
        self.best_response[x * self.num_actions + a]
    }
}

pub fn persuasiveness_report(inst: &MppInstance, phi: &SignalingPolicy, tol: f64) -> PersuasivenessReport {
    let layout = inst.layout();
    let na = layout.num_actions();
    let mut gap = vec![0.0; layout.num_states() * na];
    let mut best = vec![0; layout.num_states() * na];
    let mut min_gap = f64::INFINITY;
    for x in layout.nonterminal_states() {
        for a in 0..na {
            let b = best_response_unchecked(inst, phi, x, a);
            let g: f64 = (0..layout.num_outcomes())
                .map(|w| {
                    inst.prior(x, w)
                        * phi.prob(x, w, a)
                        * (inst.receiver_mean(x, w, a) - inst.receiver_mean(x, w, b))
                })
                .sum();
            gap[x * na + a] = g;
            best[x * na + a] = b;
            min_gap = min_gap.min(g);
        }
    }
    PersuasivenessReport {
        num_actions: na,
        gap,
        best_response: best,
        is_persuasive: min_gap >= -tol,
        min_gap,
    }
}

/// Recommends, for every `(x, ω)`, the receiver's favourite action under
/// full knowledge of `ω` (ties favour the sender, then lowest index).
pub fn fully_revealing_policy(inst: &MppInstance) -> SignalingPolicy {
    fully_revealing_from_means(
        inst.layout(),
        |x, w, a| inst.receiver_mean(x, w, a),
        |x, w, a| inst.sender_mean(x, w, a),
    )
}

/// Same construction over arbitrary reward tables, e.g. empirical means.
pub fn fully_revealing_from_means(
    layout: &Layout,
    receiver: impl Fn(usize, usize, usize) -> f64,
    sender: impl Fn(usize, usize, usize) -> f64,
) -> SignalingPolicy {
    let na = layout.num_actions();
    SignalingPolicy::deterministic(layout, |x, w| {
        let recv: Vec<f64> = (0..na).map(|a| receiver(x, w, a)).collect();
        let send: Vec<f64> = (0..na).map(|a| sender(x, w, a)).collect();
        argmax_favoring_sender(&recv, &send)
    })
}
