//! Occupancy measures and signaling policies.
//!
//! An occupancy measure assigns a probability to every `(x, ω, a, x′)`
//! tuple; all marginals are derived from that single vector.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Layout, MppInstance};

/// Negative entries down to this value are treated as solver round-off.
pub const CLAMP_TOL: f64 = 1e-9;
/// Below this mass a conditional row is undefined and induced as uniform.
pub const ZERO_MASS: f64 = 1e-12;

/// Direct signaling scheme: `φ(a | x, ω)` for every non-terminal `(x, ω)`.
///
/// Stored densely by triplet id; rows of terminal states are uniform and
/// never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalingPolicy {
    num_states: usize,
    num_outcomes: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl SignalingPolicy {
    pub fn uniform(layout: &Layout) -> Self {
        let na = layout.num_actions();
        SignalingPolicy {
            num_states: layout.num_states(),
            num_outcomes: layout.num_outcomes(),
            num_actions: na,
            probs: vec![1.0 / na.max(1) as f64; layout.num_triplet_ids()],
        }
    }

    /// Builds a policy row by row; `f(x, ω)` returns the distribution over actions.
    pub fn from_fn(layout: &Layout, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        let mut policy = Self::uniform(layout);
        for x in layout.nonterminal_states() {
            for w in 0..layout.num_outcomes() {
                let row = f(x, w);
                if row.len() != layout.num_actions() {
                    return Err(Error::Shape(format!(
                        "policy row ({x}, {w}) has {} entries, expected {}",
                        row.len(),
                        layout.num_actions()
                    )));
                }
                policy.row_mut(x, w).copy_from_slice(&row);
            }
        }
        Ok(policy)
    }

    /// Deterministic policy recommending `choose(x, ω)`.
    pub fn deterministic(layout: &Layout, mut choose: impl FnMut(usize, usize) -> usize) -> Self {
        let na = layout.num_actions();
        Self::from_fn(layout, |x, w| {
            let mut row = vec![0.0; na];
            row[choose(x, w)] = 1.0;
            row
        })
        .expect("rows have |A| entries")
    }

    pub fn prob(&self, x: usize, w: usize, a: usize) -> f64 {
        self.probs[(x * self.num_outcomes + w) * self.num_actions + a]
    }

    pub fn row(&self, x: usize, w: usize) -> &[f64] {
        let start = (x * self.num_outcomes + w) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    fn row_mut(&mut self, x: usize, w: usize) -> &mut [f64] {
        let start = (x * self.num_outcomes + w) * self.num_actions;
        &mut self.probs[start..start + self.num_actions]
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn matches(&self, layout: &Layout) -> bool {
        self.num_states == layout.num_states()
            && self.num_outcomes == layout.num_outcomes()
            && self.num_actions == layout.num_actions()
    }

    /// Largest deviation of any non-terminal row from summing to one, or a
    /// negative entry.
    pub fn row_error(&self, layout: &Layout) -> f64 {
        let mut worst = 0.0_f64;
        for x in layout.nonterminal_states() {
            for w in 0..layout.num_outcomes() {
                let row = self.row(x, w);
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                for &p in row {
                    worst = worst.max(-p);
                }
            }
        }
        worst
    }
}

/// `q(x, ω, a, x′)` in canonical tuple order.
#[derive(Debug, Clone)]
pub struct OccupancyMeasure {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl PartialEq for OccupancyMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && *self.layout == *other.layout
    }
}

impl OccupancyMeasure {
    pub fn new(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.num_tuples() {
            return Err(Error::Shape(format!(
                "occupancy has {} entries, layout has {} tuples",
                values.len(),
                layout.num_tuples()
            )));
        }
        Ok(OccupancyMeasure { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<Layout> {
        Arc::clone(&self.layout)
    }

    /// Raw entries, possibly with tiny negative round-off.
    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// Entry `i`; negative round-off reads as zero.
    pub fn get(&self, i: usize) -> f64 {
        self.values[i].max(0.0)
    }

    pub fn q_tuple(&self, x: usize, w: usize, a: usize, next: usize) -> f64 {
        self.layout.tuple_index(x, w, a, next).map_or(0.0, |i| self.get(i))
    }

    pub fn q_triplet(&self, x: usize, w: usize, a: usize) -> f64 {
        if self.layout.is_terminal(x) {
            return 0.0;
        }
        self.layout.triplet_tuples(x, w, a).map(|i| self.get(i)).sum()
    }

    pub fn q_pair(&self, x: usize, w: usize) -> f64 {
        (0..self.layout.num_actions()).map(|a| self.q_triplet(x, w, a)).sum()
    }

    pub fn q_state(&self, x: usize) -> f64 {
        (0..self.layout.num_outcomes()).map(|w| self.q_pair(x, w)).sum()
    }

    /// Mass entering `x` from the previous layer.
    pub fn inflow(&self, x: usize) -> f64 {
        let k = self.layout.layer_of(x);
        if k == 0 {
            return 0.0;
        }
        self.layout
            .layer_tuples(k - 1)
            .filter(|&i| self.layout.tuples()[i].next == x)
            .map(|i| self.get(i))
            .sum()
    }

    pub fn layer_sum(&self, k: usize) -> f64 {
        self.layout.layer_tuples(k).map(|i| self.get(i)).sum()
    }

    /// `Σ q(x, ω, a) · r(x, ω, a)` for a triplet-indexed reward table.
    pub fn dot_triplet(&self, reward: impl Fn(usize, usize, usize) -> f64) -> f64 {
        self.layout
            .tuples()
            .iter()
            .enumerate()
            .map(|(i, t)| self.get(i) * reward(t.state, t.outcome, t.action))
            .sum()
    }

    /// Flat JSON array in tuple order, tagged with the instance hash.
    pub fn to_json(&self, instance_hash: &str) -> serde_json::Value {
        serde_json::json!({
            "instance_hash": instance_hash,
            "q": self.values,
        })
    }
}

/// Forward recursion over layers.
pub fn exact_occupancy(inst: &MppInstance, phi: &SignalingPolicy) -> Result<OccupancyMeasure> {
    let layout = inst.layout();
    if !phi.matches(layout) {
        return Err(Error::Shape("policy dimensions do not match the instance".into()));
    }
    let mut state_mass = vec![0.0; layout.num_states()];
    state_mass[layout.initial_state()] = 1.0;
    let mut values = vec![0.0; layout.num_tuples()];
    for k in 0..layout.num_layers() {
        for &x in layout.layer(k) {
            let qx = state_mass[x];
            for w in 0..layout.num_outcomes() {
                let qxw = qx * inst.prior(x, w);
                for a in 0..layout.num_actions() {
                    let qxwa = qxw * phi.prob(x, w, a);
                    for i in layout.triplet_tuples(x, w, a) {
                        let next = layout.tuples()[i].next;
                        let v = qxwa * inst.transition(x, w, a, next);
                        values[i] = v;
                        state_mass[next] += v;
                    }
                }
            }
        }
    }
    OccupancyMeasure::new(inst.shared_layout(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Each layer carries total mass one.
    LayerSum,
    /// Inflow equals outflow at internal states.
    Flow,
    /// Induced transitions equal the instance's.
    Transition,
    /// Induced priors equal the instance's.
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFailure {
    pub condition: Condition,
    pub locator: String,
    pub deviation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidityReport {
    pub failures: Vec<ConditionFailure>,
}

impl ValidityReport {
    pub fn passes(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn passes_condition(&self, condition: Condition) -> bool {
        self.failures.iter().all(|f| f.condition != condition)
    }
}

/// Checks the four conditions characterizing valid occupancy measures.
///
/// Conditional conditions (transition, prior) are only checked where the
/// conditioning mass exceeds `tol`.
pub fn check_validity(q: &OccupancyMeasure, inst: &MppInstance, tol: f64) -> ValidityReport {
    let layout = inst.layout();
    let mut report = ValidityReport::default();
    let mut fail = |condition, locator: String, deviation: f64| {
        report.failures.push(ConditionFailure {
            condition,
            locator,
            deviation,
        })
    };
    if q.layout() != layout {
        fail(Condition::LayerSum, "layout mismatch".into(), f64::INFINITY);
        return report;
    }
    for k in 0..layout.num_layers() {
        let dev = (q.layer_sum(k) - 1.0).abs();
        if dev > tol {
            fail(Condition::LayerSum, format!("layer {k}"), dev);
        }
    }
    for k in 1..layout.num_layers() {
        for &x in layout.layer(k) {
            let dev = (q.inflow(x) - q.q_state(x)).abs();
            if dev > tol {
                fail(Condition::Flow, format!("state {x} (layer {k})"), dev);
            }
        }
    }
    for (x, w, a) in layout.triplets() {
        let qxwa = q.q_triplet(x, w, a);
        if qxwa <= tol {
            continue;
        }
        for i in layout.triplet_tuples(x, w, a) {
            let next = layout.tuples()[i].next;
            let dev = (q.get(i) / qxwa - inst.transition(x, w, a, next)).abs();
            if dev > tol {
                fail(Condition::Transition, format!("({x}, {w}, {a}) -> {next}"), dev);
            }
        }
    }
    for x in layout.nonterminal_states() {
        let qx = q.q_state(x);
        if qx <= tol {
            continue;
        }
        for w in 0..layout.num_outcomes() {
            let dev = (q.q_pair(x, w) / qx - inst.prior(x, w)).abs();
            if dev > tol {
                fail(Condition::Prior, format!("({x}, {w})"), dev);
            }
        }
    }
    report
}

/// `φ^q(a | x, ω) = q(x, ω, a) / q(x, ω)`; unreached rows are uniform.
pub fn induced_policy(q: &OccupancyMeasure) -> SignalingPolicy {
    let layout = q.layout();
    let na = layout.num_actions();
    SignalingPolicy::from_fn(layout, |x, w| {
        let row: Vec<f64> = (0..na).map(|a| q.q_triplet(x, w, a)).collect();
        normalize_or_uniform(row)
    })
    .expect("rows have |A| entries")
}

/// `P^q(x′ | x, ω, a)`, indexed like the tuples.
pub fn induced_transition(q: &OccupancyMeasure) -> Vec<f64> {
    let layout = q.layout();
    let mut out = vec![0.0; layout.num_tuples()];
    for (x, w, a) in layout.triplets() {
        let range = layout.triplet_tuples(x, w, a);
        let row = normalize_or_uniform(range.clone().map(|i| q.get(i)).collect());
        out[range].copy_from_slice(&row);
    }
    out
}

/// `μ^q(ω | x)`, indexed by pair id; terminal rows are zero.
pub fn induced_prior(q: &OccupancyMeasure) -> Vec<f64> {
    let layout = q.layout();
    let nw = layout.num_outcomes();
    let mut out = vec![0.0; layout.num_states() * nw];
    for x in layout.nonterminal_states() {
        let row = normalize_or_uniform((0..nw).map(|w| q.q_pair(x, w)).collect());
        out[x * nw..(x + 1) * nw].copy_from_slice(&row);
    }
    out
}

fn normalize_or_uniform(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total <= ZERO_MASS {
        let n = row.len().max(1) as f64;
        row.iter_mut().for_each(|v| *v = 1.0 / n);
    } else {
        row.iter_mut().for_each(|v| *v /= total);
    }
    row
}
