//! Linear programs over occupancy measures.
//!
//! Every builder uses the canonical tuple order for the `q` block, and every
//! marginal of `q` is expanded inline as a sum of tuple variables.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimation::Estimates;
use crate::instance::{Layout, MppInstance};
use crate::lp::{LinearProgram, LpSolution, LpStatus, Relation};
use crate::occupancy::OccupancyMeasure;

/// Layer sums of an extracted occupancy must be within this of one.
pub const EXTRACTION_LAYER_TOL: f64 = 1e-6;

/// Sign of the competitor radius in the optimistic persuasiveness rows.
///
/// The rows read
/// `Σ_ω q(x,ω,a) (r̄(a) + ξ(a) − r̄(a′) ± ξ(a′)) ≥ 0`; `AsPrinted` uses `+`
/// (the competitor is lower-confidence-bounded), `Flipped` uses `−`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitorSign {
    #[default]
    AsPrinted,
    Flipped,
}

impl CompetitorSign {
    fn factor(self) -> f64 {
        match self {
            CompetitorSign::AsPrinted => 1.0,
            CompetitorSign::Flipped => -1.0,
        }
    }
}

/// What the optimistic program maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptObjective {
    /// Upper confidence bound of the sender's expected reward.
    SenderUcb,
    /// Probability of visiting the triplet `(x, ω, a)`.
    Reach { state: usize, outcome: usize, action: usize },
}

/// Column layout of the optimistic program: `q` tuples, then one `ε` per
/// tuple, then one `ζ` per non-terminal `(x, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptOptColumns {
    pub num_tuples: usize,
    pub num_prior_slacks: usize,
}

impl OptOptColumns {
    pub fn new(layout: &Layout) -> Self {
        OptOptColumns {
            num_tuples: layout.num_tuples(),
            num_prior_slacks: layout.num_nonterminal_states() * layout.num_outcomes(),
        }
    }

    pub fn q(&self, tuple: usize) -> usize {
        tuple
    }

    pub fn transition_slack(&self, tuple: usize) -> usize {
        self.num_tuples + tuple
    }

    /// `slot` is the position of `(x, ω)` among non-terminal pairs.
    pub fn prior_slack(&self, slot: usize) -> usize {
        2 * self.num_tuples + slot
    }

    pub fn num_vars(&self) -> usize {
        2 * self.num_tuples + self.num_prior_slacks
    }
}

fn triplet_terms(layout: &Layout, x: usize, w: usize, a: usize, scale: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    layout.triplet_tuples(x, w, a).map(move |i| (i, scale))
}

fn pair_terms(layout: &Layout, x: usize, w: usize, scale: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..layout.num_actions()).flat_map(move |a| triplet_terms(layout, x, w, a, scale))
}

fn state_terms(layout: &Layout, x: usize, scale: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..layout.num_outcomes()).flat_map(move |w| pair_terms(layout, x, w, scale))
}

/// Rows shared by every program: one unit of mass per layer, and inflow
/// equals outflow at internal states.
fn add_flow_rows(lp: &mut LinearProgram, layout: &Layout) {
    for k in 0..layout.num_layers() {
        let terms: Vec<(usize, f64)> = layout.layer_tuples(k).map(|i| (i, 1.0)).collect();
        lp.add_sparse(&terms, Relation::Eq, 1.0);
    }
    for k in 1..layout.num_layers() {
        for &x in layout.layer(k) {
            let mut terms: Vec<(usize, f64)> = layout
                .layer_tuples(k - 1)
                .filter(|&i| layout.tuples()[i].next == x)
                .map(|i| (i, 1.0))
                .collect();
            terms.extend(state_terms(layout, x, -1.0));
            lp.add_sparse(&terms, Relation::Eq, 0.0);
        }
    }
}

/// The offline persuasive optimum under the true parameters.
pub fn build_offline_lp(inst: &MppInstance) -> LinearProgram {
    let layout = inst.layout();
    let mut lp = LinearProgram::new(layout.num_tuples());
    for (i, t) in layout.tuples().iter().enumerate() {
        lp.objective[i] = inst.sender_mean(t.state, t.outcome, t.action);
    }
    add_flow_rows(&mut lp, layout);
    for (x, w, a) in layout.triplets() {
        for i in layout.triplet_tuples(x, w, a) {
            let p = inst.transition(x, w, a, layout.tuples()[i].next);
            let mut terms: Vec<(usize, f64)> = triplet_terms(layout, x, w, a, -p).collect();
            terms.push((i, 1.0));
            lp.add_sparse(&terms, Relation::Eq, 0.0);
        }
    }
    for x in layout.nonterminal_states() {
        for w in 0..layout.num_outcomes() {
            let mut terms: Vec<(usize, f64)> = pair_terms(layout, x, w, 1.0).collect();
            terms.extend(state_terms(layout, x, -inst.prior(x, w)));
            lp.add_sparse(&terms, Relation::Eq, 0.0);
        }
    }
    for x in layout.nonterminal_states() {
        for a in 0..layout.num_actions() {
            for b in (0..layout.num_actions()).filter(|&b| b != a) {
                let terms: Vec<(usize, f64)> = (0..layout.num_outcomes())
                    .flat_map(|w| {
                        let gain = inst.receiver_mean(x, w, a) - inst.receiver_mean(x, w, b);
                        triplet_terms(layout, x, w, a, gain)
                    })
                    .collect();
                lp.add_sparse(&terms, Relation::Ge, 0.0);
            }
        }
    }
    lp
}

/// The optimistic program with confidence-widened transitions and priors,
/// upper-confidence sender rewards and optimistic persuasiveness rows.
pub fn build_opt_opt(layout: &Layout, est: &Estimates, sign: CompetitorSign) -> LinearProgram {
    build_optimistic(layout, est, sign, OptObjective::SenderUcb)
}

/// Same feasible set as [`build_opt_opt`], maximizing the probability of
/// reaching `target = (x, ω, a)`.
pub fn build_exploration_lp(
    layout: &Layout,
    est: &Estimates,
    target: (usize, usize, usize),
    sign: CompetitorSign,
) -> LinearProgram {
    let (state, outcome, action) = target;
    build_optimistic(layout, est, sign, OptObjective::Reach { state, outcome, action })
}

pub fn build_optimistic(layout: &Layout, est: &Estimates, sign: CompetitorSign, objective: OptObjective) -> LinearProgram {
    let cols = OptOptColumns::new(layout);
    let mut lp = LinearProgram::new(cols.num_vars());
    match objective {
        OptObjective::SenderUcb => {
            for (i, t) in layout.tuples().iter().enumerate() {
                let id = layout.triplet_id(t.state, t.outcome, t.action);
                lp.objective[cols.q(i)] = est.sender[id] + est.sender_radius[id];
            }
        }
        OptObjective::Reach { state, outcome, action } => {
            for i in layout.triplet_tuples(state, outcome, action) {
                lp.objective[cols.q(i)] = 1.0;
            }
        }
    }
    add_flow_rows(&mut lp, layout);

    // |q(x,ω,a,x′) − P̄ q(x,ω,a)| ≤ ε(x,ω,a,x′) and Σ_x′ ε ≤ ε_t q(x,ω,a).
    for (x, w, a) in layout.triplets() {
        let range = layout.triplet_tuples(x, w, a);
        for i in range.clone() {
            let p = est.transition[i];
            let mut above: Vec<(usize, f64)> = triplet_terms(layout, x, w, a, -p).collect();
            above.push((cols.q(i), 1.0));
            above.push((cols.transition_slack(i), -1.0));
            lp.add_sparse(&above, Relation::Le, 0.0);
            let mut below: Vec<(usize, f64)> = triplet_terms(layout, x, w, a, p).collect();
            below.push((cols.q(i), -1.0));
            below.push((cols.transition_slack(i), -1.0));
            lp.add_sparse(&below, Relation::Le, 0.0);
        }
        let radius = est.transition_radius[layout.triplet_id(x, w, a)];
        let mut budget: Vec<(usize, f64)> = range.clone().map(|i| (cols.transition_slack(i), 1.0)).collect();
        budget.extend(triplet_terms(layout, x, w, a, -radius));
        lp.add_sparse(&budget, Relation::Le, 0.0);
    }

    // |q(x,ω) − μ̄ q(x)| ≤ ζ(x,ω) and Σ_ω ζ ≤ ζ_t q(x).
    let mut slot = 0;
    for x in layout.nonterminal_states() {
        let first_slot = slot;
        for w in 0..layout.num_outcomes() {
            let mu = est.prior[layout.pair_id(x, w)];
            let mut above: Vec<(usize, f64)> = pair_terms(layout, x, w, 1.0).collect();
            above.extend(state_terms(layout, x, -mu));
            above.push((cols.prior_slack(slot), -1.0));
            lp.add_sparse(&above, Relation::Le, 0.0);
            let mut below: Vec<(usize, f64)> = pair_terms(layout, x, w, -1.0).collect();
            below.extend(state_terms(layout, x, mu));
            below.push((cols.prior_slack(slot), -1.0));
            lp.add_sparse(&below, Relation::Le, 0.0);
            slot += 1;
        }
        let mut budget: Vec<(usize, f64)> = (first_slot..slot).map(|s| (cols.prior_slack(s), 1.0)).collect();
        budget.extend(state_terms(layout, x, -est.prior_radius[x]));
        lp.add_sparse(&budget, Relation::Le, 0.0);
    }

    // Optimistic persuasiveness; a′ = a reads Σ q·2ξ ≥ 0 and is omitted.
    let s = sign.factor();
    for x in layout.nonterminal_states() {
        for a in 0..layout.num_actions() {
            for b in (0..layout.num_actions()).filter(|&b| b != a) {
                let terms: Vec<(usize, f64)> = (0..layout.num_outcomes())
                    .flat_map(|w| {
                        let (ia, ib) = (layout.triplet_id(x, w, a), layout.triplet_id(x, w, b));
                        let coeff = est.receiver[ia] + est.receiver_radius[ia] - est.receiver[ib]
                            + s * est.receiver_radius[ib];
                        triplet_terms(layout, x, w, a, coeff)
                    })
                    .collect();
                lp.add_sparse(&terms, Relation::Ge, 0.0);
            }
        }
    }
    lp
}

/// Extends an occupancy measure to a full point of the optimistic program
/// by setting every auxiliary to the smallest admissible value.
pub fn complete_auxiliaries(q: &OccupancyMeasure, est: &Estimates) -> Vec<f64> {
    let layout = q.layout();
    let cols = OptOptColumns::new(layout);
    let mut z = vec![0.0; cols.num_vars()];
    for i in 0..layout.num_tuples() {
        z[cols.q(i)] = q.get(i);
    }
    for (x, w, a) in layout.triplets() {
        let qxwa = q.q_triplet(x, w, a);
        for i in layout.triplet_tuples(x, w, a) {
            z[cols.transition_slack(i)] = (q.get(i) - est.transition[i] * qxwa).abs();
        }
    }
    let mut slot = 0;
    for x in layout.nonterminal_states() {
        let qx = q.q_state(x);
        for w in 0..layout.num_outcomes() {
            z[cols.prior_slack(slot)] = (q.q_pair(x, w) - est.prior[layout.pair_id(x, w)] * qx).abs();
            slot += 1;
        }
    }
    z
}

/// Reads the `q` block of an optimal solution, clamping round-off.
pub fn extract_occupancy(solution: &LpSolution, layout: Arc<Layout>) -> Result<OccupancyMeasure> {
    if solution.status != LpStatus::Optimal {
        return Err(Error::Extraction(solution.status));
    }
    let n = layout.num_tuples();
    if solution.values.len() < n {
        return Err(Error::Shape(format!(
            "solution has {} values, layout needs {n}",
            solution.values.len()
        )));
    }
    let values: Vec<f64> = solution.values[..n]
        .iter()
        .map(|&v| if (-crate::occupancy::CLAMP_TOL..0.0).contains(&v) { 0.0 } else { v })
        .collect();
    let q = OccupancyMeasure::new(layout, values)?;
    for k in 0..q.layout().num_layers() {
        let sum = q.layer_sum(k);
        if (sum - 1.0).abs() > EXTRACTION_LAYER_TOL {
            return Err(Error::ExtractionLayerSum { layer: k, sum });
        }
    }
    Ok(q)
}
