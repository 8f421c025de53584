//! Episodic loop-free Markov persuasion process instances.
//!
//! States carry explicit layer indices `0..=L`. Layer 0 holds the single
//! initial state and layer `L` the single terminal state; every transition
//! goes from layer `k` to layer `k + 1`. All probability tables are stored
//! densely and indexed by position (state, outcome and action indices are
//! their positions in the respective lists).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-sum tolerance for prior and transition distributions.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub id: String,
    pub layer: usize,
}

/// Reward distribution with support in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RewardKind {
    Deterministic { value: f64 },
    Bernoulli { p: f64 },
    ScaledBeta { a: f64, b: f64 },
}

impl RewardKind {
    fn analytic_mean(&self) -> f64 {
        match *self {
            RewardKind::Deterministic { value } => value,
            RewardKind::Bernoulli { p } => p,
            RewardKind::ScaledBeta { a, b } => a / (a + b),
        }
    }

    fn params_valid(&self) -> bool {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        match *self {
            RewardKind::Deterministic { value } => unit(value),
            RewardKind::Bernoulli { p } => unit(p),
            RewardKind::ScaledBeta { a, b } => a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0,
        }
    }
}

/// A reward distribution together with its mean, cached for O(1) access.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RewardKind", into = "RewardKind")]
pub struct RewardSpec {
    kind: RewardKind,
    mean: f64,
}

impl From<RewardKind> for RewardSpec {
    fn from(kind: RewardKind) -> Self {
        RewardSpec {
            kind,
            mean: kind.analytic_mean(),
        }
    }
}

impl From<RewardSpec> for RewardKind {
    fn from(spec: RewardSpec) -> Self {
        spec.kind
    }
}

impl RewardSpec {
    pub fn deterministic(value: f64) -> Self {
        RewardKind::Deterministic { value }.into()
    }

    pub fn bernoulli(p: f64) -> Self {
        RewardKind::Bernoulli { p }.into()
    }

    pub fn scaled_beta(a: f64, b: f64) -> Self {
        RewardKind::ScaledBeta { a, b }.into()
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, RewardKind::Deterministic { .. })
    }

    /// Draws one realization. Bernoulli draws use a single uniform variate
    /// (inverse CDF); deterministic rewards consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RewardKind::Deterministic { value } => value,
            RewardKind::Bernoulli { p } => {
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardKind::ScaledBeta { a, b } => Beta::new(a, b)
                .map(|d| d.sample(rng))
                .unwrap_or(self.mean),
        }
    }
}

/// One element of the canonical variable ordering: `(x, ω, a, x′)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tuple {
    pub state: usize,
    pub outcome: usize,
    pub action: usize,
    pub next: usize,
}

/// Index structure shared by every table and LP in the crate.
///
/// Tuples are ordered by layer, then state index, outcome, action and next
/// state index. For a fixed `(x, ω, a)` the tuples over `x′ ∈ X_{k(x)+1}`
/// are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    num_layers: usize,
    num_outcomes: usize,
    num_actions: usize,
    layer_of: Vec<usize>,
    layers: Vec<Vec<usize>>,
    tuples: Vec<Tuple>,
    triplet_start: Vec<usize>,
    layer_tuple_start: Vec<usize>,
}

impl Layout {
    fn new(num_layers: usize, layer_of: Vec<usize>, num_outcomes: usize, num_actions: usize) -> Self {
        let mut layers = vec![Vec::new(); num_layers + 1];
        for (x, &k) in layer_of.iter().enumerate() {
            layers[k].push(x);
        }
        let num_states = layer_of.len();
        let mut tuples = Vec::new();
        let mut triplet_start = vec![usize::MAX; num_states * num_outcomes * num_actions];
        let mut layer_tuple_start = Vec::with_capacity(num_layers + 1);
        for k in 0..num_layers {
            layer_tuple_start.push(tuples.len());
            for &x in &layers[k] {
                for w in 0..num_outcomes {
                    for a in 0..num_actions {
                        triplet_start[(x * num_outcomes + w) * num_actions + a] = tuples.len();
                        for &next in &layers[k + 1] {
                            tuples.push(Tuple {
                                state: x,
                                outcome: w,
                                action: a,
                                next,
                            });
                        }
                    }
                }
            }
        }
        layer_tuple_start.push(tuples.len());
        Layout {
            num_layers,
            num_outcomes,
            num_actions,
            layer_of,
            layers,
            tuples,
            triplet_start,
            layer_tuple_start,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn layer_of(&self, x: usize) -> usize {
        self.layer_of[x]
    }

    pub fn layer(&self, k: usize) -> &[usize] {
        &self.layers[k]
    }

    pub fn is_terminal(&self, x: usize) -> bool {
        self.layer_of[x] == self.num_layers
    }

    pub fn initial_state(&self) -> usize {
        self.layers[0][0]
    }

    /// Non-terminal states in canonical (layer, index) order.
    pub fn nonterminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers[..self.num_layers].iter().flatten().copied()
    }

    pub fn num_nonterminal_states(&self) -> usize {
        self.layers[..self.num_layers].iter().map(Vec::len).sum()
    }

    /// Successor layer of a non-terminal state.
    pub fn next_layer(&self, x: usize) -> &[usize] {
        &self.layers[self.layer_of[x] + 1]
    }

    pub fn tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub fn num_tuples(&self) -> usize {
        self.tuples.len()
    }

    /// Tuple indices belonging to layer `k < L`.
    pub fn layer_tuples(&self, k: usize) -> std::ops::Range<usize> {
        self.layer_tuple_start[k]..self.layer_tuple_start[k + 1]
    }

    /// Dense id of `(x, ω)` over all states.
    pub fn pair_id(&self, x: usize, w: usize) -> usize {
        x * self.num_outcomes + w
    }

    /// Dense id of `(x, ω, a)` over all states.
    pub fn triplet_id(&self, x: usize, w: usize, a: usize) -> usize {
        (x * self.num_outcomes + w) * self.num_actions + a
    }

    pub fn num_triplet_ids(&self) -> usize {
        self.triplet_start.len()
    }

    /// Tuple indices `(x, ω, a, ·)` for a non-terminal `x`.
    pub fn triplet_tuples(&self, x: usize, w: usize, a: usize) -> std::ops::Range<usize> {
        let start = self.triplet_start[self.triplet_id(x, w, a)];
        start..start + self.next_layer(x).len()
    }

    /// Index of the tuple `(x, ω, a, x′)`, if `x′` is in the successor layer.
    pub fn tuple_index(&self, x: usize, w: usize, a: usize, next: usize) -> Option<usize> {
        if self.is_terminal(x) {
            return None;
        }
        let pos = self.next_layer(x).iter().position(|&s| s == next)?;
        Some(self.triplet_start[self.triplet_id(x, w, a)] + pos)
    }

    /// Non-terminal `(x, ω, a)` triplets in canonical order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (nw, na) = (self.num_outcomes, self.num_actions);
        self.nonterminal_states()
            .flat_map(move |x| (0..nw).flat_map(move |w| (0..na).map(move |a| (x, w, a))))
    }
}

/// Dense constructor input. Rows of terminal states may be left empty.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParts {
    pub num_layers: usize,
    pub states: Vec<StateSpec>,
    pub outcomes: Vec<String>,
    pub actions: Vec<String>,
    /// `prior[x][ω]`
    pub prior: Vec<Vec<f64>>,
    /// `transition[x][ω][a][x′]`, with `x′` ranging over all states.
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `sender_rewards[x][ω][a]`
    pub sender_rewards: Vec<Vec<Vec<RewardSpec>>>,
    pub receiver_rewards: Vec<Vec<Vec<RewardSpec>>>,
}

/// Ground-truth environment. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MppInstance {
    parts: InstanceParts,
    layout: Arc<Layout>,
}

impl MppInstance {
    /// Checks table shapes and layer indices. Probabilistic invariants are
    /// reported by [`validate_instance`] instead.
    pub fn from_parts(parts: InstanceParts) -> Result<Self> {
        let nx = parts.states.len();
        let (nw, na) = (parts.outcomes.len(), parts.actions.len());
        let shape = |what: &str| Error::MalformedInstance(what.to_string());
        for s in &parts.states {
            if s.layer > parts.num_layers {
                return Err(Error::MalformedInstance(format!(
                    "state {} has layer {} beyond L = {}",
                    s.id, s.layer, parts.num_layers
                )));
            }
        }
        if parts.prior.len() != nx
            || parts.transition.len() != nx
            || parts.sender_rewards.len() != nx
            || parts.receiver_rewards.len() != nx
        {
            return Err(shape("per-state tables must have one row per state"));
        }
        for x in 0..nx {
            if parts.states[x].layer == parts.num_layers {
                continue;
            }
            if parts.prior[x].len() != nw {
                return Err(Error::MalformedInstance(format!(
                    "prior row of {} has {} entries, expected {nw}",
                    parts.states[x].id,
                    parts.prior[x].len()
                )));
            }
            let row_ok = |rows: &Vec<Vec<RewardSpec>>| rows.len() == nw && rows.iter().all(|r| r.len() == na);
            if !row_ok(&parts.sender_rewards[x]) || !row_ok(&parts.receiver_rewards[x]) {
                return Err(Error::MalformedInstance(format!(
                    "reward tables of {} are not |Ω| x |A|",
                    parts.states[x].id
                )));
            }
            let trans_ok = parts.transition[x].len() == nw
                && parts.transition[x]
                    .iter()
                    .all(|by_a| by_a.len() == na && by_a.iter().all(|row| row.len() == nx));
            if !trans_ok {
                return Err(Error::MalformedInstance(format!(
                    "transition table of {} is not |Ω| x |A| x |X|",
                    parts.states[x].id
                )));
            }
        }
        let layout = Layout::new(
            parts.num_layers,
            parts.states.iter().map(|s| s.layer).collect(),
            nw,
            na,
        );
        Ok(MppInstance {
            parts,
            layout: Arc::new(layout),
        })
    }

    pub fn parts(&self) -> &InstanceParts {
        &self.parts
    }

    pub fn into_parts(self) -> InstanceParts {
        self.parts
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<Layout> {
        Arc::clone(&self.layout)
    }

    pub fn num_layers(&self) -> usize {
        self.parts.num_layers
    }

    pub fn states(&self) -> &[StateSpec] {
        &self.parts.states
    }

    pub fn outcomes(&self) -> &[String] {
        &self.parts.outcomes
    }

    pub fn actions(&self) -> &[String] {
        &self.parts.actions
    }

    pub fn prior(&self, x: usize, w: usize) -> f64 {
        self.parts.prior[x][w]
    }

    pub fn transition(&self, x: usize, w: usize, a: usize, next: usize) -> f64 {
        self.parts.transition[x][w][a][next]
    }

    pub fn sender_reward(&self, x: usize, w: usize, a: usize) -> &RewardSpec {
        &self.parts.sender_rewards[x][w][a]
    }

    pub fn receiver_reward(&self, x: usize, w: usize, a: usize) -> &RewardSpec {
        &self.parts.receiver_rewards[x][w][a]
    }

    pub fn sender_mean(&self, x: usize, w: usize, a: usize) -> f64 {
        self.parts.sender_rewards[x][w][a].mean()
    }

    pub fn receiver_mean(&self, x: usize, w: usize, a: usize) -> f64 {
        self.parts.receiver_rewards[x][w][a].mean()
    }

    /// Short content hash of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&InstanceFile::from(self)).expect("instance serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Fails with [`Error::InvalidInstance`] listing every violation.
pub fn ensure_valid(inst: &MppInstance) -> Result<()> {
    let violations = validate_instance(inst);
    if violations.is_empty() {
        Ok(())
    } else {
        let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Err(Error::InvalidInstance(joined.join("; ")))
    }
}

/// The canonical `(x, ω, a, x′)` ordering used as the LP variable index.
pub fn enumerate_tuples(inst: &MppInstance) -> &[Tuple] {
    inst.layout().tuples()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub locator: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locator, self.message)
    }
}

pub fn validate_instance(inst: &MppInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |locator: String, message: String| out.push(Violation { locator, message });
    let p = &inst.parts;
    let layout = inst.layout();
    let l = p.num_layers;

    if l == 0 {
        push("num_layers".into(), "episode length must be at least 1".into());
    }
    if p.outcomes.is_empty() {
        push("outcomes".into(), "outcome set is empty".into());
    }
    if p.actions.is_empty() {
        push("actions".into(), "action set is empty".into());
    }
    let mut seen = std::collections::HashSet::new();
    for s in &p.states {
        if !seen.insert(s.id.as_str()) {
            push(format!("state {}", s.id), "duplicate state id".into());
        }
    }
    for k in [0, l] {
        let n = layout.layer(k).len();
        if n != 1 {
            push(format!("layer {k}"), format!("must contain exactly one state, found {n}"));
        }
    }
    for k in 1..l {
        if layout.layer(k).is_empty() {
            push(format!("layer {k}"), "intermediate layer is empty".into());
        }
    }

    let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
    for x in layout.nonterminal_states() {
        let xid = &p.states[x].id;
        let k = layout.layer_of(x);

        let mut sum = 0.0;
        for (w, &mu) in p.prior[x].iter().enumerate() {
            if !unit(mu) {
                push(format!("prior[{xid}][{}]", p.outcomes[w]), format!("probability {mu} outside [0,1]"));
            }
            sum += mu;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            push(format!("prior[{xid}]"), format!("sums to {sum}, expected 1"));
        }

        for w in 0..p.outcomes.len() {
            for a in 0..p.actions.len() {
                let loc = format!("transition[{xid}][{}][{}]", p.outcomes[w], p.actions[a]);
                let row = &p.transition[x][w][a];
                let mut sum = 0.0;
                for (next, &prob) in row.iter().enumerate() {
                    if !unit(prob) {
                        push(
                            format!("{loc}[{}]", p.states[next].id),
                            format!("probability {prob} outside [0,1]"),
                        );
                    }
                    if layout.layer_of(next) == k + 1 {
                        sum += prob;
                    } else if prob != 0.0 {
                        push(
                            format!("{loc}[{}]", p.states[next].id),
                            format!(
                                "edge from layer {k} to layer {} breaks the loop-free structure",
                                layout.layer_of(next)
                            ),
                        );
                    }
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    push(loc, format!("sums to {sum} over layer {}, expected 1", k + 1));
                }

                for (side, table) in [("sender", &p.sender_rewards), ("receiver", &p.receiver_rewards)] {
                    let spec = &table[x][w][a];
                    if !spec.kind.params_valid() {
                        push(
                            format!("{side}_rewards[{xid}][{}][{}]", p.outcomes[w], p.actions[a]),
                            format!("invalid distribution {:?}", spec.kind),
                        );
                    }
                }
            }
        }
    }
    out
}

type Closure3<T> = Box<dyn Fn(usize, usize, usize) -> T>;

/// Convenience constructor from layer sizes and closures over indices.
///
/// States are numbered layer by layer (`s0`, `s1`, ...); outcomes are
/// `w0..`, actions `a0..`. Defaults: uniform prior and transitions,
/// deterministic zero rewards.
pub struct InstanceBuilder {
    layer_sizes: Vec<usize>,
    num_outcomes: usize,
    num_actions: usize,
    prior: Box<dyn Fn(usize, usize) -> f64>,
    transition: Box<dyn Fn(usize, usize, usize, usize) -> f64>,
    sender: Closure3<RewardSpec>,
    receiver: Closure3<RewardSpec>,
}

impl InstanceBuilder {
    /// `layer_sizes` has `L + 1` entries.
    pub fn new(layer_sizes: &[usize], num_outcomes: usize, num_actions: usize) -> Self {
        let nw = num_outcomes.max(1) as f64;
        let sizes = layer_sizes.to_vec();
        let layer_of: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
            .collect();
        let uniform_next = move |x: usize, _w: usize, _a: usize, _next: usize| {
            let k = layer_of[x];
            1.0 / sizes[k + 1] as f64
        };
        InstanceBuilder {
            layer_sizes: layer_sizes.to_vec(),
            num_outcomes,
            num_actions,
            prior: Box::new(move |_, _| 1.0 / nw),
            transition: Box::new(uniform_next),
            sender: Box::new(|_, _, _| RewardSpec::deterministic(0.0)),
            receiver: Box::new(|_, _, _| RewardSpec::deterministic(0.0)),
        }
    }

    pub fn prior(mut self, f: impl Fn(usize, usize) -> f64 + 'static) -> Self {
        self.prior = Box::new(f);
        self
    }

    /// `f(x, ω, a, x′)` is only consulted for `x′` in the successor layer.
    pub fn transition(mut self, f: impl Fn(usize, usize, usize, usize) -> f64 + 'static) -> Self {
        self.transition = Box::new(f);
        self
    }

    pub fn sender(mut self, f: impl Fn(usize, usize, usize) -> RewardSpec + 'static) -> Self {
        self.sender = Box::new(f);
        self
    }

    pub fn receiver(mut self, f: impl Fn(usize, usize, usize) -> RewardSpec + 'static) -> Self {
        self.receiver = Box::new(f);
        self
    }

    pub fn build(self) -> Result<MppInstance> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::MalformedInstance("need at least two layers".into()));
        }
        let num_layers = self.layer_sizes.len() - 1;
        let mut states = Vec::new();
        for (k, &n) in self.layer_sizes.iter().enumerate() {
            for _ in 0..n {
                states.push(StateSpec {
                    id: format!("s{}", states.len()),
                    layer: k,
                });
            }
        }
        let nx = states.len();
        let (nw, na) = (self.num_outcomes, self.num_actions);
        let mut parts = InstanceParts {
            num_layers,
            states,
            outcomes: (0..nw).map(|w| format!("w{w}")).collect(),
            actions: (0..na).map(|a| format!("a{a}")).collect(),
            prior: vec![Vec::new(); nx],
            transition: vec![Vec::new(); nx],
            sender_rewards: vec![Vec::new(); nx],
            receiver_rewards: vec![Vec::new(); nx],
        };
        for x in 0..nx {
            let k = parts.states[x].layer;
            if k == num_layers {
                continue;
            }
            parts.prior[x] = (0..nw).map(|w| (self.prior)(x, w)).collect();
            parts.transition[x] = (0..nw)
                .map(|w| {
                    (0..na)
                        .map(|a| {
                            (0..nx)
                                .map(|next| {
                                    if parts.states[next].layer == k + 1 {
                                        (self.transition)(x, w, a, next)
                                    } else {
                                        0.0
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            parts.sender_rewards[x] = (0..nw)
                .map(|w| (0..na).map(|a| (self.sender)(x, w, a)).collect())
                .collect();
            parts.receiver_rewards[x] = (0..nw)
                .map(|w| (0..na).map(|a| (self.receiver)(x, w, a)).collect())
                .collect();
        }
        MppInstance::from_parts(parts)
    }
}

// ---------------------------------------------------------------------------
// JSON form: tables nested by id (state -> outcome -> action -> next state).

type ById<T> = BTreeMap<String, T>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    num_layers: usize,
    states: Vec<StateSpec>,
    outcomes: Vec<String>,
    actions: Vec<String>,
    prior: ById<ById<f64>>,
    transition: ById<ById<ById<ById<f64>>>>,
    sender_rewards: ById<ById<ById<RewardSpec>>>,
    receiver_rewards: ById<ById<ById<RewardSpec>>>,
}

impl From<&MppInstance> for InstanceFile {
    fn from(inst: &MppInstance) -> Self {
        let p = &inst.parts;
        let layout = inst.layout();
        let mut file = InstanceFile {
            num_layers: p.num_layers,
            states: p.states.clone(),
            outcomes: p.outcomes.clone(),
            actions: p.actions.clone(),
            prior: BTreeMap::new(),
            transition: BTreeMap::new(),
            sender_rewards: BTreeMap::new(),
            receiver_rewards: BTreeMap::new(),
        };
        for x in layout.nonterminal_states() {
            let xid = p.states[x].id.clone();
            let k = layout.layer_of(x);
            file.prior.insert(
                xid.clone(),
                p.outcomes.iter().cloned().zip(p.prior[x].iter().copied()).collect(),
            );
            let mut by_w = BTreeMap::new();
            let mut send_w = BTreeMap::new();
            let mut recv_w = BTreeMap::new();
            for (w, wid) in p.outcomes.iter().enumerate() {
                let mut by_a = BTreeMap::new();
                let mut send_a = BTreeMap::new();
                let mut recv_a = BTreeMap::new();
                for (a, aid) in p.actions.iter().enumerate() {
                    // Successor-layer entries are always written; anything else
                    // only when nonzero, so malformed edges survive a round trip.
                    let row: BTreeMap<String, f64> = p.transition[x][w][a]
                        .iter()
                        .enumerate()
                        .filter(|&(next, &prob)| layout.layer_of(next) == k + 1 || prob != 0.0)
                        .map(|(next, &prob)| (p.states[next].id.clone(), prob))
                        .collect();
                    by_a.insert(aid.clone(), row);
                    send_a.insert(aid.clone(), p.sender_rewards[x][w][a]);
                    recv_a.insert(aid.clone(), p.receiver_rewards[x][w][a]);
                }
                by_w.insert(wid.clone(), by_a);
                send_w.insert(wid.clone(), send_a);
                recv_w.insert(wid.clone(), recv_a);
            }
            file.transition.insert(xid.clone(), by_w);
            file.sender_rewards.insert(xid.clone(), send_w);
            file.receiver_rewards.insert(xid, recv_w);
        }
        file
    }
}

impl TryFrom<InstanceFile> for MppInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let index = |ids: &[String], what: &str| -> Result<BTreeMap<String, usize>> {
            let mut map = BTreeMap::new();
            for (i, id) in ids.iter().enumerate() {
                if map.insert(id.clone(), i).is_some() {
                    return Err(Error::MalformedInstance(format!("duplicate {what} id {id}")));
                }
            }
            Ok(map)
        };
        let state_ids: Vec<String> = file.states.iter().map(|s| s.id.clone()).collect();
        let sx = index(&state_ids, "state")?;
        let sw = index(&file.outcomes, "outcome")?;
        let sa = index(&file.actions, "action")?;
        let lookup = |map: &BTreeMap<String, usize>, id: &str, what: &str| {
            map.get(id)
                .copied()
                .ok_or_else(|| Error::MalformedInstance(format!("unknown {what} id {id}")))
        };
        let (nx, nw, na) = (state_ids.len(), file.outcomes.len(), file.actions.len());
        let terminal = |x: usize| file.states[x].layer == file.num_layers;

        let mut prior = vec![Vec::new(); nx];
        let mut transition = vec![Vec::new(); nx];
        for x in (0..nx).filter(|&x| !terminal(x)) {
            prior[x] = vec![0.0; nw];
            transition[x] = vec![vec![vec![0.0; nx]; na]; nw];
        }
        for (xid, row) in &file.prior {
            let x = lookup(&sx, xid, "state")?;
            if terminal(x) {
                return Err(Error::MalformedInstance(format!("prior given for terminal state {xid}")));
            }
            for (wid, &v) in row {
                prior[x][lookup(&sw, wid, "outcome")?] = v;
            }
        }
        for (xid, by_w) in &file.transition {
            let x = lookup(&sx, xid, "state")?;
            if terminal(x) {
                return Err(Error::MalformedInstance(format!("transition given for terminal state {xid}")));
            }
            for (wid, by_a) in by_w {
                let w = lookup(&sw, wid, "outcome")?;
                for (aid, row) in by_a {
                    let a = lookup(&sa, aid, "action")?;
                    for (nid, &v) in row {
                        transition[x][w][a][lookup(&sx, nid, "state")?] = v;
                    }
                }
            }
        }
        let rewards = |table: &BTreeMap<String, BTreeMap<String, BTreeMap<String, RewardSpec>>>,
                       side: &str|
         -> Result<Vec<Vec<Vec<RewardSpec>>>> {
            let mut out = vec![Vec::new(); nx];
            for x in (0..nx).filter(|&x| !terminal(x)) {
                let xid = &state_ids[x];
                let mut by_w = Vec::with_capacity(nw);
                for wid in &file.outcomes {
                    let mut by_a = Vec::with_capacity(na);
                    for aid in &file.actions {
                        let spec = table
                            .get(xid)
                            .and_then(|m| m.get(wid))
                            .and_then(|m| m.get(aid))
                            .ok_or_else(|| {
                                Error::MalformedInstance(format!("missing {side} reward at ({xid}, {wid}, {aid})"))
                            })?;
                        by_a.push(*spec);
                    }
                    by_w.push(by_a);
                }
                out[x] = by_w;
            }
            for (xid, by_w) in table {
                lookup(&sx, xid, "state")?;
                for (wid, by_a) in by_w {
                    lookup(&sw, wid, "outcome")?;
                    for aid in by_a.keys() {
                        lookup(&sa, aid, "action")?;
                    }
                }
            }
            Ok(out)
        };
        let sender_rewards = rewards(&file.sender_rewards, "sender")?;
        let receiver_rewards = rewards(&file.receiver_rewards, "receiver")?;
        MppInstance::from_parts(InstanceParts {
            num_layers: file.num_layers,
            states: file.states,
            outcomes: file.outcomes,
            actions: file.actions,
            prior,
            transition,
            sender_rewards,
            receiver_rewards,
        })
    }
}

impl Serialize for MppInstance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MppInstance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = InstanceFile::deserialize(deserializer)?;
        MppInstance::try_from(file).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_layer() -> MppInstance {
        InstanceBuilder::new(&[1, 2, 1, 1], 2, 2)
            .sender(|x, w, a| RewardSpec::bernoulli(((x + w + a) % 3) as f64 / 3.0))
            .receiver(|_, w, a| RewardSpec::scaled_beta(1.0 + w as f64, 1.0 + a as f64))
            .build()
            .unwrap()
    }

    #[test]
    fn well_formed_instance_has_no_violations() {
        assert!(validate_instance(&three_layer()).is_empty());
    }

    #[test]
    fn broken_prior_is_reported_at_the_initial_state() {
        let inst = InstanceBuilder::new(&[1, 1], 2, 2)
            .prior(|_, w| if w == 0 { 0.5 } else { 0.4 })
            .build()
            .unwrap();
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].locator.contains("s0"));
    }

    #[test]
    fn skip_layer_edge_is_reported() {
        let mut parts = InstanceBuilder::new(&[1, 1, 1], 1, 1).build().unwrap().into_parts();
        // move the mass of s0 -> s1 onto s0 -> s2
        parts.transition[0][0][0][1] = 0.0;
        parts.transition[0][0][0][2] = 1.0;
        let inst = MppInstance::from_parts(parts).unwrap();
        let v = validate_instance(&inst);
        let edges: Vec<_> = v.iter().filter(|v| v.message.contains("loop-free")).collect();
        assert_eq!(edges.len(), 1, "{v:?}");
        assert!(edges[0].locator.contains("[s0][w0][a0][s2]"));
    }

    #[test]
    fn empty_action_set_is_a_violation() {
        let inst = InstanceBuilder::new(&[1, 1], 1, 0).build().unwrap();
        assert!(validate_instance(&inst).iter().any(|v| v.locator == "actions"));
    }

    #[test]
    fn tuple_counts_and_order() {
        let single = InstanceBuilder::new(&[1, 1], 2, 2).build().unwrap();
        let t = enumerate_tuples(&single);
        assert_eq!(t.len(), 4);
        let order: Vec<_> = t.iter().map(|t| (t.outcome, t.action)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);

        let two = InstanceBuilder::new(&[1, 2, 1], 2, 2).build().unwrap();
        assert_eq!(enumerate_tuples(&two).len(), 8 + 8);
        let t = enumerate_tuples(&two);
        assert!(t.windows(2).all(|p| {
            let key = |t: &Tuple| (two.layout().layer_of(t.state), *t);
            key(&p[0]) < key(&p[1])
        }));
    }

    #[test]
    fn layout_index_helpers_agree() {
        let inst = three_layer();
        let layout = inst.layout();
        for (i, t) in layout.tuples().iter().enumerate() {
            assert_eq!(layout.tuple_index(t.state, t.outcome, t.action, t.next), Some(i));
            assert!(layout.triplet_tuples(t.state, t.outcome, t.action).contains(&i));
        }
        assert_eq!(layout.triplets().count(), 4 * 2 * 2);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let inst = three_layer();
        let back = MppInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
        assert_eq!(inst.content_hash(), back.content_hash());
    }

    #[test]
    fn json_uses_documented_keys() {
        let inst = InstanceBuilder::new(&[1, 1], 1, 1)
            .sender(|_, _, _| RewardSpec::bernoulli(0.25))
            .build()
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
        for key in [
            "num_layers",
            "states",
            "outcomes",
            "actions",
            "prior",
            "transition",
            "sender_rewards",
            "receiver_rewards",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["transition"]["s0"]["w0"]["a0"]["s1"], 1.0);
        assert_eq!(v["sender_rewards"]["s0"]["w0"]["a0"]["kind"], "bernoulli");
        assert_eq!(v["sender_rewards"]["s0"]["w0"]["a0"]["params"]["p"], 0.25);
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let inst = InstanceBuilder::new(&[1, 1], 1, 1).build().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
        v["prior"]["s0"]["nope"] = serde_json::json!(0.0);
        assert!(serde_json::from_value::<MppInstance>(v).is_err());
    }

    #[test]
    fn reward_means_match_their_distributions() {
        assert_eq!(RewardSpec::deterministic(0.3).mean(), 0.3);
        assert_eq!(RewardSpec::bernoulli(0.7).mean(), 0.7);
        assert!((RewardSpec::scaled_beta(2.0, 6.0).mean() - 0.25).abs() < 1e-12);
    }
}
