//! Per-episode policy selection: the OPPS learners and two baselines.

use std::path::PathBuf;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{EstimatorState, Estimates};
use crate::instance::{Layout, MppInstance};
use crate::lp::{solve, LinearProgram, LpStatus};
use crate::occupancy::{induced_policy, OccupancyMeasure, SignalingPolicy};
use crate::persuasion::{fully_revealing_from_means, fully_revealing_policy};
use crate::programs::{build_exploration_lp, build_opt_opt, extract_occupancy, CompetitorSign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    OppsFull,
    OppsPartial,
    FullyRevealingBaseline,
    FixedPolicy,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::OppsFull => "opps-full",
            LearnerKind::OppsPartial => "opps-partial",
            LearnerKind::FullyRevealingBaseline => "fully-revealing-baseline",
            LearnerKind::FixedPolicy => "fixed-policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub horizon: usize,
    #[serde(default)]
    pub competitor_sign: CompetitorSign,
}

fn default_delta() -> f64 {
    0.1
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind, horizon: usize) -> Self {
        LearnerConfig {
            kind,
            alpha: None,
            delta: default_delta(),
            horizon,
            competitor_sign: CompetitorSign::AsPrinted,
        }
    }

    pub fn partial(horizon: usize, alpha: f64) -> Self {
        LearnerConfig {
            alpha: Some(alpha),
            ..LearnerConfig::new(LearnerKind::OppsPartial, horizon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        match (self.kind, self.alpha) {
            (LearnerKind::OppsPartial, Some(a)) if (0.0..=1.0).contains(&a) => Ok(()),
            (LearnerKind::OppsPartial, Some(a)) => Err(Error::Config(format!("alpha must lie in [0, 1], got {a}"))),
            (LearnerKind::OppsPartial, None) => Err(Error::Config("opps-partial needs alpha".into())),
            (_, Some(_)) => Err(Error::Config(format!("alpha is only meaningful for opps-partial, not {}", self.kind.as_str()))),
            (_, None) => Ok(()),
        }
    }
}

/// Phase-1 bookkeeping of the partial-feedback learner.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationSchedule {
    per_triplet: u64,
    boundary: usize,
    triplets: Vec<(usize, usize, usize)>,
    counters: Vec<u64>,
}

impl ExplorationSchedule {
    pub fn new(layout: &Layout, horizon: usize, alpha: f64) -> Self {
        // Shave a hair off so exact powers such as 100^0.5 do not round up.
        let n = ((horizon as f64).powf(alpha) - 1e-9).ceil().max(1.0) as u64;
        let triplets: Vec<_> = layout.triplets().collect();
        let wanted = n as u128 * triplets.len() as u128;
        let boundary = if wanted > horizon as u128 {
            warn!("exploration needs {wanted} episodes but the horizon is {horizon}; capping phase 1 at {horizon}");
            horizon
        } else {
            wanted as usize
        };
        ExplorationSchedule {
            per_triplet: n,
            boundary,
            counters: vec![0; triplets.len()],
            triplets,
        }
    }

    pub fn per_triplet(&self) -> u64 {
        self.per_triplet
    }

    /// Last exploration episode `t*`.
    pub fn boundary(&self) -> usize {
        self.boundary
    }

    pub fn in_phase_one(&self, t: usize) -> bool {
        t <= self.boundary
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn counter(&self, x: usize, w: usize, a: usize) -> u64 {
        self.triplets
            .iter()
            .position(|&k| k == (x, w, a))
            .map_or(0, |i| self.counters[i])
    }

    /// Least-explored triplet, earliest in canonical order on ties.
    pub fn next_target(&self) -> (usize, usize, usize) {
        let mut best = 0;
        for (i, &c) in self.counters.iter().enumerate() {
            if c < self.counters[best] {
                best = i;
            }
        }
        self.triplets[best]
    }

    fn advance(&mut self, target: (usize, usize, usize)) {
        if let Some(i) = self.triplets.iter().position(|&k| k == target) {
            self.counters[i] += 1;
        }
    }
}

/// What happened while choosing one episode's policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub explore_phase: bool,
    pub target: Option<(usize, usize, usize)>,
    /// `None` when no program was solved.
    pub lp_status: Option<LpStatus>,
    pub lp_objective: Option<f64>,
    pub lp_pivots: usize,
    /// The program failed and the empirical fully-revealing policy was used.
    pub fallback: bool,
    pub q_hat: Option<OccupancyMeasure>,
}

impl Diagnostics {
    fn passive() -> Self {
        Diagnostics {
            explore_phase: false,
            target: None,
            lp_status: None,
            lp_objective: None,
            lp_pivots: 0,
            fallback: false,
            q_hat: None,
        }
    }

    /// Label for the CSV `lp_status` column.
    pub fn status_label(&self) -> &'static str {
        match (self.lp_status, self.fallback) {
            (None, false) => "none",
            (None, true) => "stalled",
            (Some(s), _) => s.as_str(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    layout: Arc<Layout>,
    schedule: Option<ExplorationSchedule>,
    fixed: Option<SignalingPolicy>,
    lp_dump_dir: Option<PathBuf>,
}

impl Learner {
    /// OPPS learners read only the layout of `inst`; the baselines use
    /// `fixed` (fixed-policy) or the true receiver means (fully revealing).
    pub fn new(config: LearnerConfig, inst: &MppInstance, fixed: Option<SignalingPolicy>) -> Result<Self> {
        config.validate()?;
        let layout = inst.shared_layout();
        let fixed = match config.kind {
            LearnerKind::FixedPolicy => {
                let phi = fixed.ok_or_else(|| Error::Config("fixed-policy learner needs a policy".into()))?;
                if !phi.matches(&layout) {
                    return Err(Error::Shape("fixed policy does not match the instance".into()));
                }
                Some(phi)
            }
            LearnerKind::FullyRevealingBaseline => Some(fully_revealing_policy(inst)),
            _ => None,
        };
        let schedule = match (config.kind, config.alpha) {
            (LearnerKind::OppsPartial, Some(alpha)) => Some(ExplorationSchedule::new(&layout, config.horizon, alpha)),
            _ => None,
        };
        Ok(Learner {
            config,
            layout,
            schedule,
            fixed,
            lp_dump_dir: None,
        })
    }

    /// Writes every solved program to `dir/lp_<t>.txt`.
    pub fn with_lp_dump(mut self, dir: impl Into<PathBuf>) -> Self {
        self.lp_dump_dir = Some(dir.into());
        self
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn schedule(&self) -> Option<&ExplorationSchedule> {
        self.schedule.as_ref()
    }

    pub fn select_policy(&mut self, est: &EstimatorState, t: usize) -> Result<(SignalingPolicy, Diagnostics)> {
        if t == 0 || t > self.config.horizon {
            return Err(Error::EpisodeOutOfRange { t, horizon: self.config.horizon });
        }
        if let Some(phi) = &self.fixed {
            return Ok((phi.clone(), Diagnostics::passive()));
        }
        let snapshot = est.snapshot();
        let sign = self.config.competitor_sign;
        let target = match &self.schedule {
            Some(s) if s.in_phase_one(t) => Some(s.next_target()),
            _ => None,
        };
        let lp = match target {
            Some(tg) => build_exploration_lp(&self.layout, &snapshot, tg, sign),
            None => build_opt_opt(&self.layout, &snapshot, sign),
        };
        self.dump(&lp, t)?;
        let (phi, mut diag) = self.solve_or_fallback(&lp, &snapshot);
        if let (Some(tg), Some(s)) = (target, self.schedule.as_mut()) {
            s.advance(tg);
            diag.explore_phase = true;
            diag.target = Some(tg);
        }
        Ok((phi, diag))
    }

    fn solve_or_fallback(&self, lp: &LinearProgram, est: &Estimates) -> (SignalingPolicy, Diagnostics) {
        let mut diag = Diagnostics::passive();
        let outcome = solve(lp).and_then(|sol| {
            diag.lp_status = Some(sol.status);
            diag.lp_pivots = sol.pivots;
            if sol.status == LpStatus::Optimal {
                diag.lp_objective = Some(sol.objective_value);
            }
            extract_occupancy(&sol, self.layout.clone())
        });
        match outcome {
            Ok(q) => {
                let phi = induced_policy(&q);
                diag.q_hat = Some(q);
                (phi, diag)
            }
            Err(e) => {
                warn!("optimistic program failed ({e}); playing the empirical fully-revealing policy");
                diag.fallback = true;
                let l = &self.layout;
                let phi = fully_revealing_from_means(
                    l,
                    |x, w, a| est.receiver[l.triplet_id(x, w, a)],
                    |x, w, a| est.sender[l.triplet_id(x, w, a)],
                );
                (phi, diag)
            }
        }
    }

    fn dump(&self, lp: &LinearProgram, t: usize) -> Result<()> {
        if let Some(dir) = &self.lp_dump_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(format!("lp_{t:06}.txt"));
            std::fs::write(&path, lp.to_text()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
