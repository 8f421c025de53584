//! Instance generators, run configuration and the experiment runner.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimation::EstimatorState;
use crate::instance::{ensure_valid, InstanceBuilder, MppInstance, RewardSpec};
use crate::learners::{Diagnostics, Learner, LearnerConfig, LearnerKind};
use crate::metrics::{fit_growth_exponent, second_half, MetricsLedger};
use crate::occupancy::{induced_policy, SignalingPolicy};
use crate::programs::CompetitorSign;
use crate::simulator::{episode_rng, run_episode, FeedbackMode};

/// Column order of run CSVs.
pub const CSV_HEADER: [&str; 12] = [
    "t",
    "learner",
    "seed",
    "alpha",
    "explore_phase",
    "lp_status",
    "lp_objective",
    "instant_regret",
    "cum_regret",
    "instant_violation",
    "cum_violation",
    "episode_wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    #[default]
    Bernoulli,
    Deterministic,
    ScaledBeta,
}

impl RewardFamily {
    fn wrap(self, mean: f64) -> RewardSpec {
        match self {
            RewardFamily::Bernoulli => RewardSpec::bernoulli(mean),
            RewardFamily::Deterministic => RewardSpec::deterministic(mean),
            RewardFamily::ScaledBeta => {
                let m = mean.clamp(1e-3, 1.0 - 1e-3);
                RewardSpec::scaled_beta(4.0 * m, 4.0 * (1.0 - m))
            }
        }
    }
}

/// Uniform draw from the probability simplex of dimension `n`.
fn flat_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Random layered instance. `layer_sizes` lists `|X_k|` for the internal
/// layers `1..L−1`; layers `0` and `L` always hold one state.
pub fn gen_random_instance(
    num_layers: usize,
    internal_sizes: &[usize],
    num_outcomes: usize,
    num_actions: usize,
    seed: u64,
    family: RewardFamily,
) -> Result<MppInstance> {
    if num_layers == 0 || internal_sizes.len() != num_layers - 1 {
        return Err(Error::Config(format!(
            "{num_layers} layers need {} internal sizes, got {}",
            num_layers.saturating_sub(1),
            internal_sizes.len()
        )));
    }
    if internal_sizes.contains(&0) || num_outcomes == 0 || num_actions == 0 {
        return Err(Error::Config("every size must be at least 1".into()));
    }
    let mut sizes = vec![1];
    sizes.extend_from_slice(internal_sizes);
    sizes.push(1);
    let mut layer_of = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        layer_of.extend(std::iter::repeat_n(k, n));
    }
    let first_of: Vec<usize> = sizes.iter().scan(0, |acc, &n| {
        let start = *acc;
        *acc += n;
        Some(start)
    }).collect();
    let nx = layer_of.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Draw order: priors, transition rows, then receiver/sender means, each
    // over states, outcomes and actions in index order.
    let mut prior = vec![vec![0.0; num_outcomes]; nx];
    let mut trans = vec![vec![vec![Vec::new(); num_actions]; num_outcomes]; nx];
    let mut recv = vec![vec![vec![0.0; num_actions]; num_outcomes]; nx];
    let mut send = recv.clone();
    let nonterminal = nx - 1;
    for p in prior.iter_mut().take(nonterminal) {
        *p = flat_simplex(&mut rng, num_outcomes);
    }
    for x in 0..nonterminal {
        let width = sizes[layer_of[x] + 1];
        for row in trans[x].iter_mut() {
            for cell in row.iter_mut() {
                *cell = flat_simplex(&mut rng, width);
            }
        }
    }
    for table in [&mut recv, &mut send] {
        for row in table.iter_mut().take(nonterminal) {
            for cell in row.iter_mut().flatten() {
                *cell = rng.gen::<f64>();
            }
        }
    }
    InstanceBuilder::new(&sizes, num_outcomes, num_actions)
        .prior(move |x, w| prior[x][w])
        .transition(move |x, w, a, next| trans[x][w][a][next - first_of[layer_of[next]]])
        .receiver(move |x, w, a| family.wrap(recv[x][w][a]))
        .sender(move |x, w, a| family.wrap(send[x][w][a]))
        .build()
}

/// The two single-state, single-outcome instances that are hard to tell
/// apart: the receiver's means are `(1/2+ε, 1/2)` and `(1/2+ε, 1/2+2ε)`.
pub fn gen_lowerbound_pair(epsilon: f64) -> Result<(MppInstance, MppInstance)> {
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return Err(Error::Config(format!("epsilon must lie in (0, 1/4], got {epsilon}")));
    }
    let build = |second: f64| {
        InstanceBuilder::new(&[1, 1], 1, 2)
            .sender(|_, _, a| RewardSpec::deterministic([1.0, 0.0][a]))
            .receiver(move |_, _, a| RewardSpec::bernoulli([0.5 + epsilon, second][a]))
            .build()
    };
    Ok((build(0.5)?, build(0.5 + 2.0 * epsilon)?))
}

/// Where a run's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Random {
        num_layers: usize,
        /// Sizes of layers `1..L−1`.
        #[serde(default)]
        internal_sizes: Vec<usize>,
        outcomes: usize,
        actions: usize,
        seed: u64,
        #[serde(default)]
        rewards: RewardFamily,
    },
    /// `which` is 1 or 2.
    LowerBound { epsilon: f64, which: u8 },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<MppInstance> {
        match *self {
            GeneratorSpec::Random {
                num_layers,
                ref internal_sizes,
                outcomes,
                actions,
                seed,
                rewards,
            } => gen_random_instance(num_layers, internal_sizes, outcomes, actions, seed, rewards),
            GeneratorSpec::LowerBound { epsilon, which } => {
                let (a, b) = gen_lowerbound_pair(epsilon)?;
                match which {
                    1 => Ok(a),
                    2 => Ok(b),
                    _ => Err(Error::Config(format!("lower-bound instance must be 1 or 2, got {which}"))),
                }
            }
        }
    }
}

/// One `[[learner]]` section of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Fixed-policy source: `optimal`, `uniform`, `constant:<action index>`
    /// or the path of a policy JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
}

impl LearnerSection {
    pub fn label(&self) -> String {
        match self.alpha {
            Some(a) => format!("{}_a{}", self.kind.as_str(), a),
            None => self.kind.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(t) => vec![t],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Instance JSON path; exclusive with `generator`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(deserialize_with = "one_or_many")]
    pub learner: Vec<LearnerSection>,
    #[serde(default)]
    pub trace_log: bool,
    #[serde(default)]
    pub flip_competitor_sign: bool,
    /// Record per-episode wall time; off keeps CSVs byte-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub lp_dump: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths inside the file resolve against its directory.
        if let Some(base) = path.parent() {
            if let Some(inst) = &cfg.instance {
                if inst.is_relative() {
                    cfg.instance = Some(base.join(inst));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.learner.is_empty() {
            return Err(Error::Config("at least one learner section is required".into()));
        }
        match (&self.instance, &self.generator) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::Config("set exactly one of `instance` and `generator`".into())),
        }
        for section in &self.learner {
            self.learner_config(section).validate()?;
        }
        Ok(())
    }

    pub fn competitor_sign(&self) -> CompetitorSign {
        if self.flip_competitor_sign {
            CompetitorSign::Flipped
        } else {
            CompetitorSign::AsPrinted
        }
    }

    pub fn learner_config(&self, section: &LearnerSection) -> LearnerConfig {
        LearnerConfig {
            kind: section.kind,
            alpha: section.alpha,
            delta: section.delta.unwrap_or(LearnerConfig::new(section.kind, 1).delta),
            horizon: self.horizon,
            competitor_sign: self.competitor_sign(),
        }
    }

    pub fn load_instance(&self) -> Result<MppInstance> {
        let inst = match (&self.instance, &self.generator) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                MppInstance::from_json(&text)?
            }
            (None, Some(spec)) => spec.generate()?,
            (None, None) => return Err(Error::Config("no instance source".into())),
        };
        ensure_valid(&inst)?;
        Ok(inst)
    }
}

/// Resolves a fixed-policy source string.
pub fn resolve_policy(source: &str, inst: &MppInstance, ledger: &MetricsLedger) -> Result<SignalingPolicy> {
    let layout = inst.layout();
    match source {
        "optimal" => Ok(induced_policy(&ledger.q_star)),
        "uniform" => Ok(SignalingPolicy::uniform(layout)),
        s if s.starts_with("constant:") => {
            let a: usize = s["constant:".len()..]
                .parse()
                .map_err(|_| Error::Config(format!("bad action index in `{s}`")))?;
            if a >= layout.num_actions() {
                return Err(Error::Config(format!("action {a} out of range")));
            }
            Ok(SignalingPolicy::deterministic(layout, |_, _| a))
        }
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let phi: SignalingPolicy = serde_json::from_str(&text)?;
            if !phi.matches(layout) {
                return Err(Error::Shape(format!("policy in {path} does not match the instance")));
            }
            Ok(phi)
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub t: usize,
    pub explore_phase: bool,
    pub lp_status: &'static str,
    pub lp_objective: Option<f64>,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub instant_violation: f64,
    pub cum_violation: f64,
    pub wall_ms: f64,
}

/// Everything one (learner, seed) run produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub learner: LearnerConfig,
    pub seed: u64,
    pub ledger: MetricsLedger,
    pub rows: Vec<EpisodeRecord>,
    pub fallbacks: usize,
}

impl RunRecord {
    pub fn final_regret(&self) -> f64 {
        self.ledger.cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_violation(&self) -> f64 {
        self.ledger.cum_violation.last().copied().unwrap_or(0.0)
    }
}

/// Options of [`run_single`] beyond the learner itself.
#[derive(Default)]
pub struct RunOptions<'a> {
    pub timing: bool,
    pub trace: Option<&'a mut dyn Write>,
    pub lp_dump_dir: Option<PathBuf>,
}

/// The interaction loop for one learner and seed: select a policy, play one
/// episode, score it against the truth, update the estimators.
pub fn run_single(
    inst: &MppInstance,
    config: &LearnerConfig,
    fixed: Option<SignalingPolicy>,
    ledger: MetricsLedger,
    seed: u64,
    mut opts: RunOptions<'_>,
) -> Result<RunRecord> {
    let mode = match config.kind {
        LearnerKind::OppsPartial => FeedbackMode::Partial,
        _ => FeedbackMode::Full,
    };
    let mut learner = Learner::new(config.clone(), inst, fixed)?;
    if let Some(dir) = opts.lp_dump_dir.take() {
        learner = learner.with_lp_dump(dir);
    }
    let mut est = EstimatorState::new(inst.shared_layout(), config.horizon, config.delta, mode);
    let mut ledger = ledger;
    let mut rows = Vec::with_capacity(config.horizon);
    let mut fallbacks = 0;
    for t in 1..=config.horizon {
        let start = Instant::now();
        let (phi, diag) = learner.select_policy(&est, t)?;
        let trace = run_episode(inst, &phi, &mut episode_rng(seed, t as u64), mode);
        let m = ledger.record(inst, &phi, diag.fallback, diag.explore_phase)?;
        est.update(&trace)?;
        let wall_ms = if opts.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        fallbacks += usize::from(diag.fallback);
        if let Some(out) = opts.trace.as_mut() {
            write_trace_line(&mut **out, t, &diag, &trace, m.regret, m.violation)?;
        }
        rows.push(EpisodeRecord {
            t,
            explore_phase: diag.explore_phase,
            lp_status: diag.status_label(),
            lp_objective: diag.lp_objective,
            instant_regret: m.regret,
            cum_regret: ledger.cum_regret[t - 1],
            instant_violation: m.violation,
            cum_violation: ledger.cum_violation[t - 1],
            wall_ms,
        });
    }
    Ok(RunRecord {
        learner: config.clone(),
        seed,
        ledger,
        rows,
        fallbacks,
    })
}

fn write_trace_line(
    out: &mut dyn Write,
    t: usize,
    diag: &Diagnostics,
    trace: &crate::simulator::EpisodeTrace,
    regret: f64,
    violation: f64,
) -> Result<()> {
    let line = json!({
        "t": t,
        "explore_phase": diag.explore_phase,
        "target": diag.target,
        "lp_status": diag.status_label(),
        "fallback": diag.fallback,
        "steps": trace.steps,
        "feedback": trace.feedback,
        "instant_regret": regret,
        "instant_violation": violation,
    });
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))
}

/// `%.12g`: twelve significant digits, trailing zeros trimmed, scientific
/// notation outside `1e-4 ..= 1e12`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.11e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes one run's CSV.
pub fn write_run_csv<W: Write>(out: W, record: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let learner = record.learner.kind.as_str();
    let seed = record.seed.to_string();
    let alpha = record.learner.alpha.map(format_float).unwrap_or_default();
    for r in &record.rows {
        w.write_record([
            r.t.to_string().as_str(),
            learner,
            &seed,
            &alpha,
            if r.explore_phase { "1" } else { "0" },
            r.lp_status,
            &r.lp_objective.map(format_float).unwrap_or_default(),
            &format_float(r.instant_regret),
            &format_float(r.cum_regret),
            &format_float(r.instant_violation),
            &format_float(r.cum_violation),
            &format_float(r.wall_ms),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads one numeric column of a run CSV.
pub fn read_csv_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Config(format!("{}: no column `{column}`", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("");
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::Config(format!("{}: `{cell}` in column `{column}` is not a number", path.display())))?;
        out.push(v);
    }
    Ok(out)
}

/// Slope over the second half, or `None` when the series is not positive there.
pub fn exponent_or_none(cum: &[f64]) -> Option<f64> {
    fit_growth_exponent(cum, second_half(cum.len())).ok()
}

/// Pointwise mean of equally long series.
pub fn mean_curve<'a>(curves: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for c in curves {
        if sum.is_empty() {
            sum = vec![0.0; c.len()];
        }
        for (s, v) in sum.iter_mut().zip(c) {
            *s += v;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n.max(1) as f64).collect()
}

/// Summary of a whole experiment; also written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub instance_hash: String,
    pub opt: f64,
    pub runs: Vec<RunSummary>,
    pub learners: Vec<LearnerSummary>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub learner: String,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub csv: String,
    pub final_regret: f64,
    pub final_violation: f64,
    pub regret_exponent: Option<f64>,
    pub violation_exponent: Option<f64>,
    pub fallbacks: usize,
}

/// Cross-seed aggregates for one learner section.
#[derive(Debug, Clone, Serialize)]
pub struct LearnerSummary {
    pub learner: String,
    pub alpha: Option<f64>,
    pub seeds: usize,
    pub mean_final_regret: f64,
    pub mean_final_violation: f64,
    pub mean_curve_regret_exponent: Option<f64>,
    pub mean_curve_violation_exponent: Option<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs every (learner, seed) pair of `config`, writing one CSV per run,
/// optional traces, and finally `manifest.json`.
pub fn run_experiment(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let started = Instant::now();
    let inst = config.load_instance()?;
    let base = MetricsLedger::for_instance(&inst)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    info!("instance {} with OPT = {}", inst.content_hash(), base.opt_value);

    let mut runs = Vec::new();
    let mut learners = Vec::new();
    for section in &config.learner {
        let lc = config.learner_config(section);
        let fixed = match (&section.policy, lc.kind) {
            (Some(src), LearnerKind::FixedPolicy) => Some(resolve_policy(src, &inst, &base)?),
            (None, LearnerKind::FixedPolicy) => {
                return Err(Error::Config("fixed-policy learner needs `policy`".into()));
            }
            (Some(_), _) => return Err(Error::Config("`policy` only applies to fixed-policy learners".into())),
            (None, _) => None,
        };
        let label = section.label();
        let mut regret_curves = Vec::new();
        let mut violation_curves = Vec::new();
        for &seed in &config.seeds {
            let stem = format!("{label}_seed{seed}");
            let mut trace_file = if config.trace_log {
                Some(create(&dir.join(format!("{stem}.trace.jsonl")))?)
            } else {
                None
            };
            let opts = RunOptions {
                timing: config.timing,
                trace: trace_file.as_mut().map(|f| f as &mut dyn Write),
                lp_dump_dir: config.lp_dump.then(|| dir.join(format!("{stem}_lp"))),
            };
            let record = run_single(&inst, &lc, fixed.clone(), base.clone(), seed, opts)?;
            if let Some(mut f) = trace_file {
                f.flush().map_err(|e| Error::io(dir.join(format!("{stem}.trace.jsonl")), e))?;
            }
            let csv_name = format!("{stem}.csv");
            write_run_csv(create(&dir.join(&csv_name))?, &record)?;
            info!(
                "{stem}: R_T = {:.4}, V_T = {:.4}, fallbacks = {}",
                record.final_regret(),
                record.final_violation(),
                record.fallbacks
            );
            runs.push(RunSummary {
                learner: lc.kind.as_str().into(),
                alpha: lc.alpha,
                seed,
                csv: csv_name,
                final_regret: record.final_regret(),
                final_violation: record.final_violation(),
                regret_exponent: exponent_or_none(&record.ledger.cum_regret),
                violation_exponent: exponent_or_none(&record.ledger.cum_violation),
                fallbacks: record.fallbacks,
            });
            regret_curves.push(record.ledger.cum_regret);
            violation_curves.push(record.ledger.cum_violation);
        }
        let n = config.seeds.len() as f64;
        let mean_r = mean_curve(regret_curves.iter().map(Vec::as_slice));
        let mean_v = mean_curve(violation_curves.iter().map(Vec::as_slice));
        learners.push(LearnerSummary {
            learner: lc.kind.as_str().into(),
            alpha: lc.alpha,
            seeds: config.seeds.len(),
            mean_final_regret: regret_curves.iter().map(|c| c[c.len() - 1]).sum::<f64>() / n,
            mean_final_violation: violation_curves.iter().map(|c| c[c.len() - 1]).sum::<f64>() / n,
            mean_curve_regret_exponent: exponent_or_none(&mean_r),
            mean_curve_violation_exponent: exponent_or_none(&mean_v),
        });
    }
    let manifest = Manifest {
        config: config.clone(),
        instance_hash: inst.content_hash(),
        opt: base.opt_value,
        runs,
        learners,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let path = dir.join("manifest.json");
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").and_then(|_| f.flush()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
