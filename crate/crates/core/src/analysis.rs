//! Goodness of fit between simulated and theoretical outcomes, one-shot
//! deviation tests on converged Q-matrices, and subsample diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentSummary, RunRecord, SetSummary};
use crate::market::{BenchmarkLabel, BenchmarkPoint, Firm, MarketParams, Outcome};
use crate::qlearning::{GreedyPolicy, JointAction, LearnerConfig, PayoffTable, QMatrix, N_AGENTS};

/// Periods simulated after the deviation period.
pub const DEVIATION_HORIZON: usize = 40;
/// Scale applied to normalized distances when reported.
pub const NORMALIZED_SCALE: f64 = 1000.0;
pub const SYMMETRIC_SET: &str = "sym";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeVar {
    Q,
    Cs,
    Ps,
    Ts,
}

impl OutcomeVar {
    pub const ALL: [OutcomeVar; 4] = [OutcomeVar::Q, OutcomeVar::Cs, OutcomeVar::Ps, OutcomeVar::Ts];

    pub fn of(self, o: &Outcome) -> f64 {
        match self {
            OutcomeVar::Q => o.q,
            OutcomeVar::Cs => o.cs,
            OutcomeVar::Ps => o.ps,
            OutcomeVar::Ts => o.ts,
        }
    }

    /// Column header: `Q`, `CS`, `PI` (total profit), `W` (total welfare).
    pub fn column(self) -> &'static str {
        match self {
            OutcomeVar::Q => "Q",
            OutcomeVar::Cs => "CS",
            OutcomeVar::Ps => "PI",
            OutcomeVar::Ts => "W",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub label: BenchmarkLabel,
    /// Average squared distance, indexed like [`OutcomeVar::ALL`].
    pub distance: [f64; 4],
    /// Average squared normalized distance, multiplied by [`NORMALIZED_SCALE`].
    pub normalized: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTable {
    pub rows: Vec<FitRow>,
}

impl FitTable {
    pub fn row(&self, label: BenchmarkLabel) -> Option<&FitRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn distance(&self, label: BenchmarkLabel, var: OutcomeVar) -> Option<f64> {
        self.row(label).map(|r| r.distance[var as usize])
    }

    pub fn normalized(&self, label: BenchmarkLabel, var: OutcomeVar) -> Option<f64> {
        self.row(label).map(|r| r.normalized[var as usize])
    }
}

/// `sim` maps set name to the simulated mean outcome, `benches` maps set
/// name to that set's benchmark suite. Both must cover the same sets,
/// including the symmetric reference set.
pub fn fit_distances_from_series(
    sim: &BTreeMap<String, Outcome>,
    benches: &BTreeMap<String, Vec<BenchmarkPoint>>,
) -> Result<FitTable> {
    if sim.is_empty() {
        return Err(Error::MissingInput("no simulated sets".into()));
    }
    if sim.keys().ne(benches.keys()) {
        return Err(Error::Malformed("simulation and benchmark sets differ".into()));
    }
    let reference = SYMMETRIC_SET.to_string();
    let sim_ref = sim
        .get(&reference)
        .ok_or_else(|| Error::MissingInput("symmetric set `sym`".into()))?;
    let n = sim.len() as f64;

    let lookup = |set: &str, label: BenchmarkLabel| -> Result<Outcome> {
        benches[set]
            .iter()
            .find(|b| b.label == label)
            .map(|b| b.outcome)
            .ok_or_else(|| Error::MissingInput(format!("benchmark {label} for set {set}")))
    };

    let mut rows = Vec::with_capacity(BenchmarkLabel::ALL.len());
    for label in BenchmarkLabel::ALL {
        let bench_ref = lookup(SYMMETRIC_SET, label)?;
        let mut distance = [0.0; 4];
        let mut normalized = [0.0; 4];
        for (i, var) in OutcomeVar::ALL.into_iter().enumerate() {
            let (s0, b0) = (var.of(sim_ref), var.of(&bench_ref));
            if s0 == 0.0 {
                return Err(Error::ZeroNormalization(format!("simulated {}", var.column())));
            }
            if b0 == 0.0 {
                return Err(Error::ZeroNormalization(format!("{label} {}", var.column())));
            }
            let mut raw = 0.0;
            let mut norm = 0.0;
            for (set, sim_outcome) in sim {
                let (s, b) = (var.of(sim_outcome), var.of(&lookup(set, label)?));
                raw += (s - b).powi(2);
                norm += (s / s0 - b / b0).powi(2);
            }
            distance[i] = raw / n;
            normalized[i] = norm / n * NORMALIZED_SCALE;
        }
        rows.push(FitRow { label, distance, normalized });
    }
    Ok(FitTable { rows })
}

/// Fit table over the valid sets of an experiment.
pub fn fit_distances(
    sim: &ExperimentSummary,
    benches: &BTreeMap<String, Vec<BenchmarkPoint>>,
) -> Result<FitTable> {
    let series = sim
        .sets
        .iter()
        .map(|s| {
            s.mean
                .map(|m| (s.name.clone(), m))
                .ok_or_else(|| Error::MissingInput(format!("no converged runs for {}", s.name)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    fit_distances_from_series(&series, benches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMethod {
    /// Static best response on the grid to the rival's prescribed action.
    BestResponse,
    /// Highest-Q action among those strictly above the agent's own
    /// prescribed action.
    QValue,
}

impl DeviationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviationMethod::BestResponse => "best_response",
            DeviationMethod::QValue => "qvalue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "best_response" => Some(DeviationMethod::BestResponse),
            "qvalue" => Some(DeviationMethod::QValue),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentDeviation {
    pub prescribed_action: usize,
    pub deviation_action: usize,
    pub deviation_payoff: f64,
    pub baseline_payoff: f64,
    pub profitable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationClass {
    Neither,
    OnlyL,
    OnlyH,
    Both,
}

impl DeviationClass {
    pub const ALL: [DeviationClass; 4] =
        [DeviationClass::Neither, DeviationClass::OnlyL, DeviationClass::OnlyH, DeviationClass::Both];

    pub fn from_flags(l: bool, h: bool) -> Self {
        match (l, h) {
            (false, false) => DeviationClass::Neither,
            (true, false) => DeviationClass::OnlyL,
            (false, true) => DeviationClass::OnlyH,
            (true, true) => DeviationClass::Both,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviationClass::Neither => "neither",
            DeviationClass::OnlyL => "only_L",
            DeviationClass::OnlyH => "only_H",
            DeviationClass::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationVerdict {
    pub anchor_state: usize,
    pub agents: [AgentDeviation; N_AGENTS],
    pub class: DeviationClass,
}

impl DeviationVerdict {
    pub fn any_profitable(&self) -> bool {
        self.class != DeviationClass::Neither
    }
}

fn discounted_path(
    policy: &GreedyPolicy,
    payoffs: &PayoffTable,
    start: usize,
    first: JointAction,
    agent: usize,
    delta: f64,
) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut s = start;
    let mut a = first;
    for t in 0..=DEVIATION_HORIZON {
        if t > 0 {
            a = policy.action(s);
        }
        total += weight * payoffs.rewards(a)[agent];
        weight *= delta;
        s = policy.next_state(s, a);
    }
    total
}

fn best_response_action(params: &MarketParams, grid: &[f64], firm: Firm, prescribed: usize, rival_q: f64) -> usize {
    let profit = |i: usize| params.profit(firm, grid[i], rival_q);
    let mut best = prescribed;
    for i in 0..grid.len() {
        if profit(i) > profit(best) {
            best = i;
        }
    }
    best
}

fn qvalue_action(q: &QMatrix, state: usize, prescribed: usize) -> usize {
    let row = q.row(state);
    let mut best: Option<usize> = None;
    for i in prescribed + 1..row.len() {
        if best.is_none_or(|b| row[i] > row[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or(prescribed)
}

/// One-shot deviation test from `anchor_state`: the deviating agent replaces
/// its prescribed action for one period, then both follow their greedy
/// policies for [`DEVIATION_HORIZON`] periods. Payoffs are discounted with
/// the learners' `delta` from the deviation period on and compared with the
/// undisturbed greedy path over the same horizon.
pub fn deviation_test(
    q: &[QMatrix; N_AGENTS],
    anchor_state: usize,
    params: &MarketParams,
    cfg: &LearnerConfig,
    method: DeviationMethod,
) -> Result<DeviationVerdict> {
    let space = cfg.state_space();
    if q.iter().any(|m| m.n_states() != space.len() || m.n_actions() != cfg.m()) {
        return Err(Error::Malformed("Q-matrix shape does not match config".into()));
    }
    if anchor_state >= space.len() {
        return Err(Error::Malformed(format!("anchor state {anchor_state} out of range")));
    }
    let policy = GreedyPolicy::from_matrices(&space, q);
    let payoffs = PayoffTable::new(params, &cfg.grid);
    let prescribed = policy.action(anchor_state);

    let agents = [Firm::L, Firm::H].map(|firm| {
        let i = firm.index();
        let own = prescribed.get(i);
        let rival = prescribed.get(1 - i);
        let deviation_action = match method {
            DeviationMethod::BestResponse => {
                best_response_action(params, &cfg.grid, firm, own, cfg.grid[rival])
            }
            DeviationMethod::QValue => qvalue_action(&q[i], anchor_state, own),
        };
        let mut deviated = prescribed;
        if i == 0 {
            deviated.l = deviation_action;
        } else {
            deviated.h = deviation_action;
        }
        let baseline_payoff = discounted_path(&policy, &payoffs, anchor_state, prescribed, i, cfg.delta);
        let deviation_payoff = if deviation_action == own {
            baseline_payoff
        } else {
            discounted_path(&policy, &payoffs, anchor_state, deviated, i, cfg.delta)
        };
        AgentDeviation {
            prescribed_action: own,
            deviation_action,
            deviation_payoff,
            baseline_payoff,
            profitable: deviation_payoff > baseline_payoff,
        }
    });
    let class = DeviationClass::from_flags(agents[0].profitable, agents[1].profitable);
    Ok(DeviationVerdict { anchor_state, agents, class })
}

fn record_q(run: &RunRecord) -> Result<&[QMatrix; N_AGENTS]> {
    run.q.as_ref().ok_or(Error::QMatricesUnavailable(run.run))
}

/// Deviation test anchored at the first state of the run's greedy cycle.
pub fn deviation_best_response(
    run: &RunRecord,
    params: &MarketParams,
    cfg: &LearnerConfig,
) -> Result<DeviationVerdict> {
    deviation_test(record_q(run)?, run.cycle_state, params, cfg, DeviationMethod::BestResponse)
}

pub fn deviation_qvalue(run: &RunRecord, params: &MarketParams, cfg: &LearnerConfig) -> Result<DeviationVerdict> {
    deviation_test(record_q(run)?, run.cycle_state, params, cfg, DeviationMethod::QValue)
}

/// Deviation verdicts for every converged run of a parameter set.
pub fn set_deviations<'a>(
    set: &'a SetSummary,
    cfg: &LearnerConfig,
    method: DeviationMethod,
) -> Result<Vec<(&'a RunRecord, DeviationVerdict)>> {
    set.records
        .iter()
        .filter(|r| r.converged)
        .map(|r| deviation_test(record_q(r)?, r.cycle_state, &set.params, cfg, method).map(|v| (r, v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviationShares {
    pub runs: usize,
    pub neither: f64,
    pub only_l: f64,
    pub only_h: f64,
    pub both: f64,
}

impl DeviationShares {
    pub fn from_classes<I: IntoIterator<Item = DeviationClass>>(classes: I) -> Self {
        let mut counts = [0usize; 4];
        for c in classes {
            counts[c as usize] += 1;
        }
        let runs: usize = counts.iter().sum();
        let share = |c: usize| if runs == 0 { 0.0 } else { c as f64 / runs as f64 };
        Self {
            runs,
            neither: share(counts[0]),
            only_l: share(counts[1]),
            only_h: share(counts[2]),
            both: share(counts[3]),
        }
    }

    pub fn get(&self, class: DeviationClass) -> f64 {
        match class {
            DeviationClass::Neither => self.neither,
            DeviationClass::OnlyL => self.only_l,
            DeviationClass::OnlyH => self.only_h,
            DeviationClass::Both => self.both,
        }
    }
}

/// Mean total quantity among runs where nobody profitably deviates and among
/// runs where at least one agent does. An empty group is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSplit {
    pub set: String,
    pub overall: Option<f64>,
    pub incentive_compatible: Option<f64>,
    pub n_incentive_compatible: usize,
    pub deviating: Option<f64>,
    pub n_deviating: usize,
}

/// `runs` pairs each converged record with its verdict; records without a
/// post-convergence outcome are skipped.
pub fn subsample_split<'a, I>(set: &str, runs: I) -> SubsampleSplit
where
    I: IntoIterator<Item = (&'a RunRecord, &'a DeviationVerdict)>,
{
    let (mut ic, mut dev) = (Vec::new(), Vec::new());
    for (record, verdict) in runs {
        if let Some(o) = record.post_play {
            if verdict.any_profitable() {
                dev.push(o.q);
            } else {
                ic.push(o.q);
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let all: Vec<f64> = ic.iter().chain(&dev).copied().collect();
    SubsampleSplit {
        set: set.to_string(),
        overall: mean(&all),
        incentive_compatible: mean(&ic),
        n_incentive_compatible: ic.len(),
        deviating: mean(&dev),
        n_deviating: dev.len(),
    }
}
