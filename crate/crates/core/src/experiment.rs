//! Batches of independent episodes across cost parameterizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, Outcome};
use crate::par::{self, Execution};
use crate::qlearning::{
    self, EpisodeLimits, JointAction, LearnerConfig, QMatrix, DEFAULT_CONVERGENCE_WINDOW,
    DEFAULT_MAX_PERIODS, DEFAULT_POST_ROUNDS, N_AGENTS,
};

pub const SET_NAMES: [&str; 7] = ["sym", "asym1", "asym2", "asym3", "asym4", "asym5", "asym6"];
pub const DEFAULT_RUNS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Constant Nash output: `c_L = 19 - 3j`, `c_H = 19 + 3j`.
    Main,
    /// Constant monopoly output: `c_L = 19`, `c_H = 19 + 3j`.
    Alt,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Main => "main",
            Family::Alt => "alt",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "main" => Some(Family::Main),
            "alt" => Some(Family::Alt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub name: String,
    pub params: MarketParams,
}

pub fn builtin_param_sets(family: Family) -> Vec<ParamSet> {
    SET_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let step = 3.0 * j as f64;
            let c_l = match family {
                Family::Main => 19.0 - step,
                Family::Alt => 19.0,
            };
            let params = MarketParams { a: 91.0, b: 1.0, c_l, c_h: 19.0 + step, q_max: 45.0 };
            ParamSet { name: (*name).to_string(), params }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// Expected random visits per Q-matrix cell.
    Nu(f64),
    Beta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub alpha: f64,
    pub exploration: Exploration,
    pub k: usize,
    pub delta: f64,
}

impl Default for Technology {
    fn default() -> Self {
        Self {
            alpha: qlearning::DEFAULT_ALPHA,
            exploration: Exploration::Nu(21.0),
            k: 1,
            delta: qlearning::DEFAULT_DELTA,
        }
    }
}

impl Technology {
    pub fn learner_config(&self) -> Result<LearnerConfig> {
        let grid = qlearning::default_grid();
        let beta = match self.exploration {
            Exploration::Beta(beta) => beta,
            Exploration::Nu(nu) => qlearning::beta_from_nu(nu, grid.len(), N_AGENTS, self.k)?,
        };
        let cfg = LearnerConfig {
            alpha: self.alpha,
            beta,
            delta: self.delta,
            k: self.k,
            grid,
            ..LearnerConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Option<Family>,
    pub param_sets: Vec<ParamSet>,
    pub technology: Technology,
    pub runs: usize,
    pub master_seed: u64,
    pub post_rounds: usize,
    pub convergence_window: u64,
    pub max_periods: u64,
    /// Keep final Q-matrices on each run record.
    pub keep_q: bool,
}

impl ExperimentSpec {
    pub fn new(family: Family, technology: Technology, runs: usize, master_seed: u64) -> Self {
        Self {
            family: Some(family),
            param_sets: builtin_param_sets(family),
            technology,
            runs,
            master_seed,
            post_rounds: DEFAULT_POST_ROUNDS,
            convergence_window: DEFAULT_CONVERGENCE_WINDOW,
            max_periods: DEFAULT_MAX_PERIODS,
            keep_q: true,
        }
    }

    pub fn limits(&self) -> EpisodeLimits {
        EpisodeLimits {
            max_periods: self.max_periods,
            convergence_window: self.convergence_window,
            post_rounds: self.post_rounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidExperiment("runs must be at least 1".into()));
        }
        if self.param_sets.is_empty() {
            return Err(Error::InvalidExperiment("no parameter sets".into()));
        }
        for set in &self.param_sets {
            set.params.validate()?;
        }
        if self.max_periods < self.convergence_window {
            return Err(Error::InvalidExperiment(
                "max_periods must be at least the convergence window".into(),
            ));
        }
        self.technology.learner_config().map(|_| ())
    }
}

/// Stable 64-bit seed for one run: FNV-1a over the inputs, then a SplitMix64
/// finalizer.
pub fn derive_seed(master_seed: u64, set_name: &str, run: usize) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let bytes = master_seed
        .to_le_bytes()
        .into_iter()
        .chain(set_name.bytes())
        .chain(std::iter::once(0xff))
        .chain((run as u64).to_le_bytes());
    let mut h = bytes.fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME));
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub set: String,
    pub run: usize,
    pub seed: u64,
    pub converged: bool,
    pub periods: u64,
    pub post_play: Option<Outcome>,
    pub end_state: usize,
    pub cycle_state: usize,
    pub cycle: Vec<JointAction>,
    pub q: Option<[QMatrix; N_AGENTS]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetSummary {
    pub name: String,
    pub params: MarketParams,
    pub runs: usize,
    pub converged: usize,
    /// Field-wise mean over converged runs; `None` when no run converged.
    pub mean: Option<Outcome>,
    pub sd: Option<Outcome>,
    pub mean_periods: Option<f64>,
    pub records: Vec<RunRecord>,
}

impl SetSummary {
    pub fn valid(&self) -> bool {
        self.converged > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub sets: Vec<SetSummary>,
}

impl ExperimentSummary {
    pub fn set(&self, name: &str) -> Option<&SetSummary> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn all_valid(&self) -> bool {
        self.sets.iter().all(SetSummary::valid)
    }
}

/// Mean and sample standard deviation of each outcome field.
pub fn outcome_moments(outcomes: &[Outcome]) -> Option<(Outcome, Outcome)> {
    if outcomes.is_empty() {
        return None;
    }
    let n = outcomes.len() as f64;
    let mut mean = [0.0; 9];
    for o in outcomes {
        for (m, v) in mean.iter_mut().zip(o.fields()) {
            *m += v;
        }
    }
    let mean = mean.map(|m| m / n);
    let mut var = [0.0; 9];
    for o in outcomes {
        for ((acc, v), m) in var.iter_mut().zip(o.fields()).zip(mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let denom = if outcomes.len() > 1 { n - 1.0 } else { 1.0 };
    let sd = var.map(|v| (v / denom).sqrt());
    Some((Outcome::from_fields(mean), Outcome::from_fields(sd)))
}

pub fn summarize_set(name: &str, params: MarketParams, records: Vec<RunRecord>) -> SetSummary {
    let converged: Vec<&RunRecord> = records.iter().filter(|r| r.converged).collect();
    let outcomes: Vec<Outcome> = converged.iter().filter_map(|r| r.post_play).collect();
    let moments = outcome_moments(&outcomes);
    let mean_periods = (!converged.is_empty()).then(|| {
        converged.iter().map(|r| r.periods as f64).sum::<f64>() / converged.len() as f64
    });
    SetSummary {
        name: name.to_string(),
        params,
        runs: records.len(),
        converged: converged.len(),
        mean: moments.map(|m| m.0),
        sd: moments.map(|m| m.1),
        mean_periods,
        records,
    }
}

pub fn run_one(spec: &ExperimentSpec, cfg: &LearnerConfig, set: &ParamSet, run: usize) -> Result<RunRecord> {
    let seed = derive_seed(spec.master_seed, &set.name, run);
    let res = qlearning::run_episode(&set.params, cfg, seed, &spec.limits())?;
    Ok(RunRecord {
        set: set.name.clone(),
        run,
        seed,
        converged: res.converged,
        periods: res.periods,
        post_play: res.post_play,
        end_state: res.end_state,
        cycle_state: res.cycle_state,
        cycle: res.post_cycle,
        q: spec.keep_q.then_some(res.final_q),
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    run_experiment_with(spec, Execution::Parallel)
}

/// Runs every (set, run) pair; the reduction is ordered by set then run
/// index, so serial and parallel execution give identical summaries.
pub fn run_experiment_with(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentSummary> {
    spec.validate()?;
    let cfg = spec.technology.learner_config()?;
    let total = spec.param_sets.len() * spec.runs;
    let records = par::map_indexed(total, exec, |i| {
        run_one(spec, &cfg, &spec.param_sets[i / spec.runs], i % spec.runs)
    });
    let mut records = records.into_iter();
    let mut sets = Vec::with_capacity(spec.param_sets.len());
    for set in &spec.param_sets {
        let chunk = records.by_ref().take(spec.runs).collect::<Result<Vec<_>>>()?;
        sets.push(summarize_set(&set.name, set.params, chunk));
    }
    Ok(ExperimentSummary { sets })
}
