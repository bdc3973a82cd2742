//! Tabular Q-learning for the repeated, discretized Cournot duopoly.
//!
//! Two agents play simultaneously. The shared state is the last `k` joint
//! actions (a single state when `k = 0`). Each period both agents pick an
//! action epsilon-greedily with `eps_t = exp(-beta * t)`, earn their profit and
//! update
//!
//! ```text
//! Q(s, a) <- (1 - alpha) Q(s, a) + alpha (reward + delta * max_a' Q(s', a'))
//! ```
//!
//! An episode has converged once no agent's greedy action changed in any
//! state for `convergence_window` consecutive periods.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, Outcome};

pub const N_AGENTS: usize = 2;
pub const DEFAULT_DELTA: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_CONVERGENCE_WINDOW: u64 = 100_000;
pub const DEFAULT_POST_ROUNDS: usize = 1_000;
pub const DEFAULT_MAX_PERIODS: u64 = 50_000_000;

/// The default action grid `{0, 3, ..., 45}`.
pub fn default_grid() -> Vec<f64> {
    (0..16).map(|i| 3.0 * i as f64).collect()
}

pub fn epsilon(t: u64, beta: f64) -> f64 {
    (-beta * t as f64).exp()
}

/// Expected number of purely random visits per Q-matrix cell implied by `beta`.
pub fn nu_from_beta(beta: f64, m: usize, n: usize, k: usize) -> f64 {
    let (m, n, k) = (m as f64, n as f64, k as f64);
    (m - 1.0).powf(n) / (m.powf(k * n + n + 1.0) * (1.0 - (-beta * (n + 1.0)).exp()))
}

/// Inverse of [`nu_from_beta`].
pub fn beta_from_nu(nu: f64, m: usize, n: usize, k: usize) -> Result<f64> {
    let (mf, nf, kf) = (m as f64, n as f64, k as f64);
    let arg = (mf - 1.0).powf(nf) / (nu * mf.powf(kf * nf + nf + 1.0));
    if !(nu > 0.0) || !(arg > 0.0 && arg < 1.0) {
        return Err(Error::InfeasibleNu { nu, arg });
    }
    Ok(-(-arg).ln_1p() / (nf + 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// Memory length.
    pub k: usize,
    pub grid: Vec<f64>,
    pub q_init_low: f64,
    pub q_init_high: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        let grid = default_grid();
        let beta = beta_from_nu(21.0, grid.len(), N_AGENTS, 1).expect("nu = 21 is feasible");
        Self {
            alpha: DEFAULT_ALPHA,
            beta,
            delta: DEFAULT_DELTA,
            k: 1,
            grid,
            q_init_low: 0.0,
            q_init_high: 1e-7,
        }
    }
}

impl LearnerConfig {
    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::new(self.m(), self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} not in (0, 1)", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta = {} not in (0, 1)", self.beta));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} not in [0, 1)", self.delta));
        }
        if self.k > 1 {
            return bad(format!("memory length k = {} not in {{0, 1}}", self.k));
        }
        if self.grid.len() < 2 || self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("action grid must be strictly increasing with at least 2 points".into());
        }
        if self.grid[0] < 0.0 {
            return bad("action grid must be non-negative".into());
        }
        if !(self.q_init_low <= self.q_init_high) {
            return bad("q_init_low > q_init_high".into());
        }
        Ok(())
    }
}

/// Encoding of the last `k` joint actions as a single state index.
///
/// The most recent joint action occupies the least significant base-`m`
/// digits, with agent `L` before agent `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    m: usize,
    k: usize,
    size: usize,
}

impl StateSpace {
    pub fn new(m: usize, k: usize) -> Self {
        let size = m.pow((N_AGENTS * k) as u32);
        Self { m, k, size }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn joint_index(&self, a: JointAction) -> usize {
        a.l * self.m + a.h
    }

    /// State after `a` is played in state `s`.
    #[inline]
    pub fn next(&self, s: usize, a: JointAction) -> usize {
        if self.k == 0 {
            0
        } else {
            (s * self.m * self.m + self.joint_index(a)) % self.size
        }
    }

    /// `history` is ordered oldest first and must hold exactly `k` entries.
    pub fn encode(&self, history: &[JointAction]) -> usize {
        debug_assert_eq!(history.len(), self.k);
        history.iter().fold(0, |s, &a| self.next(s, a))
    }

    pub fn decode(&self, mut s: usize) -> Vec<JointAction> {
        let mut out = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            let joint = s % (self.m * self.m);
            out.push(JointAction { l: joint / self.m, h: joint % self.m });
            s /= self.m * self.m;
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub l: usize,
    pub h: usize,
}

impl JointAction {
    pub fn get(&self, agent: usize) -> usize {
        if agent == 0 {
            self.l
        } else {
            self.h
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QMatrix {
    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self { n_states, n_actions, values: vec![value; n_states * n_actions] }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Malformed(format!(
                "Q-matrix of {} values does not match {n_states} x {n_actions}",
                values.len()
            )));
        }
        Ok(Self { n_states, n_actions, values })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    /// Greedy action in `s`; ties go to the lowest index.
    #[inline]
    pub fn argmax(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    #[inline]
    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One learner: its Q-matrix plus a cache of the greedy action per state.
#[derive(Debug, Clone, PartialEq)]
pub struct QAgent {
    q: QMatrix,
    greedy: Vec<usize>,
    alpha: f64,
    delta: f64,
}

impl QAgent {
    pub fn new(q: QMatrix, alpha: f64, delta: f64) -> Self {
        let greedy = (0..q.n_states()).map(|s| q.argmax(s)).collect();
        Self { q, greedy, alpha, delta }
    }

    pub fn q(&self) -> &QMatrix {
        &self.q
    }

    pub fn into_q(self) -> QMatrix {
        self.q
    }

    #[inline]
    pub fn greedy(&self, s: usize) -> usize {
        self.greedy[s]
    }

    /// Epsilon-greedy choice; exploration draws uniformly over all actions,
    /// the greedy one included.
    #[inline]
    pub fn select_action<R: Rng>(&self, s: usize, eps: f64, rng: &mut R) -> usize {
        if rng.random::<f64>() < eps {
            rng.random_range(0..self.q.n_actions())
        } else {
            self.greedy[s]
        }
    }

    /// Applies one Q-learning step to cell `(s, a)`. Returns whether the greedy
    /// action of `s` changed.
    #[inline]
    pub fn update(&mut self, s: usize, a: usize, reward: f64, s_next: usize) -> bool {
        // the cached greedy cell holds the row maximum
        let continuation = self.q.get(s_next, self.greedy[s_next]);
        let target = reward + self.delta * continuation;
        let old = self.q.get(s, a);
        let new = (1.0 - self.alpha) * old + self.alpha * target;
        self.q.set(s, a, new);

        let current = self.greedy[s];
        let greedy = if a == current {
            if new >= old {
                current
            } else {
                self.q.argmax(s)
            }
        } else {
            let best = self.q.get(s, current);
            if new > best || (new == best && a < current) {
                a
            } else {
                current
            }
        };
        self.greedy[s] = greedy;
        greedy != current
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub max_periods: u64,
    pub convergence_window: u64,
    pub post_rounds: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_periods: DEFAULT_MAX_PERIODS,
            convergence_window: DEFAULT_CONVERGENCE_WINDOW,
            post_rounds: DEFAULT_POST_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub converged: bool,
    /// Periods simulated before convergence was declared (or the cap).
    pub periods: u64,
    pub final_q: [QMatrix; N_AGENTS],
    /// State in which learning stopped.
    pub end_state: usize,
    /// Average outcome over the greedy rounds played after convergence.
    pub post_play: Option<Outcome>,
    /// Greedy cycle reached from `end_state`; `cycle_state` is its first state.
    pub post_cycle: Vec<JointAction>,
    pub cycle_state: usize,
}

/// Per-joint-action rewards for both agents, indexed `l * m + h`.
#[derive(Debug, Clone)]
pub struct PayoffTable {
    m: usize,
    outcomes: Vec<Outcome>,
}

impl PayoffTable {
    pub fn new(params: &MarketParams, grid: &[f64]) -> Self {
        let m = grid.len();
        let mut outcomes = Vec::with_capacity(m * m);
        for &q_l in grid {
            for &q_h in grid {
                outcomes.push(Outcome::compute(params, q_l, q_h));
            }
        }
        Self { m, outcomes }
    }

    #[inline]
    pub fn outcome(&self, a: JointAction) -> &Outcome {
        &self.outcomes[a.l * self.m + a.h]
    }

    #[inline]
    pub fn rewards(&self, a: JointAction) -> [f64; N_AGENTS] {
        let o = self.outcome(a);
        [o.pi_l, o.pi_h]
    }
}

/// A single repeated-game simulation between two learners.
#[derive(Debug, Clone)]
pub struct Episode {
    cfg: LearnerConfig,
    space: StateSpace,
    payoffs: PayoffTable,
    agents: [QAgent; N_AGENTS],
    state: usize,
    rng: ChaCha8Rng,
}

impl Episode {
    /// Random initialization: Q entries i.i.d. uniform on
    /// `[q_init_low, q_init_high]`, then a uniformly drawn initial history.
    pub fn new(params: &MarketParams, cfg: &LearnerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = cfg.state_space();
        let m = cfg.m();
        let mut init = || {
            let values = (0..space.len() * m)
                .map(|_| {
                    if cfg.q_init_high > cfg.q_init_low {
                        rng.random_range(cfg.q_init_low..=cfg.q_init_high)
                    } else {
                        cfg.q_init_low
                    }
                })
                .collect();
            QMatrix::from_values(space.len(), m, values)
        };
        let matrices = [init()?, init()?];
        let history: Vec<JointAction> = (0..cfg.k)
            .map(|_| JointAction { l: rng.random_range(0..m), h: rng.random_range(0..m) })
            .collect();
        let state = space.encode(&history);
        Ok(Self::assemble(params, cfg, matrices, state, rng))
    }

    /// Starts from given Q-matrices and initial state.
    pub fn with_q_matrices(
        params: &MarketParams,
        cfg: &LearnerConfig,
        matrices: [QMatrix; N_AGENTS],
        state: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let space = cfg.state_space();
        for q in &matrices {
            if q.n_states() != space.len() || q.n_actions() != cfg.m() {
                return Err(Error::InvalidConfig("Q-matrix shape does not match config".into()));
            }
        }
        if state >= space.len() {
            return Err(Error::InvalidConfig(format!("state {state} out of range")));
        }
        Ok(Self::assemble(params, cfg, matrices, state, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn assemble(
        params: &MarketParams,
        cfg: &LearnerConfig,
        matrices: [QMatrix; N_AGENTS],
        state: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        let [q_l, q_h] = matrices;
        Self {
            cfg: cfg.clone(),
            space: cfg.state_space(),
            payoffs: PayoffTable::new(params, &cfg.grid),
            agents: [
                QAgent::new(q_l, cfg.alpha, cfg.delta),
                QAgent::new(q_h, cfg.alpha, cfg.delta),
            ],
            state,
            rng,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn agents(&self) -> &[QAgent; N_AGENTS] {
        &self.agents
    }

    /// Plays and learns for one period `t`. Returns whether any greedy action
    /// changed.
    #[inline]
    pub fn step(&mut self, t: u64) -> bool {
        let eps = epsilon(t, self.cfg.beta);
        let s = self.state;
        let a = JointAction {
            l: self.agents[0].select_action(s, eps, &mut self.rng),
            h: self.agents[1].select_action(s, eps, &mut self.rng),
        };
        let s_next = self.space.next(s, a);
        let rewards = self.payoffs.rewards(a);
        let changed_l = self.agents[0].update(s, a.l, rewards[0], s_next);
        let changed_h = self.agents[1].update(s, a.h, rewards[1], s_next);
        self.state = s_next;
        changed_l | changed_h
    }

    pub fn run(mut self, limits: &EpisodeLimits) -> Result<EpisodeResult> {
        if limits.max_periods < limits.convergence_window {
            return Err(Error::InvalidConfig(format!(
                "max_periods {} below convergence window {}",
                limits.max_periods, limits.convergence_window
            )));
        }
        let mut stable = 0u64;
        let mut t = 0u64;
        while t < limits.max_periods && stable < limits.convergence_window {
            if self.step(t) {
                stable = 0;
            } else {
                stable += 1;
            }
            t += 1;
        }
        let converged = stable >= limits.convergence_window;
        let end_state = self.state;
        let policy = GreedyPolicy::new(&self.space, &self.agents);
        let (post_cycle, cycle_state) = policy.cycle_from(end_state);
        let post_play =
            converged.then(|| policy.average_outcome(&self.payoffs, end_state, limits.post_rounds));
        let [a_l, a_h] = self.agents;
        Ok(EpisodeResult {
            converged,
            periods: t,
            final_q: [a_l.into_q(), a_h.into_q()],
            end_state,
            post_play,
            post_cycle,
            cycle_state,
        })
    }
}

pub fn run_episode(
    params: &MarketParams,
    cfg: &LearnerConfig,
    seed: u64,
    limits: &EpisodeLimits,
) -> Result<EpisodeResult> {
    Episode::new(params, cfg, seed)?.run(limits)
}

/// Deterministic greedy play from fixed Q-matrices. No learning happens.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    space: StateSpace,
    actions: Vec<JointAction>,
}

impl GreedyPolicy {
    pub fn new(space: &StateSpace, agents: &[QAgent; N_AGENTS]) -> Self {
        let actions = (0..space.len())
            .map(|s| JointAction { l: agents[0].greedy(s), h: agents[1].greedy(s) })
            .collect();
        Self { space: *space, actions }
    }

    pub fn from_matrices(space: &StateSpace, q: &[QMatrix; N_AGENTS]) -> Self {
        let actions = (0..space.len())
            .map(|s| JointAction { l: q[0].argmax(s), h: q[1].argmax(s) })
            .collect();
        Self { space: *space, actions }
    }

    #[inline]
    pub fn action(&self, s: usize) -> JointAction {
        self.actions[s]
    }

    #[inline]
    pub fn next_state(&self, s: usize, a: JointAction) -> usize {
        self.space.next(s, a)
    }

    /// Follows the greedy map from `start` until a state repeats. Returns the
    /// joint actions of the cycle and the cycle's first state.
    pub fn cycle_from(&self, start: usize) -> (Vec<JointAction>, usize) {
        let mut first_visit = vec![usize::MAX; self.space.len()];
        let mut path = Vec::new();
        let mut s = start;
        while first_visit[s] == usize::MAX {
            first_visit[s] = path.len();
            path.push(s);
            s = self.space.next(s, self.actions[s]);
        }
        let cycle = path[first_visit[s]..].iter().map(|&st| self.actions[st]).collect();
        (cycle, s)
    }

    pub fn average_outcome(&self, payoffs: &PayoffTable, start: usize, rounds: usize) -> Outcome {
        let mut sums = [0.0; 9];
        let mut s = start;
        for _ in 0..rounds {
            let a = self.actions[s];
            for (acc, v) in sums.iter_mut().zip(payoffs.outcome(a).fields()) {
                *acc += v;
            }
            s = self.space.next(s, a);
        }
        let n = rounds.max(1) as f64;
        Outcome::from_fields(sums.map(|v| v / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sym() -> MarketParams {
        MarketParams::new(91.0, 1.0, 19.0, 19.0, 45.0).unwrap()
    }

    #[test]
    fn epsilon_law() {
        assert_eq!(epsilon(0, 3.41e-6), 1.0);
        assert_relative_eq!(epsilon(1_000_000, 3.41e-6), (-3.41f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(epsilon(1_000_000, 3.41e-6), 0.033_05, max_relative = 1e-3);
        assert_eq!(epsilon(1, 1e6), 0.0);
    }

    #[test]
    fn beta_inversion() {
        let b21 = beta_from_nu(21.0, 16, 2, 1).unwrap();
        assert!((b21 - 3.41e-6).abs() < 0.01e-6, "{b21}");
        let b100 = beta_from_nu(100.0, 16, 2, 1).unwrap();
        assert!((b100 - 7.15e-7).abs() < 0.01e-7, "{b100}");
        for nu in [1.0, 21.0, 100.0] {
            let back = nu_from_beta(beta_from_nu(nu, 16, 2, 1).unwrap(), 16, 2, 1);
            assert_relative_eq!(back, nu, max_relative = 1e-9);
        }
        assert!(matches!(beta_from_nu(1e-9, 16, 2, 0), Err(Error::InfeasibleNu { .. })));
        assert!(beta_from_nu(0.0, 16, 2, 1).is_err());
    }

    #[test]
    fn update_arithmetic() {
        let mut agent = QAgent::new(QMatrix::filled(1, 4, 0.0), 0.15, 0.95);
        agent.update(0, 2, 100.0, 0);
        assert_eq!(agent.q().get(0, 2), 15.0);
        assert_eq!(agent.q().values().iter().filter(|&&v| v != 0.0).count(), 1);

        let mut q = QMatrix::filled(2, 3, 0.0);
        q.set(1, 0, 200.0);
        q.set(0, 1, 42.0);
        let mut frozen = QAgent::new(q.clone(), 0.0, 0.95);
        frozen.update(0, 1, 1e6, 1);
        assert_eq!(frozen.q(), &q);

        let mut overwrite = QAgent::new(q, 1.0, 0.95);
        overwrite.update(0, 1, 0.0, 1);
        assert_eq!(overwrite.q().get(0, 1), 190.0);
    }

    #[test]
    fn update_reports_greedy_change() {
        let mut agent = QAgent::new(QMatrix::filled(1, 3, 0.0), 0.5, 0.0);
        assert_eq!(agent.greedy(0), 0);
        assert!(agent.update(0, 2, 10.0, 0));
        assert_eq!(agent.greedy(0), 2);
        assert!(!agent.update(0, 1, 1.0, 0));
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q = QMatrix::filled(1, 16, 1.0);
        let tied = QAgent::new(q.clone(), 0.1, 0.9);
        assert_eq!(tied.select_action(0, 0.0, &mut rng), 0);
        q.set(0, 7, 2.0);
        let agent = QAgent::new(q, 0.1, 0.9);
        for _ in 0..100 {
            assert_eq!(agent.select_action(0, 0.0, &mut rng), 7);
        }
    }

    #[test]
    fn exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut q = QMatrix::filled(1, 16, 0.0);
        q.set(0, 3, 1.0);
        let agent = QAgent::new(q, 0.1, 0.9);
        let draws = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..draws {
            counts[agent.select_action(0, 1.0, &mut rng)] += 1;
        }
        let p = 1.0 / 16.0;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn state_encoding_round_trip() {
        let space = StateSpace::new(16, 1);
        assert_eq!(space.len(), 256);
        for s in 0..space.len() {
            assert_eq!(space.encode(&space.decode(s)), s);
        }
        let a = JointAction { l: 5, h: 9 };
        assert_eq!(space.next(123, a), 5 * 16 + 9);
        let memoryless = StateSpace::new(16, 0);
        assert_eq!(memoryless.len(), 1);
        assert_eq!(memoryless.next(0, a), 0);
        let two = StateSpace::new(3, 2);
        for s in 0..two.len() {
            assert_eq!(two.encode(&two.decode(s)), s);
        }
    }

    #[test]
    fn config_validation() {
        let ok = LearnerConfig::default();
        ok.validate().unwrap();
        assert_eq!(ok.m(), 16);
        assert_eq!(ok.grid[15], 45.0);
        for bad in [
            LearnerConfig { alpha: 0.0, ..ok.clone() },
            LearnerConfig { beta: 1.0, ..ok.clone() },
            LearnerConfig { k: 2, ..ok.clone() },
            LearnerConfig { delta: 1.0, ..ok.clone() },
            LearnerConfig { grid: vec![0.0, 3.0, 3.0], ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn episode_is_deterministic() {
        let cfg = LearnerConfig { k: 0, beta: 1e-3, ..LearnerConfig::default() };
        let limits = EpisodeLimits { max_periods: 200_000, convergence_window: 1_000, post_rounds: 50 };
        let a = run_episode(&sym(), &cfg, 99, &limits).unwrap();
        let b = run_episode(&sym(), &cfg, 99, &limits).unwrap();
        assert_eq!(a, b);
        let c = run_episode(&sym(), &cfg, 100, &limits).unwrap();
        assert_ne!(a.final_q, c.final_q);
    }

    #[test]
    fn forced_greedy_fixed_point() {
        // Agent L always plays index 8 and H index 4: one dominant cell per state.
        let cfg = LearnerConfig { beta: 0.9, ..LearnerConfig::default() };
        let space = cfg.state_space();
        let mut q_l = QMatrix::filled(space.len(), 16, 0.0);
        let mut q_h = QMatrix::filled(space.len(), 16, 0.0);
        for s in 0..space.len() {
            q_l.set(s, 8, 1e9);
            q_h.set(s, 4, 1e9);
        }
        let window = 1_000;
        let limits = EpisodeLimits { max_periods: 100_000, convergence_window: window, post_rounds: 10 };
        let res = Episode::with_q_matrices(&sym(), &cfg, [q_l, q_h], 0, 5)
            .unwrap()
            .run(&limits)
            .unwrap();
        assert!(res.converged);
        assert!(res.periods <= window + 50, "{}", res.periods);
        assert_eq!(res.post_cycle, vec![JointAction { l: 8, h: 4 }]);
        let post = res.post_play.unwrap();
        assert_eq!((post.q_l, post.q_h), (24.0, 12.0));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let cfg = LearnerConfig { beta: 1e-9, ..LearnerConfig::default() };
        let limits = EpisodeLimits { max_periods: 20_000, convergence_window: 10_000, post_rounds: 10 };
        let res = run_episode(&sym(), &cfg, 3, &limits).unwrap();
        assert!(!res.converged);
        assert_eq!(res.periods, 20_000);
        assert!(res.post_play.is_none());
        let too_short = EpisodeLimits { max_periods: 10, ..limits };
        assert!(run_episode(&sym(), &cfg, 3, &too_short).is_err());
    }

    #[test]
    fn initialization_is_uniform_on_init_interval() {
        let cfg = LearnerConfig::default();
        let ep = Episode::new(&sym(), &cfg, 11).unwrap();
        let mut values: Vec<f64> =
            ep.agents().iter().flat_map(|a| a.q().values().to_vec()).collect();
        assert!(values.iter().all(|&v| (0.0..=1e-7).contains(&v)));
        // Kolmogorov-Smirnov statistic against U[0, 1e-7].
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let d = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cdf = v / 1e-7;
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value ~ 1.63 / sqrt(n)
        assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn greedy_play_does_not_move_policy() {
        let cfg = LearnerConfig { k: 1, beta: 5e-4, ..LearnerConfig::default() };
        let limits = EpisodeLimits { max_periods: 2_000_000, convergence_window: 5_000, post_rounds: 1_000 };
        let res = run_episode(&sym(), &cfg, 21, &limits).unwrap();
        let space = cfg.state_space();
        let policy = GreedyPolicy::from_matrices(&space, &res.final_q);
        let before: Vec<_> = (0..space.len()).map(|s| policy.action(s)).collect();
        let payoffs = PayoffTable::new(&sym(), &cfg.grid);
        let _ = policy.average_outcome(&payoffs, res.end_state, 1_000);
        let after: Vec<_> = (0..space.len()).map(|s| policy.action(s)).collect();
        assert_eq!(before, after);
        // the cycle starts at cycle_state and returns to it
        let mut s = res.cycle_state;
        for a in &res.post_cycle {
            assert_eq!(policy.action(s), *a);
            s = policy.next_state(s, *a);
        }
        assert_eq!(s, res.cycle_state);
    }

    #[test]
    fn memoryless_rewards_depend_only_on_joint_action() {
        let params = sym();
        let grid = default_grid();
        let table = PayoffTable::new(&params, &grid);
        for l in 0..16 {
            for h in 0..16 {
                let o = crate::market::outcome_from_quantities(&params, grid[l], grid[h]).unwrap();
                assert_eq!(table.rewards(JointAction { l, h }), [o.pi_l, o.pi_h]);
            }
        }
    }
}
