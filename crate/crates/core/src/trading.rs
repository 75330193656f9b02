//! Q-learning over a replayed feature/return history.
//!
//! Row `t` of the environment holds the features observed on day `t` and the
//! return realized on day `t`. Acting at step `t` earns
//! `position_{t+1} * r_{t+1} - cost * [position changed]`, so the agent only
//! ever sees features dated at or before the step it acts on. The last row is
//! terminal; an episode over `T` rows takes `T - 1` actions.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::day::Day;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ReturnSeries};
use crate::seed::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Buy,
    Hold,
    Sell,
}

impl Action {
    /// Also the tie-break order for greedy selection.
    pub const ALL: [Action; 3] = [Action::Buy, Action::Hold, Action::Sell];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Flat,
    Long,
    Short,
}

impl Position {
    pub fn exposure(self) -> f64 {
        match self {
            Position::Flat => 0.0,
            Position::Long => 1.0,
            Position::Short => -1.0,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::Flat => "flat",
            Position::Long => "long",
            Position::Short => "short",
        })
    }
}

/// How `sell` is interpreted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionMode {
    /// `buy` opens a long, `sell` closes it. No shorting.
    #[default]
    LongOnly,
    /// `buy` goes long and `sell` goes short from any position.
    LongShort,
}

impl PositionMode {
    pub fn transition(self, from: Position, action: Action) -> Position {
        match (self, action) {
            (_, Action::Hold) => from,
            (_, Action::Buy) => Position::Long,
            (PositionMode::LongOnly, Action::Sell) => Position::Flat,
            (PositionMode::LongShort, Action::Sell) => Position::Short,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketEnv {
    dates: Vec<Day>,
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    returns: Vec<f64>,
    cost: f64,
    mode: PositionMode,
    episode_length: usize,
}

/// Builds an environment from features and returns sharing the same dates.
pub fn make_env(x: &FeatureMatrix, r: &ReturnSeries, cost: f64) -> Result<MarketEnv> {
    if x.dates() != r.dates() {
        return Err(Error::Misaligned("feature and return dates differ".into()));
    }
    if r.len() < 2 {
        return Err(Error::Misaligned(format!("need at least 2 steps, got {}", r.len())));
    }
    if !(cost >= 0.0 && cost.is_finite()) {
        return Err(Error::InvalidArgument(format!("transaction cost must be finite and non-negative, got {cost}")));
    }
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i)).collect();
    if rows.iter().flatten().chain(r.returns()).any(|v| !v.is_finite()) {
        return Err(Error::Misaligned("non-finite feature or return".into()));
    }
    Ok(MarketEnv {
        dates: r.dates().to_vec(),
        feature_names: x.names().to_vec(),
        rows,
        returns: r.returns().to_vec(),
        cost,
        mode: PositionMode::LongOnly,
        episode_length: r.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub t: usize,
    pub position: Position,
    pub observation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: AgentState,
    pub reward: f64,
    pub done: bool,
}

impl MarketEnv {
    pub fn with_mode(mut self, mode: PositionMode) -> Self {
        self.mode = mode;
        self
    }

    /// Restricts episodes to the first `rows` rows (at least 2).
    pub fn with_episode_length(mut self, rows: usize) -> Result<Self> {
        if rows < 2 || rows > self.returns.len() {
            return Err(Error::InvalidArgument(format!(
                "episode_length must be in 2..={}, got {rows}",
                self.returns.len()
            )));
        }
        self.episode_length = rows;
        Ok(self)
    }

    pub fn mode(&self) -> PositionMode {
        self.mode
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn dates(&self) -> &[Day] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    pub fn terminal_step(&self) -> usize {
        self.episode_length - 1
    }

    pub fn reset(&self) -> AgentState {
        AgentState { t: 0, position: Position::Flat, observation: self.rows[0].clone() }
    }

    pub fn step(&self, s: &AgentState, action: Action) -> Result<Transition> {
        if s.t >= self.terminal_step() {
            return Err(Error::EpisodeFinished(s.t));
        }
        let next = self.mode.transition(s.position, action);
        let t = s.t + 1;
        let changed = if next != s.position { self.cost } else { 0.0 };
        let reward = next.exposure() * self.returns[t] - changed;
        Ok(Transition {
            state: AgentState { t, position: next, observation: self.rows[t].clone() },
            reward,
            done: t == self.terminal_step(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QMode {
    Tabular,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QConfig {
    pub episodes: usize,
    pub alpha: f64,
    /// Step size in episode `e` is `alpha / (1 + alpha_decay * e)`.
    pub alpha_decay: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Exploration in episode `e` is `end + (start - end) * decay^e`.
    pub epsilon_decay: f64,
    pub mode: QMode,
    pub bins: usize,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            episodes: 500,
            alpha: 0.1,
            alpha_decay: 0.0,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.99,
            mode: QMode::Tabular,
            bins: 3,
            seed: 1,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.episodes == 0 {
            return bad("episodes must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || self.alpha_decay < 0.0 {
            return bad("alpha must be in (0, 1] and alpha_decay non-negative");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) || !unit.contains(&self.epsilon_decay) {
            return bad("epsilon schedule values must be in [0, 1]");
        }
        if self.bins == 0 {
            return bad("bins must be at least 1");
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        self.epsilon_end + (self.epsilon_start - self.epsilon_end) * self.epsilon_decay.powi(episode as i32)
    }

    pub fn step_size(&self, episode: usize) -> f64 {
        self.alpha / (1.0 + self.alpha_decay * episode as f64)
    }
}

/// Equal-width bins per feature over the training range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Discretizer {
    pub fn fit(rows: &[Vec<f64>], bins: usize) -> Discretizer {
        let d = rows.first().map_or(0, Vec::len);
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Discretizer { bins, lo, hi }
    }

    pub fn bin(&self, obs: &[f64]) -> Vec<usize> {
        obs.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.hi[j] - self.lo[j];
                if span <= 0.0 {
                    return 0;
                }
                let b = ((v - self.lo[j]) / span * self.bins as f64).floor();
                (b.max(0.0) as usize).min(self.bins - 1)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularEntry {
    pub observation: Vec<usize>,
    pub position: Position,
    pub values: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum QModel {
    Tabular {
        discretizer: Discretizer,
        /// Visited states only; unseen states have all-zero values.
        entries: Vec<TabularEntry>,
    },
    Linear {
        /// One weight vector per action, over `observation ++ position one-hot ++ [1]`.
        weights: [Vec<f64>; 3],
    },
}

type Table = BTreeMap<(Vec<usize>, Position), [f64; 3]>;

enum Learner {
    Tabular { disc: Discretizer, table: Table },
    Linear { weights: [Vec<f64>; 3] },
}

fn linear_features(obs: &[f64], position: Position) -> Vec<f64> {
    let mut phi = obs.to_vec();
    let mut onehot = [0.0; 3];
    onehot[position.index()] = 1.0;
    phi.extend_from_slice(&onehot);
    phi.push(1.0);
    phi
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Learner {
    fn values(&self, s: &AgentState) -> [f64; 3] {
        match self {
            Learner::Tabular { disc, table } => {
                table.get(&(disc.bin(&s.observation), s.position)).copied().unwrap_or([0.0; 3])
            }
            Learner::Linear { weights } => {
                let phi = linear_features(&s.observation, s.position);
                [dot(&weights[0], &phi), dot(&weights[1], &phi), dot(&weights[2], &phi)]
            }
        }
    }

    fn update(&mut self, s: &AgentState, a: Action, target: f64, alpha: f64) {
        match self {
            Learner::Tabular { disc, table } => {
                let q = table.entry((disc.bin(&s.observation), s.position)).or_insert([0.0; 3]);
                q[a.index()] += alpha * (target - q[a.index()]);
            }
            Learner::Linear { weights } => {
                let phi = linear_features(&s.observation, s.position);
                let w = &mut weights[a.index()];
                let err = target - dot(w, &phi);
                w.iter_mut().zip(&phi).for_each(|(wi, p)| *wi += alpha * err * p);
            }
        }
    }

    fn into_model(self) -> QModel {
        match self {
            Learner::Tabular { disc, table } => QModel::Tabular {
                discretizer: disc,
                entries: table
                    .into_iter()
                    .map(|((observation, position), values)| TabularEntry { observation, position, values })
                    .collect(),
            },
            Learner::Linear { weights } => QModel::Linear { weights },
        }
    }

    fn from_model(q: &QModel) -> Learner {
        match q {
            QModel::Tabular { discretizer, entries } => Learner::Tabular {
                disc: discretizer.clone(),
                table: entries.iter().map(|e| ((e.observation.clone(), e.position), e.values)).collect(),
            },
            QModel::Linear { weights } => Learner::Linear { weights: weights.clone() },
        }
    }
}

/// Index of the first maximum in `buy, hold, sell` order.
fn greedy(values: &[f64; 3]) -> Action {
    let mut best = 0;
    for i in 1..3 {
        if values[i] > values[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

impl QModel {
    pub fn values(&self, s: &AgentState) -> [f64; 3] {
        Learner::from_model(self).values(s)
    }

    pub fn greedy_action(&self, s: &AgentState) -> Action {
        greedy(&self.values(s))
    }

    pub fn is_finite(&self) -> bool {
        match self {
            QModel::Tabular { entries, .. } => entries.iter().all(|e| e.values.iter().all(|v| v.is_finite())),
            QModel::Linear { weights } => weights.iter().flatten().all(|v| v.is_finite()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub cum_return: Vec<f64>,
    pub trades: Vec<usize>,
    pub epsilon: Vec<f64>,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.cum_return.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum_return.is_empty()
    }

    /// Writes `episode,cum_return,trades,epsilon`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "cum_return", "trades", "epsilon"])?;
        for e in 0..self.len() {
            w.write_record([
                e.to_string(),
                self.cum_return[e].to_string(),
                self.trades[e].to_string(),
                self.epsilon[e].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains an epsilon-greedy Q-learner. Returns are summed, not compounded.
pub fn train_q(env: &MarketEnv, cfg: &QConfig) -> Result<(QModel, EpisodeLog)> {
    cfg.validate()?;
    let mut rng = rng_from(cfg.seed);
    let rows = &env.rows[..env.episode_length];
    let mut learner = match cfg.mode {
        QMode::Tabular => Learner::Tabular { disc: Discretizer::fit(rows, cfg.bins), table: Table::new() },
        QMode::Linear => {
            let d = env.feature_names.len() + 4;
            Learner::Linear { weights: [vec![0.0; d], vec![0.0; d], vec![0.0; d]] }
        }
    };
    let mut log = EpisodeLog::default();

    for e in 0..cfg.episodes {
        let eps = cfg.epsilon(e);
        let alpha = cfg.step_size(e);
        let mut s = env.reset();
        let mut total = 0.0;
        let mut trades = 0;
        loop {
            let explore = rng.random::<f64>() < eps;
            let a = if explore { Action::ALL[rng.random_range(0..3)] } else { greedy(&learner.values(&s)) };
            let tr = env.step(&s, a)?;
            let target = if tr.done {
                tr.reward
            } else {
                let next = learner.values(&tr.state);
                tr.reward + cfg.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            learner.update(&s, a, target, alpha);
            total += tr.reward;
            trades += usize::from(tr.state.position != s.position);
            s = tr.state;
            if tr.done {
                break;
            }
        }
        log.cum_return.push(total);
        log.trades.push(trades);
        log.epsilon.push(eps);
    }
    Ok((learner.into_model(), log))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cum_return: f64,
    pub trades: usize,
}

/// One greedy episode.
pub fn evaluate(env: &MarketEnv, q: &QModel) -> Result<Evaluation> {
    run_policy(env, |s| q.greedy_action(s))
}

/// Runs one episode under an arbitrary policy.
pub fn run_policy(env: &MarketEnv, mut policy: impl FnMut(&AgentState) -> Action) -> Result<Evaluation> {
    let mut s = env.reset();
    let mut ev = Evaluation { cum_return: 0.0, trades: 0 };
    loop {
        let tr = env.step(&s, policy(&s))?;
        ev.cum_return += tr.reward;
        ev.trades += usize::from(tr.state.position != s.position);
        s = tr.state;
        if tr.done {
            return Ok(ev);
        }
    }
}
