//! Pipeline configuration: one TOML file plus `--set key=value` overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};
use tweetfeat::corpus::{InputFormat, TokenizerConfig};
use tweetfeat::features::Normalization;
use tweetfeat::graph::EdgeKind;
use tweetfeat::models::{McmcConfig, PriorSpec};
use tweetfeat::trading::{PositionMode, QConfig, QMode};

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    pub thematic: ThematicSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub patterns: PatternSection,
    #[serde(default)]
    pub series: SeriesSection,
    #[serde(default)]
    pub lasso: LassoSection,
    #[serde(default)]
    pub bayes: BayesSection,
    #[serde(default)]
    pub qlearn: QlearnSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: InputFormat,
}

fn default_format() -> InputFormat {
    InputFormat::Jsonl
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThematicSection {
    pub terms: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub edge_kinds: BTreeSet<EdgeKind>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub walk_length: usize,
    /// Communities at or below this conductance go into the isolated subgraph.
    pub isolation_conductance: f64,
    pub isolation_min_size: usize,
    pub layout_width: f64,
    pub layout_height: f64,
    pub layout_iterations: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            edge_kinds: [EdgeKind::Mention, EdgeKind::Retweet].into(),
            damping: 0.85,
            tol: 1e-10,
            max_iter: 1000,
            walk_length: 4,
            isolation_conductance: 0.1,
            isolation_min_size: 3,
            layout_width: 1000.0,
            layout_height: 1000.0,
            layout_iterations: 300,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSection {
    pub min_support: f64,
    pub min_confidence: f64,
    pub row_groups: usize,
}

impl Default for PatternSection {
    fn default() -> Self {
        PatternSection { min_support: 0.01, min_confidence: 0.5, row_groups: 10 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    /// Keywords to count; the thematic terms when absent.
    pub keywords: Option<Vec<String>>,
    pub lags: BTreeSet<usize>,
    pub normalization: Normalization,
    pub price_csv: Option<PathBuf>,
    pub horizon: usize,
}

impl Default for SeriesSection {
    fn default() -> Self {
        SeriesSection {
            keywords: None,
            lags: [0, 1, 2].into(),
            normalization: Normalization::Zscore,
            price_csv: None,
            horizon: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSection {
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub folds: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoSection {
    fn default() -> Self {
        LassoSection { grid_size: 30, grid_ratio: 1e-3, folds: 5, tol: 1e-8, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesSection {
    pub prior: PriorSpec,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub adapt_window: usize,
}

impl Default for BayesSection {
    fn default() -> Self {
        let m = McmcConfig::default();
        BayesSection {
            prior: PriorSpec::default(),
            chains: m.chains,
            iterations: m.iterations,
            burn_in: m.burn_in,
            thin: m.thin,
            adapt_window: m.adapt_window,
        }
    }
}

impl BayesSection {
    pub fn mcmc(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            adapt_window: self.adapt_window,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlearnSection {
    pub episodes: usize,
    pub alpha: f64,
    pub alpha_decay: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    pub mode: QMode,
    pub bins: usize,
    pub cost: f64,
    pub position_mode: PositionMode,
    /// Feature columns the agent observes; all lag columns when absent.
    pub features: Option<Vec<String>>,
}

impl Default for QlearnSection {
    fn default() -> Self {
        let q = QConfig::default();
        QlearnSection {
            episodes: q.episodes,
            alpha: q.alpha,
            alpha_decay: q.alpha_decay,
            gamma: q.gamma,
            epsilon_start: q.epsilon_start,
            epsilon_end: q.epsilon_end,
            epsilon_decay: q.epsilon_decay,
            mode: q.mode,
            bins: q.bins,
            cost: 0.0,
            position_mode: PositionMode::LongOnly,
            features: None,
        }
    }
}

impl QlearnSection {
    pub fn q_config(&self, seed: u64) -> QConfig {
        QConfig {
            episodes: self.episodes,
            alpha: self.alpha,
            alpha_decay: self.alpha_decay,
            gamma: self.gamma,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay: self.epsilon_decay,
            mode: self.mode,
            bins: self.bins,
            seed,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("override key `{key}` is malformed")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    /// Reads the file, applies overrides in order, and resolves relative
    /// paths against the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<PipelineConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config `{}`: {e}", path.display())))?;
        let mut table: Table = text
            .parse()
            .map_err(|e| CliError::Validation(format!("config `{}`: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: PipelineConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.to_string().trim())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.corpus.path = base.join(&cfg.corpus.path);
        if let Some(p) = &cfg.series.price_csv {
            cfg.series.price_csv = Some(base.join(p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Validation(format!("{key}: {msg}")));
        if self.thematic.terms.is_empty() {
            return bad("thematic.terms", "must list at least one term".into());
        }
        if let Err(e) = self.tokenizer.validate() {
            return bad("tokenizer", e.to_string());
        }
        let g = &self.graph;
        if g.edge_kinds.is_empty() {
            return bad("graph.edge_kinds", "must not be empty".into());
        }
        if !(g.damping > 0.0 && g.damping < 1.0) {
            return bad("graph.damping", format!("must lie in (0, 1), got {}", g.damping));
        }
        if g.tol.is_nan() || g.tol <= 0.0 {
            return bad("graph.tol", "must be positive".into());
        }
        if g.walk_length == 0 {
            return bad("graph.walk_length", "must be at least 1".into());
        }
        if !(g.layout_width > 0.0 && g.layout_height > 0.0) {
            return bad("graph.layout_width", "layout frame must have positive size".into());
        }
        let p = &self.patterns;
        if !(p.min_support > 0.0 && p.min_support <= 1.0) {
            return bad("patterns.min_support", format!("must lie in (0, 1], got {}", p.min_support));
        }
        if !(p.min_confidence > 0.0 && p.min_confidence <= 1.0) {
            return bad("patterns.min_confidence", format!("must lie in (0, 1], got {}", p.min_confidence));
        }
        if p.row_groups == 0 {
            return bad("patterns.row_groups", "must be at least 1".into());
        }
        if self.series.lags.is_empty() {
            return bad("series.lags", "must list at least one lag".into());
        }
        let l = &self.lasso;
        if l.grid_size < 2 || !(l.grid_ratio > 0.0 && l.grid_ratio < 1.0) {
            return bad("lasso.grid_size", "grid needs at least 2 points and a ratio in (0, 1)".into());
        }
        if l.folds < 2 {
            return bad("lasso.folds", "must be at least 2".into());
        }
        if let Err(e) = self.bayes.prior.validate() {
            return bad("bayes.prior", e.to_string());
        }
        if let Err(e) = self.bayes.mcmc(self.seed).validate() {
            return bad("bayes", e.to_string());
        }
        if let Err(e) = self.qlearn.q_config(self.seed).validate() {
            return bad("qlearn", e.to_string());
        }
        if !(self.qlearn.cost >= 0.0 && self.qlearn.cost.is_finite()) {
            return bad("qlearn.cost", "must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn keywords(&self) -> &[String] {
        self.series.keywords.as_deref().unwrap_or(&self.thematic.terms)
    }

    pub fn require_corpus(&self) -> Result<&Path, CliError> {
        require_file("corpus.path", &self.corpus.path)
    }

    pub fn require_prices(&self) -> Result<&Path, CliError> {
        let p = self
            .series
            .price_csv
            .as_deref()
            .ok_or_else(|| CliError::Validation("series.price_csv: not set".into()))?;
        require_file("series.price_csv", p)
    }
}

fn require_file<'a>(key: &str, p: &'a Path) -> Result<&'a Path, CliError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Validation(format!("{key}: file `{}` does not exist", p.display())))
    }
}
