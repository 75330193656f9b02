//! Stages and the artifacts they write.
//!
//! Every stage recomputes what it needs from the configured inputs, so a
//! stage run on its own writes the same bytes as the same stage inside `all`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;
use tweetfeat::corpus::{parse_tweets, write_jsonl, ParseOutcome, ThematicField, TweetCollection};
use tweetfeat::features::{
    align, keyword_daily_counts, make_lag_matrix, normalize_series, price_returns, read_prices, write_series_csv,
    DailySeries, FeatureMatrix, ReturnSeries,
};
use tweetfeat::graph::{
    betweenness, build_user_graph, centrality_csv, conductance, fr_layout, hits, pagerank, to_dot, to_dot_labeled,
    CentralityRow, UserGraph, Walktrap,
};
use tweetfeat::models::{
    cv_lasso, fit_bayes, lambda_grid, posterior_summary, predict_linear, write_summary_csv, DEFAULT_QUANTILES,
};
use tweetfeat::patterns::{
    build_transactions, derive_rules, group_rules, keyword_frequencies, mine_frequent_itemsets, rules_to_dot,
    AssociationRule, GroupedMatrix, Itemset, TransactionDb,
};
use tweetfeat::seed::derive_seed;
use tweetfeat::trading::{evaluate, make_env, train_q};

use crate::config::PipelineConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Graph,
    Communities,
    Layout,
    Freq,
    Itemsets,
    Rules,
    Series,
    Returns,
    FitLasso,
    FitBayes,
    Qlearn,
}

impl Stage {
    /// Dependency order used by `all`.
    pub const ALL: [Stage; 12] = [
        Stage::Ingest,
        Stage::Graph,
        Stage::Communities,
        Stage::Layout,
        Stage::Freq,
        Stage::Itemsets,
        Stage::Rules,
        Stage::Series,
        Stage::Returns,
        Stage::FitLasso,
        Stage::FitBayes,
        Stage::Qlearn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Communities => "communities",
            Stage::Layout => "layout",
            Stage::Freq => "freq",
            Stage::Itemsets => "itemsets",
            Stage::Rules => "rules",
            Stage::Series => "series",
            Stage::Returns => "returns",
            Stage::FitLasso => "fit-lasso",
            Stage::FitBayes => "fit-bayes",
            Stage::Qlearn => "qlearn",
        }
    }
}

pub struct Pipeline<'a> {
    cfg: &'a PipelineConfig,
    corpus: Option<ParseOutcome>,
    graph: Option<UserGraph>,
    walktrap: Option<Walktrap>,
    db: Option<TransactionDb>,
    itemsets: Option<Vec<Itemset>>,
    rules: Option<Vec<AssociationRule>>,
    counts: Option<Vec<DailySeries>>,
    normalized: Option<Vec<DailySeries>>,
    prices: Option<DailySeries>,
    returns: Option<ReturnSeries>,
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Pipeline<'a> {
        Pipeline {
            cfg,
            corpus: None,
            graph: None,
            walktrap: None,
            db: None,
            itemsets: None,
            rules: None,
            counts: None,
            normalized: None,
            prices: None,
            returns: None,
        }
    }

    pub fn run(&mut self, stage: Stage) -> Result<(), CliError> {
        info!("stage {}", stage.name());
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Graph => self.graph_stage(),
            Stage::Communities => self.communities(),
            Stage::Layout => self.layout(),
            Stage::Freq => self.freq(),
            Stage::Itemsets => self.itemsets_stage(),
            Stage::Rules => self.rules_stage(),
            Stage::Series => self.series(),
            Stage::Returns => self.returns_stage(),
            Stage::FitLasso => self.fit_lasso(),
            Stage::FitBayes => self.fit_bayes(),
            Stage::Qlearn => self.qlearn(),
        }
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.cfg.output_dir)?;
        let path = self.cfg.output_dir.join(name);
        std::fs::write(&path, bytes)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn collection(&mut self) -> Result<&TweetCollection, CliError> {
        if self.corpus.is_none() {
            let path = self.cfg.require_corpus()?;
            let outcome = parse_tweets(File::open(path)?, self.cfg.corpus.format)?;
            if outcome.skipped > 0 {
                warn!("skipped {} malformed records in {}", outcome.skipped, path.display());
            }
            self.corpus = Some(outcome);
        }
        Ok(&self.corpus.as_ref().expect("just set").collection)
    }

    fn field(&self) -> Result<ThematicField, CliError> {
        ThematicField::new(&self.cfg.thematic.terms).map_err(|e| CliError::Validation(format!("thematic.terms: {e}")))
    }

    fn user_graph(&mut self) -> Result<&UserGraph, CliError> {
        if self.graph.is_none() {
            let kinds = self.cfg.graph.edge_kinds.clone();
            let g = build_user_graph(self.collection()?, &kinds)?;
            info!("user graph: {} vertices, {} edges", g.vertex_count(), g.edge_count());
            self.graph = Some(g);
        }
        Ok(self.graph.as_ref().expect("just set"))
    }

    fn communities_of(&mut self) -> Result<(&UserGraph, &Walktrap), CliError> {
        if self.walktrap.is_none() {
            let t = self.cfg.graph.walk_length;
            let wt = tweetfeat::graph::walktrap(self.user_graph()?, t)?;
            info!("walktrap: {} communities, modularity {}", wt.best.community_count(), wt.modularity);
            self.walktrap = Some(wt);
        }
        Ok((self.graph.as_ref().expect("set"), self.walktrap.as_ref().expect("set")))
    }

    fn transactions(&mut self) -> Result<&TransactionDb, CliError> {
        if self.db.is_none() {
            let field = self.field()?;
            let tok = self.cfg.tokenizer.clone();
            let db = build_transactions(self.collection()?, &field, &tok)?;
            self.db = Some(db);
        }
        Ok(self.db.as_ref().expect("just set"))
    }

    fn frequent(&mut self) -> Result<&[Itemset], CliError> {
        if self.itemsets.is_none() {
            let minsup = self.cfg.patterns.min_support;
            let sets = mine_frequent_itemsets(self.transactions()?, minsup)?;
            self.itemsets = Some(sets);
        }
        Ok(self.itemsets.as_deref().expect("just set"))
    }

    fn rules(&mut self) -> Result<&[AssociationRule], CliError> {
        if self.rules.is_none() {
            let sets = self.frequent()?.to_vec();
            let minconf = self.cfg.patterns.min_confidence;
            let rules = derive_rules(&sets, self.db.as_ref().expect("set by frequent"), minconf)?;
            self.rules = Some(rules);
        }
        Ok(self.rules.as_deref().expect("just set"))
    }

    fn keyword_counts(&mut self) -> Result<&[DailySeries], CliError> {
        if self.counts.is_none() {
            let kw = ThematicField::new(self.cfg.keywords())
                .map_err(|e| CliError::Validation(format!("series.keywords: {e}")))?;
            let tok = self.cfg.tokenizer.clone();
            let counts = keyword_daily_counts(self.collection()?, &kw, &tok);
            self.counts = Some(counts);
        }
        Ok(self.counts.as_deref().expect("just set"))
    }

    fn normalized(&mut self) -> Result<&[DailySeries], CliError> {
        if self.normalized.is_none() {
            let method = self.cfg.series.normalization;
            let norm = self
                .keyword_counts()?
                .iter()
                .map(|s| normalize_series(s, method))
                .collect::<Result<Vec<_>, _>>()?;
            self.normalized = Some(norm);
        }
        Ok(self.normalized.as_deref().expect("just set"))
    }

    fn price_series(&mut self) -> Result<(&DailySeries, &ReturnSeries), CliError> {
        if self.prices.is_none() {
            let path = self.cfg.require_prices()?;
            let prices = read_prices(File::open(path)?, "close")?;
            self.returns = Some(price_returns(&prices)?);
            self.prices = Some(prices);
        }
        Ok((self.prices.as_ref().expect("set"), self.returns.as_ref().expect("set")))
    }

    /// Lagged normalized keyword features paired with returns `horizon`
    /// trading days ahead.
    fn design(&mut self, horizon: usize) -> Result<(FeatureMatrix, ReturnSeries), CliError> {
        self.cfg.require_prices()?;
        let lags = self.cfg.series.lags.clone();
        let x = make_lag_matrix(self.normalized()?, &lags)?;
        let (_, r) = self.price_series()?;
        Ok(align(&x, r, horizon)?)
    }

    fn ingest(&mut self) -> Result<(), CliError> {
        let c = self.collection()?.clone();
        let skipped = self.corpus.as_ref().expect("set").skipped;
        let mut buf = Vec::new();
        write_jsonl(&c, &mut buf)?;
        self.write("tweets.jsonl", &buf)?;
        let (first, last) = c.date_range();
        let authors: BTreeSet<&str> = c.tweets().iter().map(|t| t.author.as_str()).collect();
        let summary = json!({
            "tweets": c.len(),
            "skipped": skipped,
            "authors": authors.len(),
            "first_day": first.to_string(),
            "last_day": last.to_string(),
        });
        self.write("ingest.json", &json_bytes(&summary)?)
    }

    fn graph_stage(&mut self) -> Result<(), CliError> {
        let gcfg = self.cfg.graph.clone();
        let (g, wt) = self.communities_of()?;
        let pr = pagerank(g, gcfg.damping, gcfg.tol, gcfg.max_iter);
        if !pr.converged {
            warn!("pagerank did not converge in {} iterations", pr.iterations);
        }
        let h = hits(g, gcfg.tol, gcfg.max_iter);
        if !h.converged {
            warn!("hits did not converge in {} iterations", h.iterations);
        }
        let b = betweenness(g);
        let rows: Vec<CentralityRow> = g
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, user)| CentralityRow {
                user: user.clone(),
                pagerank: pr.scores[i],
                hub: h.hub[i],
                authority: h.authority[i],
                betweenness: b[i],
                community: wt.best.community_of(i),
            })
            .collect();
        let dot = to_dot(g, Some(&wt.best), None);
        let mut buf = Vec::new();
        centrality_csv(&rows, &mut buf)?;
        self.write("centrality.csv", &buf)?;
        self.write("user_graph.dot", dot.as_bytes())
    }

    fn communities(&mut self) -> Result<(), CliError> {
        let gcfg = self.cfg.graph.clone();
        let (g, wt) = self.communities_of()?;
        let p = &wt.best;
        let cond = conductance(g, p);
        let members = p.members();
        let isolated: BTreeSet<usize> = (0..p.community_count())
            .filter(|&c| cond[c] <= gcfg.isolation_conductance && members[c].len() >= gcfg.isolation_min_size)
            .collect();

        let assignments = table(
            &["user", "community"],
            g.vertices().iter().enumerate().map(|(i, u)| vec![u.clone(), p.community_of(i).to_string()]),
        )?;
        let dendro = table(
            &["step", "a", "b", "new_id", "delta_sigma", "modularity"],
            wt.dendrogram.merges.iter().enumerate().map(|(i, m)| {
                vec![
                    (i + 1).to_string(),
                    m.a.to_string(),
                    m.b.to_string(),
                    m.new_id.to_string(),
                    m.delta_sigma.to_string(),
                    m.modularity.to_string(),
                ]
            }),
        )?;
        let summary = json!({
            "walk_length": gcfg.walk_length,
            "merges_at_best_cut": wt.dendrogram.best_cut(),
            "modularity": wt.modularity,
            "isolation_conductance": gcfg.isolation_conductance,
            "communities": (0..p.community_count()).map(|c| json!({
                "id": c,
                "size": members[c].len(),
                "conductance": cond[c],
                "isolated": isolated.contains(&c),
            })).collect::<Vec<_>>(),
        });
        let keep: BTreeSet<usize> = (0..g.vertex_count()).filter(|&v| isolated.contains(&p.community_of(v))).collect();
        let sub_dot = match g.subgraph(&keep) {
            Some(sub) => {
                let labels: Vec<usize> = sub
                    .vertices()
                    .iter()
                    .map(|u| p.community_of(g.index_of(u).expect("subgraph vertex")))
                    .collect();
                to_dot_labeled(&sub, Some(&labels), None)
            }
            None => "digraph users {\n}\n".to_string(),
        };
        info!("{} isolated communities", isolated.len());
        self.write("communities.csv", &assignments)?;
        self.write("dendrogram.csv", &dendro)?;
        self.write("communities.json", &json_bytes(&summary)?)?;
        self.write("isolated_subgraph.dot", sub_dot.as_bytes())
    }

    fn layout(&mut self) -> Result<(), CliError> {
        let gcfg = self.cfg.graph.clone();
        let seed = derive_seed(self.cfg.seed, "layout");
        let (g, wt) = self.communities_of()?;
        let l = fr_layout(g, gcfg.layout_width, gcfg.layout_height, gcfg.layout_iterations, seed)?;
        let coords = table(
            &["user", "x", "y", "community"],
            g.vertices().iter().enumerate().map(|(i, u)| {
                vec![u.clone(), l.coords[i].0.to_string(), l.coords[i].1.to_string(), wt.best.community_of(i).to_string()]
            }),
        )?;
        let dot = to_dot(g, Some(&wt.best), Some(&l));
        self.write("layout.csv", &coords)?;
        self.write("graph_layout.dot", dot.as_bytes())
    }

    fn freq(&mut self) -> Result<(), CliError> {
        let field = self.field()?;
        let counts = keyword_frequencies(self.transactions()?, Some(&field));
        let mut rows: Vec<(String, usize)> = counts.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let bytes = table(&["keyword", "count"], rows.into_iter().map(|(k, c)| vec![k, c.to_string()]))?;
        self.write("keyword_frequencies.csv", &bytes)
    }

    fn itemsets_stage(&mut self) -> Result<(), CliError> {
        let sets = self.frequent()?;
        info!("{} frequent itemsets", sets.len());
        let bytes = table(
            &["items", "support", "count"],
            sets.iter().map(|s| vec![s.items.join("|"), s.support.to_string(), s.count.to_string()]),
        )?;
        self.write("itemsets.csv", &bytes)
    }

    fn rules_stage(&mut self) -> Result<(), CliError> {
        let groups = self.cfg.patterns.row_groups;
        let rules = self.rules()?.to_vec();
        info!("{} association rules", rules.len());
        let bytes = table(
            &["antecedent", "consequent", "support", "confidence", "lift"],
            rules.iter().map(|r| {
                vec![
                    r.antecedent.join("|"),
                    r.consequent.join("|"),
                    r.support.to_string(),
                    r.confidence.to_string(),
                    r.lift.to_string(),
                ]
            }),
        )?;
        let matrix = if rules.is_empty() {
            GroupedMatrix { row_groups: vec![], columns: vec![], cells: vec![] }
        } else {
            let distinct: BTreeSet<&Vec<String>> = rules.iter().map(|r| &r.antecedent).collect();
            group_rules(&rules, groups.min(distinct.len()))?
        };
        self.write("rules.csv", &bytes)?;
        self.write("rules_graph.dot", rules_to_dot(&rules).as_bytes())?;
        self.write("grouped_matrix.json", &json_bytes(&matrix)?)
    }

    fn series(&mut self) -> Result<(), CliError> {
        let mut raw = Vec::new();
        write_series_csv(self.keyword_counts()?, &mut raw)?;
        let mut norm = Vec::new();
        write_series_csv(self.normalized()?, &mut norm)?;
        self.write("keyword_series.csv", &raw)?;
        self.write("keyword_series_normalized.csv", &norm)
    }

    fn returns_stage(&mut self) -> Result<(), CliError> {
        let (p, r) = self.price_series()?;
        let prices = table(
            &["date", "close"],
            p.days().iter().zip(p.values()).map(|(d, v)| vec![d.to_string(), v.to_string()]),
        )?;
        let returns = table(
            &["date", "return"],
            r.dates().iter().zip(r.returns()).map(|(d, v)| vec![d.to_string(), v.to_string()]),
        )?;
        self.write("prices.csv", &prices)?;
        self.write("returns.csv", &returns)
    }

    fn fit_lasso(&mut self) -> Result<(), CliError> {
        let l = self.cfg.lasso.clone();
        let (x, y) = self.design(self.cfg.series.horizon)?;
        info!("lasso design: {} rows, {} features", x.rows(), x.cols());
        let grid = lambda_grid(&x, &y, l.grid_size, l.grid_ratio)?;
        let cv = cv_lasso(&x, &y, &grid, l.folds, l.tol, l.max_iter)?;
        let m = &cv.model;
        if !m.converged {
            warn!("lasso refit did not converge in {} sweeps", m.iterations);
        }
        for (name, s) in m.features.iter().zip(&m.scales) {
            if s.sd == 0.0 {
                warn!("feature {name} has zero variance and was dropped");
            }
        }
        let pred = predict_linear(m, &x)?;
        let model = json!({
            "horizon": self.cfg.series.horizon,
            "lambda": m.lambda,
            "intercept": m.intercept,
            "features": m.features,
            "coefficients": m.coefficients,
            "standardized_coefficients": m.standardized_coefficients(),
            "converged": m.converged,
            "cv": cv.path,
        });
        let coefs = table(
            &["feature", "coefficient", "standardized"],
            m.features
                .iter()
                .zip(&m.coefficients)
                .zip(m.standardized_coefficients())
                .map(|((f, c), s)| vec![f.clone(), c.to_string(), s.to_string()]),
        )?;
        let preds = table(
            &["date", "actual", "predicted"],
            x.dates()
                .iter()
                .zip(y.returns())
                .zip(&pred)
                .map(|((d, a), p)| vec![d.to_string(), a.to_string(), p.to_string()]),
        )?;
        self.write("lasso_model.json", &json_bytes(&model)?)?;
        self.write("lasso_coefficients.csv", &coefs)?;
        self.write("lasso_predictions.csv", &preds)
    }

    fn fit_bayes(&mut self) -> Result<(), CliError> {
        let b = self.cfg.bayes.clone();
        let (x, y) = self.design(self.cfg.series.horizon)?;
        let mcmc = b.mcmc(derive_seed(self.cfg.seed, "bayes"));
        let s = fit_bayes(&x, &y, &b.prior, &mcmc)?;
        for name in &s.dropped {
            warn!("feature {name} has zero variance and was dropped");
        }
        let worst = s.rhat.iter().copied().fold(0.0f64, f64::max);
        if worst > 1.05 {
            warn!("max split-rhat {worst} exceeds 1.05");
        }
        let mut draws = Vec::new();
        s.write_csv(&mut draws)?;
        let rows = posterior_summary(&s, &DEFAULT_QUANTILES)?;
        let mut summary = Vec::new();
        write_summary_csv(&rows, &DEFAULT_QUANTILES, &mut summary)?;
        let diag = json!({
            "seed": s.seed,
            "chains": s.chains,
            "draws_per_chain": s.per_chain,
            "params": s.param_names.iter().enumerate().map(|(i, p)| json!({
                "name": p,
                "mean": rows[i].mean,
                "rhat": s.rhat[i],
                "ess": s.ess[i],
            })).collect::<Vec<_>>(),
            "chain_stats": s.chain_stats,
            "dropped": s.dropped,
        });
        self.write("posterior_draws.csv", &draws)?;
        self.write("posterior_summary.csv", &summary)?;
        self.write("bayes_diagnostics.json", &json_bytes(&diag)?)
    }

    fn qlearn(&mut self) -> Result<(), CliError> {
        let q = self.cfg.qlearn.clone();
        // Row t: features known on day t and the return realized on day t.
        let (x, r) = self.design(0)?;
        let x = match &q.features {
            None => x,
            Some(names) => select_columns(&x, names)?,
        };
        let env = make_env(&x, &r, q.cost)?.with_mode(q.position_mode);
        let hp = q.q_config(derive_seed(self.cfg.seed, "qlearn"));
        let (model, log) = train_q(&env, &hp)?;
        let greedy = evaluate(&env, &model)?;
        let hold: f64 = r.returns()[1..].iter().sum();
        info!("greedy return {} over {} steps (buy and hold {hold})", greedy.cum_return, env.terminal_step());
        let mut episodes = Vec::new();
        log.write_csv(&mut episodes)?;
        let eval = json!({
            "episodes": hp.episodes,
            "steps": env.terminal_step(),
            "features": env.feature_names(),
            "greedy_return": greedy.cum_return,
            "greedy_trades": greedy.trades,
            "buy_and_hold_return": hold,
            "first_day": env.dates()[0].to_string(),
            "last_day": env.dates()[env.dates().len() - 1].to_string(),
        });
        self.write("episode_log.csv", &episodes)?;
        self.write("q_model.json", &json_bytes(&model)?)?;
        self.write("qlearn_eval.json", &json_bytes(&eval)?)
    }
}

fn select_columns(x: &FeatureMatrix, names: &[String]) -> Result<FeatureMatrix, CliError> {
    let mut cols = Vec::new();
    for n in names {
        let c = x
            .column(n)
            .ok_or_else(|| CliError::Validation(format!("qlearn.features: unknown feature column `{n}`")))?;
        cols.push(c.to_vec());
    }
    Ok(FeatureMatrix::new(x.dates().to_vec(), names.to_vec(), cols)?)
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    artifacts: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Rewrites `manifest.json` from the files currently in the output directory.
pub fn write_manifest(dir: &Path, seed: u64) -> Result<PathBuf, CliError> {
    use sha2::{Digest, Sha256};
    std::fs::create_dir_all(dir)?;
    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name != MANIFEST {
            files.insert(name, entry.path());
        }
    }
    let mut artifacts = Vec::new();
    for (name, path) in files {
        let bytes = std::fs::read(&path)?;
        artifacts.push(ManifestEntry {
            path: name,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest { tool: "tweetfeat", version: env!("CARGO_PKG_VERSION"), seed, artifacts };
    let out = dir.join(MANIFEST);
    std::fs::write(&out, json_bytes(&manifest)?)?;
    Ok(out)
}
