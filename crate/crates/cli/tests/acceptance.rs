//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tweetfeat::features::{FeatureMatrix, ReturnSeries};
use tweetfeat::graph::{betweenness, hits, modularity, pagerank, walktrap, Partition, UserGraph};
use tweetfeat::models::diagnostics::effective_sample_size;
use tweetfeat::models::{
    fit_bayes, fit_lasso, lambda_max, CoefPrior, Likelihood, McmcConfig, PosteriorSamples, PriorSpec, SigmaPrior,
};
use tweetfeat::patterns::{derive_rules, mine_frequent_itemsets, TransactionDb};
use tweetfeat::trading::{evaluate, make_env, train_q, Action, MarketEnv, Position, PositionMode, QConfig, QMode, QModel};
use tweetfeat::Day;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn series_dates(n: usize) -> Vec<Day> {
    (0..n as i64).map(Day).collect()
}

// 1. Itemsets and rules against subset enumeration.

fn random_db(rng: &mut ChaCha8Rng) -> TransactionDb {
    let items = rng.random_range(1..=12u32);
    let rows = rng.random_range(1..=30);
    let txs: Vec<Vec<String>> = (0..rows)
        .map(|_| {
            let len = rng.random_range(1..=items.min(6));
            (0..len).map(|_| format!("k{:02}", rng.random_range(0..items))).collect()
        })
        .collect();
    TransactionDb::new(txs)
}

fn subset_counts(db: &TransactionDb) -> BTreeMap<Vec<String>, usize> {
    let items = db.items();
    let txs: Vec<Vec<&str>> = db.transactions().collect();
    let mut out = BTreeMap::new();
    for mask in 1u32..(1 << items.len()) {
        let set: Vec<String> = (0..items.len()).filter(|i| mask >> i & 1 == 1).map(|i| items[i].clone()).collect();
        let c = txs.iter().filter(|t| set.iter().all(|s| t.contains(&s.as_str()))).count();
        if c > 0 {
            out.insert(set, c);
        }
    }
    out
}

fn itemset_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases = 200;
    let mut rule_total = 0;
    for case in 0..cases {
        let db = random_db(&mut rng);
        let minsup = rng.random_range(0.03..0.5);
        let minconf = rng.random_range(0.1..1.0);
        let n = db.len() as f64;
        let counts = subset_counts(&db);

        let expected: BTreeMap<&Vec<String>, usize> =
            counts.iter().filter(|(_, &c)| c as f64 / n >= minsup).map(|(s, &c)| (s, c)).collect();
        let mined = mine_frequent_itemsets(&db, minsup).map_err(|e| e.to_string())?;
        let got: BTreeMap<&Vec<String>, usize> = mined.iter().map(|s| (&s.items, s.count)).collect();
        ensure!(got == expected && got.len() == mined.len(), "case {case}: itemsets differ from enumeration");

        let mut want = BTreeMap::new();
        for (set, &c) in expected.iter().filter(|(s, _)| s.len() >= 2) {
            for mask in 1u32..(1 << set.len()) - 1 {
                let a: Vec<String> = (0..set.len()).filter(|i| mask >> i & 1 == 1).map(|i| set[i].clone()).collect();
                let b: Vec<String> = (0..set.len()).filter(|i| mask >> i & 1 == 0).map(|i| set[i].clone()).collect();
                let conf = c as f64 / counts[&a] as f64;
                if conf >= minconf {
                    let lift = conf / (counts[&b] as f64 / n);
                    want.insert((a, b), (c as f64 / n, conf, lift));
                }
            }
        }
        let rules = derive_rules(&mined, &db, minconf).map_err(|e| e.to_string())?;
        ensure!(rules.len() == want.len(), "case {case}: {} rules, enumeration has {}", rules.len(), want.len());
        for r in &rules {
            let Some(&(s, c, l)) = want.get(&(r.antecedent.clone(), r.consequent.clone())) else {
                return Err(format!("case {case}: unexpected rule {:?} -> {:?}", r.antecedent, r.consequent));
            };
            ensure!(
                (r.support - s).abs() <= 1e-12 && (r.confidence - c).abs() <= 1e-12 && (r.lift - l).abs() <= 1e-12,
                "case {case}: rule metrics off"
            );
        }
        rule_total += rules.len();
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{cases} random DBs, {rule_total} rules exact, {:.2}s", elapsed.as_secs_f64()))
}

// 2. Centrality against path enumeration and linear algebra.

fn brute_betweenness(g: &UserGraph) -> Vec<f64> {
    let n = g.vertex_count();
    let mut adj = vec![BTreeSet::new(); n];
    for ((u, v), _) in g.edges() {
        adj[u].insert(v);
        adj[v].insert(u);
    }
    fn walk(adj: &[BTreeSet<usize>], path: &mut Vec<usize>, target: usize, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == target {
            out.push(path.clone());
            return;
        }
        for &next in &adj[last] {
            if !path.contains(&next) {
                path.push(next);
                walk(adj, path, target, out);
                path.pop();
            }
        }
    }
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let mut paths = Vec::new();
            walk(&adj, &mut vec![s], t, &mut paths);
            let Some(shortest) = paths.iter().map(Vec::len).min() else { continue };
            let best: Vec<&Vec<usize>> = paths.iter().filter(|p| p.len() == shortest).collect();
            for (v, sv) in score.iter_mut().enumerate() {
                let through = best.iter().filter(|p| p[1..p.len() - 1].contains(&v)).count();
                *sv += through as f64 / best.len() as f64;
            }
        }
    }
    score
}

fn pagerank_exact(g: &UserGraph, d: f64) -> Vec<f64> {
    let n = g.vertex_count();
    let nf = n as f64;
    let mut out = vec![0.0; n];
    for ((u, _), w) in g.edges() {
        out[u] += w as f64;
    }
    let mut m = DMatrix::zeros(n, n);
    for ((u, v), w) in g.edges() {
        m[(v, u)] += w as f64 / out[u];
    }
    for u in (0..n).filter(|&u| out[u] == 0.0) {
        for v in 0..n {
            m[(v, u)] += 1.0 / nf;
        }
    }
    let a = DMatrix::identity(n, n) - m * d;
    let b = DVector::from_element(n, (1.0 - d) / nf);
    a.lu().solve(&b).expect("nonsingular").iter().copied().collect()
}

fn named_graph(edges: &[(&str, &str)]) -> UserGraph {
    UserGraph::from_edges(edges.iter().map(|&(a, b)| (a, b, 1u64))).expect("valid edges")
}

fn centrality_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cases = 150;
    for case in 0..cases {
        let n = rng.random_range(2..=8u32);
        let m = rng.random_range(1..=16);
        let mut edges: Vec<(String, String, u64)> = Vec::new();
        while edges.len() < m {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                edges.push((format!("v{a}"), format!("v{b}"), 1));
            }
        }
        let g = UserGraph::from_edges(edges).map_err(|e| e.to_string())?;
        let fast = betweenness(&g);
        let slow = brute_betweenness(&g);
        ensure!(fast.iter().zip(&slow).all(|(a, b)| (a - b).abs() < 1e-9), "case {case}: {fast:?} vs {slow:?}");
    }

    let star = named_graph(&[("a", "hub"), ("b", "hub"), ("c", "hub")]);
    let pr = pagerank(&star, 0.85, 1e-14, 10_000);
    let exact = pagerank_exact(&star, 0.85);
    let pr_err = pr.scores.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(pr_err < 1e-8, "star pagerank error {pr_err}");

    // a->c, b->c: hubs a,b share weight 1/sqrt2, c is the sole authority.
    let two_hub = named_graph(&[("a", "c"), ("b", "c")]);
    let h = hits(&two_hub, 1e-14, 1000);
    let r = 0.5f64.sqrt();
    let hub_err = h.hub.iter().zip([r, r, 0.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let auth_err = h.authority.iter().zip([0.0, 0.0, 1.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(hub_err < 1e-8 && auth_err < 1e-8, "hits error hub {hub_err} authority {auth_err}");
    Ok(format!("{cases} random graphs; star pagerank err {pr_err:.1e}; hits err {:.1e}", hub_err.max(auth_err)))
}

// 3. Walktrap and modularity.

fn direct_modularity(g: &UserGraph, labels: &[usize]) -> f64 {
    let n = g.vertex_count();
    let mut a = vec![vec![0.0; n]; n];
    for ((u, v), w) in g.edges() {
        a[u][v] += w as f64;
        a[v][u] += w as f64;
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn community_recovery() -> Check {
    let g = named_graph(&[("a", "b"), ("b", "c"), ("c", "a"), ("c", "d"), ("d", "e"), ("e", "f"), ("f", "d")]);
    let n = g.vertex_count();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for mask in 1..(1u32 << n) - 1 {
        let labels: Vec<usize> = (0..n).map(|i| (mask >> i & 1) as usize).collect();
        let q = direct_modularity(&g, &labels);
        if q > best.0 + 1e-12 {
            best = (q, labels);
        }
    }
    let wt = walktrap(&g, 4).map_err(|e| e.to_string())?;
    ensure!(wt.best.community_count() == 2, "{} communities", wt.best.community_count());
    let same = |a: &[usize], b: &[usize]| (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
    ensure!(same(wt.best.assignment(), &best.1), "walktrap split differs from the modularity optimum");
    ensure!((wt.modularity - best.0).abs() < 1e-12, "reported modularity {} vs {}", wt.modularity, best.0);

    let two = named_graph(&[("a", "b"), ("b", "c"), ("c", "a"), ("d", "e"), ("e", "f"), ("f", "d")]);
    let tri = named_graph(&[("a", "b"), ("b", "c"), ("c", "a")]);
    let fixtures = [
        (&two, Partition::single(6), 0.0),
        (&two, Partition::from_labels(&[0, 0, 0, 1, 1, 1]), 0.5),
        (&tri, Partition::from_labels(&[0, 1, 2]), -1.0 / 3.0),
    ];
    for (g, p, want) in &fixtures {
        let q = modularity(g, p);
        ensure!((q - want).abs() < 1e-12, "modularity {q} vs {want}");
        ensure!((q - direct_modularity(g, p.assignment())).abs() < 1e-12, "modularity {q} vs direct formula");
    }
    Ok(format!("bridged K3 pair split at Q = {:.6}; fixtures 0, 0.5, -1/3 exact", wt.modularity))
}

// 4. LASSO.

fn lasso_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (FeatureMatrix, ReturnSeries) {
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { rng.random_range(-1.5..1.5) } else { 0.0 }).collect();
    let y = (0..n)
        .map(|i| 0.3 + (0..p).map(|j| beta[j] * cols[j][i]).sum::<f64>() + rng.random_range(-0.5..0.5))
        .collect();
    let names = (0..p).map(|j| format!("x{j}")).collect();
    (
        FeatureMatrix::new(series_dates(n), names, cols).expect("valid matrix"),
        ReturnSeries::new(series_dates(n), y).expect("valid series"),
    )
}

fn standardize(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    col.iter().map(|v| (v - m) / sd).collect()
}

fn kkt_violation(x: &FeatureMatrix, y: &ReturnSeries, b: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let z: Vec<Vec<f64>> = x.columns().iter().map(|c| standardize(c)).collect();
    let ym = y.returns().iter().sum::<f64>() / n;
    let r: Vec<f64> =
        (0..y.len()).map(|i| y.returns()[i] - ym - z.iter().zip(b).map(|(c, bj)| c[i] * bj).sum::<f64>()).collect();
    let mut worst = 0.0f64;
    for (zj, &bj) in z.iter().zip(b) {
        let g = zj.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n;
        let v = if bj == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * bj.signum()).abs() };
        worst = worst.max(v);
    }
    worst
}

/// Columns 1..8 of the order-8 Sylvester Hadamard matrix: centered, mutually
/// orthogonal, unit population variance.
fn hadamard_design() -> Vec<Vec<f64>> {
    (1..8)
        .map(|j: u32| (0..8u32).map(|i| if (i & j).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 }).collect())
        .collect()
}

fn soft(z: f64, l: f64) -> f64 {
    z.signum() * (z.abs() - l).max(0.0)
}

fn lasso_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cases = 150;
    let mut worst_kkt = 0.0f64;
    for case in 0..cases {
        let n = rng.random_range(10..=50);
        let p = rng.random_range(1..=10);
        let (x, y) = lasso_problem(&mut rng, n, p);
        let top = lambda_max(&x, &y).map_err(|e| e.to_string())?;
        let lambda = rng.random_range(0.01..1.0) * top;
        let m = fit_lasso(&x, &y, lambda, 1e-12, 100_000).map_err(|e| e.to_string())?;
        let v = kkt_violation(&x, &y, &m.standardized_coefficients(), lambda);
        ensure!(v < 1e-6, "case {case}: KKT violation {v}");
        worst_kkt = worst_kkt.max(v);

        let above = top * rng.random_range(1.0..4.0);
        let z = fit_lasso(&x, &y, above, 1e-12, 100_000).map_err(|e| e.to_string())?;
        ensure!(z.coefficients.iter().all(|&b| b == 0.0), "case {case}: nonzero coefficient above lambda_max");
    }

    let cols = hadamard_design();
    let mut worst_soft = 0.0f64;
    for case in 0..50 {
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ym = y.iter().sum::<f64>() / 8.0;
        let names = (0..cols.len()).map(|j| format!("h{j}")).collect();
        let x = FeatureMatrix::new(series_dates(8), names, cols.clone()).expect("valid matrix");
        let ys = ReturnSeries::new(series_dates(8), y.clone()).expect("valid series");
        let lambda = rng.random_range(0.0..0.5);
        let m = fit_lasso(&x, &ys, lambda, 1e-15, 10_000).map_err(|e| e.to_string())?;
        for (j, col) in cols.iter().enumerate() {
            let b = col.iter().zip(&y).map(|(a, v)| a * (v - ym)).sum::<f64>() / 8.0;
            let err = (m.coefficients[j] - soft(b, lambda)).abs();
            ensure!(err < 1e-8, "orthonormal case {case}, column {j}: error {err}");
            worst_soft = worst_soft.max(err);
        }
    }
    Ok(format!(
        "{cases} random problems, max KKT violation {worst_kkt:.1e}; 50 orthonormal fits, max error {worst_soft:.1e}; zero above lambda_max"
    ))
}

// 5. Sampler against the conjugate posterior.

const SIGMA: f64 = 0.5;

fn mcse_gap(s: &PosteriorSamples, f: impl Fn(&[f64]) -> f64, target: f64) -> (f64, f64) {
    let per: Vec<Vec<f64>> = (0..s.chains)
        .map(|c| s.draws[c * s.per_chain..(c + 1) * s.per_chain].iter().map(|r| f(r)).collect())
        .collect();
    let refs: Vec<&[f64]> = per.iter().map(Vec::as_slice).collect();
    let all = per.concat();
    let m = all.iter().sum::<f64>() / all.len() as f64;
    let sd = (all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt();
    ((m - target).abs(), sd / effective_sample_size(&refs).sqrt())
}

fn sampler_calibration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 40;
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|i| 0.2 + 0.8 * x1[i] - 0.4 * x2[i] + SIGMA * rng.random_range(-1.7..1.7)).collect();
    let x = FeatureMatrix::new(series_dates(n), vec!["x1".into(), "x2".into()], vec![x1, x2]).expect("valid");
    let ys = ReturnSeries::new(series_dates(n), y).expect("valid");
    let prior = PriorSpec {
        coef: CoefPrior::Gaussian { scale: 1.0 },
        intercept_scale: 2.0,
        sigma: SigmaPrior::Fixed { value: SIGMA },
        likelihood: Likelihood::Gaussian,
        standardize: false,
    };

    let z = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { x.columns()[j - 1][i] });
    let prior_prec = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0, 1.0]));
    let cov = (z.transpose() * &z / (SIGMA * SIGMA) + prior_prec).try_inverse().expect("positive definite");
    let mu = &cov * z.transpose() * DVector::from_column_slice(ys.returns()) / (SIGMA * SIGMA);

    let cfg = McmcConfig { seed: 11, ..McmcConfig::default() };
    let start = Instant::now();
    let s = fit_bayes(&x, &ys, &prior, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(s.chains == 4 && s.per_chain == 5000, "{} chains x {} draws", s.chains, s.per_chain);
    let mut worst = 0.0f64;
    for i in 0..3 {
        let (err, mcse) = mcse_gap(&s, |r| r[i], mu[i]);
        ensure!(err <= 3.0 * mcse, "mean {}: |error| {err:.3e} > 3 MCSE {:.3e}", s.param_names[i], 3.0 * mcse);
        worst = worst.max(err / mcse);
        for j in i..3 {
            let (err, mcse) = mcse_gap(&s, |r| (r[i] - mu[i]) * (r[j] - mu[j]), cov[(i, j)]);
            ensure!(err <= 3.0 * mcse, "cov ({i},{j}): |error| {err:.3e} > 3 MCSE {:.3e}", 3.0 * mcse);
            worst = worst.max(err / mcse);
        }
    }
    let rhat = s.rhat.iter().copied().fold(0.0, f64::max);
    ensure!(rhat <= 1.05, "max split-rhat {rhat}");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "4 x 5000 draws, worst error {worst:.2} MCSE, max split-rhat {rhat:.4}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// 6. Q-learning.

fn q_env(features: Vec<f64>, returns: Vec<f64>, cost: f64, mode: PositionMode) -> MarketEnv {
    let n = returns.len();
    let x = FeatureMatrix::new(series_dates(n), vec!["f".into()], vec![features]).expect("valid");
    let r = ReturnSeries::new(series_dates(n), returns).expect("valid");
    make_env(&x, &r, cost).expect("aligned").with_mode(mode)
}

fn value_iteration(r: &[f64], cost: f64, gamma: f64, mode: PositionMode) -> Vec<[[f64; 3]; 3]> {
    let terminal = r.len() - 1;
    let exposure = |p: Position| match p {
        Position::Flat => 0.0,
        Position::Long => 1.0,
        Position::Short => -1.0,
    };
    let mut q = vec![[[0.0; 3]; 3]; terminal];
    for t in (0..terminal).rev() {
        for p in [Position::Flat, Position::Long, Position::Short] {
            for (ai, a) in Action::ALL.into_iter().enumerate() {
                let np = match (a, mode) {
                    (Action::Hold, _) => p,
                    (Action::Buy, _) => Position::Long,
                    (Action::Sell, PositionMode::LongOnly) => Position::Flat,
                    (Action::Sell, PositionMode::LongShort) => Position::Short,
                };
                let reward = exposure(np) * r[t + 1] - if np != p { cost } else { 0.0 };
                let future = if t + 1 == terminal { 0.0 } else { q[t + 1][np as usize].iter().copied().fold(f64::MIN, f64::max) };
                q[t][p as usize][ai] = reward + gamma * future;
            }
        }
    }
    q
}

fn sign_fixture(seed: u64, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let returns: Vec<f64> = (0..len)
        .map(|_| {
            let m = rng.random_range(0.002..0.03);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    let features = (0..len).map(|t| returns.get(t + 1).map_or(0.0, |r: &f64| r.signum())).collect();
    (features, returns)
}

fn q_learning_oracle() -> Check {
    let (f, r) = sign_fixture(42, 40);
    let e = q_env(f, r.clone(), 0.0, PositionMode::LongShort);
    let best: f64 = r[1..].iter().map(|v| v.abs()).sum();
    let cfg = |seed| QConfig {
        episodes: 500,
        alpha: 0.2,
        alpha_decay: 0.0,
        gamma: 0.0,
        epsilon_start: 1.0,
        epsilon_end: 0.05,
        epsilon_decay: 0.99,
        mode: QMode::Tabular,
        bins: 3,
        seed,
    };
    let mut total = 0.0;
    for seed in 0..10 {
        let (q, _) = train_q(&e, &cfg(seed)).map_err(|e| e.to_string())?;
        total += evaluate(&e, &q).map_err(|e| e.to_string())?.cum_return;
    }
    let mean = total / 10.0;
    ensure!(mean >= 0.95 * best, "seed-averaged greedy return {mean} < 0.95 * {best}");

    let long_only = q_env(e.feature_rows().iter().map(|r| r[0]).collect(), r.clone(), 0.0, PositionMode::LongOnly);
    let upside: f64 = r[1..].iter().map(|v| v.max(0.0)).sum();
    let lo = evaluate(&long_only, &train_q(&long_only, &cfg(0)).map_err(|e| e.to_string())?.0)
        .map_err(|e| e.to_string())?
        .cum_return;
    ensure!((lo - upside).abs() < 1e-12, "long-only greedy return {lo} vs positive-return sum {upside}");

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mdps = 40;
    let mut worst = 0.0f64;
    for case in 0..mdps {
        let len = rng.random_range(2..=6);
        let returns: Vec<f64> = (0..len).map(|_| rng.random_range(-0.05..0.05)).collect();
        let cost = rng.random_range(0.0..0.02);
        let gamma = rng.random_range(0.0..0.95);
        let mode = if case % 2 == 0 { PositionMode::LongOnly } else { PositionMode::LongShort };
        let env = q_env((0..len).map(|t| t as f64).collect(), returns.clone(), cost, mode);
        let cfg = QConfig {
            episodes: 6000,
            alpha: 1.0,
            alpha_decay: 0.0,
            gamma,
            epsilon_start: 1.0,
            epsilon_end: 1.0,
            epsilon_decay: 1.0,
            mode: QMode::Tabular,
            bins: len,
            seed: case,
        };
        let (model, _) = train_q(&env, &cfg).map_err(|e| e.to_string())?;
        let oracle = value_iteration(&returns, cost, gamma, mode);
        let QModel::Tabular { entries, .. } = &model else { return Err("expected a tabular model".into()) };
        for entry in entries {
            let t = entry.observation[0];
            for a in 0..3 {
                let err = (entry.values[a] - oracle[t][entry.position as usize][a]).abs();
                ensure!(err < 1e-6, "mdp {case}: t={t} {:?} action {a} error {err}", entry.position);
                worst = worst.max(err);
            }
        }
    }
    Ok(format!(
        "long/short greedy {mean:.5} >= 0.95 x {best:.5}; long-only {lo:.5} = upside sum; {mdps} MDPs (<= 5 steps) max TD error {worst:.1e}"
    ))
}

// 7 and 8. The command line on the bundled corpus.

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let config = workspace().join("data/config.toml");
    let status = Command::new(env!("CARGO_BIN_EXE_tweetfeat"))
        .arg("--config")
        .arg(&config)
        .arg("--set")
        .arg(format!("output_dir={:?}", out.display().to_string()))
        .args(args)
        .env("RUST_LOG", "warn")
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "`tweetfeat {}` exited with {status}", args.join(" "));
    Ok(())
}

fn files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

const STAGES: [&str; 12] = [
    "ingest", "graph", "communities", "layout", "freq", "itemsets", "rules", "series", "returns", "fit-lasso",
    "fit-bayes", "qlearn",
];

fn reproducibility(tmp: &Path) -> Check {
    let (a, b, c) = (tmp.join("run_a"), tmp.join("run_b"), tmp.join("staged"));
    run_cli(&["all"], &a)?;
    run_cli(&["all"], &b)?;
    for stage in STAGES {
        run_cli(&[stage], &c)?;
    }
    let (fa, fb, fc) = (files(&a)?, files(&b)?, files(&c)?);
    ensure!(fa.len() > 1, "no artifacts written");
    for (name, bytes) in &fa {
        ensure!(fb.get(name) == Some(bytes), "{name} differs between two `all` runs");
        ensure!(fc.get(name) == Some(bytes), "{name} differs between `all` and the staged subcommands");
    }
    ensure!(fa.len() == fb.len() && fa.len() == fc.len(), "artifact sets differ");

    let golden_path = workspace().join("data/golden_manifest.json");
    let golden = std::fs::read(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
    let got = &fa["manifest.json"];
    if got != &golden {
        let parse = |b: &[u8]| serde_json::from_slice::<Value>(b).unwrap_or(Value::Null);
        let (g, w) = (parse(got), parse(&golden));
        let hashes = |v: &Value| -> BTreeMap<String, String> {
            v["artifacts"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|a| (a["path"].as_str().unwrap_or("").to_string(), a["sha256"].as_str().unwrap_or("").to_string()))
                .collect()
        };
        let (hg, hw) = (hashes(&g), hashes(&w));
        let differing: Vec<&String> = hw.keys().filter(|k| hg.get(*k) != hw.get(*k)).collect();
        return Err(format!("manifest differs from the recorded golden manifest: {differing:?}"));
    }
    Ok(format!("{} artifacts identical across two runs, staged run and golden manifest", fa.len() - 1))
}

const REQUIRED: &[(&str, &str)] = &[
    ("tweets.jsonl", ""),
    ("ingest.json", ""),
    ("user_graph.dot", "digraph"),
    ("centrality.csv", "user,pagerank,hub,authority,betweenness,community"),
    ("communities.csv", "user,community"),
    ("dendrogram.csv", "step,a,b,new_id,delta_sigma,modularity"),
    ("communities.json", ""),
    ("isolated_subgraph.dot", "digraph"),
    ("layout.csv", "user,x,y,community"),
    ("graph_layout.dot", "digraph"),
    ("keyword_frequencies.csv", "keyword,count"),
    ("itemsets.csv", "items,support,count"),
    ("rules.csv", "antecedent,consequent,support,confidence,lift"),
    ("rules_graph.dot", "digraph"),
    ("grouped_matrix.json", ""),
    ("keyword_series.csv", "date,"),
    ("keyword_series_normalized.csv", "date,"),
    ("prices.csv", "date,close"),
    ("returns.csv", "date,return"),
    ("lasso_model.json", ""),
    ("lasso_coefficients.csv", "feature,coefficient,standardized"),
    ("lasso_predictions.csv", "date,actual,predicted"),
    ("posterior_draws.csv", "chain,draw,intercept,"),
    ("posterior_summary.csv", "param,q2.5,q25,q50,q75,q97.5,rhat"),
    ("bayes_diagnostics.json", ""),
    ("episode_log.csv", "episode,cum_return,trades,epsilon"),
    ("q_model.json", ""),
    ("qlearn_eval.json", ""),
];

fn completeness(tmp: &Path) -> Check {
    let dir = tmp.join("run_a");
    let fs = files(&dir)?;
    let manifest: Value = serde_json::from_slice(&fs["manifest.json"]).map_err(|e| e.to_string())?;
    ensure!(manifest["tool"] == "tweetfeat", "manifest tool field");
    ensure!(manifest["seed"].is_u64(), "manifest seed field");
    let entries = manifest["artifacts"].as_array().ok_or("manifest has no artifact list")?;
    let mut listed = BTreeMap::new();
    for e in entries {
        let path = e["path"].as_str().ok_or("artifact without path")?;
        let bytes = e["bytes"].as_u64().ok_or("artifact without size")?;
        let sha = e["sha256"].as_str().ok_or("artifact without hash")?;
        let data = fs.get(path).ok_or_else(|| format!("{path} listed but missing"))?;
        ensure!(data.len() as u64 == bytes, "{path}: size mismatch");
        ensure!(hex::encode(Sha256::digest(data)) == sha, "{path}: hash mismatch");
        listed.insert(path.to_string(), ());
    }
    ensure!(listed.len() + 1 == fs.len(), "manifest does not list every artifact");
    let paths: Vec<&String> = listed.keys().collect();
    ensure!(paths.windows(2).all(|w| w[0] < w[1]), "manifest not sorted by path");

    for (name, head) in REQUIRED {
        let data = fs.get(*name).ok_or_else(|| format!("missing {name}"))?;
        let text = std::str::from_utf8(data).map_err(|_| format!("{name} is not UTF-8"))?;
        ensure!(text.starts_with(head), "{name} does not start with `{head}`");
        if name.ends_with(".json") {
            serde_json::from_str::<Value>(text).map_err(|e| format!("{name}: {e}"))?;
        }
        ensure!(name.ends_with(".dot") || text.lines().count() >= 2, "{name} has no data rows");
    }
    let json = |name: &str| serde_json::from_slice::<Value>(&fs[name]).unwrap_or(Value::Null);
    ensure!(json("lasso_model.json")["cv"].as_array().is_some_and(|a| !a.is_empty()), "lasso CV table missing");
    ensure!(json("grouped_matrix.json")["cells"].is_array(), "grouped matrix cells missing");
    ensure!(json("communities.json")["communities"].is_array(), "community summary missing");
    ensure!(json("q_model.json")["mode"].is_string(), "Q model mode missing");
    Ok(format!("{} required artifacts present with expected headers; manifest sizes and hashes verified", REQUIRED.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("itemset oracle equivalence", Box::new(itemset_oracle)),
        ("centrality oracles", Box::new(centrality_oracles)),
        ("community recovery", Box::new(community_recovery)),
        ("lasso correctness", Box::new(lasso_correctness)),
        ("bayesian sampler calibration", Box::new(sampler_calibration)),
        ("q-learning oracle", Box::new(q_learning_oracle)),
        ("end-to-end reproducibility", Box::new(|| reproducibility(tmp.path()))),
        ("figure-analogue completeness", Box::new(|| completeness(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
