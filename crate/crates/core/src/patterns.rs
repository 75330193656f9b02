//! Frequent semantic itemsets and association rules.
//!
//! A transaction is the set of thematic-field terms found in one tweet.
//! Itemsets are mined level-wise (Apriori): frequent `k`-sets are joined on
//! their shared `k-1` prefix, candidates with an infrequent subset are pruned,
//! and the survivors are counted against the database.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::corpus::{filter_thematic, tokenize, ThematicField, TokenizerConfig, TweetCollection};
use crate::error::{Error, Result};

/// Non-empty item sets over a sorted vocabulary. Items are stored as indices
/// into `items`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransactionDb {
    items: Vec<String>,
    transactions: Vec<Vec<usize>>,
}

impl TransactionDb {
    /// Empty transactions are dropped.
    pub fn new<I, T, S>(transactions: I) -> TransactionDb
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sets: Vec<BTreeSet<String>> = transactions
            .into_iter()
            .map(|t| t.into_iter().map(Into::into).collect::<BTreeSet<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        let vocab: BTreeSet<&String> = sets.iter().flatten().collect();
        let items: Vec<String> = vocab.into_iter().cloned().collect();
        let transactions = sets
            .iter()
            .map(|s| s.iter().map(|i| items.binary_search(i).unwrap()).collect())
            .collect();
        TransactionDb { items, transactions }
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Transactions as sorted item lists.
    pub fn transactions(&self) -> impl Iterator<Item = Vec<&str>> + '_ {
        self.transactions.iter().map(|t| t.iter().map(|&i| self.items[i].as_str()).collect())
    }

    /// Number of transactions containing every item of `set` (item names).
    pub fn count<S: AsRef<str>>(&self, set: &[S]) -> usize {
        let idx: Option<Vec<usize>> =
            set.iter().map(|s| self.items.binary_search_by(|i| i.as_str().cmp(s.as_ref())).ok()).collect();
        match idx {
            Some(mut idx) => {
                idx.sort_unstable();
                self.transactions.iter().filter(|t| is_subset(&idx, t)).count()
            }
            None => 0,
        }
    }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}

pub fn build_transactions(
    collection: &TweetCollection,
    field: &ThematicField,
    cfg: &TokenizerConfig,
) -> Result<TransactionDb> {
    let db = TransactionDb::new(collection.tweets().iter().map(|t| filter_thematic(&tokenize(t, cfg), field)));
    if db.is_empty() {
        return Err(Error::NoTransactions);
    }
    Ok(db)
}

/// Number of transactions containing each term. Every field term is listed,
/// with zero for terms that never occur.
pub fn keyword_frequencies(db: &TransactionDb, field: Option<&ThematicField>) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    if let Some(f) = field {
        for k in f.keywords() {
            counts.insert(k.clone(), 0);
        }
    }
    for t in &db.transactions {
        for &i in t {
            *counts.entry(db.items[i].clone()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Itemset {
    pub items: Vec<String>,
    pub count: usize,
    pub support: f64,
}

fn support_of(count: usize, n: usize) -> f64 {
    count as f64 / n as f64
}

/// Every itemset with `count / n >= min_support`, ordered by size then items.
pub fn mine_frequent_itemsets(db: &TransactionDb, min_support: f64) -> Result<Vec<Itemset>> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(Error::InvalidArgument(format!("min_support {min_support} is outside (0, 1]")));
    }
    let n = db.len();
    if n == 0 {
        return Err(Error::NoTransactions);
    }
    let frequent = |count: usize| support_of(count, n) >= min_support;

    let mut singles = vec![0usize; db.items.len()];
    for t in &db.transactions {
        for &i in t {
            singles[i] += 1;
        }
    }
    let mut level: Vec<(Vec<usize>, usize)> = singles
        .iter()
        .enumerate()
        .filter(|&(_, &c)| frequent(c))
        .map(|(i, &c)| (vec![i], c))
        .collect();

    let mut all = Vec::new();
    while !level.is_empty() {
        let known: BTreeSet<&[usize]> = level.iter().map(|(s, _)| s.as_slice()).collect();
        let mut candidates = Vec::new();
        for (i, (a, _)) in level.iter().enumerate() {
            for (b, _) in &level[i + 1..] {
                let k = a.len();
                if a[..k - 1] != b[..k - 1] {
                    // Level is sorted, so no later set shares this prefix.
                    break;
                }
                let mut cand = a.clone();
                cand.push(b[k - 1]);
                let all_subsets_frequent = (0..cand.len()).all(|skip| {
                    let sub: Vec<usize> =
                        cand.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &x)| x).collect();
                    known.contains(sub.as_slice())
                });
                if all_subsets_frequent {
                    candidates.push(cand);
                }
            }
        }
        let mut counts = vec![0usize; candidates.len()];
        for t in &db.transactions {
            for (c, cand) in counts.iter_mut().zip(&candidates) {
                if is_subset(cand, t) {
                    *c += 1;
                }
            }
        }
        all.append(&mut level);
        level = candidates.into_iter().zip(counts).filter(|&(_, c)| frequent(c)).collect();
    }

    Ok(all
        .into_iter()
        .map(|(set, count)| Itemset {
            items: set.iter().map(|&i| db.items[i].clone()).collect(),
            count,
            support: support_of(count, n),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssociationRule {
    pub antecedent: Vec<String>,
    pub consequent: Vec<String>,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
}

/// All rules `A -> C` with `A ∪ C` frequent and confidence at least
/// `min_confidence`, sorted by descending lift, then antecedent, then
/// consequent.
pub fn derive_rules(itemsets: &[Itemset], db: &TransactionDb, min_confidence: f64) -> Result<Vec<AssociationRule>> {
    if !(min_confidence > 0.0 && min_confidence <= 1.0) {
        return Err(Error::InvalidArgument(format!("min_confidence {min_confidence} is outside (0, 1]")));
    }
    let n = db.len();
    let counts: HashMap<&[String], usize> = itemsets.iter().map(|s| (s.items.as_slice(), s.count)).collect();
    let count_of = |items: &[String]| counts.get(items).copied().unwrap_or_else(|| db.count(items));

    let mut rules = Vec::new();
    for set in itemsets.iter().filter(|s| s.items.len() >= 2) {
        let k = set.items.len();
        for mask in 1..(1u64 << k) - 1 {
            let (mut ante, mut cons) = (Vec::new(), Vec::new());
            for (j, item) in set.items.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    ante.push(item.clone());
                } else {
                    cons.push(item.clone());
                }
            }
            let support = support_of(set.count, n);
            let confidence = set.count as f64 / count_of(&ante) as f64;
            if confidence < min_confidence {
                continue;
            }
            let lift = confidence / support_of(count_of(&cons), n);
            rules.push(AssociationRule { antecedent: ante, consequent: cons, support, confidence, lift });
        }
    }
    rules.sort_by(|a, b| {
        b.lift
            .total_cmp(&a.lift)
            .then_with(|| a.antecedent.cmp(&b.antecedent))
            .then_with(|| a.consequent.cmp(&b.consequent))
    });
    Ok(rules)
}

/// Rules as a bipartite DOT graph: item vertices, one vertex per rule
/// (`rule<i>`, carrying its measures), antecedent items pointing into the rule
/// and the rule pointing at its consequent items.
pub fn rules_to_dot(rules: &[AssociationRule]) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
    let items: BTreeSet<&String> = rules.iter().flat_map(|r| r.antecedent.iter().chain(&r.consequent)).collect();
    let mut out = String::from("digraph rules {\n");
    for item in &items {
        out.push_str(&format!("  {} [shape=box];\n", quote(item)));
    }
    for (i, r) in rules.iter().enumerate() {
        out.push_str(&format!(
            "  rule{i} [shape=circle, label=\"\", support={}, confidence={}, lift={}];\n",
            r.support, r.confidence, r.lift
        ));
        for a in &r.antecedent {
            out.push_str(&format!("  {} -> rule{i};\n", quote(a)));
        }
        for c in &r.consequent {
            out.push_str(&format!("  rule{i} -> {};\n", quote(c)));
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowGroup {
    /// Items shared by most antecedents in the group, up to three.
    pub representative: Vec<String>,
    pub antecedents: Vec<Vec<String>>,
    pub rule_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub row: usize,
    pub column: usize,
    pub rule_count: usize,
    pub mean_lift: f64,
    pub max_support: f64,
}

/// Rules aggregated by antecedent cluster (rows) and consequent (columns).
/// Only non-empty cells are stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupedMatrix {
    pub row_groups: Vec<RowGroup>,
    pub columns: Vec<String>,
    pub cells: Vec<Cell>,
}

pub fn jaccard_distance(a: &[String], b: &[String]) -> f64 {
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    if union == 0.0 {
        0.0
    } else {
        1.0 - inter / union
    }
}

fn consequent_label(c: &[String]) -> String {
    c.join(",")
}

/// Clusters distinct antecedents into `k` groups by complete-linkage
/// agglomeration on Jaccard distance. Among equally distant pairs the one
/// whose cluster indices are lexicographically smallest merges first;
/// clusters are ordered by their smallest antecedent.
pub fn group_rules(rules: &[AssociationRule], k: usize) -> Result<GroupedMatrix> {
    if rules.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("grouping needs at least one rule and one group".into()));
    }
    let antecedents: Vec<Vec<String>> =
        rules.iter().map(|r| r.antecedent.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if k > antecedents.len() {
        return Err(Error::TooFewAntecedents { requested: k, available: antecedents.len() });
    }

    let m = antecedents.len();
    let dist: Vec<Vec<f64>> =
        (0..m).map(|i| (0..m).map(|j| jaccard_distance(&antecedents[i], &antecedents[j])).collect()).collect();
    let mut clusters: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let d = clusters[i]
                    .iter()
                    .flat_map(|&a| clusters[j].iter().map(move |&b| (a, b)))
                    .map(|(a, b)| dist[a][b])
                    .fold(0.0, f64::max);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two clusters");
        let moved = clusters.remove(j);
        clusters[i].extend(moved);
        clusters[i].sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);

    let mut group_of = vec![0; m];
    for (g, members) in clusters.iter().enumerate() {
        for &a in members {
            group_of[a] = g;
        }
    }
    let columns: Vec<String> =
        rules.iter().map(|r| consequent_label(&r.consequent)).collect::<BTreeSet<_>>().into_iter().collect();

    let mut acc: BTreeMap<(usize, usize), (usize, f64, f64)> = BTreeMap::new();
    let mut rule_counts = vec![0; clusters.len()];
    for r in rules {
        let row = group_of[antecedents.binary_search(&r.antecedent).unwrap()];
        let col = columns.binary_search(&consequent_label(&r.consequent)).unwrap();
        let e = acc.entry((row, col)).or_insert((0, 0.0, f64::NEG_INFINITY));
        e.0 += 1;
        e.1 += r.lift;
        e.2 = e.2.max(r.support);
        rule_counts[row] += 1;
    }

    let row_groups = clusters
        .iter()
        .zip(rule_counts)
        .map(|(members, rule_count)| {
            let mut freq: BTreeMap<&String, usize> = BTreeMap::new();
            for &a in members {
                for item in &antecedents[a] {
                    *freq.entry(item).or_insert(0) += 1;
                }
            }
            let mut ranked: Vec<(&String, usize)> = freq.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            RowGroup {
                representative: ranked.into_iter().take(3).map(|(s, _)| s.clone()).collect(),
                antecedents: members.iter().map(|&a| antecedents[a].clone()).collect(),
                rule_count,
            }
        })
        .collect();
    let cells = acc
        .into_iter()
        .map(|((row, column), (count, lift_sum, max_support))| Cell {
            row,
            column,
            rule_count: count,
            mean_lift: lift_sum / count as f64,
            max_support,
        })
        .collect();
    Ok(GroupedMatrix { row_groups, columns, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tweet;

    fn fixture() -> TransactionDb {
        TransactionDb::new(vec![vec!["a", "b", "c"], vec!["a", "b"], vec!["a", "c"], vec!["b", "c"]])
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn rule(a: &[&str], c: &[&str], lift: f64, support: f64) -> AssociationRule {
        AssociationRule { antecedent: s(a), consequent: s(c), support, confidence: 1.0, lift }
    }

    #[test]
    fn transactions_from_tweets() {
        let mk = |id: &str, text: &str| Tweet {
            id: id.into(),
            timestamp: 0,
            author: "u".into(),
            text: text.into(),
            mentions: vec![],
            hashtags: vec![],
            retweet_of: None,
        };
        let field = ThematicField::new(["tesla", "solar", "fire"]).unwrap();
        let c = TweetCollection::new(vec![mk("1", "tesla solar"), mk("2", "nothing here")]).unwrap();
        let db = build_transactions(&c, &field, &TokenizerConfig::default()).unwrap();
        assert_eq!(db.len(), 1);
        assert_eq!(db.transactions().next().unwrap(), vec!["solar", "tesla"]);
        let c = TweetCollection::new(vec![mk("1", "nope")]).unwrap();
        assert!(matches!(build_transactions(&c, &field, &TokenizerConfig::default()), Err(Error::NoTransactions)));
    }

    #[test]
    fn fixture_is_stored_as_given() {
        let db = fixture();
        assert_eq!(db.len(), 4);
        let tx: Vec<Vec<&str>> = db.transactions().collect();
        assert_eq!(tx, vec![vec!["a", "b", "c"], vec!["a", "b"], vec!["a", "c"], vec!["b", "c"]]);
    }

    #[test]
    fn frequencies() {
        let db = TransactionDb::new(vec![vec!["a"]]);
        let f = ThematicField::new(["a", "b"]).unwrap();
        assert_eq!(keyword_frequencies(&db, Some(&f)), BTreeMap::from([("a".into(), 1), ("b".into(), 0)]));
        let db = TransactionDb::new(vec![vec!["a", "b"], vec!["a"]]);
        assert_eq!(keyword_frequencies(&db, None), BTreeMap::from([("a".into(), 2), ("b".into(), 1)]));
        assert_eq!(
            keyword_frequencies(&fixture(), None),
            BTreeMap::from([("a".into(), 3), ("b".into(), 3), ("c".into(), 3)])
        );
    }

    #[test]
    fn itemsets_on_fixture() {
        let got = mine_frequent_itemsets(&fixture(), 0.5).unwrap();
        let summary: Vec<(String, f64)> = got.iter().map(|i| (i.items.join(""), i.support)).collect();
        assert_eq!(
            summary,
            vec![
                ("a".into(), 0.75),
                ("b".into(), 0.75),
                ("c".into(), 0.75),
                ("ab".into(), 0.5),
                ("ac".into(), 0.5),
                ("bc".into(), 0.5),
            ]
        );
        assert!(mine_frequent_itemsets(&fixture(), 1.0).unwrap().is_empty());
        let single = TransactionDb::new(vec![vec!["x"]]);
        let got = mine_frequent_itemsets(&single, 0.5).unwrap();
        assert_eq!((got[0].items.clone(), got[0].support), (s(&["x"]), 1.0));
        assert!(mine_frequent_itemsets(&single, 0.0).is_err());
    }

    #[test]
    fn rules_on_fixture() {
        let db = fixture();
        let sets = mine_frequent_itemsets(&db, 0.5).unwrap();
        let rules = derive_rules(&sets, &db, 0.6).unwrap();
        let ab = rules.iter().find(|r| r.antecedent == s(&["a"]) && r.consequent == s(&["b"])).unwrap();
        assert_eq!(ab.support, 0.5);
        assert!((ab.confidence - 2.0 / 3.0).abs() < 1e-15);
        assert!((ab.lift - 8.0 / 9.0).abs() < 1e-15);
        assert!(derive_rules(&sets, &db, 1.0).unwrap().is_empty());

        let db = TransactionDb::new(vec![vec!["a", "b"], vec!["a", "b"]]);
        let sets = mine_frequent_itemsets(&db, 0.5).unwrap();
        let rules = derive_rules(&sets, &db, 0.5).unwrap();
        assert_eq!(rules[0], AssociationRule {
            antecedent: s(&["a"]),
            consequent: s(&["b"]),
            support: 1.0,
            confidence: 1.0,
            lift: 1.0
        });
    }

    #[test]
    fn grouping_examples() {
        let one = vec![rule(&["a"], &["x"], 1.5, 0.2)];
        let m = group_rules(&one, 1).unwrap();
        assert_eq!(m.cells, vec![Cell { row: 0, column: 0, rule_count: 1, mean_lift: 1.5, max_support: 0.2 }]);

        let two = vec![rule(&["a"], &["x"], 1.0, 0.1), rule(&["a"], &["y"], 2.0, 0.1)];
        let m = group_rules(&two, 1).unwrap();
        assert_eq!(m.row_groups.len(), 1);
        assert_eq!(m.row_groups[0].representative, s(&["a"]));
        assert_eq!(m.columns, s(&["x", "y"]));

        let three = vec![
            rule(&["a", "b"], &["x"], 1.0, 0.1),
            rule(&["a", "c"], &["x"], 1.0, 0.1),
            rule(&["d"], &["y"], 1.0, 0.1),
        ];
        let m = group_rules(&three, 2).unwrap();
        assert_eq!(m.row_groups[0].antecedents, vec![s(&["a", "b"]), s(&["a", "c"])]);
        assert_eq!(m.row_groups[1].antecedents, vec![s(&["d"])]);
        assert!(matches!(group_rules(&three, 4), Err(Error::TooFewAntecedents { requested: 4, available: 3 })));
    }

    #[test]
    fn rules_dot_is_bipartite() {
        let rule = AssociationRule {
            antecedent: vec!["fire".into()],
            consequent: vec!["roof".into()],
            support: 0.5,
            confidence: 1.0,
            lift: 2.0,
        };
        let dot = rules_to_dot(&[rule]);
        assert!(dot.contains("\"fire\" -> rule0;"));
        assert!(dot.contains("rule0 -> \"roof\";"));
        assert!(dot.contains("lift=2"));
    }
}
