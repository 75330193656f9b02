//! Community structure: Walktrap agglomeration, modularity, conductance.
//!
//! Walktrap measures how differently two vertices see the graph after a
//! random walk of `t` steps. With `P` the transition matrix of the
//! undirected weighted view and `d(k)` the weighted degree of `k`,
//!
//! ```text
//! r(C1, C2)^2 = sum_k (P^t[C1,k] - P^t[C2,k])^2 / d(k)
//! dsigma(C1, C2) = (1/n) * |C1||C2| / (|C1| + |C2|) * r(C1, C2)^2
//! ```
//!
//! where `P^t[C,.]` is the mean of the member rows. Starting from
//! singletons, the adjacent pair with the smallest `dsigma` is merged until
//! nothing adjacent is left. The modularity of every intermediate partition
//! is recorded and the best one is returned.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::UserGraph;
use crate::error::{Error, Result};

/// Community id per vertex, contiguous from 0 and numbered in order of each
/// community's first vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    assignment: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Relabels arbitrary ids into the canonical contiguous form.
    pub fn from_labels(labels: &[usize]) -> Partition {
        let mut map = BTreeMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = map.len();
            assignment.push(*map.entry(l).or_insert(next));
        }
        Partition { count: map.len(), assignment }
    }

    pub fn single(n: usize) -> Partition {
        Partition::from_labels(&vec![0; n])
    }

    pub fn community_of(&self, vertex: usize) -> usize {
        self.assignment[vertex]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub new_id: usize,
    pub delta_sigma: f64,
    /// Modularity of the partition right after this merge.
    pub modularity: f64,
}

/// Merge history. Leaves are vertices `0..n`; merge `i` creates id `n + i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
    /// Modularity of the all-singletons partition.
    pub initial_modularity: f64,
}

impl Dendrogram {
    /// Partition after applying the first `k` merges.
    pub fn cut(&self, k: usize) -> Partition {
        let mut parent: Vec<usize> = (0..self.leaves + k).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..k] {
            parent[m.a] = m.new_id;
            parent[m.b] = m.new_id;
        }
        let roots: Vec<usize> = (0..self.leaves).map(|v| find(&mut parent, v)).collect();
        Partition::from_labels(&roots)
    }

    /// Number of merges at the first modularity maximum.
    pub fn best_cut(&self) -> usize {
        let mut best = (0, self.initial_modularity);
        for (i, m) in self.merges.iter().enumerate() {
            if m.modularity > best.1 {
                best = (i + 1, m.modularity);
            }
        }
        best.0
    }
}

#[derive(Clone, Debug)]
pub struct Walktrap {
    pub dendrogram: Dendrogram,
    pub best: Partition,
    pub modularity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    delta: f64,
    lo: usize,
    hi: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.delta
            .total_cmp(&other.delta)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

struct Community {
    size: usize,
    probs: Vec<f64>,
    /// Neighbouring community -> total edge weight between the two.
    links: BTreeMap<usize, f64>,
    internal: f64,
    degree: f64,
}

fn delta_sigma(a: &Community, b: &Community, inv_degree: &[f64], n: f64) -> f64 {
    let r2: f64 = a
        .probs
        .iter()
        .zip(&b.probs)
        .zip(inv_degree)
        .map(|((p, q), inv)| (p - q) * (p - q) * inv)
        .sum();
    let (sa, sb) = (a.size as f64, b.size as f64);
    sa * sb / (sa + sb) * r2 / n
}

/// Walktrap community detection with walks of length `t`.
pub fn walktrap(g: &UserGraph, t: usize) -> Result<Walktrap> {
    if t == 0 {
        return Err(Error::InvalidArgument("walk length must be at least 1".into()));
    }
    let n = g.vertex_count();
    let adj = g.undirected_adjacency();
    let degree: Vec<f64> = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
    let inv_degree: Vec<f64> = degree.iter().map(|d| 1.0 / d).collect();
    let two_m: f64 = degree.iter().sum();
    let nf = n as f64;

    let mut comms: BTreeMap<usize, Community> = BTreeMap::new();
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        for _ in 0..t {
            let mut next = vec![0.0; n];
            for (k, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    for &(j, w) in &adj[k] {
                        next[j] += p * w * inv_degree[k];
                    }
                }
            }
            row = next;
        }
        comms.insert(
            i,
            Community {
                size: 1,
                probs: row,
                links: adj[i].iter().copied().collect(),
                internal: 0.0,
                degree: degree[i],
            },
        );
    }

    let mut queue = BTreeSet::new();
    let mut stored: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&i, ci) in &comms {
        for &j in ci.links.keys() {
            if i < j {
                let delta = delta_sigma(ci, &comms[&j], &inv_degree, nf);
                stored.insert((i, j), delta);
                queue.insert(Candidate { delta, lo: i, hi: j });
            }
        }
    }

    let modularity_of = |c: &Community| c.internal / (two_m / 2.0) - (c.degree / two_m).powi(2);
    let mut q: f64 = comms.values().map(modularity_of).sum();
    let initial_modularity = q;
    let mut merges = Vec::new();
    let mut next_id = n;

    while let Some(best) = queue.pop_first() {
        stored.remove(&(best.lo, best.hi));
        let a = comms.remove(&best.lo).expect("live community");
        let b = comms.remove(&best.hi).expect("live community");
        q -= modularity_of(&a) + modularity_of(&b);

        let between = a.links.get(&best.hi).copied().unwrap_or(0.0);
        let size = a.size + b.size;
        let (sa, sb, s) = (a.size as f64, b.size as f64, size as f64);
        let probs: Vec<f64> = a.probs.iter().zip(&b.probs).map(|(p, r)| (sa * p + sb * r) / s).collect();
        let mut links = a.links;
        for (c, w) in b.links {
            *links.entry(c).or_insert(0.0) += w;
        }
        links.remove(&best.lo);
        links.remove(&best.hi);

        let merged = Community {
            size,
            probs,
            links,
            internal: a.internal + b.internal + between,
            degree: a.degree + b.degree,
        };
        q += modularity_of(&merged);

        for old in [best.lo, best.hi] {
            for &c in merged.links.keys() {
                let key = (old.min(c), old.max(c));
                if let Some(delta) = stored.remove(&key) {
                    queue.remove(&Candidate { delta, lo: key.0, hi: key.1 });
                }
            }
        }
        for (&c, &w) in &merged.links {
            let other = comms.get_mut(&c).expect("neighbour is live");
            other.links.remove(&best.lo);
            other.links.remove(&best.hi);
            other.links.insert(next_id, w);
            let delta = delta_sigma(&merged, other, &inv_degree, nf);
            stored.insert((c, next_id), delta);
            queue.insert(Candidate { delta, lo: c, hi: next_id });
        }

        merges.push(Merge { a: best.lo, b: best.hi, new_id: next_id, delta_sigma: best.delta, modularity: q });
        comms.insert(next_id, merged);
        next_id += 1;
    }

    let dendrogram = Dendrogram { leaves: n, merges, initial_modularity };
    let cut = dendrogram.best_cut();
    let best = dendrogram.cut(cut);
    let modularity = modularity(g, &best);
    Ok(Walktrap { dendrogram, best, modularity })
}

/// Newman modularity of `p` on the undirected weighted view.
pub fn modularity(g: &UserGraph, p: &Partition) -> f64 {
    let adj = g.undirected_adjacency();
    let k = p.community_count();
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    let mut two_m = 0.0;
    for (u, list) in adj.iter().enumerate() {
        let cu = p.community_of(u);
        for &(v, w) in list {
            two_m += w;
            degree[cu] += w;
            if p.community_of(v) == cu {
                internal[cu] += w;
            }
        }
    }
    // `internal` counted each edge from both ends.
    internal.iter().zip(&degree).map(|(e, d)| e / two_m - (d / two_m).powi(2)).sum()
}

/// Conductance of every community: boundary weight over the smaller of the
/// two volumes. A community holding the whole graph scores 0.
pub fn conductance(g: &UserGraph, p: &Partition) -> Vec<f64> {
    let adj = g.undirected_adjacency();
    let k = p.community_count();
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for (u, list) in adj.iter().enumerate() {
        let cu = p.community_of(u);
        for &(v, w) in list {
            vol[cu] += w;
            if p.community_of(v) != cu {
                cut[cu] += w;
            }
        }
    }
    let total: f64 = vol.iter().sum();
    cut.iter()
        .zip(&vol)
        .map(|(&c, &v)| {
            let denom = v.min(total - v);
            if denom > 0.0 {
                c / denom
            } else {
                0.0
            }
        })
        .collect()
}
