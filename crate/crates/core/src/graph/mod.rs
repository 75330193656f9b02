//! User interaction graph and its structure.
//!
//! Vertices are user handles; a directed edge `u -> v` counts how many times
//! `u` mentioned or retweeted `v`. Community detection and betweenness work
//! on the undirected view, where the weight of `{u, v}` is `w(u,v) + w(v,u)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::TweetCollection;
use crate::error::{Error, Result};

mod centrality;
mod community;
mod export;
mod layout;

pub use centrality::{betweenness, hits, pagerank, Hits, PageRank};
pub use community::{conductance, modularity, walktrap, Dendrogram, Merge, Partition, Walktrap};
pub use export::{centrality_csv, to_dot, to_dot_labeled, CentralityRow};
pub use layout::{fr_layout, Layout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Mention,
    Retweet,
}

/// Directed, integer-weighted user graph. Vertices are kept sorted by handle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserGraph {
    vertices: Vec<String>,
    edges: BTreeMap<(usize, usize), u64>,
}

impl UserGraph {
    /// Builds a graph from `(source, target, weight)` triples. Self-loops and
    /// zero weights are dropped; repeated pairs accumulate.
    pub fn from_edges<S: AsRef<str>>(edges: impl IntoIterator<Item = (S, S, u64)>) -> Result<UserGraph> {
        let mut named: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (u, v, w) in edges {
            let (u, v) = (u.as_ref(), v.as_ref());
            if u == v || w == 0 {
                continue;
            }
            *named.entry((u.to_string(), v.to_string())).or_insert(0) += w;
        }
        if named.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let vertex_set: BTreeSet<&String> = named.keys().flat_map(|(u, v)| [u, v]).collect();
        let vertices: Vec<String> = vertex_set.into_iter().cloned().collect();
        let index = |name: &String| vertices.binary_search(name).expect("endpoint is a vertex");
        let edges = named.iter().map(|((u, v), &w)| ((index(u), index(v)), w)).collect();
        Ok(UserGraph { vertices, edges })
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn index_of(&self, handle: &str) -> Option<usize> {
        self.vertices.binary_search_by(|v| v.as_str().cmp(handle)).ok()
    }

    /// Directed edges `((source, target), weight)` in index order.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.edges.iter().map(|(&k, &w)| (k, w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, u: &str, v: &str) -> u64 {
        match (self.index_of(u), self.index_of(v)) {
            (Some(a), Some(b)) => self.edges.get(&(a, b)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Symmetrized adjacency lists: `adj[u]` holds `(v, w(u,v) + w(v,u))`
    /// sorted by `v`.
    pub fn undirected_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut sym: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (&(u, v), &w) in &self.edges {
            let key = (u.min(v), u.max(v));
            *sym.entry(key).or_insert(0) += w;
        }
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for ((u, v), w) in sym {
            adj[u].push((v, w as f64));
            adj[v].push((u, w as f64));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }

    /// Induced subgraph on the given vertex indices, or `None` if it has no edges.
    pub fn subgraph(&self, keep: &BTreeSet<usize>) -> Option<UserGraph> {
        let edges = self
            .edges
            .iter()
            .filter(|((u, v), _)| keep.contains(u) && keep.contains(v))
            .map(|(&(u, v), &w)| (self.vertices[u].as_str(), self.vertices[v].as_str(), w));
        UserGraph::from_edges(edges).ok()
    }
}

/// Adds one `author -> target` edge per selected interaction in the corpus.
pub fn build_user_graph(collection: &TweetCollection, kinds: &BTreeSet<EdgeKind>) -> Result<UserGraph> {
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("at least one edge kind is required".into()));
    }
    let mut edges = Vec::new();
    for t in collection.tweets() {
        if kinds.contains(&EdgeKind::Mention) {
            for m in &t.mentions {
                edges.push((t.author.as_str(), m.as_str(), 1));
            }
        }
        if kinds.contains(&EdgeKind::Retweet) {
            if let Some(r) = &t.retweet_of {
                edges.push((t.author.as_str(), r.as_str(), 1));
            }
        }
    }
    UserGraph::from_edges(edges)
}
