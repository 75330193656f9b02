//! Vertex rankings. Every score vector is indexed like `UserGraph::vertices`.

use std::collections::VecDeque;

use super::UserGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct PageRank {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted PageRank by power iteration with uniform teleport. Mass sitting
/// on vertices without out-edges is spread uniformly over all vertices.
pub fn pagerank(g: &UserGraph, damping: f64, tol: f64, max_iter: usize) -> PageRank {
    let n = g.vertex_count();
    let nf = n as f64;
    let mut out_weight = vec![0.0; n];
    for ((u, _), w) in g.edges() {
        out_weight[u] += w as f64;
    }
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&u| out_weight[u] == 0.0).map(|u| x[u]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        next.iter_mut().for_each(|v| *v = base);
        for ((u, v), w) in g.edges() {
            next[v] += damping * x[u] * w as f64 / out_weight[u];
        }
        // Renormalize against drift so the sum stays at one.
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            converged = true;
            break;
        }
    }
    PageRank { scores: x, iterations, converged }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hits {
    pub hub: Vec<f64>,
    pub authority: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Kleinberg hub/authority scores on the weighted directed graph.
pub fn hits(g: &UserGraph, tol: f64, max_iter: usize) -> Hits {
    let n = g.vertex_count();
    let mut hub = vec![1.0; n];
    l2_normalize(&mut hub);
    let mut auth = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut new_auth = vec![0.0; n];
        for ((u, v), w) in g.edges() {
            new_auth[v] += w as f64 * hub[u];
        }
        l2_normalize(&mut new_auth);
        let mut new_hub = vec![0.0; n];
        for ((u, v), w) in g.edges() {
            new_hub[u] += w as f64 * new_auth[v];
        }
        l2_normalize(&mut new_hub);
        let change: f64 = hub.iter().zip(&new_hub).map(|(a, b)| (a - b).abs()).sum::<f64>()
            + auth.iter().zip(&new_auth).map(|(a, b)| (a - b).abs()).sum::<f64>();
        hub = new_hub;
        auth = new_auth;
        if change < tol {
            converged = true;
            break;
        }
    }
    Hits { hub, authority: auth, iterations, converged }
}

/// Brandes betweenness on the unweighted undirected view, counting each
/// unordered pair once.
pub fn betweenness(g: &UserGraph) -> Vec<f64> {
    let n = g.vertex_count();
    let adj = g.undirected_adjacency();
    let mut score = vec![0.0; n];

    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0; n];
    let mut queue = VecDeque::new();

    for s in 0..n {
        stack.clear();
        preds.iter_mut().for_each(Vec::clear);
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = -1);
        delta.iter_mut().for_each(|x| *x = 0.0);
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &(w, _) in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    score.iter_mut().for_each(|x| *x /= 2.0);
    score
}
