use rand::Rng;
use serde::Serialize;

use super::UserGraph;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Vertex coordinates inside `[0, width] x [0, height]`, indexed like the
/// graph's vertex list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Layout {
    pub coords: Vec<(f64, f64)>,
    pub width: f64,
    pub height: f64,
}

/// Fruchterman-Reingold spring embedding.
///
/// Optimal distance `k = sqrt(W*H/n)`; edges attract with `d^2/k`, every
/// pair repels with `k^2/d`. Displacements are capped by a temperature that
/// falls linearly from `W/10` to zero. Edges are taken from the undirected
/// view and are unweighted.
pub fn fr_layout(g: &UserGraph, width: f64, height: f64, iterations: usize, seed: u64) -> Result<Layout> {
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::InvalidArgument("layout frame must be positive".into()));
    }
    let n = g.vertex_count();
    let mut rng = rng_from(seed);
    let mut pos: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.random::<f64>() * width, rng.random::<f64>() * height)).collect();

    let k = (width * height / n as f64).sqrt();
    let adj = g.undirected_adjacency();
    let edges: Vec<(usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, l)| l.iter().filter(move |&&(v, _)| u < v).map(move |&(v, _)| (u, v)))
        .collect();
    let t0 = width / 10.0;
    let min_dist = k * 1e-6;

    let mut disp = vec![(0.0, 0.0); n];
    for it in 0..iterations {
        let temp = t0 * (1.0 - it as f64 / iterations as f64);
        disp.iter_mut().for_each(|d| *d = (0.0, 0.0));

        for v in 0..n {
            for u in (v + 1)..n {
                let (mut dx, mut dy) = (pos[v].0 - pos[u].0, pos[v].1 - pos[u].1);
                let mut d = (dx * dx + dy * dy).sqrt();
                if d < min_dist {
                    // Coincident points: push apart along a fixed direction.
                    dx = min_dist;
                    dy = 0.0;
                    d = min_dist;
                }
                let f = k * k / d;
                let (fx, fy) = (dx / d * f, dy / d * f);
                disp[v].0 += fx;
                disp[v].1 += fy;
                disp[u].0 -= fx;
                disp[u].1 -= fy;
            }
        }
        for &(v, u) in &edges {
            let (dx, dy) = (pos[v].0 - pos[u].0, pos[v].1 - pos[u].1);
            let d = (dx * dx + dy * dy).sqrt().max(min_dist);
            let f = d * d / k;
            let (fx, fy) = (dx / d * f, dy / d * f);
            disp[v].0 -= fx;
            disp[v].1 -= fy;
            disp[u].0 += fx;
            disp[u].1 += fy;
        }

        for (p, &(dx, dy)) in pos.iter_mut().zip(&disp) {
            let len = (dx * dx + dy * dy).sqrt();
            if len > 0.0 {
                let step = len.min(temp);
                p.0 = (p.0 + dx / len * step).clamp(0.0, width);
                p.1 = (p.1 + dy / len * step).clamp(0.0, height);
            }
        }
    }
    Ok(Layout { coords: pos, width, height })
}
