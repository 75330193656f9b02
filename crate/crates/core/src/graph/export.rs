use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::{Layout, Partition, UserGraph};
use crate::error::Result;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Directed DOT graph with `weight` on edges, `community` on vertices when a
/// partition is supplied, and `pos="x,y"` when a layout is supplied.
pub fn to_dot(g: &UserGraph, partition: Option<&Partition>, layout: Option<&Layout>) -> String {
    to_dot_labeled(g, partition.map(Partition::assignment), layout)
}

/// Like [`to_dot`] with community ids given per vertex, which need not be
/// contiguous (useful for subgraphs that keep their parent's ids).
pub fn to_dot_labeled(g: &UserGraph, communities: Option<&[usize]>, layout: Option<&Layout>) -> String {
    let mut out = String::from("digraph users {\n");
    for (i, name) in g.vertices().iter().enumerate() {
        let mut attrs = Vec::new();
        if let Some(c) = communities {
            attrs.push(format!("community={}", c[i]));
        }
        if let Some(l) = layout {
            let (x, y) = l.coords[i];
            attrs.push(format!("pos=\"{x},{y}\""));
        }
        if attrs.is_empty() {
            writeln!(out, "  {};", quote(name)).unwrap();
        } else {
            writeln!(out, "  {} [{}];", quote(name), attrs.join(", ")).unwrap();
        }
    }
    for ((u, v), w) in g.edges() {
        writeln!(out, "  {} -> {} [weight={w}];", quote(&g.vertices()[u]), quote(&g.vertices()[v])).unwrap();
    }
    out.push_str("}\n");
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CentralityRow {
    pub user: String,
    pub pagerank: f64,
    pub hub: f64,
    pub authority: f64,
    pub betweenness: f64,
    pub community: usize,
}

/// Writes `user,pagerank,hub,authority,betweenness,community`.
pub fn centrality_csv<W: Write>(rows: &[CentralityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_carries_community_and_position() {
        let g = UserGraph::from_edges([("a", "b", 2)]).unwrap();
        let p = Partition::from_labels(&[0, 0]);
        let l = Layout { coords: vec![(1.0, 2.5), (3.0, 4.0)], width: 5.0, height: 5.0 };
        let dot = to_dot(&g, Some(&p), Some(&l));
        assert!(dot.contains("\"a\" [community=0, pos=\"1,2.5\"];"));
        assert!(dot.contains("\"a\" -> \"b\" [weight=2];"));
        assert_eq!(to_dot(&g, None, None).lines().nth(1), Some("  \"a\";"));
    }

    #[test]
    fn csv_header() {
        let rows = vec![CentralityRow {
            user: "a".into(),
            pagerank: 0.5,
            hub: 1.0,
            authority: 0.0,
            betweenness: 0.0,
            community: 0,
        }];
        let mut buf = Vec::new();
        centrality_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("user,pagerank,hub,authority,betweenness,community"));
        assert_eq!(text.lines().nth(1), Some("a,0.5,1.0,0.0,0.0,0"));
    }
}
