// SPDX-License-Identifier: Apache-2.0

//! Directed follow graph.
//!
//! Out-edges are "friends" (accounts a node follows), in-edges are
//! "followers". Both adjacency directions are kept sorted and mirror each
//! other exactly; `add_edge` is idempotent so crawl phases may report the
//! same edge many times.

mod io;
mod view;

pub use io::{read_edge_list, read_node_table, write_edge_list, write_node_table, NodeTable};
pub use view::{avg_path_length, bfs_distances, modularity, UndirectedView};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense node identifier, `0..node_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which adjacency to query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Followers (in-edges).
    In,
    /// Friends (out-edges).
    Out,
    /// Distinct neighbors under symmetrization.
    Total,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop on node {0} rejected")]
    SelfLoop(NodeId),
    #[error("node {0} is not in the graph ({1} nodes)")]
    UnknownNode(NodeId, usize),
    #[error("modularity is undefined on a graph without edges")]
    EmptyGraph,
    #[error("partition has {got} entries but the graph has {expected} nodes")]
    PartitionSize { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("path-length targets must be non-empty")]
    EmptyTargets,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for GraphError {
    fn from(e: std::io::Error) -> Self {
        GraphError::Io(e.to_string())
    }
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DirectedGraph {
    out_adj: Vec<Vec<NodeId>>,
    in_adj: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl DirectedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes(n: usize) -> Self {
        DirectedGraph {
            out_adj: vec![Vec::new(); n],
            in_adj: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.out_adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, u: NodeId) -> bool {
        u.index() < self.node_count()
    }

    /// Grows the node table so that `u` is a valid id.
    pub fn ensure_node(&mut self, u: NodeId) {
        let need = u.index() + 1;
        if need > self.out_adj.len() {
            self.out_adj.resize_with(need, Vec::new);
            self.in_adj.resize_with(need, Vec::new);
        }
    }

    /// Adds `u -> v` ("u follows v"). Returns whether the edge was new.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<bool> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        self.ensure_node(u.max(v));
        let out = &mut self.out_adj[u.index()];
        match out.binary_search(&v) {
            Ok(_) => Ok(false),
            Err(pos) => {
                out.insert(pos, v);
                let inn = &mut self.in_adj[v.index()];
                let pos = inn.binary_search(&u).unwrap_err();
                inn.insert(pos, u);
                self.edge_count += 1;
                Ok(true)
            }
        }
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.contains(u) && self.out_adj[u.index()].binary_search(&v).is_ok()
    }

    fn check(&self, u: NodeId) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(u, self.node_count()))
        }
    }

    /// Sorted friends of `u`.
    pub fn friends(&self, u: NodeId) -> Result<&[NodeId]> {
        self.check(u)?;
        Ok(&self.out_adj[u.index()])
    }

    /// Sorted followers of `u`.
    pub fn followers(&self, u: NodeId) -> Result<&[NodeId]> {
        self.check(u)?;
        Ok(&self.in_adj[u.index()])
    }

    pub fn degree(&self, u: NodeId, direction: Direction) -> Result<usize> {
        self.check(u)?;
        let out = &self.out_adj[u.index()];
        let inn = &self.in_adj[u.index()];
        Ok(match direction {
            Direction::Out => out.len(),
            Direction::In => inn.len(),
            Direction::Total => merged_len(out, inn),
        })
    }

    /// Sorted distinct neighbors of `u` in either direction.
    pub fn neighbors(&self, u: NodeId) -> Result<Vec<NodeId>> {
        self.check(u)?;
        Ok(merge_sorted(
            &self.out_adj[u.index()],
            &self.in_adj[u.index()],
        ))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count()).map(NodeId::from)
    }

    /// All edges in `(source, target)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (NodeId::from(u), v)))
    }

    /// Full scan of the structural invariants.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.out_adj.len() != self.in_adj.len() {
            return Err("adjacency tables differ in length".into());
        }
        let mut out_sum = 0;
        let mut in_sum = 0;
        for u in self.nodes() {
            let out = &self.out_adj[u.index()];
            let inn = &self.in_adj[u.index()];
            out_sum += out.len();
            in_sum += inn.len();
            if out.windows(2).any(|w| w[0] >= w[1]) || inn.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("adjacency of {u} not strictly sorted"));
            }
            for &v in out {
                if v == u {
                    return Err(format!("self-loop on {u}"));
                }
                if !self.contains(v) || self.in_adj[v.index()].binary_search(&u).is_err() {
                    return Err(format!("edge {u}->{v} missing from in-list"));
                }
            }
            for &w in inn {
                if !self.contains(w) || self.out_adj[w.index()].binary_search(&u).is_err() {
                    return Err(format!("edge {w}->{u} missing from out-list"));
                }
            }
        }
        if out_sum != self.edge_count || in_sum != self.edge_count {
            return Err(format!(
                "edge_count {} but out-degree sum {out_sum}, in-degree sum {in_sum}",
                self.edge_count
            ));
        }
        Ok(())
    }

    /// Node-induced subgraph over `keep` (sorted, deduplicated). Returns the
    /// subgraph and, for each new id, the id it had in `self`.
    pub fn induced_subgraph(&self, keep: &[NodeId]) -> (DirectedGraph, Vec<NodeId>) {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut remap = vec![u32::MAX; self.node_count()];
        for (i, &u) in keep.iter().enumerate() {
            remap[u.index()] = i as u32;
        }
        let mut g = DirectedGraph::with_nodes(keep.len());
        for (i, &u) in keep.iter().enumerate() {
            for &v in &self.out_adj[u.index()] {
                let j = remap[v.index()];
                if j != u32::MAX {
                    g.out_adj[i].push(NodeId(j));
                    g.in_adj[j as usize].push(NodeId(i as u32));
                    g.edge_count += 1;
                }
            }
        }
        // in-lists were filled in source order, which is already ascending
        (g, keep)
    }
}

fn merged_len(a: &[NodeId], b: &[NodeId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
        n += 1;
    }
    n + (a.len() - i) + (b.len() - j)
}

pub(crate) fn merge_sorted(a: &[NodeId], b: &[NodeId]) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn single_edge() {
        let mut g = DirectedGraph::new();
        assert!(g.add_edge(n(0), n(1)).unwrap());
        assert_eq!(g.friends(n(0)).unwrap(), &[n(1)]);
        assert_eq!(g.followers(n(1)).unwrap(), &[n(0)]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn duplicate_edge_is_idempotent() {
        let mut g = DirectedGraph::new();
        g.add_edge(n(0), n(1)).unwrap();
        assert!(!g.add_edge(n(0), n(1)).unwrap());
        assert_eq!(g.edge_count(), 1);
        g.check_invariants().unwrap();
    }

    #[test]
    fn self_loop_rejected() {
        let mut g = DirectedGraph::new();
        assert_eq!(g.add_edge(n(3), n(3)), Err(GraphError::SelfLoop(n(3))));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn star_degrees() {
        let mut g = DirectedGraph::new();
        for leaf in 1..=4 {
            g.add_edge(n(0), n(leaf)).unwrap();
        }
        assert_eq!(g.degree(n(0), Direction::Out).unwrap(), 4);
        assert_eq!(g.degree(n(0), Direction::In).unwrap(), 0);
        assert_eq!(g.degree(n(0), Direction::Total).unwrap(), 4);
    }

    #[test]
    fn total_degree_counts_reciprocal_once() {
        let mut g = DirectedGraph::new();
        g.add_edge(n(0), n(1)).unwrap();
        g.add_edge(n(0), n(2)).unwrap();
        g.add_edge(n(2), n(0)).unwrap();
        g.add_edge(n(3), n(0)).unwrap();
        assert_eq!(g.degree(n(0), Direction::Total).unwrap(), 3);
        assert_eq!(g.neighbors(n(0)).unwrap(), vec![n(1), n(2), n(3)]);
    }

    #[test]
    fn isolated_and_unknown_nodes() {
        let mut g = DirectedGraph::with_nodes(3);
        g.add_edge(n(0), n(1)).unwrap();
        for d in [Direction::In, Direction::Out, Direction::Total] {
            assert_eq!(g.degree(n(2), d).unwrap(), 0);
        }
        assert!(matches!(
            g.degree(n(9), Direction::Out),
            Err(GraphError::UnknownNode(_, 3))
        ));
    }

    #[test]
    fn induced_subgraph_keeps_only_internal_edges() {
        let mut g = DirectedGraph::new();
        g.add_edge(n(0), n(1)).unwrap();
        g.add_edge(n(1), n(2)).unwrap();
        g.add_edge(n(2), n(0)).unwrap();
        g.add_edge(n(3), n(0)).unwrap();
        let (sub, ids) = g.induced_subgraph(&[n(2), n(0), n(3)]);
        assert_eq!(ids, vec![n(0), n(2), n(3)]);
        assert_eq!(sub.edge_count(), 2);
        assert!(sub.has_edge(n(1), n(0)));
        assert!(sub.has_edge(n(2), n(0)));
        sub.check_invariants().unwrap();
    }
}
