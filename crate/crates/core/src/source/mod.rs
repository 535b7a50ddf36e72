// SPDX-License-Identifier: Apache-2.0

//! The remote platform boundary.
//!
//! A [`GraphSource`] serves neighbor lists one page at a time and is the
//! only way the crawler can learn about nodes. Pages are free at the source
//! level; [`SourceBudget`] charges one call per page and enforces a
//! fixed-window rate limit in virtual time. [`CredentialPool`] spreads
//! fetches over several independently budgeted credentials.

mod budget;
mod pool;

pub use budget::{BudgetConfig, BudgetSnapshot, RetryPolicy, SourceBudget};
pub use pool::{CredentialPool, FetchBatch};

use crate::graph::{read_edge_list, read_node_table, DirectedGraph, NodeId, NodeTable};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

/// Ids per call on the real platform's friends/followers endpoints.
pub const DEFAULT_PAGE_SIZE: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Accounts the node follows.
    Friends,
    /// Accounts following the node.
    Followers,
}

#[derive(Clone, Debug, thiserror::Error, PartialEq, Eq)]
pub enum SourceError {
    #[error("node {0} is not known to the source")]
    UnknownNode(NodeId),
    #[error("rate limited; retry in {wait_seconds} s")]
    RateLimited { wait_seconds: u64 },
    #[error("call budget exhausted after {calls} calls")]
    BudgetExhausted { calls: u64 },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("source io: {0}")]
    Io(String),
}

impl SourceError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SourceError::RateLimited { .. })
    }
}

pub type Result<T, E = SourceError> = std::result::Result<T, E>;

/// Profile counters a platform reports alongside an account.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeInfo {
    pub friends: usize,
    pub followers: usize,
    /// Distinct accounts in either list.
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborPage {
    pub node: NodeId,
    pub relation: Relation,
    pub ids: Vec<NodeId>,
    /// Offset of the next page, `None` at the end.
    pub next_cursor: Option<usize>,
}

pub trait GraphSource: Send + Sync {
    fn contains(&self, node: NodeId) -> bool;

    /// Degree counters for `node`. Not charged against the call budget.
    fn lookup(&self, node: NodeId) -> Result<DegreeInfo>;

    /// Page of at most `limit` neighbor ids starting at `cursor`, in a stable
    /// order. Not charged; see [`SourceBudget::fetch_page`].
    fn page(
        &self,
        node: NodeId,
        relation: Relation,
        cursor: usize,
        limit: usize,
    ) -> Result<NeighborPage>;
}

/// Source backed by an in-memory graph, either synthetic or loaded from an
/// edge list.
#[derive(Clone, Debug)]
pub struct GraphBackedSource {
    graph: Arc<DirectedGraph>,
    table: NodeTable,
}

impl GraphBackedSource {
    pub fn new(graph: Arc<DirectedGraph>, table: NodeTable) -> Self {
        GraphBackedSource { graph, table }
    }

    pub fn from_graph(graph: DirectedGraph) -> Self {
        let table = NodeTable::identity(graph.node_count());
        GraphBackedSource::new(Arc::new(graph), table)
    }

    /// Loads an edge list, using the node table file when one is given.
    pub fn from_files(edges: &Path, nodes: Option<&Path>) -> Result<Self> {
        let io =
            |e: &dyn std::fmt::Display, p: &Path| SourceError::Io(format!("{}: {e}", p.display()));
        let mut table = match nodes {
            Some(p) => {
                let f = File::open(p).map_err(|e| io(&e, p))?;
                read_node_table(BufReader::new(f)).map_err(|e| io(&e, p))?
            }
            None => NodeTable::new(),
        };
        let f = File::open(edges).map_err(|e| io(&e, edges))?;
        let graph = read_edge_list(BufReader::new(f), &mut table).map_err(|e| io(&e, edges))?;
        Ok(GraphBackedSource::new(Arc::new(graph), table))
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn table(&self) -> &NodeTable {
        &self.table
    }

    fn list(&self, node: NodeId, relation: Relation) -> Result<&[NodeId]> {
        let r = match relation {
            Relation::Friends => self.graph.friends(node),
            Relation::Followers => self.graph.followers(node),
        };
        r.map_err(|_| SourceError::UnknownNode(node))
    }
}

impl GraphSource for GraphBackedSource {
    fn contains(&self, node: NodeId) -> bool {
        self.graph.contains(node)
    }

    fn lookup(&self, node: NodeId) -> Result<DegreeInfo> {
        use crate::graph::Direction;
        let d = |dir| {
            self.graph
                .degree(node, dir)
                .map_err(|_| SourceError::UnknownNode(node))
        };
        Ok(DegreeInfo {
            friends: d(Direction::Out)?,
            followers: d(Direction::In)?,
            total: d(Direction::Total)?,
        })
    }

    fn page(
        &self,
        node: NodeId,
        relation: Relation,
        cursor: usize,
        limit: usize,
    ) -> Result<NeighborPage> {
        let list = self.list(node, relation)?;
        let start = cursor.min(list.len());
        let end = (start + limit.max(1)).min(list.len());
        Ok(NeighborPage {
            node,
            relation,
            ids: list[start..end].to_vec(),
            next_cursor: (end < list.len()).then_some(end),
        })
    }
}

/// Network-backed platform adapter. Credentials and platform terms of use
/// are outside this crate, so every operation reports `Unsupported`.
#[derive(Clone, Debug, Default)]
pub struct LiveSource;

impl GraphSource for LiveSource {
    fn contains(&self, _node: NodeId) -> bool {
        false
    }

    fn lookup(&self, _node: NodeId) -> Result<DegreeInfo> {
        Err(SourceError::Unsupported(
            "live platform access is not implemented",
        ))
    }

    fn page(&self, _: NodeId, _: Relation, _: usize, _: usize) -> Result<NeighborPage> {
        Err(SourceError::Unsupported(
            "live platform access is not implemented",
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pages_concatenate_to_adjacency() {
        let mut g = DirectedGraph::new();
        for v in 1..=12 {
            g.add_edge(NodeId(0), NodeId(v)).unwrap();
        }
        let src = GraphBackedSource::from_graph(g);
        let mut cursor = Some(0);
        let mut all = Vec::new();
        let mut pages = 0;
        while let Some(c) = cursor {
            let p = src.page(NodeId(0), Relation::Friends, c, 5).unwrap();
            all.extend(p.ids);
            cursor = p.next_cursor;
            pages += 1;
        }
        assert_eq!(pages, 3);
        assert_eq!(all, src.graph().friends(NodeId(0)).unwrap());
        let empty = src.page(NodeId(3), Relation::Friends, 0, 5).unwrap();
        assert!(empty.ids.is_empty() && empty.next_cursor.is_none());
    }

    #[test]
    fn live_adapter_is_stubbed() {
        assert!(matches!(
            LiveSource.page(NodeId(0), Relation::Friends, 0, 10),
            Err(SourceError::Unsupported(_))
        ));
    }

    #[test]
    fn lookup_reports_counts() {
        let mut g = DirectedGraph::new();
        g.add_edge(NodeId(0), NodeId(1)).unwrap();
        g.add_edge(NodeId(1), NodeId(0)).unwrap();
        g.add_edge(NodeId(2), NodeId(0)).unwrap();
        let src = GraphBackedSource::from_graph(g);
        assert_eq!(
            src.lookup(NodeId(0)).unwrap(),
            DegreeInfo {
                friends: 1,
                followers: 2,
                total: 2
            }
        );
        assert_eq!(
            src.lookup(NodeId(9)),
            Err(SourceError::UnknownNode(NodeId(9)))
        );
    }
}
