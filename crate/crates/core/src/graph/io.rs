// SPDX-License-Identifier: Apache-2.0

//! Edge-list and node-table files.
//!
//! Edge list: one `u<TAB>v` line per edge ("u follows v") using external
//! ids; lines starting with `#` are comments. Node table: one
//! `internal_id<TAB>external_id` line per node, in internal id order.

use super::{DirectedGraph, GraphError, NodeId, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Bijection between dense internal ids and external ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeTable {
    external: Vec<u64>,
    internal: HashMap<u64, NodeId>,
}

impl NodeTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Table where external id equals internal id.
    pub fn identity(n: usize) -> Self {
        let mut t = NodeTable::new();
        for i in 0..n {
            t.intern(i as u64);
        }
        t
    }

    pub fn from_externals(externals: impl IntoIterator<Item = u64>) -> Self {
        let mut t = NodeTable::new();
        for e in externals {
            t.intern(e);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    /// Returns the internal id for `ext`, assigning the next one if new.
    pub fn intern(&mut self, ext: u64) -> NodeId {
        if let Some(&id) = self.internal.get(&ext) {
            return id;
        }
        let id = NodeId::from(self.external.len());
        self.external.push(ext);
        self.internal.insert(ext, id);
        id
    }

    pub fn external(&self, id: NodeId) -> u64 {
        self.external[id.index()]
    }

    pub fn internal(&self, ext: u64) -> Option<NodeId> {
        self.internal.get(&ext).copied()
    }

    pub fn externals(&self) -> &[u64] {
        &self.external
    }
}

fn parse_u64(s: &str, line: usize) -> Result<u64> {
    s.trim().parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("invalid id {s:?}"),
    })
}

fn split_pair(s: &str, line: usize) -> Result<(u64, u64)> {
    let mut it = s.split('\t');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((parse_u64(a, line)?, parse_u64(b, line)?)),
        _ => Err(GraphError::Parse {
            line,
            msg: "expected two tab-separated fields".into(),
        }),
    }
}

/// Reads an edge list, interning external ids through `table`. Nodes
/// already in `table` keep their ids, so reading with the table written
/// alongside the edge list reproduces the original graph exactly.
pub fn read_edge_list<R: BufRead>(reader: R, table: &mut NodeTable) -> Result<DirectedGraph> {
    let mut g = DirectedGraph::with_nodes(table.len());
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (a, b) = split_pair(&line, i + 1)?;
        let u = table.intern(a);
        let v = table.intern(b);
        g.add_edge(u, v).map_err(|e| GraphError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
    }
    Ok(g)
}

pub fn write_edge_list<W: Write>(
    mut writer: W,
    graph: &DirectedGraph,
    table: &NodeTable,
) -> Result<()> {
    for (u, v) in graph.edges() {
        writeln!(writer, "{}\t{}", table.external(u), table.external(v))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_node_table<R: BufRead>(reader: R) -> Result<NodeTable> {
    let mut t = NodeTable::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (internal, ext) = split_pair(&line, i + 1)?;
        if internal != t.len() as u64 {
            return Err(GraphError::Parse {
                line: i + 1,
                msg: format!("expected internal id {}, found {internal}", t.len()),
            });
        }
        if t.internal(ext).is_some() {
            return Err(GraphError::Parse {
                line: i + 1,
                msg: format!("duplicate external id {ext}"),
            });
        }
        t.intern(ext);
    }
    Ok(t)
}

pub fn write_node_table<W: Write>(mut writer: W, table: &NodeTable) -> Result<()> {
    for (i, ext) in table.external.iter().enumerate() {
        writeln!(writer, "{i}\t{ext}")?;
    }
    writer.flush()?;
    Ok(())
}
