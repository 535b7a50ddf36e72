// SPDX-License-Identifier: Apache-2.0

//! Line-delimited JSON checkpoint of a [`CrawlState`].
//!
//! Layout, one JSON object per line, each tagged by `record`:
//!
//! 1. `header`: format version, next phase direction, per-credential budget
//!    counters, and the number of node, edge and phase records that follow.
//! 2. `node`, ascending by id: degree, found-reference count and set
//!    membership flags of every found node.
//! 3. `edge`, ascending: every observed directed edge.
//! 4. `phase`: the phase log in order.
//!
//! Found-reference counts are recomputed on load and must match the stored
//! values.

use super::{CrawlError, CrawlState, PhaseDirection, PhaseReport, Result};
use crate::graph::NodeId;
use crate::source::BudgetSnapshot;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Header {
        version: u32,
        next_direction: PhaseDirection,
        budget: Vec<BudgetSnapshot>,
        nodes: usize,
        edges: usize,
        phases: usize,
    },
    Node {
        id: NodeId,
        degree: usize,
        refs: usize,
        elite: bool,
        ordinary: bool,
        pending_elite: bool,
        pending_ordinary: bool,
    },
    Edge {
        from: NodeId,
        to: NodeId,
    },
    Phase(PhaseReport),
}

pub fn write_checkpoint<W: Write>(mut w: W, state: &CrawlState) -> Result<()> {
    let mut emit = |r: &Record| -> Result<()> {
        serde_json::to_writer(&mut w, r).map_err(|e| CrawlError::Io(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    };
    emit(&Record::Header {
        version: CHECKPOINT_VERSION,
        next_direction: state.next_direction,
        budget: state.budget.clone(),
        nodes: state.found.len(),
        edges: state.edges.len(),
        phases: state.phase_log.len(),
    })?;
    for &id in &state.found {
        emit(&Record::Node {
            id,
            degree: state.degrees[&id],
            refs: state.found_refs.get(&id).copied().unwrap_or(0),
            elite: state.elite.contains(&id),
            ordinary: state.ordinary.contains(&id),
            pending_elite: state.pending_elite.contains(&id),
            pending_ordinary: state.pending_ordinary.contains(&id),
        })?;
    }
    for &(from, to) in &state.edges {
        emit(&Record::Edge { from, to })?;
    }
    for p in &state.phase_log {
        emit(&Record::Phase(p.clone()))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<CrawlState> {
    let bad = |line: usize, msg: String| CrawlError::Checkpoint { line, msg };
    let mut state = CrawlState::default();
    let mut expected = None;
    let mut stored_refs = Vec::new();
    let mut last_line = 0;
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = line?;
        let rec: Record = serde_json::from_str(&line).map_err(|e| bad(line_no, e.to_string()))?;
        match (rec, expected.is_some()) {
            (
                Record::Header {
                    version,
                    next_direction,
                    budget,
                    nodes,
                    edges,
                    phases,
                },
                false,
            ) => {
                if version != CHECKPOINT_VERSION {
                    return Err(bad(
                        line_no,
                        format!("version {version}, expected {CHECKPOINT_VERSION}"),
                    ));
                }
                state.next_direction = next_direction;
                state.budget = budget;
                expected = Some((nodes, edges, phases));
            }
            (Record::Header { .. }, true) => return Err(bad(line_no, "second header".into())),
            (_, false) => return Err(bad(line_no, "missing header".into())),
            (
                Record::Node {
                    id,
                    degree,
                    refs,
                    elite,
                    ordinary,
                    pending_elite,
                    pending_ordinary,
                },
                true,
            ) => {
                if !state.found.insert(id) {
                    return Err(bad(line_no, format!("duplicate node {id}")));
                }
                state.degrees.insert(id, degree);
                stored_refs.push((id, refs, line_no));
                for (flag, set) in [
                    (elite, &mut state.elite),
                    (ordinary, &mut state.ordinary),
                    (pending_elite, &mut state.pending_elite),
                    (pending_ordinary, &mut state.pending_ordinary),
                ] {
                    if flag {
                        set.insert(id);
                    }
                }
            }
            (Record::Edge { from, to }, true) => state.observe(from, to),
            (Record::Phase(p), true) => state.phase_log.push(p),
        }
    }
    let (nodes, edges, phases) = expected.ok_or_else(|| bad(0, "empty checkpoint".into()))?;
    let counts = (state.found.len(), state.edges.len(), state.phase_log.len());
    if counts != (nodes, edges, phases) {
        return Err(bad(
            last_line,
            format!("truncated: header announces {nodes}/{edges}/{phases} node/edge/phase records, found {}/{}/{}", counts.0, counts.1, counts.2),
        ));
    }
    state.refresh_refs();
    for (id, refs, line_no) in stored_refs {
        let actual = state.found_refs[&id];
        if actual != refs {
            return Err(bad(
                line_no,
                format!("node {id} stores {refs} found references, edges give {actual}"),
            ));
        }
    }
    Ok(state)
}
