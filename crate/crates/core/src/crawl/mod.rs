// SPDX-License-Identifier: Apache-2.0

//! Back-and-forth crawling of a targeted community.
//!
//! The crawl starts from annotated supporters (the ordinary frontier) and
//! the selected seed profiles (the elite frontier). A friends phase fetches
//! the friend lists of the pending ordinary nodes and admits, as new elites,
//! the unfound accounts followed by enough of them. A followers phase does
//! the mirror image from the pending elites. Phases alternate until the
//! mean reference score of the found set reaches the target.
//!
//! The crawler only knows edges it has observed in fetched lists, so
//! reference scores and the emitted subgraph are built from those.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

use crate::graph::{DirectedGraph, Direction, NodeId};
use crate::seeds::{SeedDatabase, SeedSet};
use crate::source::{
    BudgetSnapshot, CredentialPool, GraphSource, Relation, RetryPolicy, SourceBudget, SourceError,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Stopping level used when no annotated sample is available.
pub const DEFAULT_TARGET_SCORE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseDirection {
    TowardFriends,
    TowardFollowers,
}

impl PhaseDirection {
    pub fn relation(self) -> Relation {
        match self {
            PhaseDirection::TowardFriends => Relation::Friends,
            PhaseDirection::TowardFollowers => Relation::Followers,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            PhaseDirection::TowardFriends => PhaseDirection::TowardFollowers,
            PhaseDirection::TowardFollowers => PhaseDirection::TowardFriends,
        }
    }
}

fn default_direction() -> PhaseDirection {
    PhaseDirection::TowardFriends
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrawlConfig {
    pub target_score: f64,
    /// Accept a mean score this far below the target.
    #[serde(default)]
    pub tolerance: f64,
    pub max_phases: usize,
    pub n_target_candidates: usize,
    /// Absolute admission threshold replacing the frontier share.
    #[serde(default)]
    pub shortlist_override: Option<usize>,
    #[serde(default = "default_direction")]
    pub first_direction: PhaseDirection,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            target_score: DEFAULT_TARGET_SCORE,
            tolerance: 0.0,
            max_phases: 10,
            n_target_candidates: 5,
            shortlist_override: None,
            first_direction: PhaseDirection::TowardFriends,
            retry: RetryPolicy::default(),
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), CrawlError> {
        let bad = |m: String| Err(CrawlError::Config(m));
        if !(self.target_score > 0.0 && self.target_score <= 1.0) {
            return bad(format!(
                "target_score must lie in (0, 1], got {}",
                self.target_score
            ));
        }
        if !(self.tolerance >= 0.0 && self.tolerance < self.target_score) {
            return bad(format!(
                "tolerance must lie in [0, target_score), got {}",
                self.tolerance
            ));
        }
        if self.n_target_candidates == 0 {
            return bad("n_target_candidates must be at least 1".into());
        }
        if self.shortlist_override == Some(0) {
            return bad("shortlist_override must be at least 1".into());
        }
        Ok(())
    }

    /// Admission threshold for a phase expanding `frontier` nodes.
    pub fn threshold(&self, frontier: usize) -> usize {
        self.shortlist_override
            .unwrap_or_else(|| frontier.div_ceil(self.n_target_candidates))
            .max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase_index: usize,
    pub direction: PhaseDirection,
    pub nodes_in: usize,
    pub nodes_discovered: usize,
    pub nodes_shortlisted: usize,
    pub threshold: usize,
    pub found_total: usize,
    pub avg_reference_score: f64,
    /// Found nodes with no neighbors at all, left out of the average.
    pub zero_degree: usize,
    pub calls_spent: u64,
    pub elapsed_seconds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    MaxPhases,
    FrontierExhausted,
}

#[derive(Debug, thiserror::Error)]
pub enum CrawlError {
    #[error("invalid crawl config: {0}")]
    Config(String),
    #[error("none of the seeds or supporters is known to the source")]
    NoSeeds,
    #[error("node {0} has no recorded degree")]
    UnknownNode(NodeId),
    #[error("phase {phase}: fetching {node}: {error}")]
    Source {
        phase: usize,
        node: NodeId,
        #[source]
        error: SourceError,
    },
    #[error("empty sample")]
    EmptySample,
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CrawlError {
    fn from(e: std::io::Error) -> Self {
        CrawlError::Io(e.to_string())
    }
}

impl CrawlError {
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(
            self,
            CrawlError::Source {
                error: SourceError::BudgetExhausted { .. },
                ..
            }
        )
    }
}

pub type Result<T, E = CrawlError> = std::result::Result<T, E>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrawlState {
    pub(crate) found: BTreeSet<NodeId>,
    pub(crate) elite: BTreeSet<NodeId>,
    pub(crate) ordinary: BTreeSet<NodeId>,
    pub(crate) pending_elite: BTreeSet<NodeId>,
    pub(crate) pending_ordinary: BTreeSet<NodeId>,
    pub(crate) degrees: BTreeMap<NodeId, usize>,
    pub(crate) found_refs: BTreeMap<NodeId, usize>,
    pub(crate) edges: BTreeSet<(NodeId, NodeId)>,
    pub(crate) adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub(crate) phase_log: Vec<PhaseReport>,
    pub(crate) next_direction: PhaseDirection,
    pub(crate) budget: Vec<BudgetSnapshot>,
}

impl Default for PhaseDirection {
    fn default() -> Self {
        default_direction()
    }
}

impl CrawlState {
    /// Starting state. Nodes the source does not know are dropped and
    /// returned separately.
    pub fn initial<S: GraphSource + ?Sized>(
        source: &S,
        elite: impl IntoIterator<Item = NodeId>,
        ordinary: impl IntoIterator<Item = NodeId>,
        first_direction: PhaseDirection,
    ) -> Result<(Self, Vec<NodeId>)> {
        let mut state = CrawlState {
            next_direction: first_direction,
            ..CrawlState::default()
        };
        let mut skipped = Vec::new();
        let mut admit = |state: &mut CrawlState, n: NodeId, is_elite: bool| {
            if !state.degrees.contains_key(&n) {
                match source.lookup(n) {
                    Ok(info) => {
                        state.degrees.insert(n, info.total);
                    }
                    Err(_) => {
                        skipped.push(n);
                        return;
                    }
                }
            }
            state.found.insert(n);
            if is_elite {
                state.elite.insert(n);
                state.pending_elite.insert(n);
            } else {
                state.ordinary.insert(n);
                state.pending_ordinary.insert(n);
            }
        };
        for n in elite {
            admit(&mut state, n, true);
        }
        for n in ordinary {
            admit(&mut state, n, false);
        }
        if state.found.is_empty() {
            return Err(CrawlError::NoSeeds);
        }
        skipped.sort();
        skipped.dedup();
        state.refresh_refs();
        Ok((state, skipped))
    }

    /// Seeds of every party as elites, every annotated supporter as ordinary.
    pub fn from_seed_sets<S: GraphSource + ?Sized>(
        source: &S,
        db: &SeedDatabase,
        sets: &[SeedSet],
        first_direction: PhaseDirection,
    ) -> Result<(Self, Vec<NodeId>)> {
        CrawlState::initial(
            source,
            sets.iter().flat_map(|s| s.nodes()),
            db.annotated().map(|(n, _)| n),
            first_direction,
        )
    }

    /// State with every edge of `graph` observed and `found` as the found
    /// set. Scores are then exact neighborhood ratios.
    pub fn from_found(graph: &DirectedGraph, found: impl IntoIterator<Item = NodeId>) -> Self {
        let mut state = CrawlState::default();
        for u in graph.nodes() {
            state
                .degrees
                .insert(u, graph.degree(u, Direction::Total).expect("node of graph"));
        }
        for (u, v) in graph.edges() {
            state.observe(u, v);
        }
        state.found.extend(found);
        let mut refs = BTreeMap::new();
        for u in graph.nodes() {
            refs.insert(u, state.count_found_neighbors(u));
        }
        state.found_refs = refs;
        state
    }

    pub fn found(&self) -> &BTreeSet<NodeId> {
        &self.found
    }

    pub fn elite(&self) -> &BTreeSet<NodeId> {
        &self.elite
    }

    pub fn ordinary(&self) -> &BTreeSet<NodeId> {
        &self.ordinary
    }

    /// Nodes waiting to be expanded by a phase in `direction`.
    pub fn pending(&self, direction: PhaseDirection) -> &BTreeSet<NodeId> {
        match direction {
            PhaseDirection::TowardFriends => &self.pending_ordinary,
            PhaseDirection::TowardFollowers => &self.pending_elite,
        }
    }

    pub fn next_direction(&self) -> PhaseDirection {
        self.next_direction
    }

    pub fn phase_log(&self) -> &[PhaseReport] {
        &self.phase_log
    }

    pub fn budget(&self) -> &[BudgetSnapshot] {
        &self.budget
    }

    pub fn degree(&self, v: NodeId) -> Option<usize> {
        self.degrees.get(&v).copied()
    }

    pub fn found_refs(&self, v: NodeId) -> Option<usize> {
        self.found_refs.get(&v).copied()
    }

    /// Directed edges seen in fetched lists, including those leaving the
    /// found set.
    pub fn observed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn observed_edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn calls_made(&self) -> u64 {
        self.budget.iter().map(|b| b.calls_made).sum()
    }

    pub fn elapsed_seconds(&self) -> u64 {
        self.budget.iter().map(|b| b.now).max().unwrap_or(0)
    }

    fn observe(&mut self, u: NodeId, v: NodeId) {
        if self.edges.insert((u, v)) {
            self.adjacency.entry(u).or_default().insert(v);
            self.adjacency.entry(v).or_default().insert(u);
        }
    }

    fn count_found_neighbors(&self, v: NodeId) -> usize {
        self.adjacency
            .get(&v)
            .map_or(0, |ns| ns.iter().filter(|n| self.found.contains(n)).count())
    }

    pub(crate) fn refresh_refs(&mut self) {
        let refs = self
            .found
            .iter()
            .map(|&v| (v, self.count_found_neighbors(v)))
            .collect();
        self.found_refs = refs;
    }

    /// Mean reference score over found nodes with nonzero degree, and the
    /// number of zero-degree nodes left out.
    pub fn average_reference_score(&self) -> (f64, usize) {
        let (mut sum, mut n, mut zero) = (0.0, 0usize, 0usize);
        for &v in &self.found {
            match self.degrees.get(&v) {
                Some(&d) if d > 0 => {
                    sum += self.found_refs.get(&v).copied().unwrap_or(0) as f64 / d as f64;
                    n += 1;
                }
                _ => zero += 1,
            }
        }
        (if n > 0 { sum / n as f64 } else { 0.0 }, zero)
    }

    /// Found nodes and their observed edges, relabelled densely in host id
    /// order. The second value maps local ids back to host ids.
    pub fn induced_graph(&self) -> (DirectedGraph, Vec<NodeId>) {
        let hosts: Vec<NodeId> = self.found.iter().copied().collect();
        let local: BTreeMap<NodeId, NodeId> = hosts
            .iter()
            .enumerate()
            .map(|(i, &h)| (h, NodeId::from(i)))
            .collect();
        let mut g = DirectedGraph::with_nodes(hosts.len());
        for (u, v) in &self.edges {
            if let (Some(&a), Some(&b)) = (local.get(u), local.get(v)) {
                g.add_edge(a, b)
                    .expect("observed edges join distinct nodes");
            }
        }
        (g, hosts)
    }

    pub fn stop_reason(&self, config: &CrawlConfig) -> Option<StopReason> {
        if let Some(last) = self.phase_log.last() {
            if last.avg_reference_score >= config.target_score - config.tolerance {
                return Some(StopReason::TargetReached);
            }
        }
        if self.phase_log.len() >= config.max_phases {
            return Some(StopReason::MaxPhases);
        }
        if self.pending(self.next_direction).is_empty() {
            return Some(StopReason::FrontierExhausted);
        }
        None
    }
}

/// Found share of `v`'s neighbors. Zero-degree nodes score 0.
pub fn reference_score(v: NodeId, state: &CrawlState) -> Result<f64> {
    let d = state.degree(v).ok_or(CrawlError::UnknownNode(v))?;
    if d == 0 {
        return Ok(0.0);
    }
    let refs = state.found_refs(v).unwrap_or(0);
    Ok(refs as f64 / d as f64)
}

/// Mean in-context share of friends over a uniform sample of annotated
/// nodes, as judged by `in_context`. Nodes without friends are skipped.
pub fn target_reference_score<S: GraphSource + ?Sized>(
    db: &SeedDatabase,
    source: &S,
    budget: &mut SourceBudget,
    sample_size: usize,
    rng_seed: u64,
    retry: RetryPolicy,
    in_context: impl Fn(NodeId) -> bool,
) -> Result<f64> {
    let members: Vec<NodeId> = db.annotated().map(|(n, _)| n).collect();
    if sample_size == 0 {
        return Err(CrawlError::EmptySample);
    }
    if sample_size > members.len() {
        return Err(CrawlError::Config(format!(
            "sample of {sample_size} exceeds the {} annotated nodes",
            members.len()
        )));
    }
    let mut rng = crate::rng::seeded(rng_seed);
    let mut picks: Vec<usize> =
        rand::seq::index::sample(&mut rng, members.len(), sample_size).into_vec();
    picks.sort_unstable();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in picks {
        let node = members[i];
        let friends = budget
            .fetch_with_retry(source, node, Relation::Friends, retry)
            .map_err(|error| CrawlError::Source {
                phase: 0,
                node,
                error,
            })?;
        if friends.is_empty() {
            continue;
        }
        let inside = friends.iter().filter(|&&f| in_context(f)).count();
        sum += inside as f64 / friends.len() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(CrawlError::EmptySample);
    }
    Ok(sum / n as f64)
}

/// Drives phases over a source with a credential pool.
pub struct Crawler<'a, S: GraphSource + ?Sized> {
    source: &'a S,
    pool: CredentialPool,
    config: CrawlConfig,
    state: CrawlState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrawlOutcome {
    pub state: CrawlState,
    pub stop: StopReason,
}

impl<'a, S: GraphSource + ?Sized> Crawler<'a, S> {
    pub fn new(
        source: &'a S,
        pool: CredentialPool,
        config: CrawlConfig,
        mut state: CrawlState,
    ) -> Result<Self> {
        config.validate()?;
        state.budget = pool.snapshots();
        Ok(Crawler {
            source,
            pool,
            config,
            state,
        })
    }

    pub fn state(&self) -> &CrawlState {
        &self.state
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.config
    }

    pub fn into_state(self) -> CrawlState {
        self.state
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.state.stop_reason(&self.config)
    }

    /// Runs one phase in the pending direction. On error the state and the
    /// budgets are left as they were before the phase.
    pub fn step(&mut self) -> Result<PhaseReport> {
        let dir = self.state.next_direction;
        let phase_index = self.state.phase_log.len() + 1;
        let frontier: Vec<NodeId> = self.state.pending(dir).iter().copied().collect();
        let threshold = self.config.threshold(frontier.len());

        let mut pool = self.pool.clone();
        let batch = pool.parallel_fetch(self.source, &frontier, dir.relation(), self.config.retry);
        let mut lists = Vec::with_capacity(batch.results.len());
        for (node, r) in batch.results {
            match r {
                Ok(ids) => lists.push((node, ids)),
                Err(error) => {
                    return Err(CrawlError::Source {
                        phase: phase_index,
                        node,
                        error,
                    })
                }
            }
        }

        let mut hits: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (_, ids) in &lists {
            for &d in ids {
                if !self.state.found.contains(&d) {
                    *hits.entry(d).or_default() += 1;
                }
            }
        }
        let admitted: Vec<NodeId> = hits
            .iter()
            .filter(|&(_, &c)| c >= threshold)
            .map(|(&d, _)| d)
            .collect();
        let mut degrees = Vec::with_capacity(admitted.len());
        for &d in &admitted {
            let info = self.source.lookup(d).map_err(|error| CrawlError::Source {
                phase: phase_index,
                node: d,
                error,
            })?;
            degrees.push((d, info.total));
        }

        let st = &mut self.state;
        for (u, ids) in &lists {
            for &d in ids {
                match dir {
                    PhaseDirection::TowardFriends => st.observe(*u, d),
                    PhaseDirection::TowardFollowers => st.observe(d, *u),
                }
            }
        }
        match dir {
            PhaseDirection::TowardFriends => st.pending_ordinary.clear(),
            PhaseDirection::TowardFollowers => st.pending_elite.clear(),
        }
        for (d, deg) in degrees {
            st.found.insert(d);
            st.degrees.insert(d, deg);
            match dir {
                PhaseDirection::TowardFriends => {
                    st.elite.insert(d);
                    st.pending_elite.insert(d);
                }
                PhaseDirection::TowardFollowers => {
                    st.ordinary.insert(d);
                    st.pending_ordinary.insert(d);
                }
            }
        }
        st.refresh_refs();
        let (avg, zero) = st.average_reference_score();
        let report = PhaseReport {
            phase_index,
            direction: dir,
            nodes_in: frontier.len(),
            nodes_discovered: hits.len(),
            nodes_shortlisted: admitted.len(),
            threshold,
            found_total: st.found.len(),
            avg_reference_score: avg,
            zero_degree: zero,
            calls_spent: batch.calls,
            elapsed_seconds: pool.elapsed(),
        };
        st.phase_log.push(report.clone());
        st.next_direction = dir.flip();
        st.budget = pool.snapshots();
        self.pool = pool;
        Ok(report)
    }

    /// Runs phases until a stop rule fires, calling `on_phase` after each.
    pub fn run_with(
        mut self,
        mut on_phase: impl FnMut(&CrawlState, &PhaseReport) -> Result<()>,
    ) -> Result<CrawlOutcome> {
        loop {
            if let Some(stop) = self.stop_reason() {
                return Ok(CrawlOutcome {
                    state: self.state,
                    stop,
                });
            }
            let report = self.step()?;
            on_phase(&self.state, &report)?;
        }
    }

    pub fn run(self) -> Result<CrawlOutcome> {
        self.run_with(|_, _| Ok(()))
    }
}

/// Whole crawl from seed sets: the found graph and the final state.
pub fn run_crawl<S: GraphSource + ?Sized>(
    source: &S,
    db: &SeedDatabase,
    seeds: &[SeedSet],
    pool: CredentialPool,
    config: &CrawlConfig,
) -> Result<(DirectedGraph, Vec<NodeId>, CrawlOutcome)> {
    let (state, _) = CrawlState::from_seed_sets(source, db, seeds, config.first_direction)?;
    let outcome = Crawler::new(source, pool, config.clone(), state)?.run()?;
    let (graph, hosts) = outcome.state.induced_graph();
    Ok((graph, hosts, outcome))
}

/// Unfiltered breadth-first baseline: expands nodes in discovery order,
/// fetching both lists and admitting every neighbor, until `max_calls`
/// calls have been spent or nothing is left.
pub fn plain_bfs<S: GraphSource + ?Sized>(
    source: &S,
    start: impl IntoIterator<Item = NodeId>,
    budget: &mut SourceBudget,
    max_calls: u64,
    retry: RetryPolicy,
) -> Result<BTreeSet<NodeId>> {
    let mut found = BTreeSet::new();
    let mut queue = VecDeque::new();
    for n in start {
        if source.contains(n) && found.insert(n) {
            queue.push_back(n);
        }
    }
    let start_calls = budget.calls_made();
    'outer: while let Some(u) = queue.pop_front() {
        for rel in [Relation::Friends, Relation::Followers] {
            if budget.calls_made() - start_calls >= max_calls {
                break 'outer;
            }
            let ids = budget
                .fetch_with_retry(source, u, rel, retry)
                .map_err(|error| CrawlError::Source {
                    phase: 0,
                    node: u,
                    error,
                })?;
            for v in ids {
                if found.insert(v) {
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests;
