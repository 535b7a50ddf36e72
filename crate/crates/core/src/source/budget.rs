// SPDX-License-Identifier: Apache-2.0

use super::{GraphSource, NeighborPage, Relation, Result, SourceError, DEFAULT_PAGE_SIZE};
use crate::graph::NodeId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub page_size: usize,
    /// Calls allowed per window.
    pub window_limit: u64,
    /// Window length in virtual seconds.
    pub window_seconds: u64,
    /// Hard cap on calls for one credential.
    pub max_calls: Option<u64>,
}

impl Default for BudgetConfig {
    /// 15 calls per 15-minute window, 5000 ids per page.
    fn default() -> Self {
        BudgetConfig {
            page_size: DEFAULT_PAGE_SIZE,
            window_limit: 15,
            window_seconds: 900,
            max_calls: None,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.page_size == 0 {
            return Err("page_size must be at least 1".into());
        }
        if self.window_limit == 0 {
            return Err("window_limit must be at least 1".into());
        }
        if self.window_seconds == 0 {
            return Err("window_seconds must be at least 1".into());
        }
        Ok(())
    }

    /// Calls needed to page through `k` ids.
    pub fn fetch_cost(&self, k: usize) -> u64 {
        k.div_ceil(self.page_size).max(1) as u64
    }
}

/// Serializable counters of one credential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSnapshot {
    pub calls_made: u64,
    pub window_calls: u64,
    pub window_start: u64,
    pub now: u64,
    pub waits: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Rate-limit waits tolerated per fetch; `None` waits forever.
    pub max_waits: Option<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_waits: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Partial {
    node: NodeId,
    relation: Relation,
    ids: Vec<NodeId>,
    cursor: usize,
}

/// Call accounting and fixed-window rate limiting for one credential.
///
/// Time is virtual: calls are instantaneous and the clock moves only when
/// the caller waits out a rate limit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceBudget {
    config: BudgetConfig,
    state: BudgetSnapshot,
    partial: Option<Partial>,
}

impl SourceBudget {
    pub fn new(config: BudgetConfig) -> Self {
        SourceBudget::from_snapshot(config, BudgetSnapshot::default())
    }

    pub fn from_snapshot(config: BudgetConfig, state: BudgetSnapshot) -> Self {
        SourceBudget {
            config,
            state,
            partial: None,
        }
    }

    pub fn config(&self) -> &BudgetConfig {
        &self.config
    }

    pub fn snapshot(&self) -> BudgetSnapshot {
        self.state
    }

    pub fn calls_made(&self) -> u64 {
        self.state.calls_made
    }

    /// Virtual seconds elapsed.
    pub fn now(&self) -> u64 {
        self.state.now
    }

    fn charge(&mut self) -> Result<()> {
        if self
            .config
            .max_calls
            .is_some_and(|cap| self.state.calls_made >= cap)
        {
            return Err(SourceError::BudgetExhausted {
                calls: self.state.calls_made,
            });
        }
        if self.state.window_calls >= self.config.window_limit {
            return Err(SourceError::RateLimited {
                wait_seconds: self.state.window_start + self.config.window_seconds - self.state.now,
            });
        }
        self.state.calls_made += 1;
        self.state.window_calls += 1;
        Ok(())
    }

    /// Advances the virtual clock, opening a new window if one has passed.
    pub fn wait(&mut self, seconds: u64) {
        self.state.now += seconds;
        self.state.waits += 1;
        let len = self.config.window_seconds;
        let elapsed = self.state.now - self.state.window_start;
        if elapsed >= len {
            self.state.window_start += (elapsed / len) * len;
            self.state.window_calls = 0;
        }
    }

    /// One charged page request.
    pub fn fetch_page<S: GraphSource + ?Sized>(
        &mut self,
        source: &S,
        node: NodeId,
        relation: Relation,
        cursor: usize,
    ) -> Result<NeighborPage> {
        if !source.contains(node) {
            return Err(SourceError::UnknownNode(node));
        }
        self.charge()?;
        source.page(node, relation, cursor, self.config.page_size)
    }

    /// Complete neighbor list. A rate limit mid-way keeps the pages already
    /// paid for, so repeating the same call after waiting continues from
    /// the last cursor and the total charge stays `ceil(k / page_size)`.
    pub fn fetch<S: GraphSource + ?Sized>(
        &mut self,
        source: &S,
        node: NodeId,
        relation: Relation,
    ) -> Result<Vec<NodeId>> {
        let mut partial = match self.partial.take() {
            Some(p) if p.node == node && p.relation == relation => p,
            _ => Partial {
                node,
                relation,
                ids: Vec::new(),
                cursor: 0,
            },
        };
        loop {
            match self.fetch_page(source, node, relation, partial.cursor) {
                Ok(page) => {
                    partial.ids.extend(page.ids);
                    match page.next_cursor {
                        Some(c) => partial.cursor = c,
                        None => return Ok(partial.ids),
                    }
                }
                Err(e) => {
                    if e.is_retryable() {
                        self.partial = Some(partial);
                    }
                    return Err(e);
                }
            }
        }
    }

    pub fn fetch_friends<S: GraphSource + ?Sized>(
        &mut self,
        source: &S,
        node: NodeId,
    ) -> Result<Vec<NodeId>> {
        self.fetch(source, node, Relation::Friends)
    }

    pub fn fetch_followers<S: GraphSource + ?Sized>(
        &mut self,
        source: &S,
        node: NodeId,
    ) -> Result<Vec<NodeId>> {
        self.fetch(source, node, Relation::Followers)
    }

    /// [`fetch`](Self::fetch), waiting out rate limits as `policy` allows.
    pub fn fetch_with_retry<S: GraphSource + ?Sized>(
        &mut self,
        source: &S,
        node: NodeId,
        relation: Relation,
        policy: RetryPolicy,
    ) -> Result<Vec<NodeId>> {
        let mut waits = 0u64;
        loop {
            match self.fetch(source, node, relation) {
                Err(SourceError::RateLimited { wait_seconds }) => {
                    if policy.max_waits.is_some_and(|m| waits >= m) {
                        self.partial = None;
                        return Err(SourceError::BudgetExhausted {
                            calls: self.state.calls_made,
                        });
                    }
                    self.wait(wait_seconds);
                    waits += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;
    use crate::source::GraphBackedSource;

    fn fan(out: u32) -> GraphBackedSource {
        let mut g = DirectedGraph::with_nodes(out as usize + 1);
        for v in 1..=out {
            g.add_edge(NodeId(0), NodeId(v)).unwrap();
        }
        GraphBackedSource::from_graph(g)
    }

    fn cfg(page_size: usize, window_limit: u64) -> BudgetConfig {
        BudgetConfig {
            page_size,
            window_limit,
            window_seconds: 900,
            max_calls: None,
        }
    }

    #[test]
    fn small_list_costs_one_call() {
        let src = fan(3);
        let mut b = SourceBudget::new(cfg(5000, 15));
        assert_eq!(b.fetch_friends(&src, NodeId(0)).unwrap().len(), 3);
        assert_eq!(b.calls_made(), 1);
    }

    #[test]
    fn ceiling_pagination() {
        let src = fan(12_000);
        let mut b = SourceBudget::new(cfg(5000, 15));
        assert_eq!(b.fetch_friends(&src, NodeId(0)).unwrap().len(), 12_000);
        assert_eq!(b.calls_made(), 3);
        assert_eq!(b.config().fetch_cost(12_000), 3);
        assert_eq!(b.config().fetch_cost(0), 1);
        assert_eq!(b.config().fetch_cost(5000), 1);
    }

    #[test]
    fn hub_followers_and_empty_lists() {
        let src = fan(9);
        let mut b = SourceBudget::new(cfg(4, 100));
        // node 0 has no followers
        assert!(b.fetch_followers(&src, NodeId(0)).unwrap().is_empty());
        assert_eq!(b.calls_made(), 1);
        let first = b.fetch_friends(&src, NodeId(0)).unwrap();
        let second = b.fetch_friends(&src, NodeId(0)).unwrap();
        assert_eq!(first, second);
        assert_eq!(b.calls_made(), 1 + 3 + 3);
    }

    #[test]
    fn unknown_node_is_not_charged() {
        let src = fan(1);
        let mut b = SourceBudget::new(cfg(10, 1));
        assert_eq!(
            b.fetch_friends(&src, NodeId(50)),
            Err(SourceError::UnknownNode(NodeId(50)))
        );
        assert_eq!(b.calls_made(), 0);
    }

    #[test]
    fn window_exhaustion_then_retry() {
        let src = fan(3);
        let mut b = SourceBudget::new(cfg(5000, 2));
        b.fetch_friends(&src, NodeId(0)).unwrap();
        b.fetch_friends(&src, NodeId(1)).unwrap();
        let err = b.fetch_friends(&src, NodeId(0)).unwrap_err();
        assert_eq!(err, SourceError::RateLimited { wait_seconds: 900 });
        assert_eq!(b.calls_made(), 2);
        b.wait(900);
        assert_eq!(b.now(), 900);
        assert_eq!(b.fetch_friends(&src, NodeId(0)).unwrap().len(), 3);
        assert_eq!(b.calls_made(), 3);
    }

    #[test]
    fn interrupted_fetch_resumes_from_cursor() {
        let src = fan(10);
        let mut b = SourceBudget::new(cfg(3, 2));
        assert!(b.fetch_friends(&src, NodeId(0)).unwrap_err().is_retryable());
        assert_eq!(b.calls_made(), 2);
        b.wait(900);
        // four pages in total: the two already paid for are not refetched
        let ids = b.fetch_friends(&src, NodeId(0)).unwrap();
        assert_eq!(ids, src.graph().friends(NodeId(0)).unwrap());
        assert_eq!(b.calls_made(), 4);
        assert_eq!(b.now(), 900);
    }

    #[test]
    fn retry_policy_waits_in_virtual_time() {
        let src = fan(10);
        let mut b = SourceBudget::new(cfg(1, 4));
        let ids = b
            .fetch_with_retry(&src, NodeId(0), Relation::Friends, RetryPolicy::default())
            .unwrap();
        assert_eq!(ids.len(), 10);
        assert_eq!(b.calls_made(), 10);
        // 10 calls at 4 per window: two full windows waited out
        assert_eq!(b.now(), 1800);
        let mut strict = SourceBudget::new(cfg(1, 4));
        let err = strict
            .fetch_with_retry(
                &src,
                NodeId(0),
                Relation::Friends,
                RetryPolicy { max_waits: Some(0) },
            )
            .unwrap_err();
        assert_eq!(err, SourceError::BudgetExhausted { calls: 4 });
    }

    #[test]
    fn hard_cap() {
        let src = fan(3);
        let mut b = SourceBudget::new(BudgetConfig {
            max_calls: Some(1),
            ..cfg(5000, 10)
        });
        b.fetch_friends(&src, NodeId(0)).unwrap();
        assert_eq!(
            b.fetch_friends(&src, NodeId(0)),
            Err(SourceError::BudgetExhausted { calls: 1 })
        );
    }

    #[test]
    fn long_wait_skips_whole_windows() {
        let mut b = SourceBudget::new(cfg(10, 1));
        b.state.window_calls = 1;
        b.wait(2000);
        assert_eq!(b.snapshot().window_start, 1800);
        assert_eq!(b.snapshot().window_calls, 0);
    }
}
