// SPDX-License-Identifier: Apache-2.0

use super::{
    BudgetConfig, BudgetSnapshot, GraphSource, Relation, Result, RetryPolicy, SourceBudget,
};
use crate::graph::NodeId;
use std::collections::BTreeMap;

/// Independently budgeted credentials, served by up to `workers` threads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialPool {
    credentials: Vec<SourceBudget>,
    workers: usize,
}

/// Results of one [`CredentialPool::parallel_fetch`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchBatch {
    pub results: BTreeMap<NodeId, Result<Vec<NodeId>>>,
    pub calls: u64,
}

impl CredentialPool {
    pub fn new(config: BudgetConfig, credentials: usize) -> Self {
        assert!(credentials > 0, "a pool needs at least one credential");
        CredentialPool {
            credentials: vec![SourceBudget::new(config); credentials],
            workers: credentials,
        }
    }

    /// Caps the thread count. Each credential's call sequence, and so every
    /// result, is the same for any cap.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn from_snapshots(config: BudgetConfig, snapshots: &[BudgetSnapshot]) -> Self {
        assert!(
            !snapshots.is_empty(),
            "a pool needs at least one credential"
        );
        CredentialPool {
            credentials: snapshots
                .iter()
                .map(|s| SourceBudget::from_snapshot(config, *s))
                .collect(),
            workers: snapshots.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.credentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.credentials.is_empty()
    }

    pub fn credential(&mut self, i: usize) -> &mut SourceBudget {
        &mut self.credentials[i]
    }

    pub fn snapshots(&self) -> Vec<BudgetSnapshot> {
        self.credentials
            .iter()
            .map(SourceBudget::snapshot)
            .collect()
    }

    pub fn total_calls(&self) -> u64 {
        self.credentials.iter().map(SourceBudget::calls_made).sum()
    }

    /// Virtual wall-clock: credentials run side by side, so the pool is as
    /// late as its slowest member.
    pub fn elapsed(&self) -> u64 {
        self.credentials
            .iter()
            .map(SourceBudget::now)
            .max()
            .unwrap_or(0)
    }

    /// Fetches `relation` for every node, node `i` going to credential
    /// `i % len`. A failing node does not stop the others.
    pub fn parallel_fetch<S: GraphSource + ?Sized>(
        &mut self,
        source: &S,
        nodes: &[NodeId],
        relation: Relation,
        policy: RetryPolicy,
    ) -> FetchBatch {
        let before = self.total_calls();
        let w = self.credentials.len();
        let mut shards: Vec<Vec<NodeId>> = vec![Vec::new(); w];
        for (i, &n) in nodes.iter().enumerate() {
            shards[i % w].push(n);
        }
        let run = |cred: &mut SourceBudget, shard: &[NodeId]| {
            shard
                .iter()
                .map(|&n| (n, cred.fetch_with_retry(source, n, relation, policy)))
                .collect::<Vec<_>>()
        };
        let threads = self.workers.min(w);
        let parts: Vec<Vec<(NodeId, Result<Vec<NodeId>>)>> = if threads == 1 {
            self.credentials
                .iter_mut()
                .zip(&shards)
                .map(|(cred, shard)| run(cred, shard))
                .collect()
        } else {
            let per_thread = w.div_ceil(threads);
            let run = &run;
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .credentials
                    .chunks_mut(per_thread)
                    .zip(shards.chunks(per_thread))
                    .map(|(creds, shards)| {
                        s.spawn(move || {
                            creds
                                .iter_mut()
                                .zip(shards)
                                .flat_map(|(cred, shard)| run(cred, shard))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("fetch worker panicked"))
                    .collect()
            })
        };
        FetchBatch {
            results: parts.into_iter().flatten().collect(),
            calls: self.total_calls() - before,
        }
    }
}
