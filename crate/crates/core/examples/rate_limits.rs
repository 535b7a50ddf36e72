// SPDX-License-Identifier: Apache-2.0

//! Virtual-time rate limiting: one credential waiting out its windows, then
//! a pool of four sharing the same work.

use context_crawl::graph::{DirectedGraph, NodeId};
use context_crawl::source::{
    BudgetConfig, CredentialPool, GraphBackedSource, Relation, RetryPolicy, SourceBudget,
    SourceError,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut g = DirectedGraph::with_nodes(200);
    for u in 0..200u32 {
        for k in 1..=30 {
            g.add_edge(NodeId(u), NodeId((u + k * 7) % 200))?;
        }
    }
    let source = GraphBackedSource::from_graph(g);
    let config = BudgetConfig {
        page_size: 10,
        window_limit: 15,
        window_seconds: 900,
        max_calls: None,
    };
    println!(
        "30 friends at 10 per page cost {} calls",
        config.fetch_cost(30)
    );

    let mut one = SourceBudget::new(config);
    for u in 0..20 {
        one.fetch_with_retry(
            &source,
            NodeId(u),
            Relation::Friends,
            RetryPolicy::default(),
        )?;
    }
    let s = one.snapshot();
    println!(
        "one credential: {} calls, {} waits, {} virtual s",
        s.calls_made, s.waits, s.now
    );

    let impatient = one.fetch_with_retry(
        &source,
        NodeId(20),
        Relation::Friends,
        RetryPolicy { max_waits: Some(0) },
    );
    if let Err(SourceError::RateLimited { wait_seconds }) = impatient {
        println!("with no waits allowed the next fetch fails; window reopens in {wait_seconds} s");
    }

    let mut pool = CredentialPool::new(config, 4).with_workers(4);
    let nodes: Vec<NodeId> = (0..20).map(NodeId).collect();
    let batch = pool.parallel_fetch(&source, &nodes, Relation::Friends, RetryPolicy::default());
    println!(
        "pool of {}: {} calls, {} virtual s, {} fetches ok",
        pool.len(),
        pool.total_calls(),
        pool.elapsed(),
        batch.results.values().filter(|r| r.is_ok()).count()
    );

    let mut capped = SourceBudget::new(BudgetConfig {
        max_calls: Some(5),
        ..config
    });
    let fetched = (0..5)
        .map(|u| {
            capped.fetch_with_retry(
                &source,
                NodeId(u),
                Relation::Friends,
                RetryPolicy::default(),
            )
        })
        .take_while(Result::is_ok)
        .count();
    println!("capped at 5 calls: {fetched} lists fetched before the budget ran out");
    Ok(())
}
