// SPDX-License-Identifier: Apache-2.0

//! Back-and-forth crawl from selected seeds, set against a plain BFS that
//! is given the same number of calls.

use context_crawl::crawl::{plain_bfs, run_crawl, CrawlConfig};
use context_crawl::seeds::{build_candidate_index, select_all_seeds, StopRule};
use context_crawl::source::{
    BudgetConfig, CredentialPool, GraphBackedSource, RetryPolicy, SourceBudget,
};
use context_crawl::synth::{generate, sample_annotated_seeds, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SynthParams {
        bg_size: 4_000,
        ..SynthParams::default()
    };
    let (graph, truth) = generate(&params)?;
    let mut db = sample_annotated_seeds(&truth, 100, 1)?;
    db.populate_from_graph(&graph);
    let seeds = select_all_seeds(
        &db,
        &build_candidate_index(&db)?,
        0.8,
        StopRule::coverage(0.8),
    )?;
    let source = GraphBackedSource::from_graph(graph);

    let config = CrawlConfig {
        n_target_candidates: 30,
        ..CrawlConfig::default()
    };
    let pool = CredentialPool::new(BudgetConfig::default(), 4);
    let (sub, _, outcome) = run_crawl(&source, &db, &seeds, pool, &config)?;
    for r in outcome.state.phase_log() {
        println!(
            "phase {} {:?}: {} in, {} shortlisted, {} found, score {:.3}",
            r.phase_index,
            r.direction,
            r.nodes_in,
            r.nodes_shortlisted,
            r.found_total,
            r.avg_reference_score
        );
    }
    let found = outcome.state.found();
    let hit = found.iter().filter(|&&n| truth.is_context(n)).count();
    println!(
        "stopped ({:?}) with {} nodes, {} edges; recall {:.3}, precision {:.3}",
        outcome.stop,
        sub.node_count(),
        sub.edge_count(),
        hit as f64 / truth.context_size() as f64,
        hit as f64 / found.len() as f64
    );
    let calls = outcome.state.calls_made();
    println!(
        "{calls} calls, {} virtual hours",
        outcome.state.elapsed_seconds() / 3600
    );

    let mut budget = SourceBudget::new(BudgetConfig::default());
    let start = seeds.iter().flat_map(|s| s.nodes());
    let bfs = plain_bfs(&source, start, &mut budget, calls, RetryPolicy::default())?;
    let bfs_hit = bfs.iter().filter(|&&n| truth.is_context(n)).count();
    println!(
        "plain BFS with {calls} calls: {} nodes, precision {:.3}",
        bfs.len(),
        bfs_hit as f64 / bfs.len() as f64
    );
    Ok(())
}
