// SPDX-License-Identifier: Apache-2.0

//! Repeated Louvain on the planted context, scored against the party blocks.

use context_crawl::community::{best_match_agreement, louvain_repeated};
use context_crawl::graph::{NodeId, UndirectedView};
use context_crawl::synth::{generate, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SynthParams {
        bg_size: 0,
        hub_count: 0,
        ..SynthParams::default()
    };
    let (graph, truth) = generate(&params)?;
    let view = UndirectedView::new(&graph);
    let (part, stats) = louvain_repeated(&view, 20, 5)?;

    println!(
        "best of {} runs: run {}, Q = {:.4}",
        stats.runs,
        stats.best_run,
        part.modularity()
    );
    println!(
        "mean Q {:.4}, spread {:.2e}",
        stats.mean_modularity,
        stats.spread()
    );
    println!("community sizes {:?}", part.sizes());

    let labels: Vec<usize> = (0..graph.node_count())
        .map(|i| truth.party_of(NodeId::from(i)).unwrap_or(usize::MAX))
        .collect();
    println!(
        "agreement with parties {:.3}",
        best_match_agreement(part.assignment(), &labels)
    );
    Ok(())
}
