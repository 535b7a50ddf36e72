// SPDX-License-Identifier: Apache-2.0

//! Plants a small five-party context in a background population and prints
//! what came out.

use context_crawl::graph::{write_edge_list, Direction, NodeTable, UndirectedView};
use context_crawl::synth::{density_report, generate, NodeLabel, PartySpec, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SynthParams {
        parties: ["fi", "ps", "em", "lr", "fn"]
            .into_iter()
            .map(|label| PartySpec {
                label: label.into(),
                size: 120,
            })
            .collect(),
        bg_size: 2_000,
        hub_count: 3,
        rng_seed: 42,
        ..SynthParams::default()
    };
    let (graph, truth) = generate(&params)?;
    let d = density_report(&graph, &truth);
    println!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    println!(
        "context density {:.4}, context-background {:.5}",
        d.context, d.context_background
    );

    let hubs: Vec<_> = graph
        .nodes()
        .filter(|&n| truth.label(n) == NodeLabel::Hub)
        .collect();
    for h in hubs {
        println!("hub {h}: {} followers", graph.degree(h, Direction::In)?);
    }
    println!(
        "undirected edges: {}",
        UndirectedView::new(&graph).edge_count()
    );

    let mut head = Vec::new();
    write_edge_list(&mut head, &graph, &NodeTable::identity(graph.node_count()))?;
    for line in String::from_utf8(head)?.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
