// SPDX-License-Identifier: Apache-2.0

//! Seed selection on a graph where a few hubs are followed by everyone:
//! greedy cover alone picks them, the exclusivity filter throws them out.

use context_crawl::seeds::{build_candidate_index, greedy_cover, select_all_seeds, StopRule};
use context_crawl::synth::{generate, sample_annotated_seeds, NodeLabel, PartySpec, SynthParams};
use std::collections::BTreeSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SynthParams {
        parties: (0..4)
            .map(|i| PartySpec {
                label: format!("p{i}"),
                size: 150,
            })
            .collect(),
        bg_size: 1_500,
        hub_count: 4,
        hub_attach: 0.35,
        rng_seed: 3,
        ..SynthParams::default()
    };
    let (graph, truth) = generate(&params)?;
    let mut db = sample_annotated_seeds(&truth, 60, 9)?;
    db.populate_from_graph(&graph);
    let index = build_candidate_index(&db)?;
    let stop = StopRule::coverage(0.8);
    let is_hub = |n| truth.label(n) == NodeLabel::Hub;

    for p in 0..db.party_count() {
        let raw = greedy_cover(&db, &index, p, stop, &BTreeSet::new())?;
        let hubs = raw.picks.iter().filter(|&&(n, _)| is_hub(n)).count();
        println!(
            "{}: greedy alone needs {} picks, {hubs} of them hubs",
            db.parties()[p],
            raw.picks.len()
        );
    }
    for set in select_all_seeds(&db, &index, 0.8, stop)? {
        let hubs = set.nodes().filter(|&n| is_hub(n)).count();
        println!(
            "{}: {} seeds, coverage {:.2}, {} rejected, {hubs} hubs kept",
            set.party,
            set.seeds.len(),
            set.coverage,
            set.rejected.len()
        );
    }
    Ok(())
}
