// SPDX-License-Identifier: Apache-2.0

//! From a crawled subgraph to party affiliations: community distribution of
//! the annotated supporters, embeddedness, and a softmax classifier trained
//! on half of them.

use context_crawl::affiliation::{
    cluster_distribution, community_mean, embeddedness_all, featurize, flag_irrelevant, predict,
    train, TrainParams,
};
use context_crawl::community::louvain_repeated;
use context_crawl::crawl::{reference_score, run_crawl, CrawlConfig};
use context_crawl::graph::{NodeId, UndirectedView};
use context_crawl::seeds::{build_candidate_index, select_all_seeds, StopRule};
use context_crawl::source::{BudgetConfig, CredentialPool, GraphBackedSource};
use context_crawl::synth::{generate, sample_annotated_seeds, SynthParams};
use std::collections::HashMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (graph, truth) = generate(&SynthParams {
        bg_size: 3_000,
        ..SynthParams::default()
    })?;
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
    let (sub, hosts, outcome) = run_crawl(&source, &db, &seeds, pool, &config)?;

    let view = UndirectedView::new(&sub);
    let (part, _) = louvain_repeated(&view, 10, 2)?;
    let local: HashMap<NodeId, NodeId> = hosts
        .iter()
        .enumerate()
        .map(|(i, &h)| (h, NodeId::from(i)))
        .collect();

    let dist = cluster_distribution(&part, &db, |n| local.get(&n).copied());
    let refs: Vec<f64> = hosts
        .iter()
        .map(|&h| reference_score(h, &outcome.state))
        .collect::<Result<_, _>>()?;
    let flags = flag_irrelevant(&dist, &community_mean(&part, &refs), 0.1);
    println!("community  {}", dist.parties.join("  "));
    for (c, row) in dist.table.iter().enumerate() {
        println!(
            "{c:>9}  {row:?}{}",
            if flags[c] { "  (irrelevant)" } else { "" }
        );
    }
    println!("not crawled {:?}", dist.not_crawled);

    let supporters: Vec<Vec<NodeId>> = (0..db.party_count())
        .map(|p| {
            db.members(p)
                .iter()
                .filter_map(|n| local.get(n).copied())
                .collect()
        })
        .collect();
    let emb = embeddedness_all(&view, &refs, &dist.parties, &supporters)?;
    let k = part.n_communities();
    let labelled: Vec<(NodeId, usize)> = db
        .annotated()
        .filter_map(|(n, p)| local.get(&n).map(|&l| (l, p)))
        .collect();
    let x = |l: NodeId| featurize(part.community_of(l), k, &emb[l.index()]);
    let (fit, held): (Vec<_>, Vec<_>) = labelled.iter().enumerate().partition(|(i, _)| i % 2 == 0);

    let names: Vec<String> = (0..k)
        .map(|c| format!("c{c}"))
        .chain(dist.parties.iter().map(|p| format!("emb_{p}")))
        .chain(["bias".into()])
        .collect();
    let model = train(
        &fit.iter().map(|(_, (l, _))| x(*l)).collect::<Vec<_>>(),
        &fit.iter().map(|(_, (_, p))| *p).collect::<Vec<_>>(),
        dist.parties.clone(),
        names,
        &TrainParams::default(),
    )?;
    let mut right = 0;
    for (_, (l, p)) in &held {
        right += (predict(&model, &x(*l))?.party == *p) as usize;
    }
    println!(
        "held-out accuracy {:.3} on {} supporters",
        right as f64 / held.len() as f64,
        held.len()
    );

    let unlabelled = (0..sub.node_count())
        .map(NodeId::from)
        .find(|n| !labelled.iter().any(|(l, _)| l == n));
    if let Some(n) = unlabelled {
        let pred = predict(&model, &x(n))?;
        println!(
            "an unannotated account leans {} ({:.2})",
            dist.parties[pred.party], pred.confidence
        );
    }
    Ok(())
}
