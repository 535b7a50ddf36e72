// SPDX-License-Identifier: Apache-2.0

use super::*;
use crate::seeds::{build_candidate_index, select_all_seeds, StopRule};
use crate::source::{BudgetConfig, GraphBackedSource};
use crate::synth::{self, GroundTruth, PartySpec, SynthParams};
use proptest::prelude::*;
use rand::Rng;

fn budget() -> BudgetConfig {
    BudgetConfig {
        page_size: 50,
        window_limit: 15,
        window_seconds: 900,
        max_calls: None,
    }
}

fn pool(w: usize) -> CredentialPool {
    CredentialPool::new(budget(), w)
}

fn graph_of(n: usize, edges: &[(u32, u32)]) -> DirectedGraph {
    let mut g = DirectedGraph::with_nodes(n);
    for &(u, v) in edges {
        g.add_edge(NodeId(u), NodeId(v)).unwrap();
    }
    g
}

fn ids(v: impl IntoIterator<Item = u32>) -> Vec<NodeId> {
    v.into_iter().map(NodeId).collect()
}

fn small_params(seed: u64) -> SynthParams {
    SynthParams {
        parties: ["a", "b", "c"]
            .iter()
            .map(|l| PartySpec {
                label: l.to_string(),
                size: 60,
            })
            .collect(),
        p_intra: 0.3,
        p_inter: 0.02,
        p_context_bg: 0.002,
        p_background: 0.01,
        bg_size: 600,
        hub_count: 2,
        hub_attach: 0.02,
        rng_seed: seed,
    }
}

struct Fixture {
    source: GraphBackedSource,
    truth: GroundTruth,
    db: SeedDatabase,
    seeds: Vec<SeedSet>,
}

fn fixture(seed: u64) -> Fixture {
    let (g, truth) = synth::generate(&small_params(seed)).unwrap();
    let mut db = synth::sample_annotated_seeds(&truth, 20, seed).unwrap();
    db.populate_from_graph(&g);
    let index = build_candidate_index(&db).unwrap();
    let seeds = select_all_seeds(&db, &index, 0.8, StopRule::coverage(0.8)).unwrap();
    Fixture {
        source: GraphBackedSource::from_graph(g),
        truth,
        db,
        seeds,
    }
}

fn small_config() -> CrawlConfig {
    CrawlConfig {
        n_target_candidates: 15,
        max_phases: 6,
        ..CrawlConfig::default()
    }
}

fn crawl(f: &Fixture, w: usize, config: &CrawlConfig) -> CrawlOutcome {
    run_crawl(&f.source, &f.db, &f.seeds, pool(w), config)
        .unwrap()
        .2
}

#[test]
fn score_arithmetic() {
    // node 0 has neighbors 1..=4, two of them found
    let g = graph_of(5, &[(0, 1), (2, 0), (0, 3), (4, 0)]);
    let s = CrawlState::from_found(&g, ids([0, 1, 2]));
    assert_eq!(reference_score(NodeId(0), &s).unwrap(), 0.5);
    let all = CrawlState::from_found(&g, ids(0..5));
    assert_eq!(reference_score(NodeId(0), &all).unwrap(), 1.0);
    let lonely = CrawlState::from_found(&graph_of(2, &[]), ids([0]));
    assert_eq!(reference_score(NodeId(0), &lonely).unwrap(), 0.0);
    assert!(matches!(
        reference_score(NodeId(9), &s),
        Err(CrawlError::UnknownNode(_))
    ));
}

proptest! {
    #[test]
    fn score_matches_set_intersection(seed in any::<u64>(), density in 0.02f64..0.3) {
        let mut rng = crate::rng::seeded(seed);
        let n = 50u32;
        let mut g = DirectedGraph::with_nodes(n as usize);
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(density) {
                    g.add_edge(NodeId(u), NodeId(v)).unwrap();
                }
            }
        }
        let found: BTreeSet<NodeId> = (0..n).filter(|_| rng.random_bool(0.4)).map(NodeId).collect();
        let s = CrawlState::from_found(&g, found.iter().copied());
        for v in 0..n {
            let hood: BTreeSet<NodeId> = (0..n)
                .map(NodeId)
                .filter(|&w| g.has_edge(NodeId(v), w) || g.has_edge(w, NodeId(v)))
                .collect();
            let expected = if hood.is_empty() {
                0.0
            } else {
                hood.intersection(&found).count() as f64 / hood.len() as f64
            };
            prop_assert_eq!(reference_score(NodeId(v), &s).unwrap(), expected);
        }
    }
}

#[test]
fn friends_threshold_from_frontier_share() {
    // ordinary 0..10; node 20 is followed by two of them, node 21 by one
    let g = graph_of(31, &[(0, 20), (1, 20), (2, 21)]);
    let src = GraphBackedSource::from_graph(g);
    let (state, _) =
        CrawlState::initial(&src, [], ids(0..10), PhaseDirection::TowardFriends).unwrap();
    let mut c = Crawler::new(&src, pool(1), CrawlConfig::default(), state).unwrap();
    let r = c.step().unwrap();
    assert_eq!(r.threshold, 2);
    assert_eq!(r.nodes_discovered, 2);
    assert_eq!(r.nodes_shortlisted, 1);
    assert!(c.state().found().contains(&NodeId(20)));
    assert!(!c.state().found().contains(&NodeId(21)));
    assert!(c.state().elite().contains(&NodeId(20)));
}

#[test]
fn hub_followed_by_background_only_is_excluded() {
    // crawl nodes 0..10 and a genuine candidate 11 followed by five of them;
    // hub 12 followed by every background node 13..60 but one crawl node
    let mut edges: Vec<(u32, u32)> = (0..5).map(|u| (u, 11)).collect();
    edges.push((0, 12));
    edges.extend((13..60).map(|b| (b, 12)));
    let src = GraphBackedSource::from_graph(graph_of(60, &edges));
    let (state, _) =
        CrawlState::initial(&src, [], ids(0..10), PhaseDirection::TowardFriends).unwrap();
    let mut c = Crawler::new(&src, pool(1), CrawlConfig::default(), state).unwrap();
    c.step().unwrap();
    assert!(c.state().found().contains(&NodeId(11)));
    assert!(!c.state().found().contains(&NodeId(12)));
}

#[test]
fn followers_threshold_from_elite_share() {
    // elites 0..15, threshold 3: node 20 follows three, 21 follows two,
    // background 22 follows none
    let mut edges: Vec<(u32, u32)> = (0..3).map(|e| (20, e)).collect();
    edges.extend((0..2).map(|e| (21, e)));
    edges.push((22, 23));
    let src = GraphBackedSource::from_graph(graph_of(24, &edges));
    let (state, _) =
        CrawlState::initial(&src, ids(0..15), [], PhaseDirection::TowardFollowers).unwrap();
    let mut c = Crawler::new(&src, pool(1), CrawlConfig::default(), state).unwrap();
    let r = c.step().unwrap();
    assert_eq!(r.threshold, 3);
    assert_eq!(r.direction, PhaseDirection::TowardFollowers);
    let found = c.state().found();
    assert!(found.contains(&NodeId(20)) && !found.contains(&NodeId(21)));
    assert!(!found.contains(&NodeId(22)));
    assert!(c.state().ordinary().contains(&NodeId(20)));
}

#[test]
fn override_replaces_share() {
    let cfg = CrawlConfig {
        shortlist_override: Some(10),
        ..CrawlConfig::default()
    };
    assert_eq!(cfg.threshold(1000), 10);
    assert_eq!(CrawlConfig::default().threshold(1000), 200);
    assert_eq!(CrawlConfig::default().threshold(1), 1);
    assert_eq!(CrawlConfig::default().threshold(0), 1);
}

#[test]
fn admitted_sets_match_full_graph_oracle() {
    let f = fixture(11);
    let g = f.source.graph();
    let config = small_config();
    let (state, _) =
        CrawlState::from_seed_sets(&f.source, &f.db, &f.seeds, config.first_direction).unwrap();
    let mut c = Crawler::new(&f.source, pool(2), config.clone(), state).unwrap();
    for _ in 0..3 {
        let before = c.state().clone();
        let dir = before.next_direction();
        let frontier = before.pending(dir).clone();
        let t = config.threshold(frontier.len());
        let expected: BTreeSet<NodeId> = g
            .nodes()
            .filter(|d| !before.found().contains(d))
            .filter(|&d| {
                let count = frontier
                    .iter()
                    .filter(|&&u| match dir {
                        PhaseDirection::TowardFriends => g.has_edge(u, d),
                        PhaseDirection::TowardFollowers => g.has_edge(d, u),
                    })
                    .count();
                count >= t
            })
            .collect();
        c.step().unwrap();
        let admitted: BTreeSet<NodeId> = c
            .state()
            .found()
            .difference(before.found())
            .copied()
            .collect();
        assert_eq!(admitted, expected);
        assert!(!expected.is_empty());
    }
}

#[test]
fn closed_community_saturates_fast() {
    let n = 20u32;
    let edges: Vec<(u32, u32)> = (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect();
    let src = GraphBackedSource::from_graph(graph_of(n as usize, &edges));
    let (state, _) =
        CrawlState::initial(&src, ids([0, 1]), ids(2..7), PhaseDirection::TowardFriends).unwrap();
    let out = Crawler::new(&src, pool(1), CrawlConfig::default(), state)
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(out.stop, StopReason::TargetReached);
    assert!(out.state.phase_log().len() <= 2);
    assert_eq!(out.state.found().len(), n as usize);
    assert!(out.state.phase_log().last().unwrap().avg_reference_score >= 0.5);
}

#[test]
fn zero_phases_returns_initial_nodes() {
    let f = fixture(3);
    let cfg = CrawlConfig {
        max_phases: 0,
        ..small_config()
    };
    let (g, hosts, out) = run_crawl(&f.source, &f.db, &f.seeds, pool(1), &cfg).unwrap();
    assert_eq!(out.stop, StopReason::MaxPhases);
    let mut initial: BTreeSet<NodeId> = f.db.annotated().map(|(n, _)| n).collect();
    initial.extend(f.seeds.iter().flat_map(|s| s.nodes()));
    assert_eq!(hosts.iter().copied().collect::<BTreeSet<_>>(), initial);
    assert_eq!(g.node_count(), initial.len());
    assert_eq!(g.edge_count(), 0);
    assert_eq!(out.state.calls_made(), 0);
}

#[test]
fn threshold_one_reaches_whole_component() {
    // reciprocal random tree plus extra reciprocal edges, and a detached pair
    let mut rng = crate::rng::seeded(5);
    let mut edges = Vec::new();
    for v in 1..80u32 {
        let u = rng.random_range(0..v);
        edges.extend([(u, v), (v, u)]);
    }
    for _ in 0..40 {
        let (u, v) = (rng.random_range(0..80u32), rng.random_range(0..80u32));
        if u != v {
            edges.extend([(u, v), (v, u)]);
        }
    }
    edges.extend([(80, 81), (81, 80)]);
    let src = GraphBackedSource::from_graph(graph_of(82, &edges));
    let cfg = CrawlConfig {
        shortlist_override: Some(1),
        target_score: 1.0,
        max_phases: usize::MAX,
        ..CrawlConfig::default()
    };
    let (state, _) =
        CrawlState::initial(&src, [], ids([17]), PhaseDirection::TowardFriends).unwrap();
    let out = Crawler::new(&src, pool(1), cfg, state)
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(out.state.found().len(), 80);
    assert!(!out.state.found().contains(&NodeId(80)));
}

#[test]
fn worker_count_does_not_change_results() {
    let f = fixture(21);
    let cfg = small_config();
    let base = crawl(&f, 1, &cfg);
    let (g1, h1) = base.state.induced_graph();
    for w in [4, 16] {
        let other = crawl(&f, w, &cfg);
        assert_eq!(other.state.found(), base.state.found());
        let (g, h) = other.state.induced_graph();
        assert_eq!(h, h1);
        assert_eq!(
            g.edges().collect::<Vec<_>>(),
            g1.edges().collect::<Vec<_>>()
        );
        assert_eq!(other.state.calls_made(), base.state.calls_made());
    }
}

#[test]
fn crawl_invariants_hold_every_phase() {
    let f = fixture(8);
    let cfg = CrawlConfig {
        target_score: 1.0,
        max_phases: 5,
        ..small_config()
    };
    let (state, _) =
        CrawlState::from_seed_sets(&f.source, &f.db, &f.seeds, cfg.first_direction).unwrap();
    let mut prev = state.clone();
    Crawler::new(&f.source, pool(3), cfg, state)
        .unwrap()
        .run_with(|s, r| {
            assert!(prev.found().is_subset(s.found()));
            assert!(s.elite().union(s.ordinary()).all(|n| s.found().contains(n)));
            for &v in s.found() {
                assert!(s.found_refs(v).unwrap() <= s.degree(v).unwrap());
                assert!(s.found_refs(v).unwrap() >= prev.found_refs(v).unwrap_or(0));
            }
            assert!(r.nodes_shortlisted <= r.nodes_discovered);
            assert!((0.0..=1.0).contains(&r.avg_reference_score));
            let (g, hosts) = s.induced_graph();
            assert_eq!(hosts.len(), s.found().len());
            for (a, b) in g.edges() {
                assert!(f
                    .source
                    .graph()
                    .has_edge(hosts[a.index()], hosts[b.index()]));
            }
            prev = s.clone();
            Ok(())
        })
        .unwrap();
}

#[test]
fn recovers_context_and_scores_rise() {
    let f = fixture(4);
    let out = crawl(&f, 2, &small_config());
    assert_eq!(out.stop, StopReason::TargetReached);
    let found = out.state.found();
    let context = found.iter().filter(|&&n| f.truth.is_context(n)).count();
    assert!(context as f64 >= 0.8 * f.truth.context_size() as f64);
    assert!(((found.len() - context) as f64) <= 0.1 * found.len() as f64);
    let scores: Vec<f64> = out
        .state
        .phase_log()
        .iter()
        .map(|p| p.avg_reference_score)
        .collect();
    assert!(scores.windows(2).all(|w| w[0] < w[1]), "{scores:?}");
}

#[test]
fn shortlisting_beats_plain_bfs_on_contamination() {
    let f = fixture(6);
    let out = crawl(&f, 1, &small_config());
    let calls = out.state.calls_made();
    let start: Vec<NodeId> = f
        .seeds
        .iter()
        .flat_map(|s| s.nodes())
        .chain(f.db.annotated().map(|(n, _)| n))
        .collect();
    let mut b = SourceBudget::new(budget());
    let bfs = plain_bfs(&f.source, start, &mut b, calls, RetryPolicy::default()).unwrap();
    assert!(b.calls_made() <= calls + 1);
    let bg_share = |s: &BTreeSet<NodeId>| {
        s.iter().filter(|&&n| !f.truth.is_context(n)).count() as f64 / s.len() as f64
    };
    assert!(bg_share(out.state.found()) < bg_share(&bfs));
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let f = fixture(9);
    let cfg = small_config();
    let uninterrupted = crawl(&f, 2, &cfg);
    assert!(uninterrupted.state.phase_log().len() >= 2);

    let (state, _) =
        CrawlState::from_seed_sets(&f.source, &f.db, &f.seeds, cfg.first_direction).unwrap();
    let mut c = Crawler::new(&f.source, pool(2), cfg.clone(), state).unwrap();
    c.step().unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, c.state()).unwrap();
    let restored = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(&restored, c.state());

    let pool = CredentialPool::from_snapshots(budget(), restored.budget());
    let resumed = Crawler::new(&f.source, pool, cfg, restored)
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(resumed, uninterrupted);
}

#[test]
fn checkpoint_rejects_corruption() {
    let f = fixture(9);
    let (state, _) =
        CrawlState::from_seed_sets(&f.source, &f.db, &f.seeds, PhaseDirection::TowardFriends)
            .unwrap();
    let mut c = Crawler::new(&f.source, pool(1), small_config(), state).unwrap();
    c.step().unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, c.state()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    let truncated = lines[..lines.len() - 3].join("\n");
    assert!(matches!(
        read_checkpoint(truncated.as_bytes()),
        Err(CrawlError::Checkpoint { .. })
    ));
    let bumped = text.replacen("\"version\":1", "\"version\":99", 1);
    assert!(read_checkpoint(bumped.as_bytes()).is_err());
    let node_line = lines
        .iter()
        .position(|l| l.contains("\"record\":\"node\""))
        .unwrap();
    let mut tampered: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    tampered[node_line] = tampered[node_line].replacen("\"refs\":", "\"refs\":1000", 1);
    assert!(read_checkpoint(tampered.join("\n").as_bytes()).is_err());
    assert!(read_checkpoint(&b""[..]).is_err());
}

#[test]
fn budget_exhaustion_leaves_state_untouched() {
    let f = fixture(2);
    let capped = BudgetConfig {
        max_calls: Some(10),
        ..budget()
    };
    let (state, _) =
        CrawlState::from_seed_sets(&f.source, &f.db, &f.seeds, PhaseDirection::TowardFriends)
            .unwrap();
    let mut c = Crawler::new(
        &f.source,
        CredentialPool::new(capped, 1),
        small_config(),
        state.clone(),
    )
    .unwrap();
    let err = c.step().unwrap_err();
    assert!(err.is_budget_exhausted(), "{err}");
    let mut expected = state;
    expected.budget = c.state().budget.clone();
    assert_eq!(c.state(), &expected);
    assert_eq!(c.state().calls_made(), 0);
}

#[test]
fn rate_limit_waits_are_virtual() {
    let f = fixture(2);
    let limited = BudgetConfig {
        window_limit: 3,
        ..budget()
    };
    let cfg = small_config();
    let a = run_crawl(
        &f.source,
        &f.db,
        &f.seeds,
        CredentialPool::new(limited, 1),
        &cfg,
    )
    .unwrap()
    .2;
    let b = crawl(&f, 1, &cfg);
    assert_eq!(a.state.found(), b.state.found());
    let calls = a.state.calls_made();
    // three calls per 900 s window on one credential
    assert_eq!(a.state.elapsed_seconds(), (calls.div_ceil(3) - 1) * 900);
}

#[test]
fn target_score_all_in_context() {
    let g = graph_of(6, &[(0, 1), (0, 2), (1, 0), (2, 3), (3, 2)]);
    let src = GraphBackedSource::from_graph(g);
    let mut db = SeedDatabase::new(["x"]);
    for n in 0..4 {
        db.add_member(0, NodeId(n)).unwrap();
    }
    let mut b = SourceBudget::new(budget());
    let t = target_reference_score(&db, &src, &mut b, 4, 1, RetryPolicy::default(), |n| {
        n.index() < 4
    })
    .unwrap();
    assert_eq!(t, 1.0);
    assert_eq!(b.calls_made(), 4);
    assert!(matches!(
        target_reference_score(&db, &src, &mut b, 0, 1, RetryPolicy::default(), |_| true),
        Err(CrawlError::EmptySample)
    ));
    assert!(
        target_reference_score(&db, &src, &mut b, 5, 1, RetryPolicy::default(), |_| true).is_err()
    );
}

#[test]
fn target_score_matches_block_expectation() {
    let params = small_params(13);
    let (g, truth) = synth::generate(&params).unwrap();
    let src = GraphBackedSource::from_graph(g);
    let db = synth::sample_annotated_seeds(&truth, 40, 13).unwrap();
    let mut b = SourceBudget::new(budget());
    let sample = 120;
    let t = target_reference_score(&db, &src, &mut b, sample, 2, RetryPolicy::default(), |n| {
        truth.is_context(n)
    })
    .unwrap();

    // expected counts of a party member's friends per block
    let inside = 59.0 * params.p_intra + 120.0 * params.p_inter;
    let outside = 600.0 * params.p_context_bg + 2.0 * params.hub_attach;
    let mean = inside / (inside + outside);
    // given its friend count N, each friend is inside independently
    let var = mean * (1.0 - mean) / (inside + outside);
    let sd = (var / sample as f64).sqrt();
    assert!((t - mean).abs() <= 3.0 * sd, "t={t} mean={mean} sd={sd}");
}
