// SPDX-License-Identifier: Apache-2.0

use super::files::*;
use super::{
    digest, fail, open, write_atomic, FileDigest, Manifest, PipelineConfig, PipelineError, Result,
    HOST_ID_BASE,
};
use crate::affiliation::{
    cluster_distribution, community_mean, embeddedness_all, featurize, flag_irrelevant, predict,
    train, write_distribution, write_embeddedness, write_predictions, AffiliationError,
};
use crate::community::{
    best_match_agreement, louvain_repeated, read_partition, write_partition, write_stats,
    CommunityError,
};
use crate::crawl::{
    read_checkpoint, reference_score, target_reference_score, write_checkpoint, CrawlError,
    CrawlState, Crawler,
};
use crate::graph::{
    read_edge_list, read_node_table, write_edge_list, write_node_table, DirectedGraph, NodeId,
    NodeTable, UndirectedView,
};
use crate::seeds::{
    build_candidate_index, read_annotations, read_seed_nodes, select_all_seeds, write_annotations,
    write_seed_report, write_seed_summary, SeedDatabase, SeedError,
};
use crate::source::{CredentialPool, GraphBackedSource, Relation, SourceBudget, SourceError};
use crate::synth::{
    density_report, generate, sample_annotated_seeds, GroundTruth, NodeLabel, SynthError,
};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidParams(_) | SynthError::SampleTooLarge { .. } => {
                PipelineError::Config(e.to_string())
            }
            SynthError::Io(_) => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<SeedError> for PipelineError {
    fn from(e: SeedError) -> Self {
        match e {
            SeedError::InvalidStop(_) | SeedError::InvalidThreshold(_) => {
                PipelineError::Config(e.to_string())
            }
            _ => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<SourceError> for PipelineError {
    fn from(e: SourceError) -> Self {
        match e {
            SourceError::BudgetExhausted { .. } => PipelineError::BudgetExhausted(e.to_string()),
            _ => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<CrawlError> for PipelineError {
    fn from(e: CrawlError) -> Self {
        if e.is_budget_exhausted() {
            return PipelineError::BudgetExhausted(e.to_string());
        }
        match e {
            CrawlError::Config(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<CommunityError> for PipelineError {
    fn from(e: CommunityError) -> Self {
        PipelineError::Failed(e.to_string())
    }
}

impl From<AffiliationError> for PipelineError {
    fn from(e: AffiliationError) -> Self {
        PipelineError::Failed(e.to_string())
    }
}

struct Step<'a> {
    name: &'static str,
    cfg: &'a PipelineConfig,
    started: Instant,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Step<'a> {
    fn start(name: &'static str, cfg: &'a PipelineConfig, inputs: &[&str]) -> Result<Self> {
        let inputs: Vec<PathBuf> = inputs.iter().map(|f| cfg.path(f)).collect();
        if let Some(missing) = inputs.iter().find(|p| !p.is_file()) {
            return Err(PipelineError::Missing(missing.clone()));
        }
        fs::create_dir_all(&cfg.out_dir).map_err(|e| fail(&cfg.out_dir, e))?;
        Ok(Step {
            name,
            cfg,
            started: Instant::now(),
            seeds: BTreeMap::new(),
            inputs,
            outputs: Vec::new(),
        })
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// Marks an optional input as read.
    fn also_read(&mut self, file: &str) {
        self.inputs.push(self.cfg.path(file));
    }

    fn write<E: std::fmt::Display>(
        &mut self,
        file: &str,
        body: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<(), E>,
    ) -> Result<()> {
        let path = self.cfg.path(file);
        write_atomic(&path, body)?;
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
        Ok(())
    }

    fn write_json(&mut self, file: &str, value: &impl serde::Serialize) -> Result<()> {
        self.write(file, |w| serde_json::to_writer_pretty(&mut *w, value))
    }

    fn finish(
        self,
        calls: u64,
        virtual_seconds: u64,
        details: serde_json::Value,
    ) -> Result<Manifest> {
        let hash = |ps: &[PathBuf]| {
            ps.iter()
                .map(|p| digest(p))
                .collect::<Result<Vec<FileDigest>>>()
        };
        let manifest = Manifest {
            step: self.name.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parties: self.cfg.party_labels(),
            seeds: self.seeds.clone(),
            inputs: hash(&self.inputs)?,
            outputs: hash(&self.outputs)?,
            calls_spent: calls,
            virtual_seconds,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            details,
        };
        let path = self.cfg.path(&super::files::manifest(self.name));
        write_atomic(&path, |w| serde_json::to_writer_pretty(&mut *w, &manifest))?;
        Ok(manifest)
    }
}

fn load_table(path: &Path) -> Result<NodeTable> {
    read_node_table(open(path)?).map_err(|e| fail(path, e))
}

fn load_graph(edges: &Path, nodes: &Path) -> Result<(DirectedGraph, NodeTable)> {
    let mut table = load_table(nodes)?;
    let graph = read_edge_list(open(edges)?, &mut table).map_err(|e| fail(edges, e))?;
    Ok((graph, table))
}

fn load_host(cfg: &PipelineConfig) -> Result<GraphBackedSource> {
    let edges = cfg.path(HOST_EDGES);
    let nodes = cfg.path(HOST_NODES);
    GraphBackedSource::from_files(&edges, Some(&nodes))
        .map_err(|e| PipelineError::Failed(e.to_string()))
}

fn load_truth(cfg: &PipelineConfig, table: &NodeTable) -> Result<GroundTruth> {
    let path = cfg.path(GROUND_TRUTH);
    let gt = GroundTruth::read_csv(open(&path)?, table).map_err(|e| fail(&path, e))?;
    if gt.parties != cfg.party_labels() {
        return Err(PipelineError::Config(format!(
            "{} lists parties {:?}, config declares {:?}",
            path.display(),
            gt.parties,
            cfg.party_labels()
        )));
    }
    Ok(gt)
}

fn load_annotations(cfg: &PipelineConfig, table: &NodeTable) -> Result<SeedDatabase> {
    let path = cfg.path(ANNOTATED);
    read_annotations(open(&path)?, &cfg.party_labels(), table).map_err(|e| fail(&path, e))
}

fn pool(cfg: &PipelineConfig) -> CredentialPool {
    CredentialPool::new(cfg.source.budget(), cfg.source.credentials)
        .with_workers(cfg.source.workers)
}

/// Host graph, node table and ground truth from the synthetic generator.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut step = Step::start("generate", cfg, &[])?;
    step.seed("synth", cfg.synth.rng_seed);
    let (graph, gt) = generate(&cfg.synth)?;
    let table = NodeTable::from_externals((0..graph.node_count() as u64).map(|i| HOST_ID_BASE + i));
    step.write(HOST_EDGES, |w| write_edge_list(w, &graph, &table))?;
    step.write(HOST_NODES, |w| write_node_table(w, &table))?;
    step.write(GROUND_TRUTH, |w| gt.write_csv(w, &table))?;
    let density = density_report(&graph, &gt);
    step.finish(
        0,
        0,
        json!({
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
            "context_nodes": gt.context_size(),
            "context_density": density.context,
            "context_background_density": density.context_background,
        }),
    )
}

/// Samples the annotated database, fetches its friend lists and selects
/// seed profiles per party.
pub fn cmd_seeds(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut step = Step::start("seeds", cfg, &[HOST_EDGES, HOST_NODES, GROUND_TRUTH])?;
    step.seed("annotate", cfg.rng.annotate);
    let source = load_host(cfg)?;
    let gt = load_truth(cfg, source.table())?;
    let mut db = sample_annotated_seeds(&gt, cfg.annotation.per_party, cfg.rng.annotate)?;

    let mut credentials = pool(cfg);
    let nodes: Vec<NodeId> = db.annotated().map(|(n, _)| n).collect();
    let batch = credentials.parallel_fetch(&source, &nodes, Relation::Friends, cfg.source.retry());
    for (node, friends) in batch.results {
        db.set_friends(node, friends?);
    }
    let index = build_candidate_index(&db)?;
    let sets = select_all_seeds(
        &db,
        &index,
        cfg.selection.exclusivity,
        cfg.selection.stop_rule(),
    )?;

    let table = source.table();
    step.write(ANNOTATED, |w| write_annotations(w, &db, table))?;
    step.write(SEEDS, |w| write_seed_report(w, &sets, table))?;
    step.write(SEED_SUMMARY, |w| write_seed_summary(w, &sets))?;

    let hubs: BTreeSet<NodeId> = (0..gt.labels.len())
        .map(NodeId::from)
        .filter(|&n| gt.label(n) == NodeLabel::Hub)
        .collect();
    let parties: Vec<_> = sets
        .iter()
        .map(|s| {
            json!({
                "party": s.party,
                "seeds": s.seeds.len(),
                "coverage": s.coverage,
                "saturated": s.saturated,
                "rejected": s.rejected.len(),
                "rejected_hubs": s.rejected.iter().filter(|n| hubs.contains(n)).count(),
                "hub_seeds": s.nodes().filter(|n| hubs.contains(n)).count(),
            })
        })
        .collect();
    step.finish(
        credentials.total_calls(),
        credentials.elapsed(),
        json!({ "annotated": db.len(), "parties": parties }),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CrawlOptions {
    /// Continue from the checkpoint in the output directory.
    pub resume: bool,
    /// Stop once this many phases are complete, leaving a resumable
    /// checkpoint and no subgraph.
    pub halt_after_phase: Option<usize>,
}

/// Back-and-forth crawl from the annotated supporters and seed profiles.
/// The checkpoint is rewritten after every phase.
pub fn cmd_crawl(cfg: &PipelineConfig, opts: CrawlOptions) -> Result<Manifest> {
    let mut step = Step::start("crawl", cfg, &[HOST_EDGES, HOST_NODES, ANNOTATED, SEEDS])?;
    let source = load_host(cfg)?;
    let table = source.table();
    let parties = cfg.party_labels();
    let db = load_annotations(cfg, table)?;
    let seeds_path = cfg.path(SEEDS);
    let seeds =
        read_seed_nodes(open(&seeds_path)?, &parties, table).map_err(|e| fail(&seeds_path, e))?;
    let truth = if cfg.path(GROUND_TRUTH).is_file() {
        step.also_read(GROUND_TRUTH);
        Some(load_truth(cfg, table)?)
    } else {
        None
    };

    let mut crawl_cfg = cfg.crawl.to_config(cfg.source.retry());
    let mut measured = None;
    let mut sample_calls = 0;
    if cfg.crawl.target_sample > 0 {
        let gt = truth
            .as_ref()
            .ok_or_else(|| PipelineError::Missing(cfg.path(GROUND_TRUTH)))?;
        step.seed("target_sample", cfg.rng.target_sample);
        let mut budget = SourceBudget::new(cfg.source.budget());
        let t = target_reference_score(
            &db,
            &source,
            &mut budget,
            cfg.crawl.target_sample,
            cfg.rng.target_sample,
            cfg.source.retry(),
            |n| gt.is_context(n),
        )?;
        sample_calls = budget.calls_made();
        measured = Some(t);
        if cfg.crawl.adopt_measured_target {
            crawl_cfg.target_score = t;
        }
    }

    let checkpoint = cfg.path(CHECKPOINT);
    let (state, credentials, skipped) = if opts.resume {
        let state = read_checkpoint(open(&checkpoint)?).map_err(|e| fail(&checkpoint, e))?;
        if state.budget().len() != cfg.source.credentials {
            return Err(PipelineError::Config(format!(
                "checkpoint holds {} credentials, config has {}",
                state.budget().len(),
                cfg.source.credentials
            )));
        }
        step.also_read(CHECKPOINT);
        let p = CredentialPool::from_snapshots(cfg.source.budget(), state.budget())
            .with_workers(cfg.source.workers);
        (state, p, 0)
    } else {
        let (state, skipped) = CrawlState::initial(
            &source,
            seeds.iter().flatten().copied(),
            db.annotated().map(|(n, _)| n),
            crawl_cfg.first_direction,
        )?;
        (state, pool(cfg), skipped.len())
    };

    let mut crawler = Crawler::new(&source, credentials, crawl_cfg.clone(), state)?;
    save(&mut step, crawler.state())?;
    let stop = loop {
        if opts.halt_after_phase == Some(crawler.state().phase_log().len()) {
            break None;
        }
        if let Some(stop) = crawler.stop_reason() {
            break Some(stop);
        }
        crawler.step()?;
        save(&mut step, crawler.state())?;
    };
    let state = crawler.into_state();
    let calls = state.calls_made() + sample_calls;
    let elapsed = state.elapsed_seconds();

    let mut details = json!({
        "target_score": crawl_cfg.target_score,
        "measured_target_score": measured,
        "target_sample_calls": sample_calls,
        "phases": state.phase_log().len(),
        "found": state.found().len(),
        "elite": state.elite().len(),
        "ordinary": state.ordinary().len(),
        "observed_edges": state.observed_edge_count(),
        "skipped_unknown_start_nodes": skipped,
        "resumed": opts.resume,
    });
    let Some(stop) = stop else {
        details["halted_after_phase"] = json!(state.phase_log().len());
        return step.finish(calls, elapsed, details);
    };
    details["stop"] = json!(stop);

    let (graph, hosts) = state.induced_graph();
    let crawl_table = NodeTable::from_externals(hosts.iter().map(|&h| table.external(h)));
    step.write(CRAWL_EDGES, |w| write_edge_list(w, &graph, &crawl_table))?;
    step.write(CRAWL_NODES, |w| write_node_table(w, &crawl_table))?;
    details["subgraph_nodes"] = json!(graph.node_count());
    details["subgraph_edges"] = json!(graph.edge_count());
    if let Some(gt) = &truth {
        let found = state.found();
        let context = found.iter().filter(|&&n| gt.is_context(n)).count();
        let hubs = found
            .iter()
            .filter(|&&n| gt.label(n) == NodeLabel::Hub)
            .count();
        details["context_recall"] = json!(context as f64 / gt.context_size() as f64);
        details["non_context_share"] =
            json!((found.len() - context) as f64 / found.len().max(1) as f64);
        details["hubs_found"] = json!(hubs);
    }
    step.finish(calls, elapsed, details)
}

fn save(step: &mut Step, state: &CrawlState) -> Result<()> {
    step.write(CHECKPOINT, |w| write_checkpoint(w, state))?;
    step.write(PHASES, |w| -> std::io::Result<()> {
        for r in state.phase_log() {
            serde_json::to_writer(&mut *w, r)?;
            std::io::Write::write_all(w, b"\n")?;
        }
        Ok(())
    })
}

/// Repeated Louvain over the crawled subgraph.
pub fn cmd_detect(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut step = Step::start("detect", cfg, &[CRAWL_EDGES, CRAWL_NODES])?;
    step.seed("louvain", cfg.rng.louvain);
    let (graph, table) = load_graph(&cfg.path(CRAWL_EDGES), &cfg.path(CRAWL_NODES))?;
    let view = UndirectedView::new(&graph);
    let (part, stats) = louvain_repeated(&view, cfg.detect.runs, cfg.rng.louvain)?;
    step.write(PARTITION, |w| write_partition(w, &part, &table))?;
    step.write(LOUVAIN_STATS, |w| write_stats(w, &stats))?;

    let mut details = json!({
        "runs": stats.runs,
        "best_run": stats.best_run,
        "modularity": part.modularity(),
        "mean_modularity": stats.mean_modularity,
        "modularity_spread": stats.spread(),
        "communities": part.n_communities(),
        "sizes": part.sizes(),
    });
    if cfg.path(GROUND_TRUTH).is_file() && cfg.path(HOST_NODES).is_file() {
        step.also_read(HOST_NODES);
        step.also_read(GROUND_TRUTH);
        let host = load_table(&cfg.path(HOST_NODES))?;
        let gt = load_truth(cfg, &host)?;
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for i in 0..graph.node_count() {
            let id = NodeId::from(i);
            let party = host
                .internal(table.external(id))
                .and_then(|h| gt.party_of(h));
            if let Some(p) = party {
                pred.push(part.community_of(id));
                truth.push(p);
            }
        }
        details["context_agreement"] = json!(best_match_agreement(&pred, &truth));
    }
    step.finish(0, 0, details)
}

/// Distribution table, embeddedness scores and the affiliation classifier.
pub fn cmd_affiliate(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut step = Step::start(
        "affiliate",
        cfg,
        &[
            CRAWL_EDGES,
            CRAWL_NODES,
            PARTITION,
            ANNOTATED,
            HOST_NODES,
            CHECKPOINT,
        ],
    )?;
    let parties = cfg.party_labels();
    let host = load_table(&cfg.path(HOST_NODES))?;
    let db = load_annotations(cfg, &host)?;
    let (graph, table) = load_graph(&cfg.path(CRAWL_EDGES), &cfg.path(CRAWL_NODES))?;
    let view = UndirectedView::new(&graph);
    let part_path = cfg.path(PARTITION);
    let partition =
        read_partition(open(&part_path)?, &view, &table).map_err(|e| fail(&part_path, e))?;
    let ck_path = cfg.path(CHECKPOINT);
    let state = read_checkpoint(open(&ck_path)?).map_err(|e| fail(&ck_path, e))?;

    let n = graph.node_count();
    let host_of: Vec<NodeId> = (0..n)
        .map(|i| {
            let ext = table.external(NodeId::from(i));
            host.internal(ext).ok_or_else(|| {
                fail(
                    &cfg.path(CRAWL_NODES),
                    format!("node {ext} is not a host node"),
                )
            })
        })
        .collect::<Result<_>>()?;
    let locate = |h: NodeId| table.internal(host.external(h));
    let refs: Vec<f64> = host_of
        .iter()
        .map(|&h| {
            reference_score(h, &state)
                .map_err(|_| fail(&ck_path, format!("node {} missing", host.external(h))))
        })
        .collect::<Result<_>>()?;

    let dist = cluster_distribution(&partition, &db, locate);
    let means = community_mean(&partition, &refs);
    let flagged = flag_irrelevant(&dist, &means, cfg.affiliate.irrelevant_floor);
    let supporters: Vec<Vec<NodeId>> = (0..parties.len())
        .map(|p| db.members(p).iter().filter_map(|&h| locate(h)).collect())
        .collect();
    let emb = embeddedness_all(&view, &refs, &parties, &supporters)?;

    let k = partition.n_communities();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|i| featurize(partition.community_of(NodeId::from(i)), k, &emb[i]))
        .collect();
    let names: Vec<String> = (0..k)
        .map(|c| format!("community_{c}"))
        .chain(parties.iter().map(|p| format!("embeddedness_{p}")))
        .chain(["bias".to_string()])
        .collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &h) in host_of.iter().enumerate() {
        if let Some(p) = db.party_of(h) {
            xs.push(features[i].clone());
            ys.push(p);
        }
    }
    let model = train(&xs, &ys, parties.clone(), names, &cfg.affiliate.train)?;
    let predictions = features
        .iter()
        .map(|x| predict(&model, x))
        .collect::<Result<Vec<_>, _>>()?;
    let train_hits = host_of
        .iter()
        .zip(&predictions)
        .filter(|(h, p)| db.party_of(**h) == Some(p.party))
        .count();

    step.write(DISTRIBUTION, |w| {
        write_distribution(w, &dist, &means, &flagged)
    })?;
    step.write(EMBEDDEDNESS, |w| {
        write_embeddedness(w, &emb, &parties, &table)
    })?;
    step.write(PREDICTIONS, |w| {
        write_predictions(w, &predictions, &parties, &table)
    })?;
    step.write(MODEL, |w| {
        std::io::Write::write_all(w, model.to_json().as_bytes())
    })?;

    let mut summary = json!({
        "parties": parties,
        "nodes": n,
        "communities": k,
        "located": dist.located(),
        "not_crawled": dist.not_crawled,
        "flagged_communities": flagged.iter().enumerate().filter(|(_, f)| **f).map(|(c, _)| c).collect::<Vec<_>>(),
        "train_size": xs.len(),
        "train_accuracy": train_hits as f64 / xs.len() as f64,
        "learning_rate": model.learning_rate,
        "iterations": model.iterations,
        "final_loss": model.final_loss,
    });
    if cfg.path(GROUND_TRUTH).is_file() {
        step.also_read(GROUND_TRUTH);
        let gt = load_truth(cfg, &host)?;
        let p = parties.len();
        let mut sum = vec![vec![0.0; p]; p];
        let mut count = vec![0usize; p];
        let (mut held, mut hits) = (0usize, 0usize);
        for (i, &h) in host_of.iter().enumerate() {
            let Some(truth) = gt.party_of(h) else {
                continue;
            };
            count[truth] += 1;
            for q in 0..p {
                sum[truth][q] += emb[i][q];
            }
            if db.party_of(h).is_none() {
                held += 1;
                hits += usize::from(predictions[i].party == truth);
            }
        }
        let mean: Vec<Vec<f64>> = sum
            .iter()
            .zip(&count)
            .map(|(row, &c)| {
                row.iter()
                    .map(|s| if c > 0 { s / c as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        summary["heldout_size"] = json!(held);
        summary["heldout_accuracy"] = json!(if held > 0 {
            hits as f64 / held as f64
        } else {
            0.0
        });
        summary["mean_embeddedness_by_true_party"] = json!(mean);
    }
    step.write_json(AFFILIATION_SUMMARY, &summary)?;
    step.finish(0, 0, summary)
}

/// Collects the step manifests and summaries into one JSON document.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Manifest> {
    let steps = ["generate", "seeds", "crawl", "detect", "affiliate"];
    let names: Vec<String> = steps.iter().map(|s| manifest(s)).collect();
    let mut inputs: Vec<&str> = names.iter().map(String::as_str).collect();
    inputs.extend([PHASES, LOUVAIN_STATS, AFFILIATION_SUMMARY]);
    let mut step = Step::start("report", cfg, &inputs)?;

    let mut report = serde_json::Map::new();
    report.insert("parties".into(), json!(cfg.party_labels()));
    let (mut calls, mut virtual_seconds) = (0, 0);
    for (s, file) in steps.iter().zip(&names) {
        let m = Manifest::read(&cfg.path(file))?;
        calls += m.calls_spent;
        virtual_seconds += m.virtual_seconds;
        report.insert(
            s.to_string(),
            json!({
                "seeds": m.seeds,
                "calls_spent": m.calls_spent,
                "virtual_seconds": m.virtual_seconds,
                "details": m.details,
            }),
        );
    }
    let phases_path = cfg.path(PHASES);
    let phases: Vec<serde_json::Value> = fs::read_to_string(&phases_path)
        .map_err(|e| fail(&phases_path, e))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| fail(&phases_path, e)))
        .collect::<Result<_>>()?;
    report.insert("phase_log".into(), json!(phases));
    report.insert("total_calls".into(), json!(calls));
    report.insert("total_virtual_seconds".into(), json!(virtual_seconds));
    let report = serde_json::Value::Object(report);
    step.write_json(REPORT, &report)?;
    step.finish(
        0,
        0,
        json!({ "total_calls": calls, "total_virtual_seconds": virtual_seconds }),
    )
}
