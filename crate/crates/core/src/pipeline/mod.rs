// SPDX-License-Identifier: Apache-2.0

//! File-based pipeline: one step per subcommand, each reading the
//! artifacts of earlier steps from the output directory and writing its
//! own, plus a `manifest_<step>.json` describing the run.
//!
//! All randomness comes from the seeds in [`PipelineConfig`], so the same
//! configuration reproduces byte-identical artifacts.

pub mod cli;
mod steps;

pub use steps::{
    cmd_affiliate, cmd_crawl, cmd_detect, cmd_generate, cmd_report, cmd_seeds, CrawlOptions,
};

use crate::affiliation::TrainParams;
use crate::crawl::{CrawlConfig, PhaseDirection, DEFAULT_TARGET_SCORE};
use crate::rng::derive_seed;
use crate::seeds::{StopRule, DEFAULT_EXCLUSIVITY};
use crate::source::{BudgetConfig, RetryPolicy, DEFAULT_PAGE_SIZE};
use crate::synth::SynthParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Artifact file names inside the output directory.
pub mod files {
    pub const HOST_EDGES: &str = "host_edges.tsv";
    pub const HOST_NODES: &str = "host_nodes.tsv";
    pub const GROUND_TRUTH: &str = "ground_truth.csv";
    pub const ANNOTATED: &str = "annotated.csv";
    pub const SEEDS: &str = "seeds.csv";
    pub const SEED_SUMMARY: &str = "seed_summary.csv";
    pub const CHECKPOINT: &str = "crawl_checkpoint.jsonl";
    pub const PHASES: &str = "phases.jsonl";
    pub const CRAWL_EDGES: &str = "crawl_edges.tsv";
    pub const CRAWL_NODES: &str = "crawl_nodes.tsv";
    pub const PARTITION: &str = "partition.csv";
    pub const LOUVAIN_STATS: &str = "louvain_stats.json";
    pub const DISTRIBUTION: &str = "distribution.csv";
    pub const EMBEDDEDNESS: &str = "embeddedness.csv";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const MODEL: &str = "model.json";
    pub const AFFILIATION_SUMMARY: &str = "affiliation_summary.json";
    pub const REPORT: &str = "report.json";

    pub fn manifest(step: &str) -> String {
        format!("manifest_{step}.json")
    }
}

/// External ids of generated host nodes are `HOST_ID_BASE + index`.
pub const HOST_ID_BASE: u64 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("{0}")]
    Failed(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Missing(_) => 3,
            PipelineError::BudgetExhausted(_) => 4,
            PipelineError::Failed(_) => 1,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RngSeeds {
    pub annotate: u64,
    pub target_sample: u64,
    pub louvain: u64,
}

impl RngSeeds {
    pub fn from_master(seed: u64) -> Self {
        RngSeeds {
            annotate: derive_seed(seed, 1),
            target_sample: derive_seed(seed, 2),
            louvain: derive_seed(seed, 3),
        }
    }
}

impl Default for RngSeeds {
    fn default() -> Self {
        RngSeeds::from_master(SynthParams::default().rng_seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    /// Supporters sampled from every party as the annotated database.
    pub per_party: usize,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig { per_party: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub exclusivity: f64,
    pub coverage_target: Option<f64>,
    pub max_picks: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            exclusivity: DEFAULT_EXCLUSIVITY,
            coverage_target: Some(0.8),
            max_picks: None,
        }
    }
}

impl SelectionConfig {
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            max_picks: self.max_picks,
            coverage_target: self.coverage_target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub page_size: usize,
    pub window_limit: u64,
    pub window_seconds: u64,
    pub max_calls: Option<u64>,
    /// Rate-limit waits tolerated per fetch before giving up.
    pub max_waits: Option<u64>,
    pub credentials: usize,
    pub workers: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let b = BudgetConfig::default();
        SourceConfig {
            page_size: DEFAULT_PAGE_SIZE,
            window_limit: b.window_limit,
            window_seconds: b.window_seconds,
            max_calls: None,
            max_waits: None,
            credentials: 4,
            workers: 4,
        }
    }
}

impl SourceConfig {
    pub fn budget(&self) -> BudgetConfig {
        BudgetConfig {
            page_size: self.page_size,
            window_limit: self.window_limit,
            window_seconds: self.window_seconds,
            max_calls: self.max_calls,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_waits: self.max_waits,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlSection {
    pub target_score: f64,
    pub tolerance: f64,
    pub max_phases: usize,
    pub n_target_candidates: usize,
    pub shortlist_override: Option<usize>,
    pub first_direction: PhaseDirection,
    /// Annotated nodes sampled to measure the target score; 0 skips it.
    pub target_sample: usize,
    /// Stop at the measured score instead of `target_score`.
    pub adopt_measured_target: bool,
}

impl Default for CrawlSection {
    fn default() -> Self {
        CrawlSection {
            target_score: DEFAULT_TARGET_SCORE,
            tolerance: 0.0,
            max_phases: 10,
            n_target_candidates: 30,
            shortlist_override: None,
            first_direction: PhaseDirection::TowardFriends,
            target_sample: 0,
            adopt_measured_target: false,
        }
    }
}

impl CrawlSection {
    pub fn to_config(&self, retry: RetryPolicy) -> CrawlConfig {
        CrawlConfig {
            target_score: self.target_score,
            tolerance: self.tolerance,
            max_phases: self.max_phases,
            n_target_candidates: self.n_target_candidates,
            shortlist_override: self.shortlist_override,
            first_direction: self.first_direction,
            retry,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub runs: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { runs: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffiliateConfig {
    /// Communities without annotated members whose mean reference score is
    /// below this are flagged as irrelevant.
    pub irrelevant_floor: f64,
    pub train: TrainParams,
}

impl Default for AffiliateConfig {
    fn default() -> Self {
        AffiliateConfig {
            irrelevant_floor: 0.1,
            train: TrainParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Party order of every output; the synthetic parties must match it.
    /// Empty means the order of `synth.parties`.
    pub parties: Vec<String>,
    pub synth: SynthParams,
    pub rng: RngSeeds,
    pub annotation: AnnotationConfig,
    pub selection: SelectionConfig,
    pub source: SourceConfig,
    pub crawl: CrawlSection,
    pub detect: DetectConfig,
    pub affiliate: AffiliateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            parties: Vec::new(),
            synth: SynthParams::default(),
            rng: RngSeeds::default(),
            annotation: AnnotationConfig::default(),
            selection: SelectionConfig::default(),
            source: SourceConfig::default(),
            crawl: CrawlSection::default(),
            detect: DetectConfig::default(),
            affiliate: AffiliateConfig::default(),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub credentials: Option<usize>,
    pub target_score: Option<f64>,
    pub exclusivity: Option<f64>,
    pub max_phases: Option<usize>,
    pub page_size: Option<usize>,
    pub window_limit: Option<u64>,
    pub window_seconds: Option<u64>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Config file (or defaults), then overrides, then validation.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                PipelineConfig::from_toml(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
            }
            None => PipelineConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.synth.rng_seed = s;
            self.rng = RngSeeds::from_master(s);
        }
        if let Some(w) = o.workers {
            self.source.workers = w;
        }
        if let Some(c) = o.credentials {
            self.source.credentials = c;
        }
        if let Some(t) = o.target_score {
            self.crawl.target_score = t;
        }
        if let Some(x) = o.exclusivity {
            self.selection.exclusivity = x;
        }
        if let Some(m) = o.max_phases {
            self.crawl.max_phases = m;
        }
        if let Some(p) = o.page_size {
            self.source.page_size = p;
        }
        if let Some(l) = o.window_limit {
            self.source.window_limit = l;
        }
        if let Some(s) = o.window_seconds {
            self.source.window_seconds = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.synth
            .validate()
            .map_err(|e| PipelineError::Config(format!("synth: {e}")))?;
        let labels = self.synth.party_labels();
        if !self.parties.is_empty() && self.parties != labels {
            return bad(format!(
                "parties: {:?} does not match synth.parties order {:?}",
                self.parties, labels
            ));
        }
        let smallest = self.synth.parties.iter().map(|p| p.size).min().unwrap_or(0);
        if self.annotation.per_party == 0 || self.annotation.per_party > smallest {
            return bad(format!(
                "annotation.per_party: {} must lie in 1..={smallest}",
                self.annotation.per_party
            ));
        }
        let x = self.selection.exclusivity;
        if !(x > 0.0 && x <= 1.0) {
            return bad(format!("selection.exclusivity: {x} outside (0, 1]"));
        }
        if self.selection.max_picks.is_none() && self.selection.coverage_target.is_none() {
            return bad("selection: set coverage_target or max_picks".into());
        }
        if let Some(t) = self.selection.coverage_target {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("selection.coverage_target: {t} outside (0, 1]"));
            }
        }
        if self.selection.max_picks == Some(0) {
            return bad("selection.max_picks: must be at least 1".into());
        }
        self.source
            .budget()
            .validate()
            .map_err(|e| PipelineError::Config(format!("source: {e}")))?;
        if self.source.credentials == 0 {
            return bad("source.credentials: must be at least 1".into());
        }
        if self.source.workers == 0 {
            return bad("source.workers: must be at least 1".into());
        }
        self.crawl
            .to_config(self.source.retry())
            .validate()
            .map_err(|e| PipelineError::Config(format!("crawl: {e}")))?;
        let annotated = self.annotation.per_party * labels.len();
        if self.crawl.target_sample > annotated {
            return bad(format!(
                "crawl.target_sample: {} exceeds the {annotated} annotated nodes",
                self.crawl.target_sample
            ));
        }
        if self.crawl.adopt_measured_target && self.crawl.target_sample == 0 {
            return bad("crawl.adopt_measured_target: needs target_sample > 0".into());
        }
        if self.detect.runs == 0 {
            return bad("detect.runs: must be at least 1".into());
        }
        let f = self.affiliate.irrelevant_floor;
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("affiliate.irrelevant_floor: {f} outside [0, 1]"));
        }
        let t = &self.affiliate.train;
        if !(t.l2 >= 0.0 && t.l2.is_finite()) {
            return bad(format!(
                "affiliate.train.l2: {} must be finite and >= 0",
                t.l2
            ));
        }
        if t.learning_rate
            .is_some_and(|lr| !(lr > 0.0 && lr.is_finite()))
        {
            return bad("affiliate.train.learning_rate: must be positive".into());
        }
        Ok(())
    }

    pub fn party_labels(&self) -> Vec<String> {
        self.synth.party_labels()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub step: String,
    pub version: String,
    pub parties: Vec<String>,
    /// Every RNG seed the step consumed.
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub calls_spent: u64,
    pub virtual_seconds: u64,
    pub wall_seconds: f64,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let f = open(path)?;
        serde_json::from_reader(f).map_err(|e| fail(path, e))
    }
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| fail(path, e))?;
    Ok(FileDigest {
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub(crate) fn fail(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Failed(format!("{}: {e}", path.display()))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(PipelineError::Missing(path.to_path_buf()))
        }
        Err(e) => Err(fail(path, e)),
    }
}

/// Writes through a temporary file and renames it into place, so readers
/// never see a half-written artifact.
pub(crate) fn write_atomic<E: std::fmt::Display>(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), E>,
) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let f = File::create(&tmp).map_err(|e| fail(&tmp, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).map_err(|e| fail(path, e))?;
    w.flush().map_err(|e| fail(path, e))?;
    w.get_ref().sync_all().map_err(|e| fail(path, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| fail(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let cfg =
            PipelineConfig::from_toml("[crawl]\nmax_phases = 3\n[synth]\nbg_size = 50\n").unwrap();
        assert_eq!(cfg.crawl.max_phases, 3);
        assert_eq!(cfg.crawl.n_target_candidates, 30);
        assert_eq!(cfg.synth.bg_size, 50);
        assert_eq!(cfg.synth.parties.len(), 5);
    }

    #[test]
    fn unknown_field_is_named() {
        let err = PipelineConfig::from_toml("[crawl]\nmax_phaze = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("max_phaze"), "{err}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for o in [
            Overrides {
                exclusivity: Some(1.5),
                ..Default::default()
            },
            Overrides {
                target_score: Some(0.0),
                ..Default::default()
            },
            Overrides {
                workers: Some(0),
                ..Default::default()
            },
            Overrides {
                page_size: Some(0),
                ..Default::default()
            },
        ] {
            let mut cfg = PipelineConfig::default();
            cfg.apply(&o);
            assert_eq!(cfg.validate().unwrap_err().exit_code(), 2, "{o:?}");
        }
    }

    #[test]
    fn master_seed_replaces_every_stream() {
        let mut cfg = PipelineConfig::default();
        cfg.apply(&Overrides {
            seed: Some(99),
            ..Default::default()
        });
        assert_eq!(cfg.synth.rng_seed, 99);
        assert_eq!(cfg.rng, RngSeeds::from_master(99));
        assert_eq!(PipelineConfig::default().rng, RngSeeds::from_master(7));
    }

    #[test]
    fn party_order_must_match() {
        let mut cfg = PipelineConfig::default();
        cfg.parties = vec![
            "ps".into(),
            "fi".into(),
            "em".into(),
            "lr".into(),
            "fn".into(),
        ];
        assert!(cfg.validate().is_err());
        cfg.parties = cfg.synth.party_labels();
        cfg.validate().unwrap();
    }
}
