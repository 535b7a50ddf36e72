// SPDX-License-Identifier: Apache-2.0

use super::{
    cmd_affiliate, cmd_crawl, cmd_detect, cmd_generate, cmd_report, cmd_seeds, CrawlOptions,
    Manifest, Overrides, PipelineConfig, Result,
};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "context-crawl",
    version,
    about = "Targeted community crawl pipeline over a follow graph"
)]
pub struct Cli {
    /// TOML config file; flags given here win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Master seed; every RNG stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub credentials: Option<usize>,
    #[arg(long, global = true)]
    pub target_score: Option<f64>,
    #[arg(long, global = true)]
    pub exclusivity: Option<f64>,
    #[arg(long, global = true)]
    pub max_phases: Option<usize>,
    #[arg(long, global = true)]
    pub page_size: Option<usize>,
    #[arg(long, global = true)]
    pub window_limit: Option<u64>,
    #[arg(long, global = true)]
    pub window_seconds: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic host graph, node table and ground truth.
    Generate,
    /// Annotated database and seed profiles.
    Seeds,
    /// Back-and-forth crawl of the targeted community.
    Crawl {
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this phase; resume later with --resume.
        #[arg(long)]
        halt_after_phase: Option<usize>,
    },
    /// Repeated Louvain on the crawled subgraph.
    Detect,
    /// Cluster distribution, embeddedness and classifier.
    Affiliate,
    /// Aggregate report of every step.
    Report,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            workers: self.workers,
            credentials: self.credentials,
            target_score: self.target_score,
            exclusivity: self.exclusivity,
            max_phases: self.max_phases,
            page_size: self.page_size,
            window_limit: self.window_limit,
            window_seconds: self.window_seconds,
        }
    }

    pub fn execute(&self) -> Result<Manifest> {
        let cfg = PipelineConfig::load(self.config.as_deref(), &self.overrides())?;
        match self.command {
            Command::Generate => cmd_generate(&cfg),
            Command::Seeds => cmd_seeds(&cfg),
            Command::Crawl {
                resume,
                halt_after_phase,
            } => cmd_crawl(
                &cfg,
                CrawlOptions {
                    resume,
                    halt_after_phase,
                },
            ),
            Command::Detect => cmd_detect(&cfg),
            Command::Affiliate => cmd_affiliate(&cfg),
            Command::Report => cmd_report(&cfg),
        }
    }
}

/// Parses `args` (program name first), runs the step and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.execute() {
        Ok(m) => {
            println!(
                "{}: {} outputs, {} calls, {} virtual s, {:.2} s wall",
                m.step,
                m.outputs.len(),
                m.calls_spent,
                m.virtual_seconds,
                m.wall_seconds
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
