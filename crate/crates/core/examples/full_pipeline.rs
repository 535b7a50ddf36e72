// SPDX-License-Identifier: Apache-2.0

//! Every step of the file-based pipeline into a scratch directory, then the
//! aggregated report.

use context_crawl::pipeline::{self, files, CrawlOptions, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = PipelineConfig::default();
    cfg.out_dir = std::env::temp_dir().join("context-crawl-example");
    cfg.synth.bg_size = 3_000;
    cfg.detect.runs = 10;
    cfg.validate()?;

    let steps = [
        pipeline::cmd_generate(&cfg)?,
        pipeline::cmd_seeds(&cfg)?,
        pipeline::cmd_crawl(&cfg, CrawlOptions::default())?,
        pipeline::cmd_detect(&cfg)?,
        pipeline::cmd_affiliate(&cfg)?,
        pipeline::cmd_report(&cfg)?,
    ];
    for m in &steps {
        let names: Vec<&str> = m.outputs.iter().map(|o| o.file.as_str()).collect();
        println!(
            "{:<9} {:>6} calls  {}",
            m.step,
            m.calls_spent,
            names.join(" ")
        );
    }
    println!(
        "\n{}",
        std::fs::read_to_string(cfg.path(files::DISTRIBUTION))?
    );
    println!("written to {}", cfg.out_dir.display());
    Ok(())
}
