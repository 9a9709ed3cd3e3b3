//! Runs the classifier merge experiment on the bundled toy corpus and
//! prints the report table.
//!
//! Usage: cargo run -p wvmerge-core --example toy_experiment [data_dir] [seed] [epochs]

use std::path::PathBuf;

use wvmerge::io::load_labeled;
use wvmerge::{run_merge_experiment, ExperimentConfig};

fn main() -> wvmerge::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/toy"));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let shard0 = load_labeled(dir.join("shard0.txt"))?;
    let shard1 = load_labeled(dir.join("shard1.txt"))?;
    let test = load_labeled(dir.join("test.txt"))?;
    let mut config = ExperimentConfig::default();
    if let Some(epochs) = args.next().and_then(|s| s.parse().ok()) {
        config.train.epochs = epochs;
    }
    config.train.seed = seed;
    config.rcsls.seed = seed;
    let (report, _) = run_merge_experiment(&shard0, &shard1, &test, &config)?;
    print!("{}", report.to_tsv());
    Ok(())
}
