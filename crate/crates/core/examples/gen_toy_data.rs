//! Writes the bundled toy classification corpus under `data/toy/`.
//!
//! Three classes, each with its own pool of indicative pseudo-words drawn
//! with a Zipf-like skew, mixed into a shared neutral vocabulary. Some
//! documents contain `not <w>` where `w` indicates a different class, so
//! bigram keys carry signal. Rare indicative words tend to appear in only
//! one small shard.
//!
//! Usage: cargo run -p wvmerge-core --example gen_toy_data [out_dir]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wvmerge::dataset::{Document, LabeledDataset};
use wvmerge::io::save_labeled;

const LABELS: [&str; 3] = ["pos", "neg", "neu"];
const CLASS_WORDS: usize = 120;
const NEUTRAL_WORDS: usize = 600;
const SHARD_DOCS: usize = 300;
const TEST_DOCS: usize = 3000;
const SEED: u64 = 2019;

const ONSETS: [&str; 12] = ["b", "d", "f", "k", "l", "m", "n", "p", "r", "s", "t", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pronounceable token for `(prefix, i)`.
fn pseudo_word(prefix: &str, i: usize) -> String {
    let mut w = prefix.to_string();
    let mut n = i;
    loop {
        w.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        w.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
        if n == 0 {
            break;
        }
    }
    w
}

/// Rank drawn with probability proportional to `1 / (rank + 1)`.
fn zipf(rng: &mut ChaCha8Rng, n: usize, cdf: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[n - 1];
    cdf.partition_point(|&c| c < u).min(n - 1)
}

fn cdf(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (0..n)
        .map(|r| {
            acc += 1.0 / (r as f64 + 1.0);
            acc
        })
        .collect()
}

struct Generator {
    rng: ChaCha8Rng,
    class_words: Vec<Vec<String>>,
    neutral: Vec<String>,
    class_cdf: Vec<f64>,
    neutral_cdf: Vec<f64>,
}

impl Generator {
    fn new(seed: u64) -> Self {
        let prefixes = ["po", "ne", "mu"];
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            class_words: prefixes
                .iter()
                .map(|p| (0..CLASS_WORDS).map(|i| pseudo_word(p, i)).collect())
                .collect(),
            neutral: (0..NEUTRAL_WORDS).map(|i| pseudo_word("", i)).collect(),
            class_cdf: cdf(CLASS_WORDS),
            neutral_cdf: cdf(NEUTRAL_WORDS),
        }
    }

    fn class_word(&mut self, class: usize) -> String {
        let r = zipf(&mut self.rng, CLASS_WORDS, &self.class_cdf);
        self.class_words[class][r].clone()
    }

    fn other_class(&mut self, class: usize) -> usize {
        (class + self.rng.random_range(1..LABELS.len())) % LABELS.len()
    }

    fn document(&mut self) -> Document {
        let class = self.rng.random_range(0..LABELS.len());
        let len = self.rng.random_range(6..16);
        let mut tokens = Vec::with_capacity(len + 2);
        while tokens.len() < len {
            let u: f64 = self.rng.random();
            if u < 0.3 {
                let c = if self.rng.random_bool(0.85) {
                    class
                } else {
                    self.other_class(class)
                };
                tokens.push(self.class_word(c));
            } else if u < 0.36 {
                let c = self.other_class(class);
                tokens.push("not".to_string());
                tokens.push(self.class_word(c));
            } else {
                let r = zipf(&mut self.rng, NEUTRAL_WORDS, &self.neutral_cdf);
                tokens.push(self.neutral[r].clone());
            }
        }
        Document {
            label: LABELS[class].to_string(),
            tokens,
        }
    }

    fn dataset(&mut self, n: usize) -> LabeledDataset {
        LabeledDataset::new((0..n).map(|_| self.document()).collect())
            .expect("documents are non-empty")
    }
}

fn main() -> wvmerge::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/toy"));
    std::fs::create_dir_all(&out).map_err(|e| wvmerge::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut g = Generator::new(SEED);
    let shard0 = g.dataset(SHARD_DOCS);
    let shard1 = g.dataset(SHARD_DOCS);
    let test = g.dataset(TEST_DOCS);
    save_labeled(&shard0, out.join("shard0.txt"))?;
    save_labeled(&shard1, out.join("shard1.txt"))?;
    save_labeled(&test, out.join("test.txt"))?;
    println!(
        "wrote {} + {} training and {} test documents to {}",
        shard0.len(),
        shard1.len(),
        test.len(),
        out.display()
    );
    Ok(())
}
