//! Analogy and classification metrics, and the classifier merge experiment.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::{rcsls_align, RcslsConfig};
use crate::classifier::{train, train_from, vote_ensemble, LinearTextClassifier, TrainConfig};
use crate::dataset::{AnalogyCategory, AnalogyDataset, AnalogyQuestion, LabeledDataset};
use crate::embedding::{normalize_rows, EmbeddingModel};
use crate::error::{Error, Result};
use crate::merge::{merge_classifiers, select_training_pairs, MergeConfig, PairStrategy};

/// Questions touching a banned token, and the rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogySplit {
    pub out_of_vocab: AnalogyDataset,
    pub in_vocab: AnalogyDataset,
    pub banned: BTreeSet<String>,
}

/// Partitions `data` by whether a question uses any token of `banned`.
/// Category structure and question order are kept in both halves.
pub fn split_analogy(data: &AnalogyDataset, banned: &BTreeSet<String>) -> AnalogySplit {
    let mut oov = Vec::new();
    let mut inv = Vec::new();
    for cat in data.categories() {
        let (hit, miss): (Vec<AnalogyQuestion>, Vec<AnalogyQuestion>) = cat
            .questions
            .iter()
            .cloned()
            .partition(|q| q.tokens().iter().any(|t| banned.contains(t)));
        oov.push(AnalogyCategory {
            name: cat.name.clone(),
            questions: hit,
        });
        inv.push(AnalogyCategory {
            name: cat.name.clone(),
            questions: miss,
        });
    }
    AnalogySplit {
        out_of_vocab: AnalogyDataset::new(oov).expect("names come from a valid dataset"),
        in_vocab: AnalogyDataset::new(inv).expect("names come from a valid dataset"),
        banned: banned.clone(),
    }
}

/// Samples `⌈fraction · |V_c|⌉` distinct words from each category's
/// vocabulary `V_c` and returns their union.
pub fn sample_banned(data: &AnalogyDataset, fraction: f64, seed: u64) -> Result<BTreeSet<String>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut banned = BTreeSet::new();
    for cat in data.categories() {
        let vocab = cat.vocabulary();
        // guard against 0.1 * 30 = 3.0000000000000004
        let count = ((fraction * vocab.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let count = count.min(vocab.len());
        for i in rand::seq::index::sample(&mut rng, vocab.len(), count).into_iter() {
            banned.insert(vocab[i].to_owned());
        }
    }
    Ok(banned)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryAccuracy {
    pub name: String,
    pub correct: usize,
    pub total: usize,
}

impl CategoryAccuracy {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyReport {
    pub categories: Vec<CategoryAccuracy>,
}

impl AnalogyReport {
    pub fn correct(&self) -> usize {
        self.categories.iter().map(|c| c.correct).sum()
    }

    pub fn total(&self) -> usize {
        self.categories.iter().map(|c| c.total).sum()
    }

    /// Micro-averaged accuracy over all questions.
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Unit-normalized rows used for analogy search.
struct AnalogyIndex<'a> {
    model: &'a EmbeddingModel,
    unit: DMatrix<f64>,
}

impl<'a> AnalogyIndex<'a> {
    fn new(model: &'a EmbeddingModel) -> Self {
        let mut unit = model.to_matrix();
        normalize_rows(&mut unit);
        AnalogyIndex { model, unit }
    }

    /// 3CosAdd answer to `a : b :: c : ?`, excluding the query words.
    fn answer(&self, a: &str, b: &str, c: &str) -> Option<usize> {
        let ia = self.model.index_of(a)?;
        let ib = self.model.index_of(b)?;
        let ic = self.model.index_of(c)?;
        let target = self.unit.row(ib) - self.unit.row(ia) + self.unit.row(ic);
        let scores = &self.unit * target.transpose();
        let mut best: Option<(usize, f64)> = None;
        for (w, &s) in scores.iter().enumerate() {
            if w == ia || w == ib || w == ic {
                continue;
            }
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((w, s));
            }
        }
        best.map(|(w, _)| w)
    }

    fn is_correct(&self, q: &AnalogyQuestion) -> bool {
        let [a, b, c, d] = q.tokens();
        self.answer(a, b, c)
            .is_some_and(|w| self.model.token(w) == d)
    }
}

/// Accuracy of the 3CosAdd rule on unit vectors.
///
/// A question whose query words are not all in the model counts as wrong.
pub fn eval_analogy(model: &EmbeddingModel, data: &AnalogyDataset) -> AnalogyReport {
    let index = AnalogyIndex::new(model);
    let categories = data
        .categories()
        .iter()
        .map(|cat| {
            let correct = cat
                .questions
                .par_iter()
                .map(|q| usize::from(index.is_correct(q)))
                .collect::<Vec<_>>()
                .into_iter()
                .sum();
            CategoryAccuracy {
                name: cat.name.clone(),
                correct,
                total: cat.questions.len(),
            }
        })
        .collect();
    AnalogyReport { categories }
}

/// Fraction of documents whose most probable label is the gold label.
pub fn eval_accuracy(model: &LinearTextClassifier, data: &LabeledDataset) -> Result<f64> {
    let mut correct = 0;
    for doc in data.documents() {
        let gold = model
            .label_index(&doc.label)
            .ok_or_else(|| Error::UnknownLabel(doc.label.clone()))?;
        if model.predict(&doc.tokens).0 == gold {
            correct += 1;
        }
    }
    Ok(ratio(correct, data.len()))
}

/// Accuracy of the two-model vote on `data`.
pub fn eval_vote_accuracy(
    a: &LinearTextClassifier,
    b: &LinearTextClassifier,
    data: &LabeledDataset,
) -> Result<f64> {
    let mut correct = 0;
    for doc in data.documents() {
        if a.label_index(&doc.label).is_none() {
            return Err(Error::UnknownLabel(doc.label.clone()));
        }
        if vote_ensemble(&doc.tokens, a, b)? == doc.label {
            correct += 1;
        }
    }
    Ok(ratio(correct, data.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub rcsls: RcslsConfig,
    pub pairs: PairStrategy,
    pub merge: MergeConfig,
}

/// Training epochs used by [`ExperimentConfig::default`]. Small shards need
/// more passes than [`TrainConfig`]'s default to converge.
pub const EXPERIMENT_EPOCHS: usize = 25;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig {
                epochs: EXPERIMENT_EPOCHS,
                ..TrainConfig::default()
            },
            rcsls: RcslsConfig::default(),
            pairs: PairStrategy::top_norm(1000),
            merge: MergeConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    TrainS0,
    TrainS1,
    TrainUnion,
    FineTune,
    Vote,
    RcslsFine,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::TrainS0,
        Variant::TrainS1,
        Variant::TrainUnion,
        Variant::FineTune,
        Variant::Vote,
        Variant::RcslsFine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TrainS0 => "train_s0",
            Variant::TrainS1 => "train_s1",
            Variant::TrainUnion => "train_s0_s1",
            Variant::FineTune => "fine_tune",
            Variant::Vote => "vote",
            Variant::RcslsFine => "rcsls_fine",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub variant: Variant,
    pub split: String,
    /// Fraction of test documents classified correctly.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn accuracy(&self, variant: Variant) -> f64 {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .map(|r| r.accuracy)
            .expect("every variant is reported")
    }

    /// Tab-separated table; accuracy in percentage points.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("variant\tsplit\taccuracy\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{:.2}",
                r.variant.name(),
                r.split,
                100.0 * r.accuracy
            )
            .unwrap();
        }
        out
    }
}

/// The trained models behind an [`ExperimentReport`].
#[derive(Clone, Debug)]
pub struct ExperimentModels {
    pub s0: LinearTextClassifier,
    pub s1: LinearTextClassifier,
    pub union: LinearTextClassifier,
    pub fine_tune: LinearTextClassifier,
    pub merged: LinearTextClassifier,
}

/// Trains every variant on the two shards and scores them on `test`.
///
/// The merged model aligns the S₀ classifier onto the fine-tuned one with
/// RCSLS on word pairs, then merges features and output rows.
pub fn run_merge_experiment(
    shard0: &LabeledDataset,
    shard1: &LabeledDataset,
    test: &LabeledDataset,
    config: &ExperimentConfig,
) -> Result<(ExperimentReport, ExperimentModels)> {
    let seeded = |offset: u64| TrainConfig {
        seed: config.train.seed.wrapping_add(offset),
        ..config.train.clone()
    };
    let s0 = train(shard0, &seeded(0))?;
    let s1 = train(shard1, &seeded(1))?;
    let union = train(&shard0.concat(shard1), &seeded(2))?;
    let fine_tune = train_from(shard1, &seeded(3), Some(&s0))?;

    let pairs = select_training_pairs(
        &s0.word_features(),
        &fine_tune.word_features(),
        config.pairs,
    )?;
    let mut rcsls = config.rcsls.clone();
    if rcsls.k > pairs.len() {
        log::warn!(
            "only {} pairs; reducing k from {} to {}",
            pairs.len(),
            rcsls.k,
            pairs.len()
        );
        rcsls.k = pairs.len();
    }
    let map = rcsls_align(&pairs, &rcsls)?;
    let merged = merge_classifiers(&s0, &fine_tune, &map, &config.merge)?;

    let split = "test".to_string();
    let row = |variant, accuracy| ReportRow {
        variant,
        split: split.clone(),
        accuracy,
    };
    let rows = vec![
        row(Variant::TrainS0, eval_accuracy(&s0, test)?),
        row(Variant::TrainS1, eval_accuracy(&s1, test)?),
        row(Variant::TrainUnion, eval_accuracy(&union, test)?),
        row(Variant::FineTune, eval_accuracy(&fine_tune, test)?),
        row(Variant::Vote, eval_vote_accuracy(&s0, &s1, test)?),
        row(Variant::RcslsFine, eval_accuracy(&merged, test)?),
    ];
    Ok((
        ExperimentReport { rows },
        ExperimentModels {
            s0,
            s1,
            union,
            fine_tune,
            merged,
        },
    ))
}
