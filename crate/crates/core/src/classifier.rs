//! A small fastText-style linear text classifier.
//!
//! A document's hidden vector is the mean of the embeddings of its unigram
//! keys (and bigram keys `a_b` when `ngram_order` is 2). Class scores are
//! `V·h` for the `K×d` output matrix `V`, turned into probabilities with a
//! softmax. The score matrix over features is therefore the low-rank product
//! `X·Vᵀ`.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};

pub const NGRAM_SEPARATOR: char = '_';

#[derive(Clone, Debug, PartialEq)]
pub struct LinearTextClassifier {
    features: EmbeddingModel,
    outputs: DMatrix<f64>,
    labels: Vec<String>,
    ngram_order: u8,
}

/// Result of featurizing one document.
#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub vector: Vec<f64>,
    /// Keys of the document that have no row in the feature table.
    pub unknown: usize,
}

impl LinearTextClassifier {
    pub fn new(
        features: EmbeddingModel,
        outputs: DMatrix<f64>,
        labels: Vec<String>,
        ngram_order: u8,
    ) -> Result<Self> {
        if outputs.ncols() != features.dim() {
            return Err(Error::DimensionMismatch {
                expected: features.dim(),
                found: outputs.ncols(),
            });
        }
        if outputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: outputs.nrows(),
            });
        }
        if labels.len() < 2 {
            return Err(Error::InvalidConfig(
                "a classifier needs at least 2 labels".into(),
            ));
        }
        let distinct: HashSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::InvalidConfig("duplicate label".into()));
        }
        if !(1..=2).contains(&ngram_order) {
            return Err(Error::InvalidConfig(format!(
                "n-gram order must be 1 or 2, got {ngram_order}"
            )));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite output weight".into()));
        }
        Ok(LinearTextClassifier {
            features,
            outputs,
            labels,
            ngram_order,
        })
    }

    pub fn features(&self) -> &EmbeddingModel {
        &self.features
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn ngram_order(&self) -> u8 {
        self.ngram_order
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// True for keys that name a word rather than a bigram.
    pub fn is_word_key(&self, key: &str) -> bool {
        self.ngram_order == 1 || !key.contains(NGRAM_SEPARATOR)
    }

    /// Feature table restricted to word keys.
    pub fn word_features(&self) -> EmbeddingModel {
        self.features.filter(|k| self.is_word_key(k))
    }

    /// Mean of the feature vectors present for `doc`; zero if none are known.
    pub fn featurize(&self, doc: &[String]) -> Hidden {
        let d = self.dim();
        let mut vector = vec![0.0; d];
        let mut found = 0usize;
        let mut unknown = 0usize;
        for key in feature_keys(doc, self.ngram_order) {
            match self.features.get(&key) {
                Some(row) => {
                    for (acc, v) in vector.iter_mut().zip(row) {
                        *acc += v;
                    }
                    found += 1;
                }
                None => unknown += 1,
            }
        }
        if found > 0 {
            let n = found as f64;
            vector.iter_mut().for_each(|v| *v /= n);
        }
        Hidden { vector, unknown }
    }

    /// Raw class scores `v_k·h`.
    pub fn scores(&self, doc: &[String]) -> Vec<f64> {
        let h = self.featurize(doc).vector;
        scores_for_hidden(&self.outputs, &h)
    }

    pub fn predict_proba(&self, doc: &[String]) -> Vec<f64> {
        softmax(&self.scores(doc))
    }

    /// Most probable label index and its probability. Ties go to the
    /// earlier label.
    pub fn predict(&self, doc: &[String]) -> (usize, f64) {
        argmax(&self.predict_proba(doc))
    }

    pub fn predict_label(&self, doc: &[String]) -> &str {
        &self.labels[self.predict(doc).0]
    }

    /// Copy with features and output rows both mapped by `q` (rows `x·Q`).
    pub fn mapped(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.shape() != (self.dim(), self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.nrows(),
            });
        }
        let features = EmbeddingModel::from_matrix(
            self.features.vocab().to_vec(),
            &(self.features.to_matrix() * q),
        )?;
        Self::new(
            features,
            &self.outputs * q,
            self.labels.clone(),
            self.ngram_order,
        )
    }

    /// Mean negative log-likelihood of the gold labels.
    pub fn mean_log_loss(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for doc in data.documents() {
            let k = self
                .label_index(&doc.label)
                .ok_or_else(|| Error::UnknownLabel(doc.label.clone()))?;
            total -= self.predict_proba(&doc.tokens)[k].ln();
        }
        Ok(total / data.len() as f64)
    }
}

/// Unigram keys followed by consecutive-bigram keys when `order` is 2.
pub fn feature_keys(doc: &[String], order: u8) -> Vec<String> {
    let mut keys: Vec<String> = doc.to_vec();
    if order >= 2 {
        keys.extend(
            doc.windows(2)
                .map(|w| format!("{}{NGRAM_SEPARATOR}{}", w[0], w[1])),
        );
    }
    keys
}

fn scores_for_hidden(outputs: &DMatrix<f64>, h: &[f64]) -> Vec<f64> {
    (0..outputs.nrows())
        .map(|k| outputs.row(k).iter().zip(h).map(|(v, x)| v * x).sum())
        .collect()
}

/// Softmax with max subtraction.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Starting step size, decayed linearly to zero over all updates.
    pub learning_rate: f64,
    pub ngram_order: u8,
    pub seed: u64,
    /// Keys seen fewer times than this in the training data are dropped.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 10,
            epochs: 5,
            learning_rate: 0.5,
            ngram_order: 2,
            seed: 0,
            min_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be >= 0".into()));
        }
        if !(1..=2).contains(&self.ngram_order) {
            return Err(Error::InvalidConfig("n-gram order must be 1 or 2".into()));
        }
        Ok(())
    }
}

pub fn train(data: &LabeledDataset, config: &TrainConfig) -> Result<LinearTextClassifier> {
    train_from(data, config, None)
}

/// Trains a classifier, optionally warm-starting feature rows from `init`.
///
/// Keys present in `init` start from its vectors; all others are drawn
/// uniformly from `[-1/d, 1/d]`. Output rows always start at zero. Training
/// is plain SGD on the softmax log loss over shuffled documents and is
/// deterministic for a given seed.
pub fn train_from(
    data: &LabeledDataset,
    config: &TrainConfig,
    init: Option<&LinearTextClassifier>,
) -> Result<LinearTextClassifier> {
    config.validate()?;
    let labels = data.labels().to_vec();
    if labels.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "training needs at least 2 labels, found {}",
            labels.len()
        )));
    }
    if let Some(m) = init {
        if m.dim() != config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim,
                found: m.dim(),
            });
        }
    }
    let d = config.dim;

    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut first_seen: Vec<String> = Vec::new();
    for doc in data.documents() {
        for key in feature_keys(&doc.tokens, config.ngram_order) {
            let c = counts.entry(key).or_insert_with_key(|k| {
                first_seen.push(k.clone());
                0
            });
            *c += 1;
        }
    }
    let vocab: Vec<String> = first_seen
        .into_iter()
        .filter(|k| counts[k] >= config.min_count)
        .collect();
    let index: HashMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 1.0 / d as f64;
    let mut feats = Vec::with_capacity(vocab.len() * d);
    for key in &vocab {
        let fresh: Vec<f64> = (0..d).map(|_| rng.random_range(-bound..=bound)).collect();
        match init.and_then(|m| m.features().get(key)) {
            Some(row) => feats.extend_from_slice(row),
            None => feats.extend(fresh),
        }
    }
    let k = labels.len();
    let mut outputs = vec![0.0; k * d];

    let docs: Vec<(usize, Vec<usize>)> = data
        .documents()
        .iter()
        .map(|doc| {
            let y = labels
                .iter()
                .position(|l| *l == doc.label)
                .expect("label set is complete");
            let idx = feature_keys(&doc.tokens, config.ngram_order)
                .iter()
                .filter_map(|key| index.get(key.as_str()).copied())
                .collect();
            (y, idx)
        })
        .collect();

    let total_steps = (config.epochs * docs.len()) as f64;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut hidden = vec![0.0; d];
    let mut grad_hidden = vec![0.0; d];
    let mut scores = vec![0.0; k];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &di in &order {
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps);
            step += 1;
            let (y, idx) = &docs[di];
            if idx.is_empty() {
                continue;
            }
            let n = idx.len() as f64;
            hidden.iter_mut().for_each(|h| *h = 0.0);
            for &f in idx {
                for (h, v) in hidden.iter_mut().zip(&feats[f * d..(f + 1) * d]) {
                    *h += v;
                }
            }
            hidden.iter_mut().for_each(|h| *h /= n);
            for (c, s) in scores.iter_mut().enumerate() {
                *s = outputs[c * d..(c + 1) * d]
                    .iter()
                    .zip(&hidden)
                    .map(|(v, h)| v * h)
                    .sum();
            }
            let probs = softmax(&scores);

            grad_hidden.iter_mut().for_each(|g| *g = 0.0);
            for c in 0..k {
                let g = probs[c] - if c == *y { 1.0 } else { 0.0 };
                let row = &mut outputs[c * d..(c + 1) * d];
                for j in 0..d {
                    grad_hidden[j] += g * row[j];
                    row[j] -= lr * g * hidden[j];
                }
            }
            for &f in idx {
                for (v, g) in feats[f * d..(f + 1) * d].iter_mut().zip(&grad_hidden) {
                    *v -= lr * g / n;
                }
            }
        }
        log::debug!("classifier epoch {} done", epoch + 1);
    }

    let features = EmbeddingModel::new(vocab, feats, d)?;
    LinearTextClassifier::new(
        features,
        DMatrix::from_row_slice(k, d, &outputs),
        labels,
        config.ngram_order,
    )
}

pub(crate) fn check_same_labels(a: &LinearTextClassifier, b: &LinearTextClassifier) -> Result<()> {
    let sa: HashSet<&String> = a.labels().iter().collect();
    let sb: HashSet<&String> = b.labels().iter().collect();
    if sa != sb {
        return Err(Error::LabelMismatch(format!(
            "[{}] vs [{}]",
            a.labels().join(", "),
            b.labels().join(", ")
        )));
    }
    Ok(())
}

/// Two-model vote: agreeing predictions win outright, otherwise the more
/// confident model decides. An exact confidence tie goes to `a`.
pub fn vote_ensemble<'a>(
    doc: &[String],
    a: &'a LinearTextClassifier,
    b: &'a LinearTextClassifier,
) -> Result<&'a str> {
    check_same_labels(a, b)?;
    let (ia, pa) = a.predict(doc);
    let (ib, pb) = b.predict(doc);
    let (la, lb) = (&a.labels()[ia], &b.labels()[ib]);
    if la == lb || pa >= pb {
        Ok(la)
    } else {
        Ok(lb)
    }
}
