//! Combining an old model with a new one after alignment.
//!
//! For a token `i` with old vector `x_i`, new vector `y_i` and map `Q`:
//!
//! | token in        | merged vector                 |
//! |-----------------|-------------------------------|
//! | old only        | `x_i·Q`                       |
//! | both            | `(1-α)·x_i·Q + α·y_i`         |
//! | new only        | `y_i`                         |
//!
//! The merged vocabulary lists the new model's tokens first, in its order,
//! followed by the old-only tokens in the old model's order.

use std::cmp::Ordering;
use std::str::FromStr;

use crate::align::{OrthogonalMap, PairedVectors, ORTHOGONALITY_TOL};
use crate::classifier::{check_same_labels, LinearTextClassifier};
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeConfig {
    alpha: f64,
}

impl MergeConfig {
    /// `alpha` is the weight of the new model, in `[0, 1]`.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1], got {alpha}"
            )));
        }
        Ok(MergeConfig { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig { alpha: 0.5 }
    }
}

fn blend(mapped: Vec<f64>, new: &[f64], alpha: f64) -> Vec<f64> {
    if alpha == 1.0 {
        return new.to_vec();
    }
    if alpha == 0.0 {
        return mapped;
    }
    mapped
        .iter()
        .zip(new)
        .map(|(m, y)| (1.0 - alpha) * m + alpha * y)
        .collect()
}

fn check_dim(map: &OrthogonalMap, dims: &[usize]) -> Result<()> {
    for &d in dims {
        if d != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                found: d,
            });
        }
    }
    Ok(())
}

pub fn merge_embeddings(
    old: &EmbeddingModel,
    new: &EmbeddingModel,
    map: &OrthogonalMap,
    config: &MergeConfig,
) -> Result<EmbeddingModel> {
    check_dim(map, &[old.dim(), new.dim()])?;
    if !map.method().is_constrained() || !map.is_orthogonal() {
        log::warn!(
            "merging with a non-orthogonal {} map; vector norms are not preserved",
            map.method()
        );
    }
    let alpha = config.alpha();
    let mut vocab = Vec::with_capacity(old.len() + new.len());
    let mut data = Vec::with_capacity((old.len() + new.len()) * new.dim());
    for (tok, y) in new.rows() {
        vocab.push(tok.to_owned());
        match old.get(tok) {
            Some(x) => data.extend(blend(map.apply(x), y, alpha)),
            None => data.extend_from_slice(y),
        }
    }
    for (tok, x) in old.rows() {
        if !new.contains(tok) {
            vocab.push(tok.to_owned());
            data.extend(map.apply(x));
        }
    }
    EmbeddingModel::new(vocab, data, new.dim())
}

/// Merges two low-rank classifiers through an orthogonal map.
///
/// Feature tables merge exactly like embeddings (word and n-gram keys
/// alike); output rows are matched by label and blended the same way. The
/// result uses the new model's label order. With `α = 0.5` and shared
/// features this is `½(X₀Q + X₁)` and `½(V₀Q + V₁)`.
pub fn merge_classifiers(
    old: &LinearTextClassifier,
    new: &LinearTextClassifier,
    map: &OrthogonalMap,
    config: &MergeConfig,
) -> Result<LinearTextClassifier> {
    check_same_labels(old, new)?;
    check_dim(map, &[old.dim(), new.dim()])?;
    let deviation = map.orthogonality_error();
    if deviation > ORTHOGONALITY_TOL {
        return Err(Error::NonOrthogonal { deviation });
    }
    let features = merge_embeddings(old.features(), new.features(), map, config)?;
    let d = new.dim();
    let mut outputs = Vec::with_capacity(new.labels().len() * d);
    for (k, label) in new.labels().iter().enumerate() {
        let k_old = old.label_index(label).expect("label sets are equal");
        let v_old: Vec<f64> = old.outputs().row(k_old).iter().copied().collect();
        let v_new: Vec<f64> = new.outputs().row(k).iter().copied().collect();
        outputs.extend(blend(map.apply(&v_old), &v_new, config.alpha()));
    }
    LinearTextClassifier::new(
        features,
        nalgebra::DMatrix::from_row_slice(new.labels().len(), d, &outputs),
        new.labels().to_vec(),
        old.ngram_order().max(new.ngram_order()),
    )
}

/// Which model's vector norms rank candidate pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormSource {
    Old,
    #[default]
    New,
}

impl FromStr for NormSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "old" => Ok(NormSource::Old),
            "new" => Ok(NormSource::New),
            other => Err(format!("unknown norm source '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairStrategy {
    /// Every token shared by both models.
    AllCommon,
    /// The `count` shared tokens with the largest norms.
    TopNorm { count: usize, by: NormSource },
}

impl PairStrategy {
    pub fn top_norm(count: usize) -> Self {
        PairStrategy::TopNorm {
            count,
            by: NormSource::New,
        }
    }
}

impl FromStr for PairStrategy {
    type Err = String;

    /// `all-common` or `top-norm:N`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all-common" {
            return Ok(PairStrategy::AllCommon);
        }
        let n = s.strip_prefix("top-norm:").ok_or_else(|| {
            format!("unknown pair strategy '{s}' (expected all-common or top-norm:N)")
        })?;
        let count = n.parse().map_err(|_| format!("invalid pair count '{n}'"))?;
        if count == 0 {
            return Err("pair count must be >= 1".into());
        }
        Ok(PairStrategy::top_norm(count))
    }
}

/// Builds source (old) / target (new) training pairs from the shared
/// vocabulary, listed in the new model's order.
///
/// `top-norm` keeps the tokens with the highest norm in the chosen model,
/// ties broken lexicographically.
pub fn select_training_pairs(
    old: &EmbeddingModel,
    new: &EmbeddingModel,
    strategy: PairStrategy,
) -> Result<PairedVectors> {
    if old.dim() != new.dim() {
        return Err(Error::DimensionMismatch {
            expected: new.dim(),
            found: old.dim(),
        });
    }
    let common: Vec<(usize, usize)> = (0..new.len())
        .filter_map(|j| old.index_of(new.token(j)).map(|i| (i, j)))
        .collect();
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let chosen = match strategy {
        PairStrategy::AllCommon => common,
        PairStrategy::TopNorm { count, by } => {
            let norm = |&(i, j): &(usize, usize)| match by {
                NormSource::New => new.norm(j),
                NormSource::Old => old.norm(i),
            };
            let mut ranked: Vec<(f64, (usize, usize))> =
                common.iter().map(|p| (norm(p), *p)).collect();
            ranked.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| new.token(a.1 .1).cmp(new.token(b.1 .1)))
            });
            ranked.truncate(count);
            let mut picked: Vec<(usize, usize)> = ranked.into_iter().map(|(_, p)| p).collect();
            picked.sort_by_key(|&(_, j)| j);
            picked
        }
    };
    let d = new.dim();
    let mut source = Vec::with_capacity(chosen.len() * d);
    let mut target = Vec::with_capacity(chosen.len() * d);
    let mut tokens = Vec::with_capacity(chosen.len());
    for &(i, j) in &chosen {
        source.extend_from_slice(old.row(i));
        target.extend_from_slice(new.row(j));
        tokens.push(new.token(j).to_owned());
    }
    PairedVectors::new(
        nalgebra::DMatrix::from_row_slice(chosen.len(), d, &source),
        nalgebra::DMatrix::from_row_slice(chosen.len(), d, &target),
        tokens,
    )
}
