//! Updating word-vector based models with new data.
//!
//! Two models trained on different corpora are put in a common space with a
//! linear map ([`align`]) fitted on their shared vocabulary, then averaged
//! ([`merge`]). This works for plain word embeddings and for low-rank linear
//! text classifiers ([`classifier`]), whose scores are unchanged by an
//! orthogonal map applied to both features and output rows. [`eval`] holds
//! the metrics and the experiment driver; [`io`] the file formats.

pub mod align;
pub mod classifier;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod merge;

pub use align::{
    csls_score, knn_neighborhood, least_squares_align, procrustes_align, project_orthogonal,
    rcsls_align, rcsls_loss, rcsls_subgradient, MapMethod, OrthogonalMap, PairedVectors,
    RcslsConfig, RcslsInit,
};
pub use classifier::{train, train_from, vote_ensemble, LinearTextClassifier, TrainConfig};
pub use dataset::{AnalogyDataset, AnalogyQuestion, Document, LabeledDataset};
pub use embedding::EmbeddingModel;
pub use error::{Error, Result};
pub use eval::{
    eval_accuracy, eval_analogy, run_merge_experiment, sample_banned, split_analogy, AnalogySplit,
    ExperimentConfig, ExperimentReport, Variant,
};
pub use merge::{
    merge_classifiers, merge_embeddings, select_training_pairs, MergeConfig, NormSource,
    PairStrategy,
};
