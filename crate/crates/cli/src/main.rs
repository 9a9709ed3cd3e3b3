//! `wvmerge` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numeric failure.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wvmerge::align::{
    least_squares_align, procrustes_align, rcsls_align, MapMethod, RcslsConfig, RcslsInit,
};
use wvmerge::eval::{eval_analogy, eval_vote_accuracy, AnalogyReport};
use wvmerge::io;
use wvmerge::{
    eval_accuracy, merge_classifiers, merge_embeddings, run_merge_experiment, sample_banned,
    select_training_pairs, split_analogy, EmbeddingModel, Error, ExperimentConfig, MergeConfig,
    NormSource, PairStrategy, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "wvmerge",
    version,
    about = "Align and merge word-vector models and linear text classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a map from the old model's space to the new one's.
    Align(AlignArgs),
    /// Merge two embedding files through a map.
    MergeVectors(MergeArgs),
    /// Merge two classifier files through an orthogonal map.
    MergeClassifiers(MergeArgs),
    /// Train a linear text classifier.
    Train(TrainArgs),
    /// Predict one label per input document.
    Predict(PredictArgs),
    /// Predict with the two-model vote ensemble.
    Vote(VoteArgs),
    /// Score an embedding file on analogy questions.
    EvalAnalogy(EvalAnalogyArgs),
    /// Accuracy of a classifier (or a vote of two) on labeled data.
    EvalAccuracy(EvalAccuracyArgs),
    /// Sample banned words and split analogy questions into OOV / in-vocab sets.
    SplitAnalogy(SplitAnalogyArgs),
    /// Run the shard merge experiment and write the report table.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct AlignArgs {
    /// Old model (embedding or classifier file); the map sends it to the new space.
    #[arg(long)]
    old: PathBuf,
    #[arg(long)]
    new: PathBuf,
    #[arg(long, default_value = "procrustes")]
    method: MapMethod,
    #[arg(long, default_value = "top-norm:1000")]
    pairs: PairStrategy,
    /// Model whose norms rank pairs for top-norm selection.
    #[arg(long, default_value = "new")]
    norm_source: NormSource,
    /// L2-normalize pairs before fitting (rcsls always does).
    #[arg(long)]
    normalize: bool,
    #[command(flatten)]
    rcsls: RcslsArgs,
    /// Lowercase tokens when reading embedding files.
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct RcslsArgs {
    /// RCSLS neighbourhood size.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// RCSLS initial learning rate.
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    /// RCSLS epochs.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// RCSLS minibatch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value = "procrustes")]
    init: RcslsInit,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RcslsArgs {
    fn config(&self) -> RcslsConfig {
        RcslsConfig {
            k: self.k,
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            init: self.init,
        }
    }
}

#[derive(Args, Debug)]
struct MergeArgs {
    #[arg(long)]
    old: PathBuf,
    #[arg(long)]
    new: PathBuf,
    /// Map file written by `align`.
    #[arg(long)]
    map: PathBuf,
    /// Weight of the new model's vectors.
    #[arg(long, default_value = "0.5", value_parser = parse_alpha)]
    alpha: MergeConfig,
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    /// Warm-start feature vectors from this classifier (fine-tuning).
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// 1 for unigrams only, 2 to add bigram keys.
    #[arg(long, default_value_t = 2)]
    ngrams: u8,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            learning_rate: self.lr,
            ngram_order: self.ngrams,
            seed: self.seed,
            min_count: self.min_count,
        }
    }
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Documents, one per line; a leading `__label__` field is ignored.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VoteArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalAnalogyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Banned words, one per line; questions are then scored as OOV and in-vocab splits.
    #[arg(long)]
    banned: Option<PathBuf>,
    /// Keep the case of questions and vectors.
    #[arg(long)]
    no_lowercase: bool,
    /// Also report every category.
    #[arg(long)]
    verbose: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalAccuracyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Second classifier; when given, the vote ensemble is scored.
    #[arg(long)]
    vote_with: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitAnalogyArgs {
    #[arg(long)]
    questions: PathBuf,
    /// Fraction of each category's vocabulary to ban.
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_lowercase: bool,
    /// Directory receiving banned.txt, oov.txt and in_vocab.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    shard0: PathBuf,
    #[arg(long)]
    shard1: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = wvmerge::eval::EXPERIMENT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 2)]
    ngrams: u8,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long, default_value = "top-norm:1000")]
    pairs: PairStrategy,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    rcsls_lr: f64,
    #[arg(long, default_value_t = 10)]
    rcsls_epochs: usize,
    #[arg(long, default_value = "0.5", value_parser = parse_alpha)]
    alpha: MergeConfig,
    /// Seeds every training run and the RCSLS shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn config(&self) -> ExperimentConfig {
        let base = ExperimentConfig::default();
        ExperimentConfig {
            train: TrainConfig {
                dim: self.dim,
                epochs: self.epochs,
                learning_rate: self.lr,
                ngram_order: self.ngrams,
                seed: self.seed,
                min_count: self.min_count,
            },
            rcsls: RcslsConfig {
                k: self.k,
                epochs: self.rcsls_epochs,
                learning_rate: self.rcsls_lr,
                seed: self.seed,
                ..base.rcsls
            },
            pairs: self.pairs,
            merge: self.alpha,
        }
    }
}

fn parse_alpha(s: &str) -> Result<MergeConfig, String> {
    let a: f64 = s.parse().map_err(|_| format!("invalid number '{s}'"))?;
    MergeConfig::new(a).map_err(|e| e.to_string())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Singular { .. } | Error::NonOrthogonal { .. } | Error::Numeric(_) => 3,
        Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    eprintln!("config: {:?}", cli.command);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> wvmerge::Result<()> {
    match command {
        Command::Align(a) => cmd_align(a),
        Command::MergeVectors(a) => cmd_merge_vectors(a),
        Command::MergeClassifiers(a) => cmd_merge_classifiers(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Vote(a) => cmd_vote(a),
        Command::EvalAnalogy(a) => cmd_eval_analogy(a),
        Command::EvalAccuracy(a) => cmd_eval_accuracy(a),
        Command::SplitAnalogy(a) => cmd_split_analogy(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

/// Word vectors of an embedding file, or the word features of a classifier file.
fn load_vectors(path: &Path, lowercase: bool) -> wvmerge::Result<EmbeddingModel> {
    if io::is_classifier_file(path)? {
        return Ok(io::load_classifier(path)?.word_features());
    }
    load_embedding_file(path, lowercase)
}

fn load_embedding_file(path: &Path, lowercase: bool) -> wvmerge::Result<EmbeddingModel> {
    let loaded = io::load_embeddings(path, lowercase)?;
    if loaded.duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {} tokens colliding after lowercasing",
            path.display(),
            loaded.duplicates_dropped
        );
    }
    Ok(loaded.model)
}

/// Writes `text` to `out`, or to stdout without a path.
fn emit(text: &str, out: Option<&Path>) -> wvmerge::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_align(a: AlignArgs) -> wvmerge::Result<()> {
    let old = load_vectors(&a.old, a.lowercase)?;
    let new = load_vectors(&a.new, a.lowercase)?;
    let strategy = match a.pairs {
        PairStrategy::TopNorm { count, .. } => PairStrategy::TopNorm {
            count,
            by: a.norm_source,
        },
        s => s,
    };
    let mut pairs = select_training_pairs(&old, &new, strategy)?;
    if a.normalize {
        pairs = pairs.normalized();
    }
    eprintln!("pairs: {} of dimension {}", pairs.len(), pairs.dim());
    let map = match a.method {
        MapMethod::LeastSquares => least_squares_align(&pairs)?,
        MapMethod::Procrustes => procrustes_align(&pairs)?,
        MapMethod::Rcsls => {
            let cfg = a.rcsls.config();
            eprintln!("rcsls: {cfg:?}");
            rcsls_align(&pairs, &cfg)?
        }
    };
    if map.is_non_unique() {
        log::warn!("the Procrustes solution is not unique for these pairs");
    }
    if let Some(loss) = map.final_loss() {
        eprintln!("final loss: {loss:?}");
    }
    eprintln!("orthogonality error: {:e}", map.orthogonality_error());
    io::save_map(&map, &a.out)
}

fn cmd_merge_vectors(a: MergeArgs) -> wvmerge::Result<()> {
    let old = load_embedding_file(&a.old, a.lowercase)?;
    let new = load_embedding_file(&a.new, a.lowercase)?;
    let map = io::load_map(&a.map)?;
    let merged = merge_embeddings(&old, &new, &map, &a.alpha)?;
    eprintln!("merged vocabulary: {} tokens", merged.len());
    io::save_embeddings(&merged, &a.out)
}

fn cmd_merge_classifiers(a: MergeArgs) -> wvmerge::Result<()> {
    let old = io::load_classifier(&a.old)?;
    let new = io::load_classifier(&a.new)?;
    let map = io::load_map(&a.map)?;
    let merged = merge_classifiers(&old, &new, &map, &a.alpha)?;
    eprintln!("merged features: {} keys", merged.features().len());
    io::save_classifier(&merged, &a.out)
}

fn cmd_train(a: TrainArgs) -> wvmerge::Result<()> {
    let data = io::load_labeled(&a.input)?;
    let cfg = a.train.config();
    let init = a.init.as_deref().map(io::load_classifier).transpose()?;
    let model = wvmerge::train_from(&data, &cfg, init.as_ref())?;
    eprintln!(
        "trained on {} documents: {} keys, {} labels",
        data.len(),
        model.features().len(),
        model.labels().len()
    );
    io::save_classifier(&model, &a.out)
}

fn cmd_predict(a: PredictArgs) -> wvmerge::Result<()> {
    let model = io::load_classifier(&a.model)?;
    let docs = io::load_documents(&a.input)?;
    let mut out = String::new();
    for doc in &docs {
        let (k, p) = model.predict(doc);
        writeln!(out, "{}\t{:?}", model.labels()[k], p).unwrap();
    }
    emit(&out, a.out.as_deref())
}

fn cmd_vote(a: VoteArgs) -> wvmerge::Result<()> {
    let ma = io::load_classifier(&a.a)?;
    let mb = io::load_classifier(&a.b)?;
    let docs = io::load_documents(&a.input)?;
    let mut out = String::new();
    for doc in &docs {
        writeln!(out, "{}", wvmerge::vote_ensemble(doc, &ma, &mb)?).unwrap();
    }
    emit(&out, a.out.as_deref())
}

fn analogy_lines(out: &mut String, split: &str, report: &AnalogyReport, verbose: bool) {
    if verbose {
        for c in &report.categories {
            writeln!(
                out,
                "{split}\t{}\t{}\t{}\t{:.2}",
                c.name,
                c.correct,
                c.total,
                100.0 * c.accuracy()
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        "{split}\tall\t{}\t{}\t{:.2}",
        report.correct(),
        report.total(),
        100.0 * report.accuracy()
    )
    .unwrap();
}

fn cmd_eval_analogy(a: EvalAnalogyArgs) -> wvmerge::Result<()> {
    let lowercase = !a.no_lowercase;
    let model = load_embedding_file(&a.model, lowercase)?;
    let questions = io::load_analogies(&a.questions, lowercase)?;
    let mut out = String::from("split\tcategory\tcorrect\ttotal\taccuracy\n");
    match &a.banned {
        None => analogy_lines(
            &mut out,
            "all",
            &eval_analogy(&model, &questions),
            a.verbose,
        ),
        Some(path) => {
            let banned = read_word_list(path, lowercase)?;
            let split = split_analogy(&questions, &banned);
            analogy_lines(
                &mut out,
                "oov",
                &eval_analogy(&model, &split.out_of_vocab),
                a.verbose,
            );
            analogy_lines(
                &mut out,
                "in-vocab",
                &eval_analogy(&model, &split.in_vocab),
                a.verbose,
            );
        }
    }
    emit(&out, a.out.as_deref())
}

fn read_word_list(path: &Path, lowercase: bool) -> wvmerge::Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text
        .split_whitespace()
        .map(|w| {
            if lowercase {
                w.to_lowercase()
            } else {
                w.to_owned()
            }
        })
        .collect())
}

fn cmd_eval_accuracy(a: EvalAccuracyArgs) -> wvmerge::Result<()> {
    let model = io::load_classifier(&a.model)?;
    let data = io::load_labeled(&a.input)?;
    let acc = match &a.vote_with {
        Some(path) => eval_vote_accuracy(&model, &io::load_classifier(path)?, &data)?,
        None => eval_accuracy(&model, &data)?,
    };
    emit(&format!("{:.2}\n", 100.0 * acc), a.out.as_deref())
}

fn cmd_split_analogy(a: SplitAnalogyArgs) -> wvmerge::Result<()> {
    let questions = io::load_analogies(&a.questions, !a.no_lowercase)?;
    let banned = sample_banned(&questions, a.fraction, a.seed)?;
    let split = split_analogy(&questions, &banned);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let mut words = String::new();
    for w in &split.banned {
        writeln!(words, "{w}").unwrap();
    }
    emit(&words, Some(&a.out_dir.join("banned.txt")))?;
    io::save_analogies(&split.out_of_vocab, a.out_dir.join("oov.txt"))?;
    io::save_analogies(&split.in_vocab, a.out_dir.join("in_vocab.txt"))?;
    eprintln!(
        "banned {} words; {} OOV and {} in-vocab questions",
        split.banned.len(),
        split.out_of_vocab.num_questions(),
        split.in_vocab.num_questions()
    );
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> wvmerge::Result<()> {
    let cfg = a.config();
    eprintln!("experiment: {cfg:?}");
    let shard0 = io::load_labeled(&a.shard0)?;
    let shard1 = io::load_labeled(&a.shard1)?;
    let test = io::load_labeled(&a.test)?;
    let (report, _) = run_merge_experiment(&shard0, &shard1, &test, &cfg)?;
    emit(&report.to_tsv(), a.out.as_deref())
}
