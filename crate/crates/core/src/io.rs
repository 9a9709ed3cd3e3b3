//! Text formats for embeddings, classifiers, alignment maps and datasets.
//!
//! Embeddings use the word2vec text convention:
//!
//! ```text
//! <n> <d>
//! <token> <f1> ... <fd>
//! ```
//!
//! Classifiers add a `VMLC` header followed by labels, output rows and
//! feature rows. Alignment maps are `<d> <method>` followed by `d` rows.
//! Floats are written in Rust's shortest round-trip form, so reading back a
//! written file reproduces every value exactly. Parse errors carry the
//! 1-based line number of the offending line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::align::{MapMethod, OrthogonalMap};
use crate::classifier::LinearTextClassifier;
use crate::dataset::{AnalogyCategory, AnalogyDataset, AnalogyQuestion, Document, LabeledDataset};
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};

pub const LABEL_PREFIX: &str = "__label__";
const CLASSIFIER_MAGIC: &str = "VMLC";
const CLASSIFIER_VERSION: u32 = 1;

/// An embedding model plus the number of rows dropped because they
/// collided with an earlier token after lowercasing.
#[derive(Clone, Debug)]
pub struct LoadedEmbeddings {
    pub model: EmbeddingModel,
    pub duplicates_dropped: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Numbered, non-blank lines of a reader.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.map(|l| (i + 1, l))
                .map_err(|e| Error::parse(i + 1, format!("read error: {e}")))
        })
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number '{field}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, "non-finite value"));
    }
    Ok(v)
}

/// Parses `<key> <d floats>`; returns the key and appends the values to `out`.
fn parse_row<'a>(line: &'a str, lineno: usize, dim: usize, out: &mut Vec<f64>) -> Result<&'a str> {
    let mut fields = line.split_whitespace();
    let key = fields
        .next()
        .ok_or_else(|| Error::parse(lineno, "empty row"))?;
    let start = out.len();
    for f in fields {
        out.push(parse_value(f, lineno)?);
    }
    let found = out.len() - start;
    if found != dim {
        return Err(Error::parse(
            lineno,
            format!("wrong arity: expected {dim} values, found {found}"),
        ));
    }
    Ok(key)
}

fn write_row<W: Write>(
    w: &mut W,
    key: &str,
    values: impl IntoIterator<Item = f64>,
) -> std::io::Result<()> {
    w.write_all(key.as_bytes())?;
    for v in values {
        write!(w, " {v:?}")?;
    }
    w.write_all(b"\n")
}

fn parse_usize(field: Option<&str>, what: &str, line: usize) -> Result<usize> {
    field
        .ok_or_else(|| Error::parse(line, format!("malformed header: missing {what}")))?
        .parse()
        .map_err(|_| Error::parse(line, format!("malformed header: invalid {what}")))
}

pub fn read_embeddings<R: BufRead>(reader: R, lowercase: bool) -> Result<LoadedEmbeddings> {
    let mut lines = numbered_lines(reader);
    let (hline, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(1, "malformed header: empty file"))?;
    let mut fields = header.split_whitespace();
    let n = parse_usize(fields.next(), "row count", hline)?;
    let dim = parse_usize(fields.next(), "dimension", hline)?;
    if fields.next().is_some() || dim == 0 {
        return Err(Error::parse(
            hline,
            "malformed header: expected '<n> <d>' with d >= 1",
        ));
    }

    let mut vocab = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut rows = 0;
    let mut duplicates_dropped = 0;
    let mut last_line = hline;
    for item in lines {
        let (lineno, line) = item?;
        last_line = lineno;
        rows += 1;
        if rows > n {
            return Err(Error::parse(
                lineno,
                format!("more rows than the {n} declared"),
            ));
        }
        let key = parse_row(&line, lineno, dim, &mut data)?;
        let key = if lowercase {
            key.to_lowercase()
        } else {
            key.to_owned()
        };
        if seen.contains(&key) {
            if !lowercase {
                return Err(Error::parse(lineno, format!("duplicate token '{key}'")));
            }
            data.truncate(data.len() - dim);
            duplicates_dropped += 1;
            continue;
        }
        seen.insert(key.clone());
        vocab.push(key);
    }
    if rows != n {
        return Err(Error::parse(
            last_line + 1,
            format!("expected {n} rows, found {rows}"),
        ));
    }
    if duplicates_dropped > 0 {
        log::info!("dropped {duplicates_dropped} rows that collided after lowercasing");
    }
    Ok(LoadedEmbeddings {
        model: EmbeddingModel::new(vocab, data, dim)?,
        duplicates_dropped,
    })
}

pub fn load_embeddings(path: impl AsRef<Path>, lowercase: bool) -> Result<LoadedEmbeddings> {
    read_embeddings(open(path.as_ref())?, lowercase)
}

pub fn write_embeddings<W: Write>(model: &EmbeddingModel, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{} {}", model.len(), model.dim())?;
    for (tok, row) in model.rows() {
        write_row(w, tok, row.iter().copied())?;
    }
    Ok(())
}

pub fn save_embeddings(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_embeddings(model, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_labeled<R: BufRead>(reader: R) -> Result<LabeledDataset> {
    let mut docs = Vec::new();
    for item in numbered_lines(reader) {
        let (lineno, line) = item?;
        docs.push(parse_labeled_line(&line, lineno)?);
    }
    LabeledDataset::new(docs)
}

pub(crate) fn parse_labeled_line(line: &str, lineno: usize) -> Result<Document> {
    let mut fields = line.split_whitespace();
    let label = fields
        .next()
        .and_then(|f| f.strip_prefix(LABEL_PREFIX))
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::parse(lineno, format!("missing '{LABEL_PREFIX}' prefix")))?;
    let tokens: Vec<String> = fields.map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(Error::parse(lineno, "empty document body"));
    }
    Ok(Document {
        label: label.to_owned(),
        tokens,
    })
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_labeled(open(path.as_ref())?)
}

pub fn write_labeled<W: Write>(data: &LabeledDataset, w: &mut W) -> std::io::Result<()> {
    for doc in data.documents() {
        write!(w, "{LABEL_PREFIX}{}", doc.label)?;
        for t in &doc.tokens {
            write!(w, " {t}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_labeled(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_labeled(data, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads unlabeled documents, one per line. A leading `__label__X` field is
/// stripped if present.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut docs = Vec::new();
    for item in numbered_lines(reader) {
        let (_, line) = item?;
        let mut fields = line.split_whitespace().peekable();
        if fields.peek().is_some_and(|f| f.starts_with(LABEL_PREFIX)) {
            fields.next();
        }
        docs.push(fields.map(str::to_owned).collect());
    }
    Ok(docs)
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    read_documents(open(path.as_ref())?)
}

pub fn read_analogies<R: BufRead>(reader: R, lowercase: bool) -> Result<AnalogyDataset> {
    let mut categories: Vec<AnalogyCategory> = Vec::new();
    for item in numbered_lines(reader) {
        let (lineno, line) = item?;
        let line = if lowercase { line.to_lowercase() } else { line };
        if let Some(name) = line.trim_start().strip_prefix(':') {
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::parse(lineno, "empty category name"));
            }
            if categories.iter().any(|c| c.name == name) {
                return Err(Error::parse(lineno, format!("duplicate category '{name}'")));
            }
            categories.push(AnalogyCategory {
                name: name.to_owned(),
                questions: Vec::new(),
            });
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [a, b, c, d] = toks[..] else {
            return Err(Error::parse(
                lineno,
                format!("wrong arity: expected 4 tokens, found {}", toks.len()),
            ));
        };
        let cat = categories
            .last_mut()
            .ok_or_else(|| Error::parse(lineno, "question before any ': category' header"))?;
        cat.questions.push(AnalogyQuestion::new(a, b, c, d));
    }
    AnalogyDataset::new(categories)
}

pub fn load_analogies(path: impl AsRef<Path>, lowercase: bool) -> Result<AnalogyDataset> {
    read_analogies(open(path.as_ref())?, lowercase)
}

pub fn write_analogies<W: Write>(data: &AnalogyDataset, w: &mut W) -> std::io::Result<()> {
    for cat in data.categories() {
        writeln!(w, ": {}", cat.name)?;
        for q in &cat.questions {
            writeln!(w, "{}", q.tokens().join(" "))?;
        }
    }
    Ok(())
}

pub fn save_analogies(data: &AnalogyDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_analogies(data, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_map<R: BufRead>(reader: R) -> Result<OrthogonalMap> {
    let mut lines = numbered_lines(reader);
    let (hline, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(1, "malformed header: empty file"))?;
    let mut fields = header.split_whitespace();
    let dim = parse_usize(fields.next(), "dimension", hline)?;
    let method: MapMethod = fields
        .next()
        .ok_or_else(|| Error::parse(hline, "malformed header: missing method"))?
        .parse()
        .map_err(|e: String| Error::parse(hline, e))?;
    if fields.next().is_some() || dim == 0 {
        return Err(Error::parse(
            hline,
            "malformed header: expected '<d> <method>'",
        ));
    }
    let mut data = Vec::with_capacity(dim * dim);
    let mut rows = 0;
    let mut last_line = hline;
    for item in lines {
        let (lineno, line) = item?;
        last_line = lineno;
        rows += 1;
        if rows > dim {
            return Err(Error::parse(lineno, format!("more than {dim} rows")));
        }
        let start = data.len();
        for f in line.split_whitespace() {
            data.push(parse_value(f, lineno)?);
        }
        if data.len() - start != dim {
            return Err(Error::parse(
                lineno,
                format!(
                    "wrong arity: expected {dim} values, found {}",
                    data.len() - start
                ),
            ));
        }
    }
    if rows != dim {
        return Err(Error::parse(
            last_line + 1,
            format!("expected {dim} rows, found {rows}"),
        ));
    }
    Ok(OrthogonalMap::new(
        DMatrix::from_row_slice(dim, dim, &data),
        method,
    ))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OrthogonalMap> {
    read_map(open(path.as_ref())?)
}

pub fn write_map<W: Write>(map: &OrthogonalMap, w: &mut W) -> std::io::Result<()> {
    let q = map.matrix();
    writeln!(w, "{} {}", q.nrows(), map.method())?;
    for r in 0..q.nrows() {
        let mut first = true;
        for v in q.row(r).iter() {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{v:?}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_map(map: &OrthogonalMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_map(map, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_classifier<R: BufRead>(reader: R) -> Result<LinearTextClassifier> {
    let mut lines = numbered_lines(reader);
    let (hline, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(1, "malformed header: empty file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(CLASSIFIER_MAGIC) {
        return Err(Error::parse(
            hline,
            format!("malformed header: missing {CLASSIFIER_MAGIC}"),
        ));
    }
    let version = parse_usize(fields.next(), "version", hline)?;
    if version != CLASSIFIER_VERSION as usize {
        return Err(Error::parse(
            hline,
            format!("unsupported version {version}"),
        ));
    }
    let dim = parse_usize(fields.next(), "dimension", hline)?;
    let k = parse_usize(fields.next(), "label count", hline)?;
    let f = parse_usize(fields.next(), "feature count", hline)?;
    let order = parse_usize(fields.next(), "n-gram order", hline)?;
    if fields.next().is_some() || dim == 0 {
        return Err(Error::parse(hline, "malformed header"));
    }

    let (lline, label_line) = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(hline + 1, "missing label line"))?;
    let labels: Vec<String> = label_line
        .split('\t')
        .map(|s| s.trim().to_owned())
        .collect();
    if labels.len() != k {
        return Err(Error::parse(
            lline,
            format!("expected {k} labels, found {}", labels.len()),
        ));
    }

    let mut outputs = Vec::with_capacity(k * dim);
    let mut last_line = lline;
    for expected in &labels {
        let (lineno, line) = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(last_line + 1, "missing output row"))?;
        last_line = lineno;
        let key = parse_row(&line, lineno, dim, &mut outputs)?;
        if key != expected {
            return Err(Error::parse(
                lineno,
                format!("output row '{key}' does not match label '{expected}'"),
            ));
        }
    }

    let mut vocab = Vec::with_capacity(f);
    let mut data = Vec::with_capacity(f * dim);
    for item in lines {
        let (lineno, line) = item?;
        last_line = lineno;
        if vocab.len() == f {
            return Err(Error::parse(lineno, format!("more than {f} feature rows")));
        }
        let key = parse_row(&line, lineno, dim, &mut data)?;
        vocab.push(key.to_owned());
    }
    if vocab.len() != f {
        return Err(Error::parse(
            last_line + 1,
            format!("expected {f} feature rows, found {}", vocab.len()),
        ));
    }
    let features =
        EmbeddingModel::new(vocab, data, dim).map_err(|e| Error::parse(hline, e.to_string()))?;
    let order = u8::try_from(order).map_err(|_| Error::parse(hline, "invalid n-gram order"))?;
    LinearTextClassifier::new(
        features,
        DMatrix::from_row_slice(k, dim, &outputs),
        labels,
        order,
    )
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<LinearTextClassifier> {
    read_classifier(open(path.as_ref())?)
}

pub fn write_classifier<W: Write>(model: &LinearTextClassifier, w: &mut W) -> std::io::Result<()> {
    let features = model.features();
    writeln!(
        w,
        "{CLASSIFIER_MAGIC} {CLASSIFIER_VERSION} {} {} {} {}",
        model.dim(),
        model.labels().len(),
        features.len(),
        model.ngram_order()
    )?;
    writeln!(w, "{}", model.labels().join("\t"))?;
    for (k, label) in model.labels().iter().enumerate() {
        write_row(w, label, model.outputs().row(k).iter().copied())?;
    }
    for (key, row) in features.rows() {
        write_row(w, key, row.iter().copied())?;
    }
    Ok(())
}

pub fn save_classifier(model: &LinearTextClassifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_classifier(model, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// True if the file at `path` starts with the classifier header.
pub fn is_classifier_file(path: impl AsRef<Path>) -> Result<bool> {
    let path = path.as_ref();
    let mut first = String::new();
    open(path)?
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(first.split_whitespace().next() == Some(CLASSIFIER_MAGIC))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(text: &str, lowercase: bool) -> Result<LoadedEmbeddings> {
        read_embeddings(text.as_bytes(), lowercase)
    }

    fn parse_line(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn reads_small_embedding_file() {
        let m = emb("2 3\na 1 0 0\nb 0 1 0", false).unwrap().model;
        assert_eq!(m.vocab(), &["a", "b"]);
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_nan_with_line_number() {
        let err = emb("1 2\na 1 nan", false).unwrap_err();
        assert_eq!(err.to_string(), "non-finite value, line 2");
        assert!(emb("1 2\na 1 inf", false).is_err());
    }

    #[test]
    fn lowercase_keeps_first_occurrence() {
        let loaded = emb("2 2\nCat 1 2\ncat 3 4\n", true).unwrap();
        assert_eq!(loaded.model.vocab(), &["cat"]);
        assert_eq!(loaded.model.row(0), &[1.0, 2.0]);
        assert_eq!(loaded.duplicates_dropped, 1);
        let err = emb("2 2\ncat 1 2\ncat 3 4\n", false).unwrap_err();
        assert_eq!(parse_line(err), 3);
    }

    #[test]
    fn malformed_embedding_inputs() {
        assert_eq!(parse_line(emb("x 3\n", false).unwrap_err()), 1);
        assert_eq!(parse_line(emb("1 3 4\n", false).unwrap_err()), 1);
        assert_eq!(parse_line(emb("1 0\n", false).unwrap_err()), 1);
        assert_eq!(parse_line(emb("2 2\na 1 2\nb 1\n", false).unwrap_err()), 3);
        assert_eq!(parse_line(emb("2 2\na 1 2\n", false).unwrap_err()), 3);
        assert_eq!(
            parse_line(emb("1 2\na 1 2\nb 1 2\n", false).unwrap_err()),
            3
        );
        assert_eq!(parse_line(emb("", false).unwrap_err()), 1);
    }

    #[test]
    fn empty_model_round_trip() {
        let m = EmbeddingModel::empty(4).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&m, &mut buf).unwrap();
        assert_eq!(buf, b"0 4\n");
        let back = read_embeddings(&buf[..], false).unwrap().model;
        assert!(back.is_empty());
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn embedding_bytes_are_exact() {
        let m = EmbeddingModel::from_rows([("x", vec![0.5, -1.0, 1e-7])]).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1 3\nx 0.5 -1.0 1e-7\n");
    }

    #[test]
    fn labeled_parsing() {
        let d = read_labeled("__label__pos good food\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.documents()[0].label, "pos");
        assert_eq!(d.documents()[0].tokens, vec!["good", "food"]);

        let err = read_labeled("__label__a x\nno label here\n".as_bytes()).unwrap_err();
        assert_eq!(parse_line(err), 2);
        let err = read_labeled("__label__a\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty document body, line 1");

        let d =
            read_labeled("__label__pos a\n__label__neg b\n__label__pos c\n".as_bytes()).unwrap();
        assert_eq!(d.labels(), &["pos", "neg"]);
    }

    #[test]
    fn unlabeled_documents_strip_prefix() {
        let docs = read_documents("__label__pos a b\nc d\n".as_bytes()).unwrap();
        assert_eq!(docs, vec![vec!["a", "b"], vec!["c", "d"]]);
    }

    #[test]
    fn analogy_parsing() {
        let d = read_analogies(": capital\nparis france rome italy".as_bytes(), false).unwrap();
        assert_eq!(d.categories().len(), 1);
        assert_eq!(d.num_questions(), 1);

        let err = read_analogies(": c\na b c".as_bytes(), false).unwrap_err();
        assert_eq!(parse_line(err), 2);
        let err = read_analogies("a b c d".as_bytes(), false).unwrap_err();
        assert_eq!(parse_line(err), 1);
        let err = read_analogies(": c\n: c\n".as_bytes(), false).unwrap_err();
        assert_eq!(parse_line(err), 2);

        let d = read_analogies(": Cap\nParis France Rome Italy".as_bytes(), true).unwrap();
        assert_eq!(d.categories()[0].name, "cap");
        assert_eq!(d.categories()[0].questions[0].tokens()[0], "paris");
    }

    #[test]
    fn map_round_trip_and_errors() {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let map = OrthogonalMap::new(q.clone(), MapMethod::Procrustes);
        let mut buf = Vec::new();
        write_map(&map, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "2 procrustes\n0.0 -1.0\n1.0 0.0\n"
        );
        let back = read_map(&buf[..]).unwrap();
        assert_eq!(back.matrix(), &q);
        assert_eq!(back.method(), MapMethod::Procrustes);

        assert_eq!(parse_line(read_map("2 foo\n".as_bytes()).unwrap_err()), 1);
        assert_eq!(
            parse_line(read_map("2 rcsls\n1 0\n".as_bytes()).unwrap_err()),
            3
        );
        assert_eq!(
            parse_line(read_map("2 rcsls\n1 0 0\n".as_bytes()).unwrap_err()),
            2
        );
    }

    #[test]
    fn classifier_header_errors() {
        assert_eq!(
            parse_line(read_classifier("VMLX 1 2 2 0 1\n".as_bytes()).unwrap_err()),
            1
        );
        let text = "VMLC 1 2 2 1 1\na\tb\na 1 2\nc 1 2\n";
        assert_eq!(parse_line(read_classifier(text.as_bytes()).unwrap_err()), 4);
        let text = "VMLC 1 2 2 2 1\na\tb\na 1 2\nb 1 2\nx 0 0\n";
        assert_eq!(parse_line(read_classifier(text.as_bytes()).unwrap_err()), 6);
    }
}
