use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An ordered vocabulary together with one `dim`-sized vector per token.
///
/// Rows are stored contiguously in row-major order. The model is immutable
/// once built; all constructors validate uniqueness of tokens and finiteness
/// of every component.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    dim: usize,
}

impl EmbeddingModel {
    pub fn new(vocab: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dimension must be >= 1".into(),
            ));
        }
        if data.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value in row '{}'",
                vocab[pos / dim]
            )));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate token '{tok}'")));
            }
        }
        Ok(EmbeddingModel {
            vocab,
            index,
            data,
            dim,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), dim)
    }

    pub fn from_rows<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self> {
        let mut vocab = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (tok, row) in rows {
            let d = *dim.get_or_insert(row.len());
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            vocab.push(tok.into());
            data.extend(row);
        }
        let dim = dim.ok_or_else(|| Error::InvalidConfig("no rows given".into()))?;
        Self::new(vocab, data, dim)
    }

    /// Builds a model from an `n×dim` matrix whose rows follow `vocab`.
    pub fn from_matrix(vocab: Vec<String>, matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                found: matrix.nrows(),
            });
        }
        let dim = matrix.ncols();
        let mut data = Vec::with_capacity(vocab.len() * dim);
        for r in 0..matrix.nrows() {
            data.extend(matrix.row(r).iter());
        }
        Self::new(vocab, data, dim)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token(&self, i: usize) -> &str {
        &self.vocab[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vocab
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    pub fn norm(&self, i: usize) -> f64 {
        l2_norm(self.row(i))
    }

    /// Row-per-token matrix copy.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    /// Copy of the model restricted to tokens accepted by `keep`, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut vocab = Vec::new();
        let mut data = Vec::new();
        for (tok, row) in self.rows() {
            if keep(tok) {
                vocab.push(tok.to_owned());
                data.extend_from_slice(row);
            }
        }
        Self::new(vocab, data, self.dim).expect("subset of a valid model is valid")
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-length copy of `v`; the zero vector stays zero.
pub fn normalized(v: &[f64]) -> Vec<f64> {
    let n = l2_norm(v);
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// Scales every row of `m` to unit length in place. Zero rows are left alone.
pub fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}
