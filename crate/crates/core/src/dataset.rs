use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};

/// A tokenized document with its class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub label: String,
    pub tokens: Vec<String>,
}

/// Labeled documents plus the label set in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    documents: Vec<Document>,
    labels: Vec<String>,
}

impl LabeledDataset {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        for doc in &documents {
            if doc.tokens.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "document with label '{}' has no tokens",
                    doc.label
                )));
            }
            if !labels.contains(&doc.label) {
                labels.push(doc.label.clone());
            }
        }
        Ok(LabeledDataset { documents, labels })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Concatenation of two datasets (labels of `self` first).
    pub fn concat(&self, other: &LabeledDataset) -> LabeledDataset {
        let docs = self
            .documents
            .iter()
            .chain(other.documents.iter())
            .cloned()
            .collect();
        LabeledDataset::new(docs).expect("documents were already validated")
    }
}

/// One `a : b :: c : d` question.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyQuestion(pub [String; 4]);

impl AnalogyQuestion {
    pub fn new(a: &str, b: &str, c: &str, d: &str) -> Self {
        AnalogyQuestion([a.into(), b.into(), c.into(), d.into()])
    }

    pub fn tokens(&self) -> &[String; 4] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyCategory {
    pub name: String,
    pub questions: Vec<AnalogyQuestion>,
}

impl AnalogyCategory {
    /// Distinct tokens used by the category's questions, in first-appearance order.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for q in &self.questions {
            for t in q.tokens() {
                if seen.insert(t.as_str()) {
                    out.push(t.as_str());
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnalogyDataset {
    categories: Vec<AnalogyCategory>,
}

impl AnalogyDataset {
    pub fn new(categories: Vec<AnalogyCategory>) -> Result<Self> {
        let mut names = HashSet::new();
        for c in &categories {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate analogy category '{}'",
                    c.name
                )));
            }
        }
        Ok(AnalogyDataset { categories })
    }

    pub fn categories(&self) -> &[AnalogyCategory] {
        &self.categories
    }

    pub fn num_questions(&self) -> usize {
        self.categories.iter().map(|c| c.questions.len()).sum()
    }

    pub fn questions(&self) -> impl Iterator<Item = &AnalogyQuestion> {
        self.categories.iter().flat_map(|c| c.questions.iter())
    }

    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.questions()
            .flat_map(|q| q.tokens().iter().map(String::as_str))
            .collect()
    }
}
