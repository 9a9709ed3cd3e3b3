//! Seeded problem generators shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wvmerge::dataset::{Document, LabeledDataset};
use wvmerge::{project_orthogonal, PairedVectors};

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `m` unit-length pairs in dimension `d` with target = source·R + noise.
pub fn rotated_pairs(m: usize, d: usize, noise: f64, seed: u64) -> PairedVectors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian_matrix(&mut rng, m, d);
    let r = project_orthogonal(&gaussian_matrix(&mut rng, d, d)).expect("finite input");
    let y = &x * r + gaussian_matrix(&mut rng, m, d) * noise;
    PairedVectors::from_matrices(x, y)
        .expect("shapes match")
        .normalized()
}

/// Two-class documents over a synthetic vocabulary.
pub fn synthetic_documents(n: usize, vocab: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { "pos" } else { "neg" };
            let len = rng.random_range(8..20);
            let tokens = (0..len)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        format!("{label}{}", rng.random_range(0..vocab / 10))
                    } else {
                        format!("w{}", rng.random_range(0..vocab))
                    }
                })
                .collect();
            Document {
                label: label.into(),
                tokens,
            }
        })
        .collect();
    LabeledDataset::new(docs).expect("documents are non-empty")
}
