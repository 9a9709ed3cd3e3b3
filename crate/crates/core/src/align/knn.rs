use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Indices of the `k` largest entries of each row of `sims`, best first.
/// Ties go to the lower column index.
pub fn top_k_rows(sims: &DMatrix<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let pool = sims.ncols();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if k > pool {
        return Err(Error::KTooLarge { k, pool });
    }
    Ok((0..sims.nrows())
        .into_par_iter()
        .map(|r| {
            let row = sims.row(r);
            let by_score = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
            let mut idx: Vec<usize> = (0..pool).collect();
            if k < pool {
                idx.select_nth_unstable_by(k - 1, by_score);
                idx.truncate(k);
            }
            idx.sort_unstable_by(by_score);
            idx
        })
        .collect())
}

/// For each query row, the `k` pool rows with the largest dot product.
///
/// Rows are expected to be unit length, which makes the dot product the
/// cosine similarity. The result is row-aligned with `queries`.
pub fn knn_neighborhood(
    queries: &DMatrix<f64>,
    pool: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    if queries.ncols() != pool.ncols() {
        return Err(Error::DimensionMismatch {
            expected: pool.ncols(),
            found: queries.ncols(),
        });
    }
    top_k_rows(&(queries * pool.transpose()), k)
}

/// Mean similarity of each query to its `k` nearest pool rows: the `r`
/// terms of the CSLS criterion.
pub fn mean_knn_similarity(
    queries: &DMatrix<f64>,
    pool: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<f64>> {
    if queries.ncols() != pool.ncols() {
        return Err(Error::DimensionMismatch {
            expected: pool.ncols(),
            found: queries.ncols(),
        });
    }
    let sims = queries * pool.transpose();
    let nn = top_k_rows(&sims, k)?;
    Ok(nn
        .iter()
        .enumerate()
        .map(|(r, idx)| idx.iter().map(|&c| sims[(r, c)]).sum::<f64>() / k as f64)
        .collect())
}

/// `2·xᵀy - r_Y(x) - r_X(y)`, given the two mean neighbourhood similarities.
pub fn csls_score(x: &[f64], y: &[f64], mean_knn_xy: f64, mean_knn_yx: f64) -> f64 {
    2.0 * crate::embedding::dot(x, y) - mean_knn_xy - mean_knn_yx
}
