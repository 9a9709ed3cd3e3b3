//! Linear maps between two row-matched vector sets.
//!
//! Every map sends a source row `x` to `x·Q` (a row vector), i.e. the column
//! form `Qᵀx`. Maps always go from the old model's space into the new one.

mod knn;
mod rcsls;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::embedding::normalize_rows;
use crate::error::{Error, Result};

pub use knn::{csls_score, knn_neighborhood, mean_knn_similarity, top_k_rows};
pub use rcsls::{rcsls_align, rcsls_loss, rcsls_subgradient, RcslsConfig, RcslsInit};

/// Relative threshold under which a singular value is treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Tolerance used when checking that a map is orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

/// Row-matched source/target vectors: row `i` of both matrices belongs to
/// `tokens[i]`.
#[derive(Clone, Debug)]
pub struct PairedVectors {
    source: DMatrix<f64>,
    target: DMatrix<f64>,
    tokens: Vec<String>,
}

impl PairedVectors {
    pub fn new(source: DMatrix<f64>, target: DMatrix<f64>, tokens: Vec<String>) -> Result<Self> {
        if source.shape() != target.shape() {
            return Err(Error::DimensionMismatch {
                expected: source.ncols(),
                found: target.ncols(),
            });
        }
        if tokens.len() != source.nrows() {
            return Err(Error::DimensionMismatch {
                expected: source.nrows(),
                found: tokens.len(),
            });
        }
        if source.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "vectors must have dimension >= 1".into(),
            ));
        }
        if source.nrows() < source.ncols() {
            log::warn!(
                "only {} pairs for dimension {}; the map is under-determined",
                source.nrows(),
                source.ncols()
            );
        }
        Ok(PairedVectors {
            source,
            target,
            tokens,
        })
    }

    /// Pairs without token names, labelled by row index.
    pub fn from_matrices(source: DMatrix<f64>, target: DMatrix<f64>) -> Result<Self> {
        let tokens = (0..source.nrows()).map(|i| i.to_string()).collect();
        Self::new(source, target, tokens)
    }

    pub fn source(&self) -> &DMatrix<f64> {
        &self.source
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.source.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.source.ncols()
    }

    /// Copy with every row scaled to unit length.
    pub fn normalized(&self) -> PairedVectors {
        let mut out = self.clone();
        normalize_rows(&mut out.source);
        normalize_rows(&mut out.target);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapMethod {
    LeastSquares,
    Procrustes,
    Rcsls,
}

impl MapMethod {
    pub fn is_constrained(self) -> bool {
        !matches!(self, MapMethod::LeastSquares)
    }
}

impl fmt::Display for MapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapMethod::LeastSquares => "least-squares",
            MapMethod::Procrustes => "procrustes",
            MapMethod::Rcsls => "rcsls",
        })
    }
}

impl FromStr for MapMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "least-squares" | "lsq" => Ok(MapMethod::LeastSquares),
            "procrustes" => Ok(MapMethod::Procrustes),
            "rcsls" => Ok(MapMethod::Rcsls),
            other => Err(format!("unknown map method '{other}'")),
        }
    }
}

/// A `d×d` map fitted by one of the alignment methods.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalMap {
    matrix: DMatrix<f64>,
    method: MapMethod,
    final_loss: Option<f64>,
    non_unique: bool,
}

impl OrthogonalMap {
    pub fn new(matrix: DMatrix<f64>, method: MapMethod) -> Self {
        assert!(matrix.is_square(), "alignment maps are square");
        OrthogonalMap {
            matrix,
            method,
            final_loss: None,
            non_unique: false,
        }
    }

    pub fn identity(dim: usize, method: MapMethod) -> Self {
        Self::new(DMatrix::identity(dim, dim), method)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> MapMethod {
        self.method
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Training loss for iterative methods.
    pub fn final_loss(&self) -> Option<f64> {
        self.final_loss
    }

    /// Set when the fitted problem had more than one minimizer.
    pub fn is_non_unique(&self) -> bool {
        self.non_unique
    }

    /// `max |QᵀQ - I|` over all entries.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.matrix)
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonality_error() <= ORTHOGONALITY_TOL
    }

    /// Maps one row vector: `x·Q`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim());
        (0..self.dim())
            .map(|c| {
                x.iter()
                    .enumerate()
                    .map(|(r, v)| v * self.matrix[(r, c)])
                    .sum()
            })
            .collect()
    }

    /// Maps every row of `m`.
    pub fn apply_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m * &self.matrix
    }
}

pub fn orthogonality_error(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[(r, c)] - target).abs());
        }
    }
    worst
}

fn numeric_rank(singular_values: &nalgebra::DVector<f64>) -> usize {
    let max = singular_values.max();
    if max <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * max)
        .count()
}

/// Closed-form minimizer of `(1/m)‖XQ - Y‖²_F`.
pub fn least_squares_align(pairs: &PairedVectors) -> Result<OrthogonalMap> {
    let d = pairs.dim();
    let svd = pairs.source().clone().svd(true, true);
    let rank = numeric_rank(&svd.singular_values);
    if rank < d {
        return Err(Error::Singular { rank, dim: d });
    }
    let q = svd
        .solve(pairs.target(), 0.0)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(OrthogonalMap::new(q, MapMethod::LeastSquares))
}

/// Closed-form minimizer of `‖XQ - Y‖_F` over orthogonal `Q`: `Q = U·Wᵀ`
/// for `XᵀY = U·Σ·Wᵀ`.
///
/// When `XᵀY` is singular the minimizer is not unique; one is returned and
/// [`OrthogonalMap::is_non_unique`] is set.
pub fn procrustes_align(pairs: &PairedVectors) -> Result<OrthogonalMap> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "procrustes needs at least one pair".into(),
        ));
    }
    let cross = pairs.source().transpose() * pairs.target();
    let (q, rank) = polar_factor(cross)?;
    let mut map = OrthogonalMap::new(q, MapMethod::Procrustes);
    map.non_unique = rank < pairs.dim();
    if map.non_unique {
        log::warn!(
            "cross-covariance has rank {rank} < {}; procrustes minimizer is not unique",
            pairs.dim()
        );
    }
    Ok(map)
}

/// Nearest orthogonal matrix to `m` in Frobenius norm.
pub fn project_orthogonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "cannot project a matrix with non-finite entries".into(),
        ));
    }
    polar_factor(m.clone()).map(|(q, _)| q)
}

fn polar_factor(m: DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let svd = m.svd(true, true);
    let rank = numeric_rank(&svd.singular_values);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numeric("SVD did not converge".into())),
    };
    Ok((u * v_t, rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn least_squares_identity_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 7, 3);
        let p = PairedVectors::from_matrices(x.clone(), x.clone()).unwrap();
        let q = least_squares_align(&p).unwrap();
        assert!(max_abs_diff(q.matrix(), &DMatrix::identity(3, 3)) <= 1e-8);
        assert_eq!(q.method(), MapMethod::LeastSquares);

        let p = PairedVectors::from_matrices(x.clone(), &x * 2.0).unwrap();
        let q = least_squares_align(&p).unwrap();
        assert!(max_abs_diff(q.matrix(), &(DMatrix::identity(3, 3) * 2.0)) <= 1e-8);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 6, 2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = &x * &a;
        let q = least_squares_align(&PairedVectors::from_matrices(x.clone(), y.clone()).unwrap())
            .unwrap();

        // Oracle: (XᵀX)⁻¹ XᵀY with the 2×2 inverse written out.
        let g = x.transpose() * &x;
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        let inv = DMatrix::from_row_slice(
            2,
            2,
            &[
                g[(1, 1)] / det,
                -g[(0, 1)] / det,
                -g[(1, 0)] / det,
                g[(0, 0)] / det,
            ],
        );
        let oracle = inv * (x.transpose() * y);
        assert!(max_abs_diff(q.matrix(), &oracle) <= 1e-8);
        assert!(max_abs_diff(q.matrix(), &a) <= 1e-8);
    }

    #[test]
    fn least_squares_rank_deficient() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = PairedVectors::from_matrices(x.clone(), x).unwrap();
        let err = least_squares_align(&p).unwrap_err();
        assert!(matches!(err, Error::Singular { rank: 1, dim: 2 }));
        assert!(err.to_string().contains("procrustes"));
    }

    #[test]
    fn procrustes_identity_and_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 8, 2);
        let q =
            procrustes_align(&PairedVectors::from_matrices(x.clone(), x.clone()).unwrap()).unwrap();
        assert!(max_abs_diff(q.matrix(), &DMatrix::identity(2, 2)) <= 1e-8);
        assert!(!q.is_non_unique());

        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let q =
            procrustes_align(&PairedVectors::from_matrices(x.clone(), &x * &r).unwrap()).unwrap();
        assert!(max_abs_diff(q.matrix(), &r) <= 1e-8);
        assert!(q.orthogonality_error() <= 1e-12);
    }

    #[test]
    fn procrustes_beats_rotation_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 10, 2);
        let noise = random_matrix(&mut rng, 10, 2) * 0.01;
        let y = &x * rotation(0.7) + noise;
        let q =
            procrustes_align(&PairedVectors::from_matrices(x.clone(), y.clone()).unwrap()).unwrap();
        let residual = (&x * q.matrix() - &y).norm();

        let flip = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let mut best = f64::INFINITY;
        let steps = (2.0 * std::f64::consts::PI / 1e-4).ceil() as usize;
        for i in 0..steps {
            let r = rotation(i as f64 * 1e-4);
            best = best.min((&x * &r - &y).norm());
            best = best.min((&x * (&r * &flip) - &y).norm());
        }
        assert!((residual - best).abs() <= 1e-6, "{residual} vs {best}");
        assert!(residual <= best + 1e-12);
    }

    #[test]
    fn procrustes_flags_singular_cross_covariance() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let q = procrustes_align(&PairedVectors::from_matrices(x.clone(), x).unwrap()).unwrap();
        assert!(q.is_non_unique());
        assert!(q.is_orthogonal());
    }

    #[test]
    fn projection_cases() {
        let r = rotation(0.3);
        let p = project_orthogonal(&r).unwrap();
        assert!(max_abs_diff(&p, &r) <= 1e-8);
        let p = project_orthogonal(&(DMatrix::identity(3, 3) * 3.0)).unwrap();
        assert!(max_abs_diff(&p, &DMatrix::identity(3, 3)) <= 1e-12);
        assert!(project_orthogonal(&DMatrix::from_element(2, 2, f64::NAN)).is_err());
    }

    #[test]
    fn apply_matches_matrix_product() {
        let q = OrthogonalMap::new(rotation(0.5), MapMethod::Procrustes);
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let via_rows = q.apply_rows(&x);
        let via_vec = q.apply(&[1.0, 2.0]);
        assert!((via_rows[(0, 0)] - via_vec[0]).abs() < 1e-15);
        assert!((via_rows[(0, 1)] - via_vec[1]).abs() < 1e-15);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in [
            MapMethod::LeastSquares,
            MapMethod::Procrustes,
            MapMethod::Rcsls,
        ] {
            assert_eq!(m.to_string().parse::<MapMethod>().unwrap(), m);
        }
        assert_eq!("lsq".parse::<MapMethod>().unwrap(), MapMethod::LeastSquares);
        assert!("svd".parse::<MapMethod>().is_err());
    }
}
