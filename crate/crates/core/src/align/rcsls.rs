//! Orthogonal alignment under the relaxed CSLS loss.
//!
//! For a pair `(x, y)` mapped as `x̃ = x·Q`, the per-pair loss is
//!
//! ```text
//! -2 x̃·y + (1/k) Σ_{y' ∈ N_Y(x̃)} x̃·y' + (1/k) Σ_{x' ∈ N_X(y)} x̃'·y
//! ```
//!
//! where `N_Y(x̃)` are the `k` target rows closest to `x̃` and `N_X(y)` the
//! `k` mapped source rows closest to `y`, both taken over the whole pair set.
//! The loss is piecewise linear in `Q`; with neighbourhoods held fixed its
//! gradient is a sum of outer products `xᵀy`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::knn::top_k_rows;
use super::{procrustes_align, project_orthogonal, MapMethod, OrthogonalMap, PairedVectors};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcslsInit {
    Identity,
    Procrustes,
}

impl std::str::FromStr for RcslsInit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(RcslsInit::Identity),
            "procrustes" => Ok(RcslsInit::Procrustes),
            other => Err(format!("unknown init '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RcslsConfig {
    /// Neighbourhood size.
    pub k: usize,
    pub epochs: usize,
    /// Initial step size; halved after every epoch that fails to improve.
    pub learning_rate: f64,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub init: RcslsInit,
}

impl Default for RcslsConfig {
    fn default() -> Self {
        RcslsConfig {
            k: 10,
            epochs: 10,
            learning_rate: 1.0,
            batch_size: None,
            seed: 0,
            init: RcslsInit::Procrustes,
        }
    }
}

impl RcslsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("rcsls k must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "rcsls learning rate must be > 0".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("rcsls batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loss and subgradient restricted to the pairs in `batch`, with
/// neighbourhoods searched over the full pair set.
fn batch_objective(
    q: &DMatrix<f64>,
    pairs: &PairedVectors,
    batch: &[usize],
    k: usize,
    want_grad: bool,
) -> Result<(f64, Option<DMatrix<f64>>)> {
    let d = pairs.dim();
    if q.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: q.nrows(),
        });
    }
    let m = pairs.len();
    if k > m {
        return Err(Error::KTooLarge { k, pool: m });
    }
    let (source, target) = (pairs.source(), pairs.target());
    let mapped = source * q;

    let mapped_b = mapped.select_rows(batch);
    let target_b = target.select_rows(batch);
    // rows: mapped batch vs all targets; cols: batch targets vs all mapped sources
    let fwd = &mapped_b * target.transpose();
    let bwd = &target_b * mapped.transpose();
    let nn_y = top_k_rows(&fwd, k)?;
    let nn_x = top_k_rows(&bwd, k)?;

    let kf = k as f64;
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| DMatrix::zeros(d, d));
    for (b, &i) in batch.iter().enumerate() {
        let fwd_mean = nn_y[b].iter().map(|&j| fwd[(b, j)]).sum::<f64>() / kf;
        let bwd_mean = nn_x[b].iter().map(|&l| bwd[(b, l)]).sum::<f64>() / kf;
        loss += -2.0 * fwd[(b, i)] + fwd_mean + bwd_mean;

        if let Some(g) = grad.as_mut() {
            // x_i ⊗ (-2 y_i + mean_{N_Y} y) + (mean_{N_X} x) ⊗ y_i
            let mut y_term = target.row(i) * -2.0;
            for &j in &nn_y[b] {
                y_term += target.row(j) / kf;
            }
            let mut x_bar = source.row(nn_x[b][0]) / kf;
            for &l in &nn_x[b][1..] {
                x_bar += source.row(l) / kf;
            }
            *g += source.row(i).transpose() * y_term + x_bar.transpose() * target.row(i);
        }
    }
    let n = batch.len() as f64;
    if let Some(g) = grad.as_mut() {
        *g /= n;
    }
    Ok((loss / n, grad))
}

/// Mean relaxed-CSLS loss of `q` over all pairs.
///
/// Pairs are used as given; callers normalize rows beforehand.
pub fn rcsls_loss(q: &DMatrix<f64>, pairs: &PairedVectors, k: usize) -> Result<f64> {
    let all: Vec<usize> = (0..pairs.len()).collect();
    batch_objective(q, pairs, &all, k, false).map(|(l, _)| l)
}

/// Loss and a subgradient with respect to `q` over all pairs.
pub fn rcsls_subgradient(
    q: &DMatrix<f64>,
    pairs: &PairedVectors,
    k: usize,
) -> Result<(f64, DMatrix<f64>)> {
    let all: Vec<usize> = (0..pairs.len()).collect();
    let (loss, grad) = batch_objective(q, pairs, &all, k, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// Fits an orthogonal map by projected subgradient descent on the relaxed
/// CSLS loss.
///
/// Rows are normalized before fitting. Each step moves against the batch
/// subgradient and projects back onto the orthogonal group. After each epoch
/// the full loss is evaluated; if it did not improve, the best iterate is
/// restored and the step size halved. The returned map is the best iterate
/// seen, so its loss never exceeds that of the initialization.
pub fn rcsls_align(pairs: &PairedVectors, config: &RcslsConfig) -> Result<OrthogonalMap> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("rcsls needs at least one pair".into()));
    }
    let pairs = pairs.normalized();
    let m = pairs.len();
    if config.k > m {
        return Err(Error::KTooLarge {
            k: config.k,
            pool: m,
        });
    }

    let init = match config.init {
        RcslsInit::Identity => DMatrix::identity(pairs.dim(), pairs.dim()),
        RcslsInit::Procrustes => procrustes_align(&pairs)?.matrix().clone(),
    };
    let mut best_loss = rcsls_loss(&init, &pairs, config.k)?;
    log::info!("rcsls init loss {best_loss:.6}");
    let mut best = init;
    let mut q = best.clone();
    let mut lr = config.learning_rate;
    let batch = config.batch_size.unwrap_or(m).min(m);
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for epoch in 0..config.epochs {
        if batch < m {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = batch_objective(&q, &pairs, chunk, config.k, true)?;
            let grad = grad.expect("gradient requested");
            q = project_orthogonal(&(&q - grad * lr))?;
        }
        let loss = rcsls_loss(&q, &pairs, config.k)?;
        log::info!("rcsls epoch {} loss {loss:.6} lr {lr}", epoch + 1);
        if loss < best_loss {
            best_loss = loss;
            best = q.clone();
        } else {
            lr *= 0.5;
            q = best.clone();
        }
    }

    let mut map = OrthogonalMap::new(best, MapMethod::Rcsls);
    map.final_loss = Some(best_loss);
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::normalize_rows;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn unit_rows(rng: &mut ChaCha8Rng, r: usize, d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::from_fn(r, d, |_, _| rng.sample(StandardNormal));
        normalize_rows(&mut m);
        m
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        project_orthogonal(&a).unwrap()
    }

    /// Recomputes the loss from raw dot products with fully sorted neighbour lists.
    fn brute_force_loss(q: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> f64 {
        let (m, d) = x.shape();
        let mapped: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..d)
                    .map(|c| (0..d).map(|r| x[(i, r)] * q[(r, c)]).sum())
                    .collect()
            })
            .collect();
        let sim = |i: usize, j: usize| -> f64 { (0..d).map(|c| mapped[i][c] * y[(j, c)]).sum() };
        let top_mean = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v[..k].iter().sum::<f64>() / k as f64
        };
        let mut total = 0.0;
        for i in 0..m {
            let fwd = top_mean((0..m).map(|j| sim(i, j)).collect());
            let bwd = top_mean((0..m).map(|l| sim(l, i)).collect());
            total += -2.0 * sim(i, i) + fwd + bwd;
        }
        total / m as f64
    }

    #[test]
    fn single_self_pair_is_zero() {
        let x = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let p = PairedVectors::from_matrices(x.clone(), x).unwrap();
        assert_eq!(rcsls_loss(&DMatrix::identity(2, 2), &p, 1).unwrap(), 0.0);
    }

    #[test]
    fn loss_is_deterministic_and_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = unit_rows(&mut rng, 8, 3);
        let y = unit_rows(&mut rng, 8, 3);
        let q = random_orthogonal(&mut rng, 3);
        let p = PairedVectors::from_matrices(x.clone(), y.clone()).unwrap();
        let a = rcsls_loss(&q, &p, 2).unwrap();
        let b = rcsls_loss(&q, &p, 2).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((a - brute_force_loss(&q, &x, &y, 2)).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_pool() {
        let x = DMatrix::<f64>::identity(2, 2);
        let p = PairedVectors::from_matrices(x.clone(), x).unwrap();
        assert!(matches!(
            rcsls_loss(&DMatrix::identity(2, 2), &p, 3),
            Err(Error::KTooLarge { .. })
        ));
        let cfg = RcslsConfig {
            k: 3,
            ..Default::default()
        };
        assert!(rcsls_align(&p, &cfg).is_err());
    }

    #[test]
    fn zero_epochs_returns_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = unit_rows(&mut rng, 12, 3);
        let y = unit_rows(&mut rng, 12, 3);
        let p = PairedVectors::from_matrices(x, y).unwrap();
        let cfg = RcslsConfig {
            k: 3,
            epochs: 0,
            ..Default::default()
        };
        let map = rcsls_align(&p, &cfg).unwrap();
        assert_eq!(
            map.matrix(),
            procrustes_align(&p.normalized()).unwrap().matrix()
        );
        let cfg = RcslsConfig {
            init: RcslsInit::Identity,
            ..cfg
        };
        assert_eq!(
            rcsls_align(&p, &cfg).unwrap().matrix(),
            &DMatrix::identity(3, 3)
        );
    }

    #[test]
    fn exact_rotation_is_not_degraded() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = unit_rows(&mut rng, 20, 3);
        let r = random_orthogonal(&mut rng, 3);
        let p = PairedVectors::from_matrices(x.clone(), &x * &r).unwrap();
        let cfg = RcslsConfig {
            k: 2,
            ..Default::default()
        };
        let init_loss = rcsls_loss(procrustes_align(&p).unwrap().matrix(), &p, 2).unwrap();
        let map = rcsls_align(&p, &cfg).unwrap();
        assert!(map.final_loss().unwrap() <= init_loss + 1e-9);
        assert!(map.is_orthogonal());
    }

    #[test]
    fn training_reduces_loss_and_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = unit_rows(&mut rng, 30, 4);
        let r = random_orthogonal(&mut rng, 4);
        let noise = DMatrix::from_fn(30, 4, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));
        let p = PairedVectors::from_matrices(x.clone(), &x * &r + noise)
            .unwrap()
            .normalized();

        let eye = DMatrix::identity(4, 4);
        let cfg = RcslsConfig {
            k: 3,
            epochs: 10,
            learning_rate: 1.0,
            init: RcslsInit::Identity,
            ..Default::default()
        };
        let init_loss = rcsls_loss(&eye, &p, 3).unwrap();
        let map = rcsls_align(&p, &cfg).unwrap();
        assert!(map.final_loss().unwrap() < init_loss);
        assert!(map.orthogonality_error() <= 1e-6);

        let (_, grad) = rcsls_subgradient(&eye, &p, 3).unwrap();
        let h = 1e-5;
        for a in 0..4 {
            for b in 0..4 {
                let mut plus = eye.clone();
                plus[(a, b)] += h;
                let mut minus = eye.clone();
                minus[(a, b)] -= h;
                let fd = (rcsls_loss(&plus, &p, 3).unwrap() - rcsls_loss(&minus, &p, 3).unwrap())
                    / (2.0 * h);
                let g = grad[(a, b)];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-4, "entry ({a},{b}): {g} vs {fd}");
            }
        }
    }

    #[test]
    fn minibatches_are_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = unit_rows(&mut rng, 25, 3);
        let y = unit_rows(&mut rng, 25, 3);
        let p = PairedVectors::from_matrices(x, y).unwrap();
        let cfg = RcslsConfig {
            k: 2,
            batch_size: Some(7),
            seed: 9,
            ..Default::default()
        };
        let a = rcsls_align(&p, &cfg).unwrap();
        let b = rcsls_align(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_orthogonal());
    }
}
