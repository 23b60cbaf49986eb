//! Ridge regression with trial-aware cross-validation.
//!
//! Rows are samples (analysis windows) and columns are features, so the
//! model is `Y ≈ X β` with `β` of shape `[features × outputs]`; the
//! row-vector form `Y = β X` is its transpose. Features are z-scored and
//! targets centered on the training rows, which leaves the intercept
//! unpenalized.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sigproc::reflect_index;
use crate::spectrogram::BandSpectrogram;

pub const DEFAULT_FOLDS: usize = 5;

/// Log-spaced grid of `count` values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::InvalidArgument(format!("invalid log grid {lo}:{hi}:{count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect())
}

/// 13 points from 1e-3 to 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 13).expect("static grid")
}

/// Stacks each window's features with those of its `lags` neighbours on
/// either side. Row `w` is `[col w-lags | ... | col w | ... | col w+lags]`,
/// mirrored at the sequence ends.
pub fn embed_temporal(features: &BandSpectrogram, lags: usize) -> Result<DMatrix<f64>> {
    let w_count = features.n_windows;
    if lags >= w_count {
        return Err(Error::InvalidArgument(format!(
            "{lags} lags need more than {w_count} windows"
        )));
    }
    let n_bands = features.n_bands();
    let width = n_bands * (2 * lags + 1);
    Ok(DMatrix::from_fn(w_count, width, |w, col| {
        let (block, band) = (col / n_bands, col % n_bands);
        let src = reflect_index(w as isize + block as isize - lags as isize, w_count);
        features.get(band, src)
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// `[features × outputs]`
    pub beta: DMatrix<f64>,
    pub lambda: f64,
    pub x_mean: DVector<f64>,
    pub x_scale: DVector<f64>,
    pub y_mean: DVector<f64>,
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.beta.ncols()
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} contains NaN or Inf")));
    }
    Ok(())
}

/// Standardized normal equations for one training set, reusable across λ.
pub struct RidgeProblem {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    x_mean: DVector<f64>,
    x_scale: DVector<f64>,
    y_mean: DVector<f64>,
}

impl RidgeProblem {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.nrows(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("no training rows".into()));
        }
        check_finite(x, "design matrix")?;
        check_finite(y, "target matrix")?;
        let n = x.nrows() as f64;
        let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let x_scale = DVector::from_iterator(
            x.ncols(),
            x.column_iter().zip(x_mean.iter()).map(|(c, &m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                // zero-variance columns keep scale 1 and vanish after centering
                if sd > 1e-12 * m.abs() && sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            }),
        );
        let y_mean = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / n));
        let xs = standardize(x, &x_mean, &x_scale);
        let mut yc = y.clone();
        for (mut col, m) in yc.column_iter_mut().zip(y_mean.iter()) {
            col.add_scalar_mut(-m);
        }
        let xt = xs.transpose();
        Ok(Self {
            gram: &xt * &xs,
            cross: &xt * &yc,
            x_mean,
            x_scale,
            y_mean,
        })
    }

    /// Solves `(X̃ᵀX̃ + λI) β = X̃ᵀỸ` by Cholesky factorization.
    pub fn solve(&self, lambda: f64) -> Result<RidgeModel> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        let p = self.gram.nrows();
        let mut a = self.gram.clone();
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let max_diag = (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let chol = a.cholesky().ok_or(Error::Singular { lambda })?;
        let l = chol.l();
        if (0..p).any(|i| {
            let d = l[(i, i)];
            d * d <= 1e-12 * max_diag
        }) {
            return Err(Error::Singular { lambda });
        }
        Ok(RidgeModel {
            beta: chol.solve(&self.cross),
            lambda,
            x_mean: self.x_mean.clone(),
            x_scale: self.x_scale.clone(),
            y_mean: self.y_mean.clone(),
        })
    }
}

fn standardize(x: &DMatrix<f64>, mean: &DVector<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for ((mut col, m), s) in out.column_iter_mut().zip(mean.iter()).zip(scale.iter()) {
        col.apply(|v| *v = (*v - m) / s);
    }
    out
}

pub fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
    RidgeProblem::new(x, y)?.solve(lambda)
}

pub fn ridge_predict(model: &RidgeModel, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x_new.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: x_new.ncols(),
        });
    }
    let mut pred = standardize(x_new, &model.x_mean, &model.x_scale) * &model.beta;
    for (mut col, m) in pred.column_iter_mut().zip(model.y_mean.iter()) {
        col.add_scalar_mut(*m);
    }
    Ok(pred)
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Splits the distinct trial labels into `k` folds of near-equal trial count
/// after a seeded shuffle. Returns the fold index for each distinct trial,
/// as `(trial, fold)` pairs sorted by trial.
pub fn trial_folds(trials: &[usize], k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut distinct = trials.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if k == 0 || distinct.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} trials cannot fill {k} folds",
            distinct.len()
        )));
    }
    let mut order = distinct.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds: Vec<(usize, usize)> = order.iter().enumerate().map(|(i, &t)| (t, i % k)).collect();
    folds.sort_unstable();
    Ok(folds)
}

/// Mean validation MSE per grid value under trial-level k-fold CV.
pub fn cv_scores(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    trials: &[usize],
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: trials.len(),
        });
    }
    let folds = trial_folds(trials, k, seed)?;
    let fold_of = |t: usize| folds[folds.binary_search_by_key(&t, |&(tr, _)| tr).unwrap()].1;
    let row_fold: Vec<usize> = trials.iter().map(|&t| fold_of(t)).collect();
    let mut totals = vec![0.0; grid.len()];
    for f in 0..k {
        let (val, train): (Vec<usize>, Vec<usize>) = (0..x.nrows()).partition(|&r| row_fold[r] == f);
        let problem = RidgeProblem::new(&select_rows(x, &train), &select_rows(y, &train))?;
        let (xv, yv) = (select_rows(x, &val), select_rows(y, &val));
        for (total, &lambda) in totals.iter_mut().zip(grid) {
            let pred = ridge_predict(&problem.solve(lambda)?, &xv)?;
            *total += (pred - &yv).norm_squared() / yv.len() as f64;
        }
    }
    Ok(totals.into_iter().map(|t| t / k as f64).collect())
}

/// Picks the grid value with the lowest mean validation MSE; near-ties
/// (within 1e-12 relative) go to the larger λ.
pub fn select_lambda(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    trials: &[usize],
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<f64> {
    match grid {
        [] => Err(Error::InvalidArgument("empty lambda grid".into())),
        [only] => Ok(*only),
        _ => {
            let scores = cv_scores(x, y, trials, grid, k, seed)?;
            let mut best = (grid[0], scores[0]);
            for (&lambda, &mse) in grid.iter().zip(&scores).skip(1) {
                let tie = (mse - best.1).abs() <= 1e-12 * best.1.abs();
                if (mse < best.1 && !tie) || (tie && lambda > best.0) {
                    best = (lambda, mse);
                }
            }
            Ok(best.0)
        }
    }
}

/// One stimulus' features and targets, rows aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBlock {
    pub id: String,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub trial_index: usize,
    pub trial_id: String,
    pub prediction: DMatrix<f64>,
    pub lambda: f64,
    pub model: RidgeModel,
}

/// Leave-one-stimulus-out evaluation: each trial is predicted by a model
/// fitted on all others, with λ tuned by inner trial-level k-fold CV.
///
/// Training trials are stacked in id order and inner folds are drawn from
/// ids, so results depend on the set of trials and not on input order.
/// Folds run in parallel on the current rayon pool.
pub fn loso_run(trials: &[TrialBlock], grid: &[f64], k: usize, seed: u64) -> Result<Vec<FoldResult>> {
    if trials.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} trials are too few for leave-one-out with {k} inner folds",
            trials.len()
        )));
    }
    let (n_features, n_outputs) = (trials[0].x.ncols(), trials[0].y.ncols());
    for t in trials {
        if t.x.nrows() != t.y.nrows() {
            return Err(Error::DimensionMismatch {
                expected: t.x.nrows(),
                actual: t.y.nrows(),
            });
        }
        if t.x.ncols() != n_features || t.y.ncols() != n_outputs {
            return Err(Error::InvalidArgument(format!(
                "trial {} has a different feature or output count",
                t.id
            )));
        }
    }
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials[a].id.cmp(&trials[b].id));
    if order.windows(2).any(|w| trials[w[0]].id == trials[w[1]].id) {
        return Err(Error::InvalidArgument("duplicate trial ids".into()));
    }

    (0..trials.len())
        .into_par_iter()
        .map(|held_out| {
            let train: Vec<usize> = order.iter().copied().filter(|&i| i != held_out).collect();
            let rows: usize = train.iter().map(|&i| trials[i].x.nrows()).sum();
            let mut x = DMatrix::zeros(rows, n_features);
            let mut y = DMatrix::zeros(rows, n_outputs);
            let mut labels = Vec::with_capacity(rows);
            let mut at = 0;
            for (rank, &i) in train.iter().enumerate() {
                let t = &trials[i];
                let r = t.x.nrows();
                x.rows_mut(at, r).copy_from(&t.x);
                y.rows_mut(at, r).copy_from(&t.y);
                labels.extend(std::iter::repeat_n(rank, r));
                at += r;
            }
            let lambda = select_lambda(&x, &y, &labels, grid, k, seed)?;
            let model = ridge_fit(&x, &y, lambda)?;
            let prediction = ridge_predict(&model, &trials[held_out].x)?;
            Ok(FoldResult {
                trial_index: held_out,
                trial_id: trials[held_out].id.clone(),
                prediction,
                lambda,
                model,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrogram::{canonical_bands, WindowGeometry};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn spectrogram(n_windows: usize) -> BandSpectrogram {
        BandSpectrogram {
            values: (0..4 * n_windows).map(|v| v as f64).collect(),
            n_windows,
            bands: canonical_bands(),
            geometry: WindowGeometry::default(),
            sample_rate_hz: 128.0,
        }
    }

    /// Gradient descent on the standardized objective ‖Ỹ − X̃β‖² + λ‖β‖².
    fn gd_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let mut xs = x.clone();
        for mut col in xs.column_iter_mut() {
            let m = col.sum() / n;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            col.apply(|v| *v = (*v - m) / sd);
        }
        let mut yc = y.clone();
        for mut col in yc.column_iter_mut() {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
        }
        // step below 1 / Lipschitz constant
        let lip = 2.0 * (xs.transpose() * &xs).norm() + 2.0 * lambda;
        let step = 1.0 / lip;
        let mut beta = DMatrix::zeros(x.ncols(), y.ncols());
        for _ in 0..200_000 {
            let grad = (xs.transpose() * (&xs * &beta - &yc)) * 2.0 + &beta * (2.0 * lambda);
            beta -= &grad * step;
            if grad.norm() < 1e-11 {
                break;
            }
        }
        beta
    }

    #[test]
    fn grid_helpers() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[12], 1e3);
        assert!((g[6] - 1.0).abs() < 1e-12);
        assert!(log_grid(0.0, 1.0, 3).is_err());
        assert_eq!(log_grid(2.0, 2.0, 1).unwrap(), vec![2.0]);
    }

    #[test]
    fn embedding() {
        let s = spectrogram(137);
        let e = embed_temporal(&s, 0).unwrap();
        assert_eq!(e.shape(), (137, 4));
        for w in 0..137 {
            for b in 0..4 {
                assert_eq!(e[(w, b)], s.get(b, w));
            }
        }
        let s = spectrogram(10);
        let e = embed_temporal(&s, 1).unwrap();
        assert_eq!(e.shape(), (10, 12));
        let s = &s;
        let col = |w: usize| (0..4).map(move |b| s.get(b, w));
        let row = |r: usize| e.row(r).iter().copied().collect::<Vec<_>>();
        assert_eq!(row(5), col(4).chain(col(5)).chain(col(6)).collect::<Vec<_>>());
        assert_eq!(row(0), col(1).chain(col(0)).chain(col(1)).collect::<Vec<_>>());
        assert_eq!(row(9), col(8).chain(col(9)).chain(col(8)).collect::<Vec<_>>());
        assert!(embed_temporal(s, 10).is_err());
    }

    #[test]
    fn interpolates_at_zero_lambda_and_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 4, 4);
        let y = x.clone();
        let model = ridge_fit(&x, &y, 0.0);
        // 4 rows, 4 centered columns: rank 3, so λ = 0 is singular
        assert!(matches!(model, Err(Error::Singular { .. })));

        let x = random_matrix(&mut rng, 12, 4);
        let y = random_matrix(&mut rng, 4, 2);
        let y = &x * y;
        let m0 = ridge_fit(&x, &y, 0.0).unwrap();
        let pred = ridge_predict(&m0, &x).unwrap();
        assert!((pred - &y).norm() < 1e-9);

        let spread = |lambda: f64| {
            let m = ridge_fit(&x, &y, lambda).unwrap();
            let p = ridge_predict(&m, &x).unwrap();
            (0..p.ncols())
                .map(|j| p.column(j).iter().map(|v| (v - m.y_mean[j]).abs()).sum::<f64>())
                .sum::<f64>()
        };
        assert!(spread(0.1) > spread(10.0));
        assert!(spread(10.0) > spread(1000.0));
    }

    #[test]
    fn orthonormal_design_closed_form() {
        // centered, unit population variance, mutually orthogonal columns: XᵀX = nI
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let y = DMatrix::from_column_slice(4, 1, &[3.0, -1.0, 2.0, 0.5]);
        let yc = &y - DMatrix::from_element(4, 1, y.mean());
        let n = 4.0;
        // In the orthonormal coordinates Q = X/√n with penalty λ/n = 1, β_Q = ½ Qᵀỹ,
        // which maps back to β = Xᵀỹ / (2n).
        let model = ridge_fit(&x, &y, n).unwrap();
        let want = x.transpose() * &yc / (2.0 * n);
        assert!((&model.beta - &want).norm() < 1e-14);
        let direct = (x.transpose() * &x + DMatrix::identity(2, 2) * n)
            .try_inverse()
            .unwrap()
            * x.transpose()
            * &yc;
        assert!((&model.beta - &direct).norm() < 1e-14);
    }

    #[test]
    fn matches_gradient_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x = random_matrix(&mut rng, 20, 5);
            let y = random_matrix(&mut rng, 20, 2);
            let model = ridge_fit(&x, &y, 0.3).unwrap();
            let oracle = gd_oracle(&x, &y, 0.3);
            assert!((&model.beta - &oracle).amax() < 1e-6);
        }
    }

    #[test]
    fn prediction_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 30, 3);
        let y = random_matrix(&mut rng, 30, 2);
        let m = ridge_fit(&x, &y, 0.5).unwrap();
        let at_mean = DMatrix::from_row_slice(1, 3, m.x_mean.as_slice());
        let p = ridge_predict(&m, &at_mean).unwrap();
        assert_eq!(p.row(0).transpose(), m.y_mean);
        let huge = ridge_fit(&x, &y, 1e300).unwrap();
        let p = ridge_predict(&huge, &x).unwrap();
        for r in 0..30 {
            assert!((p.row(r).transpose() - &m.y_mean).norm() < 1e-12);
        }
        assert!(ridge_predict(&m, &DMatrix::zeros(2, 4)).is_err());
        assert!(ridge_fit(&x, &DMatrix::zeros(29, 2), 1.0).is_err());
        assert!(ridge_fit(&x, &y, -1.0).is_err());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(ridge_fit(&bad, &y, 1.0).is_err());
    }

    #[test]
    fn degenerate_column_contributes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_matrix(&mut rng, 25, 3);
        x.column_mut(1).fill(4.2);
        let y = random_matrix(&mut rng, 25, 1);
        let m = ridge_fit(&x, &y, 0.1).unwrap();
        assert_eq!(m.x_scale[1], 1.0);
        assert!(m.beta[(1, 0)].abs() < 1e-12);
        assert!(ridge_fit(&x, &y, 0.0).is_err());
    }

    #[test]
    fn folds_partition_trials() {
        let trials: Vec<usize> = (0..23).flat_map(|t| std::iter::repeat_n(t, 3)).collect();
        let folds = trial_folds(&trials, 5, 11).unwrap();
        assert_eq!(folds.len(), 23);
        let mut sizes = [0usize; 5];
        for &(_, f) in &folds {
            sizes[f] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(folds, trial_folds(&trials, 5, 11).unwrap());
        assert_ne!(folds, trial_folds(&trials, 5, 12).unwrap());
        assert!(trial_folds(&[0, 1, 2, 3], 5, 0).is_err());
    }

    fn trial_labels(n_trials: usize, rows: usize) -> Vec<usize> {
        (0..n_trials).flat_map(|t| std::iter::repeat_n(t, rows)).collect()
    }

    #[test]
    fn noiseless_data_prefers_small_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 60, 4);
        let beta = random_matrix(&mut rng, 4, 2);
        let y = &x * &beta;
        let labels = trial_labels(10, 6);
        let grid = [1e-6, 1.0, 100.0];
        let scores = cv_scores(&x, &y, &labels, &grid, 5, 0).unwrap();
        assert!(scores[0] < scores[1] && scores[1] < scores[2]);
        assert_eq!(select_lambda(&x, &y, &labels, &grid, 5, 0).unwrap(), 1e-6);
    }

    #[test]
    fn pure_noise_prefers_large_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 60, 4);
        let y = random_matrix(&mut rng, 60, 1);
        let labels = trial_labels(10, 6);
        assert_eq!(select_lambda(&x, &y, &labels, &[1e-6, 1e6], 5, 0).unwrap(), 1e6);
    }

    #[test]
    fn lambda_selection_edge_cases() {
        let x = DMatrix::from_element(3, 2, f64::NAN);
        let y = DMatrix::zeros(3, 1);
        // a single grid value is returned without touching the data
        assert_eq!(select_lambda(&x, &y, &[0, 1, 2], &[0.7], 5, 0).unwrap(), 0.7);
        assert!(select_lambda(&x, &y, &[0, 1, 2], &[], 5, 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 8, 2);
        let y = random_matrix(&mut rng, 8, 1);
        assert!(select_lambda(&x, &y, &[0, 0, 1, 1, 2, 2, 3, 3], &[1.0, 2.0], 5, 0).is_err());
        // identical scores tie toward the larger value
        let zero_y = DMatrix::zeros(8, 1);
        let labels = [0, 1, 2, 3, 4, 5, 6, 7];
        assert_eq!(
            select_lambda(&x, &zero_y, &labels, &[3.0, 1.0, 2.0], 5, 0).unwrap(),
            3.0
        );
    }

    fn exact_trials(n: usize, rng: &mut ChaCha8Rng) -> Vec<TrialBlock> {
        let beta = random_matrix(rng, 3, 2);
        (0..n)
            .map(|i| {
                let x = random_matrix(rng, 15, 3);
                let y = &x * &beta + DMatrix::from_element(15, 2, 0.5);
                TrialBlock {
                    id: format!("t{i:02}"),
                    x,
                    y,
                }
            })
            .collect()
    }

    #[test]
    fn loso_recovers_exact_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = exact_trials(6, &mut rng);
        let out = loso_run(&trials, &[1e-9, 1e-3, 1.0], 5, 0).unwrap();
        assert_eq!(out.len(), 6);
        for (i, f) in out.iter().enumerate() {
            assert_eq!(f.trial_index, i);
            let y = &trials[i].y;
            assert_eq!(f.lambda, 1e-9);
            assert!((&f.prediction - y).norm() <= 1e-6 * y.norm());
        }
    }

    #[test]
    fn loso_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut trials: Vec<TrialBlock> = exact_trials(8, &mut rng);
        for t in &mut trials {
            t.y += random_matrix(&mut rng, 15, 2) * 0.5;
        }
        let grid = default_lambda_grid();
        let a = loso_run(&trials, &grid, 5, 3).unwrap();
        let mut shuffled = trials.clone();
        shuffled.shuffle(&mut rng);
        let b = loso_run(&shuffled, &grid, 5, 3).unwrap();
        for fb in &b {
            let fa = a.iter().find(|f| f.trial_id == fb.trial_id).unwrap();
            assert_eq!(fa.prediction, fb.prediction);
            assert_eq!(fa.lambda, fb.lambda);
        }
    }

    #[test]
    fn loso_ignores_held_out_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let trials = exact_trials(7, &mut rng);
        let grid = default_lambda_grid();
        let a = loso_run(&trials, &grid, 5, 1).unwrap();
        let mut perturbed = trials.clone();
        perturbed[2].x.apply(|v| *v += rng.random_range(-1.0..1.0));
        perturbed[2].y *= 3.0;
        let b = loso_run(&perturbed, &grid, 5, 1).unwrap();
        assert_eq!(a[2].model, b[2].model);
        assert!(loso_run(&trials[..5], &grid, 5, 1).is_err());
    }

    #[test]
    fn column_rescaling_does_not_change_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 40, 3);
        let y = random_matrix(&mut rng, 40, 2);
        let mut scaled = x.clone();
        scaled.column_mut(2).scale_mut(37.5);
        let a = ridge_predict(&ridge_fit(&x, &y, 2.0).unwrap(), &x).unwrap();
        let b = ridge_predict(&ridge_fit(&scaled, &y, 2.0).unwrap(), &scaled).unwrap();
        assert!((a - b).amax() < 1e-9);
    }

    #[test]
    fn shrinkage_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 30, 6);
            let y = random_matrix(&mut rng, 30, 2);
            let problem = RidgeProblem::new(&x, &y).unwrap();
            let norms: Vec<f64> = default_lambda_grid()
                .iter()
                .map(|&l| problem.solve(l).unwrap().beta.norm())
                .collect();
            assert!(norms.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
