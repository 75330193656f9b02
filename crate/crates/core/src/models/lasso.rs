//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Columns are standardized (population standard deviation) and the target
//! centered before fitting, so the penalty `lambda` applies on the
//! standardized scale:
//!
//! ```text
//! minimize (1/2n) |y~ - X~ b|^2 + lambda |b|_1
//! ```
//!
//! Coefficients are mapped back to the original feature scale afterwards.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ReturnSeries};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LassoModel {
    pub features: Vec<String>,
    /// Original-scale coefficients aligned with `features`.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub scales: Vec<ColumnScale>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after each full sweep.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl LassoModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.features.iter().position(|f| f == name).map(|i| self.coefficients[i])
    }

    /// Coefficients on the standardized scale (what the penalty sees).
    pub fn standardized_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.scales).map(|(b, s)| b * s.sd).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.coefficients.iter().filter(|&&b| b != 0.0).count()
    }
}

/// Standardized design. Zero-variance columns are excluded from `active`.
pub(crate) struct Standardized {
    pub n: usize,
    pub scales: Vec<ColumnScale>,
    pub active: Vec<usize>,
    pub columns: Vec<Vec<f64>>,
    pub sq_norms: Vec<f64>,
    pub y_mean: f64,
    pub y_centered: Vec<f64>,
}

impl Standardized {
    pub fn new(columns: &[Vec<f64>], y: &[f64]) -> Standardized {
        let n = y.len();
        let nf = n as f64;
        let mut scales = Vec::with_capacity(columns.len());
        let mut active = Vec::new();
        let mut std_cols = Vec::new();
        let mut sq_norms = Vec::new();
        for (j, col) in columns.iter().enumerate() {
            let mean = col.iter().sum::<f64>() / nf;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf).sqrt();
            scales.push(ColumnScale { mean, sd });
            if sd > 0.0 && sd.is_finite() {
                let z: Vec<f64> = col.iter().map(|x| (x - mean) / sd).collect();
                sq_norms.push(z.iter().map(|v| v * v).sum::<f64>() / nf);
                std_cols.push(z);
                active.push(j);
            }
        }
        let y_mean = y.iter().sum::<f64>() / nf;
        let y_centered = y.iter().map(|v| v - y_mean).collect();
        Standardized { n, scales, active, columns: std_cols, sq_norms, y_mean, y_centered }
    }

    fn objective(&self, beta: &[f64], residual: &[f64], lambda: f64) -> f64 {
        let rss: f64 = residual.iter().map(|r| r * r).sum();
        rss / (2.0 * self.n as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

pub(crate) struct CdOutcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Coordinate descent on the active standardized columns, starting at `init`.
pub(crate) fn coordinate_descent(s: &Standardized, lambda: f64, init: &[f64], tol: f64, max_iter: usize) -> CdOutcome {
    let nf = s.n as f64;
    let mut beta = init.to_vec();
    let mut residual = s.y_centered.clone();
    for (col, &b) in s.columns.iter().zip(&beta) {
        if b != 0.0 {
            residual.iter_mut().zip(col).for_each(|(r, x)| *r -= b * x);
        }
    }
    let mut trace = vec![s.objective(&beta, &residual, lambda)];
    let mut iterations = 0;
    let mut converged = s.columns.is_empty();
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for (j, col) in s.columns.iter().enumerate() {
            let rho: f64 = col.iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>() / nf;
            let old = beta[j];
            let new = soft_threshold(rho + s.sq_norms[j] * old, lambda) / s.sq_norms[j];
            if new != old {
                let d = new - old;
                residual.iter_mut().zip(col).for_each(|(r, x)| *r -= d * x);
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        trace.push(s.objective(&beta, &residual, lambda));
        converged = max_change < tol;
    }
    CdOutcome { beta, iterations, converged, trace }
}

fn check_inputs(x: &FeatureMatrix, y: &ReturnSeries) -> Result<()> {
    if x.rows() != y.len() || x.dates() != y.dates() {
        return Err(Error::MisalignedSeries("design matrix and target are not aligned".into()));
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    Ok(())
}

/// Smallest penalty at which every coefficient is zero:
/// `max_j |<x~_j, y~>| / n`.
pub fn lambda_max(x: &FeatureMatrix, y: &ReturnSeries) -> Result<f64> {
    check_inputs(x, y)?;
    let s = Standardized::new(x.columns(), y.returns());
    if s.y_centered.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateTarget);
    }
    Ok(lambda_max_std(&s))
}

pub(crate) fn lambda_max_std(s: &Standardized) -> f64 {
    let nf = s.n as f64;
    s.columns
        .iter()
        .map(|c| (c.iter().zip(&s.y_centered).map(|(a, b)| a * b).sum::<f64>() / nf).abs())
        .fold(0.0, f64::max)
}

/// Log-spaced descending grid from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(x: &FeatureMatrix, y: &ReturnSeries, count: usize, ratio: f64) -> Result<Vec<f64>> {
    if count == 0 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument("grid needs count >= 1 and ratio in (0, 1)".into()));
    }
    let top = lambda_max(x, y)?;
    if count == 1 {
        return Ok(vec![top]);
    }
    let step = libm::log(ratio) / (count - 1) as f64;
    Ok((0..count).map(|i| top * libm::exp(step * i as f64)).collect())
}

pub(crate) fn to_model(
    names: &[String],
    s: &Standardized,
    out: &CdOutcome,
    lambda: f64,
) -> LassoModel {
    let mut coefficients = vec![0.0; names.len()];
    for (k, &j) in s.active.iter().enumerate() {
        coefficients[j] = out.beta[k] / s.scales[j].sd;
    }
    let intercept = s.y_mean - coefficients.iter().zip(&s.scales).map(|(b, sc)| b * sc.mean).sum::<f64>();
    LassoModel {
        features: names.to_vec(),
        coefficients,
        intercept,
        lambda,
        scales: s.scales.clone(),
        iterations: out.iterations,
        converged: out.converged,
        objective_trace: out.trace.clone(),
    }
}

/// Fits at a single penalty. A fit that hits `max_iter` is returned with
/// `converged == false`.
pub fn fit_lasso(x: &FeatureMatrix, y: &ReturnSeries, lambda: f64, tol: f64, max_iter: usize) -> Result<LassoModel> {
    check_inputs(x, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be finite and non-negative")));
    }
    let s = Standardized::new(x.columns(), y.returns());
    let out = coordinate_descent(&s, lambda, &vec![0.0; s.active.len()], tol, max_iter);
    Ok(to_model(x.names(), &s, &out, lambda))
}

/// `intercept + sum_j beta_j x_j`, matching features by name.
pub fn predict_linear(model: &LassoModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    let mut pred = vec![model.intercept; x.rows()];
    for (name, &b) in model.features.iter().zip(&model.coefficients) {
        let col = x.column(name).ok_or_else(|| Error::MissingFeature(name.clone()))?;
        if b != 0.0 {
            pred.iter_mut().zip(col).for_each(|(p, v)| *p += b * v);
        }
    }
    Ok(pred)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_mse: f64,
    pub fold_mse: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvLasso {
    pub best_lambda: f64,
    pub model: LassoModel,
    pub path: Vec<CvPoint>,
}

/// Contiguous-block `k`-fold cross-validation over a descending grid, warm
/// starting along the path. The best penalty minimizes the mean validation
/// MSE; ties go to the larger penalty. The final model is refit on all rows.
pub fn cv_lasso(
    x: &FeatureMatrix,
    y: &ReturnSeries,
    lambdas: &[f64],
    folds: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CvLasso> {
    check_inputs(x, y)?;
    let n = y.len();
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[0] < w[1]) || lambdas.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::InvalidArgument("lambda grid must be non-empty, non-negative, descending".into()));
    }

    let mut fold_mse = vec![Vec::with_capacity(folds); lambdas.len()];
    for f in 0..folds {
        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
        let valid: Vec<usize> = (lo..hi).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y.returns()[i]).collect();
        let xv = x.select_rows(&valid);
        let yv: Vec<f64> = valid.iter().map(|&i| y.returns()[i]).collect();

        let s = Standardized::new(xt.columns(), &yt);
        let mut beta = vec![0.0; s.active.len()];
        for (li, &lambda) in lambdas.iter().enumerate() {
            let out = coordinate_descent(&s, lambda, &beta, tol, max_iter);
            beta.clone_from(&out.beta);
            let model = to_model(x.names(), &s, &out, lambda);
            let pred = predict_linear(&model, &xv)?;
            let mse = pred.iter().zip(&yv).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / yv.len() as f64;
            fold_mse[li].push(mse);
        }
    }

    let path: Vec<CvPoint> = lambdas
        .iter()
        .zip(fold_mse)
        .map(|(&lambda, fold_mse)| CvPoint {
            lambda,
            mean_mse: fold_mse.iter().sum::<f64>() / fold_mse.len() as f64,
            fold_mse,
        })
        .collect();
    let mut best = 0;
    for (i, p) in path.iter().enumerate() {
        if p.mean_mse < path[best].mean_mse {
            best = i;
        }
    }
    let best_lambda = lambdas[best];

    // Refit on everything, warm-started along the grid down to the chosen penalty.
    let s = Standardized::new(x.columns(), y.returns());
    let mut beta = vec![0.0; s.active.len()];
    let mut last = None;
    for &lambda in &lambdas[..=best] {
        let out = coordinate_descent(&s, lambda, &beta, tol, max_iter);
        beta.clone_from(&out.beta);
        last = Some(out);
    }
    let model = to_model(x.names(), &s, &last.expect("grid is non-empty"), best_lambda);
    Ok(CvLasso { best_lambda, model, path })
}
