//! Regression of returns on tweet features.

mod bayes;
pub mod diagnostics;
mod lasso;

pub use bayes::{
    fit_bayes, posterior_summary, write_summary_csv, ChainStats, CoefPrior, Likelihood, McmcConfig,
    PosteriorSamples, PriorSpec, SigmaPrior, SummaryRow, DEFAULT_QUANTILES,
};
pub use lasso::{cv_lasso, fit_lasso, lambda_grid, lambda_max, predict_linear, ColumnScale, CvLasso, CvPoint, LassoModel};
