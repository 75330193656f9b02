//! Bayesian linear regression sampled by Metropolis-within-Gibbs.
//!
//! Each iteration updates three blocks in turn, each with a random-walk
//! Metropolis step:
//!
//! 1. intercept and coefficients jointly, with Gaussian proposals shaped by
//!    the Cholesky factor of a fixed preconditioning covariance
//!    `(Z'Z / s^2 + prior precision)^-1`;
//! 2. `log sigma` (skipped when sigma is fixed);
//! 3. `log(nu - 2)` for a Student-t likelihood with sampled degrees of freedom.
//!
//! Step sizes are tuned during burn-in toward 30% acceptance and frozen
//! afterwards. Chain `c` draws from a generator seeded by `(seed, c)`, so the
//! output does not depend on whether chains run in parallel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, quantile_sorted, split_rhat};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ReturnSeries};
use crate::seed::{derive_indexed, rng_from, StageRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefPrior {
    Gaussian { scale: f64 },
    Laplace { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaPrior {
    HalfNormal { scale: f64 },
    Fixed { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Likelihood {
    Gaussian,
    /// Fixed degrees of freedom.
    StudentT { nu: f64 },
    /// `nu = 2 + e` with `e ~ Exponential(rate)`.
    StudentTSampled { rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub coef: CoefPrior,
    pub intercept_scale: f64,
    pub sigma: SigmaPrior,
    pub likelihood: Likelihood,
    /// Standardize feature columns before fitting; coefficients are then
    /// reported per standard deviation of the feature.
    pub standardize: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            coef: CoefPrior::Gaussian { scale: 1.0 },
            intercept_scale: 1.0,
            sigma: SigmaPrior::HalfNormal { scale: 1.0 },
            likelihood: Likelihood::StudentTSampled { rate: 1.0 / 29.0 },
            standardize: true,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")))
            }
        };
        match self.coef {
            CoefPrior::Gaussian { scale } | CoefPrior::Laplace { scale } => positive(scale, "coefficient prior scale")?,
        }
        positive(self.intercept_scale, "intercept_scale")?;
        match self.sigma {
            SigmaPrior::HalfNormal { scale } => positive(scale, "sigma prior scale")?,
            SigmaPrior::Fixed { value } => positive(value, "fixed sigma")?,
        }
        match self.likelihood {
            Likelihood::Gaussian => {}
            Likelihood::StudentT { nu } => {
                if !(nu > 2.0 && nu.is_finite()) {
                    return Err(Error::InvalidArgument(format!("nu must exceed 2, got {nu}")));
                }
            }
            Likelihood::StudentTSampled { rate } => positive(rate, "nu rate")?,
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations per step-size adaptation window during burn-in.
    pub adapt_window: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { chains: 4, iterations: 6000, burn_in: 1000, thin: 1, seed: 1, adapt_window: 50 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidArgument("at least two chains are required".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument("burn_in must be smaller than iterations".into()));
        }
        if self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::InvalidArgument("thin and adapt_window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainStats {
    /// Post burn-in acceptance rate of the coefficient block.
    pub coef_acceptance: f64,
    pub sigma_acceptance: Option<f64>,
    pub nu_acceptance: Option<f64>,
    pub coef_step: f64,
    pub sigma_step: f64,
    pub nu_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorSamples {
    pub param_names: Vec<String>,
    /// Row-major draws, chain by chain: row `c * per_chain + i`.
    pub draws: Vec<Vec<f64>>,
    pub chains: usize,
    pub per_chain: usize,
    pub seed: u64,
    pub chain_stats: Vec<ChainStats>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Features dropped for having zero variance.
    pub dropped: Vec<String>,
}

impl PosteriorSamples {
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == name)
    }

    /// Draws of one parameter, split by chain.
    pub fn chain_draws(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| self.draws[c * self.per_chain..(c + 1) * self.per_chain].iter().map(|r| r[param]).collect())
            .collect()
    }

    pub fn column(&self, param: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[param]).collect()
    }

    /// Writes one column per parameter, preceded by `chain,draw`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.param_names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.draws.iter().enumerate() {
            let mut rec = vec![(i / self.per_chain).to_string(), (i % self.per_chain).to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Model<'a> {
    /// Row-major design with a leading column of ones.
    z: &'a [Vec<f64>],
    y: &'a [f64],
    prior: &'a PriorSpec,
}

#[derive(Clone)]
struct State {
    theta: Vec<f64>,
    log_sigma: f64,
    log_nu_excess: f64,
}

impl Model<'_> {
    fn sigma(&self, s: &State) -> f64 {
        match self.prior.sigma {
            SigmaPrior::Fixed { value } => value,
            SigmaPrior::HalfNormal { .. } => libm::exp(s.log_sigma),
        }
    }

    fn nu(&self, s: &State) -> Option<f64> {
        match self.prior.likelihood {
            Likelihood::Gaussian => None,
            Likelihood::StudentT { nu } => Some(nu),
            Likelihood::StudentTSampled { .. } => Some(2.0 + libm::exp(s.log_nu_excess)),
        }
    }

    /// Log posterior in the sampling coordinates (includes log Jacobians).
    fn log_post(&self, s: &State) -> f64 {
        let sigma = self.sigma(s);
        let nu = self.nu(s);
        let mut ll = 0.0;
        let norm = match nu {
            None => -libm::log(sigma),
            Some(nu) => {
                libm::lgamma((nu + 1.0) / 2.0) - libm::lgamma(nu / 2.0) - 0.5 * libm::log(nu * PI) - libm::log(sigma)
            }
        };
        for (row, &yi) in self.z.iter().zip(self.y) {
            let fit: f64 = row.iter().zip(&s.theta).map(|(a, b)| a * b).sum();
            let r = (yi - fit) / sigma;
            ll += match nu {
                None => -0.5 * r * r,
                Some(nu) => -(nu + 1.0) / 2.0 * libm::log1p(r * r / nu),
            };
        }
        ll += norm * self.y.len() as f64;

        let mut lp = -0.5 * (s.theta[0] / self.prior.intercept_scale).powi(2);
        for &b in &s.theta[1..] {
            lp += match self.prior.coef {
                CoefPrior::Gaussian { scale } => -0.5 * (b / scale).powi(2),
                CoefPrior::Laplace { scale } => -b.abs() / scale,
            };
        }
        if let SigmaPrior::HalfNormal { scale } = self.prior.sigma {
            lp += -0.5 * (sigma / scale).powi(2) + s.log_sigma;
        }
        if let Likelihood::StudentTSampled { rate } = self.prior.likelihood {
            lp += -rate * libm::exp(s.log_nu_excess) + s.log_nu_excess;
        }
        ll + lp
    }
}

/// Marsaglia polar method on `libm`, so draws do not depend on the
/// platform's math library.
fn normal(rng: &mut StageRng) -> f64 {
    loop {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * libm::sqrt(-2.0 * libm::log(s) / s);
        }
    }
}

struct Prepared {
    names: Vec<String>,
    dropped: Vec<String>,
    z: Vec<Vec<f64>>,
}

fn prepare(x: &FeatureMatrix, standardize: bool) -> Prepared {
    let n = x.rows();
    let nf = n as f64;
    let mut names = Vec::new();
    let mut dropped = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (name, col) in x.names().iter().zip(x.columns()) {
        let mean = col.iter().sum::<f64>() / nf;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        if standardize {
            if sd > 0.0 {
                cols.push(col.iter().map(|v| (v - mean) / sd).collect());
                names.push(name.clone());
            } else {
                dropped.push(name.clone());
            }
        } else {
            cols.push(col.clone());
            names.push(name.clone());
        }
    }
    let z = (0..n)
        .map(|i| std::iter::once(1.0).chain(cols.iter().map(|c| c[i])).collect())
        .collect();
    Prepared { names, dropped, z }
}

/// Draws from the posterior of `y = a + X b + e`.
pub fn fit_bayes(x: &FeatureMatrix, y: &ReturnSeries, prior: &PriorSpec, cfg: &McmcConfig) -> Result<PosteriorSamples> {
    if x.rows() != y.len() || x.dates() != y.dates() {
        return Err(Error::MisalignedSeries("design matrix and target are not aligned".into()));
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    prior.validate()?;
    cfg.validate()?;

    let prep = prepare(x, prior.standardize);
    let ys = y.returns();
    let n = ys.len() as f64;
    let d = prep.names.len() + 1;

    // Scale guess for the preconditioner.
    let y_mean = ys.iter().sum::<f64>() / n;
    let y_sd = (ys.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let s0 = match prior.sigma {
        SigmaPrior::Fixed { value } => value,
        SigmaPrior::HalfNormal { .. } => {
            if y_sd > 0.0 {
                y_sd
            } else {
                1e-3
            }
        }
    };
    let zmat = DMatrix::from_fn(ys.len(), d, |i, j| prep.z[i][j]);
    let mut precision = zmat.transpose() * &zmat / (s0 * s0);
    precision[(0, 0)] += 1.0 / prior.intercept_scale.powi(2);
    let coef_prec = match prior.coef {
        CoefPrior::Gaussian { scale } => 1.0 / (scale * scale),
        CoefPrior::Laplace { scale } => 1.0 / (2.0 * scale * scale),
    };
    for j in 1..d {
        precision[(j, j)] += coef_prec;
    }
    let cov = precision
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidArgument("preconditioner is not positive definite".into()))?;
    let chol = cov.clone().cholesky().expect("inverse of SPD is SPD").l();
    let mode = &cov * (zmat.transpose() * DVector::from_column_slice(ys)) / (s0 * s0);

    let model = Model { z: &prep.z, y: ys, prior };
    let sampled_sigma = matches!(prior.sigma, SigmaPrior::HalfNormal { .. });
    let sampled_nu = matches!(prior.likelihood, Likelihood::StudentTSampled { .. });

    let run_chain = |c: usize| -> Result<(Vec<Vec<f64>>, ChainStats)> {
        let mut rng = rng_from(derive_indexed(cfg.seed, "mcmc-chain", c as u64));
        // Over-dispersed start around the preconditioner mode.
        let jitter = DVector::from_fn(d, |_, _| 2.0 * normal(&mut rng));
        let start = &mode + &chol * jitter;
        let mut state = State {
            theta: start.iter().copied().collect(),
            log_sigma: libm::log(s0) + 0.5 * normal(&mut rng),
            log_nu_excess: match prior.likelihood {
                Likelihood::StudentTSampled { rate } => libm::log(1.0 / rate) + 0.5 * normal(&mut rng),
                _ => 0.0,
            },
        };
        let mut lp = model.log_post(&state);
        if !lp.is_finite() {
            return Err(Error::ChainDiverged { chain: c, iteration: 0 });
        }

        let mut steps = [2.38 / (d as f64).sqrt(), 0.5, 0.5];
        let mut window_accept = [0usize; 3];
        let mut kept_accept = [0usize; 3];
        let mut draws = Vec::with_capacity(cfg.kept_per_chain());

        for it in 0..cfg.iterations {
            let mut accepted = [false; 3];

            let z = DVector::from_fn(d, |_, _| normal(&mut rng));
            let delta = &chol * z * steps[0];
            let mut prop = state.clone();
            prop.theta.iter_mut().zip(delta.iter()).for_each(|(t, dd)| *t += dd);
            accepted[0] = metropolis(&model, &mut state, &mut lp, prop, &mut rng, c, it)?;

            if sampled_sigma {
                let mut prop = state.clone();
                prop.log_sigma += steps[1] * normal(&mut rng);
                accepted[1] = metropolis(&model, &mut state, &mut lp, prop, &mut rng, c, it)?;
            }
            if sampled_nu {
                let mut prop = state.clone();
                prop.log_nu_excess += steps[2] * normal(&mut rng);
                accepted[2] = metropolis(&model, &mut state, &mut lp, prop, &mut rng, c, it)?;
            }

            if it < cfg.burn_in {
                for b in 0..3 {
                    window_accept[b] += usize::from(accepted[b]);
                }
                if (it + 1) % cfg.adapt_window == 0 {
                    for b in 0..3 {
                        let rate = window_accept[b] as f64 / cfg.adapt_window as f64;
                        steps[b] *= libm::exp(2.0 * (rate - 0.3));
                        window_accept[b] = 0;
                    }
                }
            } else {
                for b in 0..3 {
                    kept_accept[b] += usize::from(accepted[b]);
                }
                if (it - cfg.burn_in).is_multiple_of(cfg.thin) && draws.len() < cfg.kept_per_chain() {
                    let mut row = state.theta.clone();
                    if sampled_sigma {
                        row.push(model.sigma(&state));
                    }
                    if sampled_nu {
                        row.push(model.nu(&state).expect("student-t"));
                    }
                    draws.push(row);
                }
            }
        }
        let post = (cfg.iterations - cfg.burn_in) as f64;
        let stats = ChainStats {
            coef_acceptance: kept_accept[0] as f64 / post,
            sigma_acceptance: sampled_sigma.then(|| kept_accept[1] as f64 / post),
            nu_acceptance: sampled_nu.then(|| kept_accept[2] as f64 / post),
            coef_step: steps[0],
            sigma_step: steps[1],
            nu_step: steps[2],
        };
        Ok((draws, stats))
    };

    let results: Vec<Result<(Vec<Vec<f64>>, ChainStats)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.chains).map(|c| scope.spawn(move || run_chain(c))).collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });

    let mut draws = Vec::new();
    let mut chain_stats = Vec::new();
    for r in results {
        let (d, s) = r?;
        draws.extend(d);
        chain_stats.push(s);
    }

    let mut param_names = vec!["intercept".to_string()];
    param_names.extend(prep.names.iter().cloned());
    if sampled_sigma {
        param_names.push("sigma".into());
    }
    if sampled_nu {
        param_names.push("nu".into());
    }

    let mut samples = PosteriorSamples {
        param_names,
        draws,
        chains: cfg.chains,
        per_chain: cfg.kept_per_chain(),
        seed: cfg.seed,
        chain_stats,
        rhat: Vec::new(),
        ess: Vec::new(),
        dropped: prep.dropped,
    };
    for p in 0..samples.param_names.len() {
        let per = samples.chain_draws(p);
        let refs: Vec<&[f64]> = per.iter().map(Vec::as_slice).collect();
        samples.rhat.push(split_rhat(&refs));
        samples.ess.push(effective_sample_size(&refs));
    }
    Ok(samples)
}

fn metropolis(
    model: &Model<'_>,
    state: &mut State,
    lp: &mut f64,
    proposal: State,
    rng: &mut StageRng,
    chain: usize,
    iteration: usize,
) -> Result<bool> {
    let lp_new = model.log_post(&proposal);
    if lp_new.is_nan() {
        return Err(Error::ChainDiverged { chain, iteration });
    }
    let u: f64 = rng.random();
    if lp_new > f64::NEG_INFINITY && libm::log(u) < lp_new - *lp {
        *state = proposal;
        *lp = lp_new;
        Ok(true)
    } else {
        Ok(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub param: String,
    pub quantiles: Vec<f64>,
    pub mean: f64,
    pub rhat: f64,
}

pub const DEFAULT_QUANTILES: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Per-parameter empirical quantiles over all kept draws (boxplot-ready).
pub fn posterior_summary(s: &PosteriorSamples, quantiles: &[f64]) -> Result<Vec<SummaryRow>> {
    if s.draws.is_empty() {
        return Err(Error::InvalidArgument("no draws to summarize".into()));
    }
    if quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::InvalidArgument("quantiles must lie in [0, 1]".into()));
    }
    Ok(s.param_names
        .iter()
        .enumerate()
        .map(|(p, name)| {
            let mut col = s.column(p);
            col.sort_by(f64::total_cmp);
            SummaryRow {
                param: name.clone(),
                quantiles: quantiles.iter().map(|&q| quantile_sorted(&col, q)).collect(),
                mean: col.iter().sum::<f64>() / col.len() as f64,
                rhat: s.rhat.get(p).copied().unwrap_or(f64::NAN),
            }
        })
        .collect())
}

fn quantile_label(q: f64) -> String {
    format!("q{}", (q * 1000.0).round() / 10.0)
}

/// Writes `param,q2.5,q25,q50,q75,q97.5,rhat` (one `q` column per quantile).
pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], quantiles: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["param".to_string()];
    header.extend(quantiles.iter().map(|&q| quantile_label(q)));
    header.push("rhat".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.param.clone()];
        rec.extend(r.quantiles.iter().map(f64::to_string));
        rec.push(r.rhat.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
