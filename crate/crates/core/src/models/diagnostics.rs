//! Convergence diagnostics and quantiles for MCMC output.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R̂: every chain is cut in half and the halves are compared as
/// separate chains (Gelman et al., BDA3 formulation).
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        pieces.push(&c[..half]);
        pieces.push(&c[c.len() - half..]);
    }
    let n = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let w = pieces.iter().map(|p| sample_var(p)).sum::<f64>() / pieces.len() as f64;
    let b = n * sample_var(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Effective sample size across chains, using the multi-chain
/// autocorrelation estimate truncated by Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| sample_var(c)).collect();
    let w = mean(&vars);
    let b_over_n = if m > 1 { sample_var(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if var_plus == 0.0 {
        return (m * n) as f64;
    }

    let autocov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| (0..n - lag).map(|i| (c[i] - mu) * (c[i + lag] - mu)).sum::<f64>() / nf)
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (w * (nf - 1.0) / nf - autocov(lag)) / var_plus;

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = if lag == 0 { 1.0 + rho(1) } else { rho(lag) + rho(lag + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = -1.0 + 2.0 * sum_pairs;
    (m * n) as f64 / tau.max(1.0 / ((m * n) as f64).log10().max(1.0))
}

/// Monte Carlo standard error of the mean.
pub fn mcse_mean(chains: &[&[f64]]) -> f64 {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    (sample_var(&all) / effective_sample_size(chains)).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics:
/// `h = (N - 1) q`, value `x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantile_convention() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&x, 0.5), 50.5);
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 100.0);
        assert_eq!(quantile_sorted(&[4.0; 7], 0.3), 4.0);
    }

    #[test]
    fn iid_chains_look_converged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let chains: Vec<Vec<f64>> =
            (0..4).map(|_| (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let r = split_rhat(&refs);
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        let ess = effective_sample_size(&refs);
        assert!(ess > 6000.0 && ess < 10000.0, "ess {ess}");
    }

    #[test]
    fn shifted_chains_are_flagged() {
        let a: Vec<f64> = (0..500).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(split_rhat(&[&a, &b]) > 1.5);
    }

    #[test]
    fn autocorrelated_chain_has_small_ess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let chain: Vec<f64> = (0..5000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + e;
                x
            })
            .collect();
        let ess = effective_sample_size(&[&chain]);
        // AR(1) with phi = 0.9 has tau = (1 + phi)/(1 - phi) = 19.
        assert!(ess > 5000.0 / 30.0 && ess < 5000.0 / 12.0, "ess {ess}");
    }
}
