//! Pareto-smoothed importance sampling.

/// Generalized Pareto fit to exceedances: shape `k` and scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub k: f64,
    pub sigma: f64,
}

/// Fits a generalized Pareto distribution to positive exceedances with the
/// profile empirical-Bayes estimator of Zhang and Stephens, followed by the
/// usual weakly informative shrinkage of `k` toward 0.5. A constant or too
/// short tail yields `k = -inf`.
pub fn fit_gpd_tail(exceedances: &[f64]) -> GpdFit {
    let n = exceedances.len();
    let mut x: Vec<f64> = exceedances.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    if n < 5 || x[n - 1] <= x[0] || !x.iter().all(|v| v.is_finite()) {
        return GpdFit { k: f64::NEG_INFINITY, sigma: f64::NAN };
    }
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let quartile = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / quartile)
        .collect();
    let profile: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&v| (-t * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let max = profile.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = profile.iter().map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
    let total: f64 = weights.iter().sum();
    let theta_hat: f64 = theta.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / total;
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = (n as f64 * k + 10.0 * 0.5) / (n as f64 + 10.0);
    GpdFit { k, sigma }
}

/// Quantile function of the generalized Pareto distribution.
fn gpd_quantile(p: f64, fit: GpdFit) -> f64 {
    if fit.k.abs() < 1e-12 {
        -fit.sigma * (-p).ln_1p()
    } else {
        fit.sigma * ((1.0 - p).powf(-fit.k) - 1.0) / fit.k
    }
}

/// Number of largest weights whose tail is smoothed: `min(0.2 S, 3 sqrt S)`.
pub fn tail_length(draws: usize) -> usize {
    let s = draws as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Smoothed log weights and the Pareto shape diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Psis {
    /// Unnormalized smoothed log weights in the input order.
    pub log_weights: Vec<f64>,
    pub k_hat: f64,
}

impl Psis {
    /// Self-normalized weights.
    pub fn weights(&self) -> Vec<f64> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }
}

/// Pareto-smooths raw log importance ratios: the largest
/// [`tail_length`] ratios are replaced by expected order statistics of a
/// generalized Pareto fit to their exceedances over the next-largest ratio,
/// truncated at the largest raw ratio. The result is shifted so its
/// maximum raw ratio is 0.
pub fn psis_smooth(log_ratios: &[f64]) -> Psis {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|l| l - max).collect();
    let m = tail_length(s);
    if m < 5 || m >= s {
        return Psis { log_weights: lw, k_hat: f64::INFINITY };
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let tail = &order[s - m..];
    let cutoff = lw[order[s - m - 1]];
    let exceed: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - cutoff.exp()).collect();
    let fit = fit_gpd_tail(&exceed);
    if fit.k.is_finite() {
        for (rank, &i) in tail.iter().enumerate() {
            let p = (rank as f64 + 0.5) / m as f64;
            let v = (cutoff.exp() + gpd_quantile(p, fit)).ln();
            lw[i] = v.min(0.0);
        }
    }
    Psis { log_weights: lw, k_hat: fit.k }
}

/// `log(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_tail_is_not_smoothed() {
        let raw = vec![0.0; 100];
        let p = psis_smooth(&raw);
        assert_eq!(p.k_hat, f64::NEG_INFINITY);
        assert_eq!(p.log_weights, raw);
    }

    #[test]
    fn tail_length_rule() {
        assert_eq!(tail_length(4000), 190);
        assert_eq!(tail_length(100), 20);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
