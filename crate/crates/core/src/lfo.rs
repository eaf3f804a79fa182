//! Leave-future-out expected log predictive density, exact and with
//! Pareto-smoothed importance sampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::diagnostics::effective_sample_size;
use crate::inference::rng::child_seed;
use crate::inference::{sample_posterior, PosteriorDraws, SamplerConfig};
use crate::model::data::ModelData;
use crate::model::likelihood::{dirichlet_loglik, Workspace};
use crate::model::ModelSpec;
use crate::psis::{log_sum_exp, psis_smooth};
use crate::series::CompositionalSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfoConfig {
    /// Observations in the first fit.
    pub min_history: usize,
    /// Steps predicted jointly at each split.
    pub steps_ahead: usize,
    /// Refit when the Pareto shape exceeds this. Zero refits at every split.
    pub k_threshold: f64,
}

impl Default for LfoConfig {
    fn default() -> Self {
        Self { min_history: 50, steps_ahead: 1, k_threshold: 0.7 }
    }
}

impl LfoConfig {
    pub fn validate(&self, spec: &ModelSpec, len: usize) -> Result<()> {
        if self.min_history < spec.m() + 1 {
            return Err(Error::Config(format!("minimum history {} must exceed m = {}", self.min_history, spec.m())));
        }
        if self.steps_ahead < 1 {
            return Err(Error::Config("steps ahead must be at least 1".into()));
        }
        if !(self.k_threshold >= 0.0) {
            return Err(Error::Config(format!("k threshold must be nonnegative, got {}", self.k_threshold)));
        }
        if len < self.min_history + self.steps_ahead {
            return Err(Error::Usage(format!(
                "series of length {len} is shorter than minimum history {} plus {} steps",
                self.min_history, self.steps_ahead
            )));
        }
        Ok(())
    }
}

/// Contribution of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfoPoint {
    /// Observations conditioned on; the split predicts `t+1..t+M`.
    pub t: usize,
    pub elpd: f64,
    /// Pareto shape of the importance weights, NaN at fit points.
    pub k_hat: f64,
    pub refit: bool,
    /// False when the fit behind this term carried sampler warnings.
    pub reliable: bool,
    /// Monte Carlo standard error of `elpd`.
    pub mcse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfoReport {
    pub elpd: f64,
    /// Standard error from the per-term Monte Carlo errors.
    pub mcse: f64,
    pub points: Vec<LfoPoint>,
    pub refit_times: Vec<usize>,
}

impl LfoReport {
    fn from_points(points: Vec<LfoPoint>) -> Self {
        let elpd = points.iter().map(|p| p.elpd).sum();
        let mcse = points.iter().map(|p| p.mcse * p.mcse).sum::<f64>().sqrt();
        let refit_times = points.iter().filter(|p| p.refit).map(|p| p.t).collect();
        Self { elpd, mcse, points, refit_times }
    }

    pub fn refits(&self) -> usize {
        self.refit_times.len()
    }
}

/// A fit on the first `t` observations with each draw's pointwise log
/// likelihood over the whole series.
struct Fit {
    /// `draw x time`, entries before `m` are 0.
    loglik: Vec<Vec<f64>>,
    chain: Vec<usize>,
    reliable: bool,
}

fn fit_at(spec: &ModelSpec, series: &CompositionalSeries, data: &ModelData, t: usize, sampler: &SamplerConfig) -> Result<Fit> {
    let config = SamplerConfig { seed: child_seed(sampler.seed, t as u64), ..*sampler };
    let draws: PosteriorDraws = sample_posterior(spec, &series.head(t), &config)?;
    let layout = spec.layout();
    let m = spec.m();
    let mut ws = Workspace::new(spec.components);
    let mut loglik = Vec::with_capacity(draws.len());
    for row in &draws.values {
        dirichlet_loglik(spec, &layout, data, &row[..layout.len()], None, &mut ws);
        let mut ll = vec![0.0; data.len];
        ll[m..].copy_from_slice(&ws.pointwise);
        loglik.push(ll);
    }
    Ok(Fit { loglik, chain: draws.chain.clone(), reliable: draws.diagnostics.warnings.is_empty() })
}

/// `log sum_s w_s p_s` with normalized log weights `lw` and per-draw log
/// predictive densities `lp`, with a delta-method Monte Carlo error that
/// uses the effective sample size of `p_s` across chains.
fn weighted_log_mean(lw: &[f64], lp: &[f64], chain: &[usize]) -> (f64, f64) {
    let terms: Vec<f64> = lw.iter().zip(lp).map(|(w, p)| w + p).collect();
    let value = log_sum_exp(&terms) - log_sum_exp(lw);
    // relative densities, scaled for stability
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = lp.iter().map(|p| (p - max).exp()).collect();
    let wmax = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - wmax).exp()).collect();
    let wsum: f64 = w.iter().sum();
    let mean: f64 = w.iter().zip(&dens).map(|(a, b)| a * b).sum::<f64>() / wsum;
    // variance of the self-normalized estimator, inflated by autocorrelation
    let var: f64 = w.iter().zip(&dens).map(|(a, b)| (a / wsum).powi(2) * (b - mean).powi(2)).sum();
    let chains = chain.iter().max().map_or(1, |c| c + 1);
    let mut per_chain = vec![Vec::new(); chains];
    for (c, d) in chain.iter().zip(&dens) {
        per_chain[*c].push(*d);
    }
    let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
    let ess = effective_sample_size(&refs);
    let rel_eff = if ess.is_finite() && ess > 0.0 { (ess / dens.len() as f64).min(1.0) } else { 1.0 };
    let mcse = (var / rel_eff).sqrt() / mean;
    (value, if mcse.is_finite() { mcse } else { f64::NAN })
}

/// Log predictive density of `y_{t+1..t+M}` for each draw of `fit`.
fn predictive(fit: &Fit, t: usize, steps: usize) -> Vec<f64> {
    fit.loglik.iter().map(|ll| ll[t..t + steps].iter().sum()).collect()
}

fn prepare(spec: &ModelSpec, series: &CompositionalSeries, config: &LfoConfig) -> Result<(ModelSpec, ModelData)> {
    // one trend denominator for every refit
    let spec = spec.resolved(series.len());
    spec.validate()?;
    config.validate(&spec, series.len())?;
    let data = ModelData::new(&spec, series)?;
    Ok((spec, data))
}

/// Exact LFO: refits on `y_1..y_t` for every `t` in
/// `min_history..=T-M` and averages the predictive density over draws.
/// Fit `t` uses seed `child_seed(sampler.seed, t)`.
pub fn lfo_elpd_exact(spec: &ModelSpec, series: &CompositionalSeries, config: &LfoConfig, sampler: &SamplerConfig) -> Result<LfoReport> {
    let (spec, data) = prepare(spec, series, config)?;
    let m_ahead = config.steps_ahead;
    let splits: Vec<usize> = (config.min_history..=series.len() - m_ahead).collect();
    let points = splits
        .par_iter()
        .map(|&t| {
            let fit = fit_at(&spec, series, &data, t, sampler)?;
            let lp = predictive(&fit, t, m_ahead);
            let lw = vec![0.0; lp.len()];
            let (elpd, mcse) = weighted_log_mean(&lw, &lp, &fit.chain);
            Ok(LfoPoint { t, elpd, k_hat: f64::NAN, refit: true, reliable: fit.reliable, mcse })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LfoReport::from_points(points))
}

/// Approximate LFO: fits once at `min_history`, then importance-weights
/// the draws by the likelihood of the observations added since the last
/// fit, smoothing the weights with a generalized Pareto tail. A refit
/// happens whenever the Pareto shape exceeds `k_threshold`.
pub fn lfo_elpd_psis(spec: &ModelSpec, series: &CompositionalSeries, config: &LfoConfig, sampler: &SamplerConfig) -> Result<LfoReport> {
    let (spec, data) = prepare(spec, series, config)?;
    let m_ahead = config.steps_ahead;
    let mut fit_time = config.min_history;
    let mut fit = fit_at(&spec, series, &data, fit_time, sampler)?;
    let mut points = Vec::new();
    for t in config.min_history..=series.len() - m_ahead {
        let mut k_hat = f64::NAN;
        let mut refit = t == fit_time;
        let mut lw = vec![0.0; fit.loglik.len()];
        if t > fit_time {
            let ratios: Vec<f64> = fit.loglik.iter().map(|ll| ll[fit_time..t].iter().sum()).collect();
            let smoothed = psis_smooth(&ratios);
            k_hat = smoothed.k_hat;
            if config.k_threshold <= 0.0 || !(k_hat <= config.k_threshold) {
                fit_time = t;
                fit = fit_at(&spec, series, &data, t, sampler)?;
                refit = true;
                lw = vec![0.0; fit.loglik.len()];
            } else {
                lw = smoothed.log_weights;
            }
        }
        let lp = predictive(&fit, t, m_ahead);
        let (elpd, mcse) = weighted_log_mean(&lw, &lp, &fit.chain);
        points.push(LfoPoint { t, elpd, k_hat, refit, reliable: fit.reliable, mcse });
    }
    Ok(LfoReport::from_points(points))
}

/// One candidate's LFO result in a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub name: String,
    pub elpd: f64,
    /// Best ELPD minus this candidate's.
    pub elpd_diff: f64,
    pub refits: usize,
}

/// Sorts candidates by ELPD, best first, with differences to the best.
pub fn rank_models(results: &[(String, LfoReport)]) -> Vec<RankedModel> {
    let mut ranked: Vec<RankedModel> = results
        .iter()
        .map(|(name, r)| RankedModel { name: name.clone(), elpd: r.elpd, elpd_diff: 0.0, refits: r.refits() })
        .collect();
    ranked.sort_by(|a, b| b.elpd.total_cmp(&a.elpd));
    let best = ranked.first().map_or(0.0, |r| r.elpd);
    for r in &mut ranked {
        r.elpd_diff = best - r.elpd;
    }
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn elpd_ignores_a_common_weight_scale(
            lw in prop::collection::vec(-20.0f64..5.0, 40),
            lp in prop::collection::vec(-10.0f64..2.0, 40),
            shift in -300.0f64..300.0,
        ) {
            let chain: Vec<usize> = (0..40).map(|i| i / 20).collect();
            let shifted: Vec<f64> = lw.iter().map(|w| w + shift).collect();
            let (a, _) = weighted_log_mean(&lw, &lp, &chain);
            let (b, _) = weighted_log_mean(&shifted, &lp, &chain);
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn ranking_reports_distance_to_best() {
        let report = |elpd: f64| LfoReport { elpd, mcse: 0.1, points: vec![], refit_times: vec![3] };
        let ranked = rank_models(&[("a".into(), report(-12.0)), ("b".into(), report(-10.5)), ("c".into(), report(-11.0))]);
        let names: Vec<&str> = ranked.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["b", "c", "a"]);
        assert_eq!(ranked.iter().map(|r| r.elpd_diff).collect::<Vec<_>>(), [0.0, 0.5, 1.5]);
    }
}
