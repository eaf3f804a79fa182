//! Joint predictive simulation and forecast summaries.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::draws::quantile_sorted;
use crate::inference::rng::stream;
use crate::inference::PosteriorDraws;
use crate::model::data::ModelData;
use crate::model::likelihood::{log_scale, PredictorState};
use crate::model::recursion::Recursion;
use crate::model::{ModelSpec, ParamVector};
use crate::series::CompositionalSeries;
use crate::simplex::{sample_into, softmax_into, Link};

/// What the future MA terms use once observations run out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FutureInnovations {
    /// `g(y) - eta` at the trajectory's own sampled compositions.
    #[default]
    Sampled,
    /// Future innovations set to zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub horizon: usize,
    /// Trajectories for plug-in fits. Posterior fits use one per draw.
    pub trajectories: usize,
    pub levels: Vec<f64>,
    pub innovations: FutureInnovations,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { horizon: 1, trajectories: 1000, levels: vec![0.025, 0.975], innovations: FutureInnovations::Sampled, seed: 1 }
    }
}

/// Parameters that drive the predictive simulation.
#[derive(Debug, Clone, Copy)]
pub enum FitSource<'a> {
    /// One trajectory per posterior draw.
    Posterior(&'a PosteriorDraws),
    /// Dirichlet trajectories at a point estimate.
    PlugIn(&'a ParamVector),
    /// Gaussian alr-scale trajectories at a point estimate with innovation
    /// covariance `sigma` (row-major). The point forecast is the inverse alr
    /// of the conditional-mean path.
    Gaussian { params: &'a ParamVector, sigma: &'a [f64] },
}

/// Per-(step, component) summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub t: i64,
    pub component: usize,
    /// Point forecast: the mean over trajectories of `mu`.
    pub mean: f64,
    /// Mean of the sampled compositions.
    pub sample_mean: f64,
    pub median: f64,
    /// `(level, quantile)` of the sampled compositions.
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub horizon: usize,
    pub components: usize,
    /// Time index of each forecast step.
    pub times: Vec<i64>,
    /// Sampled compositions, `trajectory x step x component`, flattened.
    pub samples: Vec<f64>,
    /// `step x component` point forecast.
    pub point: Vec<Vec<f64>>,
    pub summaries: Vec<StepSummary>,
}

impl ForecastResult {
    pub fn trajectories(&self) -> usize {
        self.samples.len() / (self.horizon * self.components).max(1)
    }

    /// Sampled composition of trajectory `s` at step `h` (0-based).
    pub fn sample(&self, s: usize, h: usize) -> &[f64] {
        let j = self.components;
        let off = (s * self.horizon + h) * j;
        &self.samples[off..off + j]
    }
}

struct Path {
    y: Vec<f64>,
    mu: Vec<f64>,
}

/// Simulates one trajectory of `horizon` steps after the training data.
#[allow(clippy::too_many_arguments)]
fn simulate_path<R: Rng>(
    spec: &ModelSpec,
    data: &ModelData,
    rec: &mut Recursion,
    theta: &[f64],
    times: &[i64],
    innovations: FutureInnovations,
    gaussian: Option<&[f64]>,
    rng: &mut R,
) -> Path {
    let layout = spec.layout();
    let d = layout.dim;
    let j = spec.components;
    rec.forward(&layout, spec.parameterization, spec.m(), data, theta);
    let mut state = PredictorState::from_recursion(&layout, rec, data);
    let beta = &theta[layout.beta_offset()..layout.gamma_offset()];
    let gamma = &theta[layout.gamma_offset()..];
    let w = layout.mean_width;
    let mut path = Path { y: Vec::with_capacity(times.len() * j), mu: Vec::with_capacity(times.len() * j) };
    let mut xb = vec![0.0; d];
    let mut eta = vec![0.0; d];
    let mut logits = vec![0.0; j];
    let mut mu = vec![0.0; j];
    let mut y = vec![0.0; j];
    let mut u = vec![0.0; d];
    let mut e = vec![0.0; d];
    for &t in times {
        let x = spec.mean_design.row(t as f64, spec.trend_scale());
        for (r, v) in xb.iter_mut().enumerate() {
            *v = x.iter().zip(&beta[r * w..(r + 1) * w]).map(|(a, b)| a * b).sum();
        }
        state.next_eta(theta, spec.parameterization, &xb, &mut eta);
        data.link.logits(&eta, &mut logits);
        softmax_into(&logits, &mut mu);
        match gaussian {
            None => {
                let z = spec.scale_design.row(t as f64, spec.trend_scale());
                let (ls, _) = log_scale(&z, gamma);
                sample_into(&mu, ls.exp(), rng, &mut y);
            }
            Some(chol) => {
                for v in e.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for r in 0..d {
                    u[r] = eta[r] + (0..=r).map(|s| chol[r * d + s] * e[s]).sum::<f64>();
                }
                data.link.logits(&u, &mut logits);
                softmax_into(&logits, &mut y);
                for v in y.iter_mut() {
                    *v = v.max(1e-300);
                }
            }
        }
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        data.link.eta_from_logs(&ly, &mut u);
        match innovations {
            FutureInnovations::Sampled => state.push(&u, &eta, &xb),
            FutureInnovations::Zero => state.push(&u, &u, &xb),
        }
        path.y.extend_from_slice(&y);
        path.mu.extend_from_slice(&mu);
    }
    path
}

/// Conditional-mean path of the Gaussian model: future innovations are zero
/// and lagged link coordinates are replaced by their predictions.
fn mean_path(spec: &ModelSpec, data: &ModelData, theta: &[f64], times: &[i64]) -> Vec<f64> {
    let layout = spec.layout();
    let d = layout.dim;
    let j = spec.components;
    let mut rec = Recursion::new();
    rec.forward(&layout, spec.parameterization, spec.m(), data, theta);
    let mut state = PredictorState::from_recursion(&layout, &rec, data);
    let beta = &theta[layout.beta_offset()..layout.gamma_offset()];
    let w = layout.mean_width;
    let mut out = Vec::with_capacity(times.len() * j);
    let mut xb = vec![0.0; d];
    let mut eta = vec![0.0; d];
    let mut logits = vec![0.0; j];
    let mut mu = vec![0.0; j];
    for &t in times {
        let x = spec.mean_design.row(t as f64, spec.trend_scale());
        for (r, v) in xb.iter_mut().enumerate() {
            *v = x.iter().zip(&beta[r * w..(r + 1) * w]).map(|(a, b)| a * b).sum();
        }
        state.next_eta(theta, spec.parameterization, &xb, &mut eta);
        data.link.logits(&eta, &mut logits);
        softmax_into(&logits, &mut mu);
        state.push(&eta, &eta, &xb);
        out.extend_from_slice(&mu);
    }
    out
}

/// Simulates the joint predictive distribution of the `config.horizon`
/// steps following `series`. Trajectory `s` uses stream `s` of
/// `config.seed`, so results do not depend on the thread count.
pub fn forecast(spec: &ModelSpec, source: FitSource<'_>, series: &CompositionalSeries, config: &ForecastConfig) -> Result<ForecastResult> {
    if config.horizon < 1 {
        return Err(Error::Usage("forecast horizon must be at least 1".into()));
    }
    if let Some(l) = config.levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Usage(format!("quantile level {l} outside [0, 1]")));
    }
    let spec = spec.resolved(series.len());
    spec.validate()?;
    if series.len() < spec.m() {
        return Err(Error::Usage(format!("series of length {} is shorter than m = {}", series.len(), spec.m())));
    }
    let data = ModelData::new(&spec, series)?;
    let layout = spec.layout();
    let j = spec.components;
    let horizon = config.horizon;
    let last = if series.is_empty() { series.start() - 1 } else { series.time(series.len() - 1) };
    let times: Vec<i64> = (1..=horizon as i64).map(|h| last + h).collect();

    let (thetas, gaussian): (Vec<&[f64]>, Option<Vec<f64>>) = match source {
        FitSource::Posterior(draws) => {
            if draws.is_empty() {
                return Err(Error::Usage("no posterior draws to forecast from".into()));
            }
            if draws.values[0].len() < layout.len() {
                return Err(Error::Usage("posterior draws do not match the model layout".into()));
            }
            (draws.values.iter().map(|r| &r[..layout.len()]).collect(), None)
        }
        FitSource::PlugIn(p) | FitSource::Gaussian { params: p, .. } => {
            if p.layout() != &layout {
                return Err(Error::Usage("parameter vector does not match the model layout".into()));
            }
            let chol = match source {
                FitSource::Gaussian { sigma, .. } => Some(cholesky(sigma, layout.dim)?),
                _ => None,
            };
            (vec![p.values(); config.trajectories.max(1)], chol)
        }
    };
    if gaussian.is_some() && spec.link != Link::Alr {
        return Err(Error::Usage("Gaussian forecasts are defined on alr coordinates".into()));
    }
    let paths: Vec<Path> = thetas
        .par_iter()
        .enumerate()
        .map_init(Recursion::new, |rec, (s, theta)| {
            let mut rng = stream(config.seed, s as u64);
            simulate_path(&spec, &data, rec, theta, &times, config.innovations, gaussian.as_deref(), &mut rng)
        })
        .collect();

    let n = paths.len() as f64;
    let point_flat = match source {
        FitSource::Gaussian { params, .. } => mean_path(&spec, &data, params.values(), &times),
        _ => {
            let mut acc = vec![0.0; horizon * j];
            for p in &paths {
                for (a, m) in acc.iter_mut().zip(&p.mu) {
                    *a += m / n;
                }
            }
            acc
        }
    };
    let point: Vec<Vec<f64>> = point_flat.chunks(j).map(|c| c.to_vec()).collect();
    let mut summaries = Vec::with_capacity(horizon * j);
    let mut col = Vec::with_capacity(paths.len());
    for (h, &t) in times.iter().enumerate() {
        for c in 0..j {
            col.clear();
            col.extend(paths.iter().map(|p| p.y[h * j + c]));
            let sample_mean = col.iter().sum::<f64>() / n;
            col.sort_by(|a, b| a.total_cmp(b));
            summaries.push(StepSummary {
                t,
                component: c,
                mean: point[h][c],
                sample_mean,
                median: quantile_sorted(&col, 0.5),
                quantiles: config.levels.iter().map(|&l| (l, quantile_sorted(&col, l))).collect(),
            });
        }
    }
    let samples = paths.into_iter().flat_map(|p| p.y).collect();
    Ok(ForecastResult { horizon, components: j, times, samples, point, summaries })
}

/// Lower Cholesky factor (row-major) of a row-major covariance matrix.
fn cholesky(sigma: &[f64], d: usize) -> Result<Vec<f64>> {
    if sigma.len() != d * d {
        return Err(Error::Usage(format!("covariance needs {} entries, got {}", d * d, sigma.len())));
    }
    let m = nalgebra::DMatrix::from_row_slice(d, d, sigma);
    let l = m.cholesky().ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?.l();
    Ok((0..d).flat_map(|r| (0..d).map(move |s| (r, s))).map(|(r, s)| l[(r, s)]).collect())
}
