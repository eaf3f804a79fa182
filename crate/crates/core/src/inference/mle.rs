//! Maximum-likelihood fitting of the Dirichlet ARMA model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::optim::{minimize, BfgsConfig, Termination};
use crate::inference::rng::stream;
use crate::model::data::ModelData;
use crate::model::likelihood::{dirichlet_loglik, Workspace};
use crate::model::{ModelSpec, ParamLayout, ParamVector, Parameterization};
use crate::series::CompositionalSeries;

/// Starting point of the first optimization attempt. Retries always start
/// from uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Two-stage least squares on the link scale (long VAR residuals stand
    /// in for the MA innovations).
    #[default]
    Regression,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub bfgs: BfgsConfig,
    /// Additional attempts after a failed first one.
    pub retries: usize,
    /// Uniform initial values are drawn from `[-init_range, init_range]`.
    pub init_range: f64,
    pub init: InitStrategy,
    /// Relative central-difference step for the Hessian.
    pub hessian_step: f64,
    pub seed: u64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            bfgs: BfgsConfig::default(),
            retries: 8,
            init_range: 1.0,
            init: InitStrategy::Regression,
            hessian_step: 1e-4,
            seed: 1,
        }
    }
}

/// Why an optimization attempt was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFailure {
    NonFiniteObjective,
    LineSearchStall,
    MaxIterations,
    HessianNotPositiveDefinite,
    DegenerateResponse,
}

/// Maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// Names of the estimated (free) coordinates.
    pub names: Vec<String>,
    /// Estimated free coordinates.
    pub estimate: Vec<f64>,
    /// Row-major covariance of `estimate`, the inverse observed information.
    pub covariance: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Attempts made beyond the first.
    pub retries: usize,
    /// Failure reason of every rejected attempt, in order.
    pub failures: Vec<FitFailure>,
    pub iterations: usize,
    /// Innovation covariance (row-major) for Gaussian fits.
    pub sigma: Option<Vec<f64>>,
}

impl MleResult {
    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.covariance[i * n + i].max(0.0).sqrt()).collect()
    }
}

/// Symmetrized central-difference Jacobian of `grad` at `x`, with step
/// `rel * max(1, |x_i|)`.
pub fn fd_hessian(mut grad: impl FnMut(&[f64], &mut [f64]) -> f64, x: &[f64], rel: f64) -> Vec<f64> {
    let n = x.len();
    let mut h = vec![0.0; n * n];
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        let step = rel * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        grad(&xp, &mut gp);
        xp[i] = x[i] - step;
        grad(&xp, &mut gm);
        xp[i] = x[i];
        for j in 0..n {
            h[j * n + i] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h[i * n + j] + h[j * n + i]);
            h[i * n + j] = avg;
            h[j * n + i] = avg;
        }
    }
    h
}

/// Inverse of a symmetric positive-definite matrix, or `None`.
pub fn spd_inverse(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mat = DMatrix::from_row_slice(n, n, m);
    let chol = mat.cholesky()?;
    let inv = chol.inverse();
    Some((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect())
}

/// Minimizes a negative log likelihood from a sequence of starting
/// points, keeping the first attempt that converges with a positive-definite
/// Hessian.
pub(crate) fn fit_with_retries(
    names: Vec<String>,
    mut objective: impl FnMut(&[f64], &mut [f64]) -> f64,
    mut init: impl FnMut(usize) -> Vec<f64>,
    config: &MleConfig,
) -> MleResult {
    let mut failures = Vec::new();
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    for attempt in 0..=config.retries {
        let x0 = init(attempt);
        let r = minimize(&mut objective, &x0, &config.bfgs);
        let failure = match r.termination {
            Termination::Converged => None,
            Termination::NonFiniteStart => Some(FitFailure::NonFiniteObjective),
            Termination::LineSearchFailed => Some(FitFailure::LineSearchStall),
            Termination::MaxIterations => Some(FitFailure::MaxIterations),
        };
        if r.value.is_finite() && best.as_ref().map_or(true, |b| r.value < b.1) {
            best = Some((r.x.clone(), r.value, r.iterations));
        }
        if let Some(f) = failure {
            failures.push(f);
            continue;
        }
        let hess = fd_hessian(&mut objective, &r.x, config.hessian_step);
        match spd_inverse(&hess, r.x.len()) {
            Some(cov) => {
                return MleResult {
                    names,
                    estimate: r.x,
                    covariance: cov,
                    log_likelihood: -r.value,
                    converged: true,
                    retries: attempt,
                    failures,
                    iterations: r.iterations,
                    sigma: None,
                };
            }
            None => failures.push(FitFailure::HessianNotPositiveDefinite),
        }
    }
    let n = names.len();
    let (estimate, value, iterations) = best.unwrap_or((vec![f64::NAN; n], f64::INFINITY, 0));
    MleResult {
        names,
        estimate,
        covariance: vec![f64::NAN; n * n],
        log_likelihood: -value,
        converged: false,
        retries: config.retries,
        failures,
        iterations,
        sigma: None,
    }
}

/// True when some link coordinate never moves, in which case the
/// likelihood has no interior maximum.
pub(crate) fn is_degenerate(data: &ModelData) -> bool {
    let d = data.dim;
    (0..d).any(|r| {
        let first = data.u[r];
        (0..data.len).all(|t| (data.u[t * d + r] - first).abs() <= 1e-12 * first.abs().max(1.0))
    })
}

/// Failure result for a response with no variation; the estimate is the
/// minimum-norm least-squares solution where one exists.
pub(crate) fn degenerate_result(names: Vec<String>, estimate: Option<Vec<f64>>) -> MleResult {
    let n = names.len();
    let mut est = vec![f64::NAN; n];
    if let Some(e) = estimate {
        for (a, b) in est.iter_mut().zip(e) {
            *a = b;
        }
    }
    MleResult {
        names,
        estimate: est,
        covariance: vec![f64::NAN; n * n],
        log_likelihood: f64::NAN,
        converged: false,
        retries: 0,
        failures: vec![FitFailure::DegenerateResponse],
        iterations: 0,
        sigma: None,
    }
}

/// Least-squares coefficients of `y` (rows) on `z` (rows), one column of
/// coefficients per response.
pub(crate) fn least_squares(z: &[Vec<f64>], y: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = z.len();
    if n == 0 {
        return None;
    }
    let k = z[0].len();
    let d = y[0].len();
    let zm = DMatrix::from_fn(n, k, |i, j| z[i][j]);
    let ym = DMatrix::from_fn(n, d, |i, j| y[i][j]);
    let svd = zm.svd(true, true);
    svd.solve(&ym, 1e-12).ok()
}

/// Uncentered two-stage least-squares estimates `(A_1..A_P, B_1..B_Q, beta)`
/// in layout order (without `gamma`), plus link-scale residuals.
pub(crate) fn regression_estimates(layout: &ParamLayout, data: &ModelData) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let (p, q, d, w) = (layout.p, layout.q, layout.dim, layout.mean_width);
    let n = data.len;
    // stage 1: long autoregression for innovation proxies
    let long = if q > 0 { ((10.0 * (n as f64).log10()).ceil() as usize).max(p + q).min(n / (4 * d).max(1)) } else { 0 };
    let mut innov = vec![vec![0.0; d]; n];
    if q > 0 && long > 0 {
        let (mut zs, mut ys) = (Vec::new(), Vec::new());
        for t in long..n {
            let mut row = Vec::with_capacity(long * d + w);
            for l in 1..=long {
                row.extend_from_slice(data.u_at(t - l));
            }
            row.extend_from_slice(data.x_at(t));
            zs.push(row);
            ys.push(data.u_at(t).to_vec());
        }
        let coef = least_squares(&zs, &ys)?;
        for (i, t) in (long..n).enumerate() {
            for r in 0..d {
                let fit: f64 = zs[i].iter().enumerate().map(|(k, v)| v * coef[(k, r)]).sum();
                innov[t][r] = data.u_at(t)[r] - fit;
            }
        }
    }
    // stage 2
    let m = p.max(q);
    let start = m + if q > 0 { long } else { 0 };
    let (mut zs, mut ys) = (Vec::new(), Vec::new());
    for t in start..n {
        let mut row = Vec::with_capacity((p + q) * d + w);
        for l in 1..=p {
            row.extend_from_slice(data.u_at(t - l));
        }
        for l in 1..=q {
            row.extend_from_slice(&innov[t - l]);
        }
        row.extend_from_slice(data.x_at(t));
        zs.push(row);
        ys.push(data.u_at(t).to_vec());
    }
    if zs.len() <= zs.first()?.len() {
        return None;
    }
    let coef = least_squares(&zs, &ys)?;
    let mut theta = vec![0.0; layout.gamma_offset()];
    for lag in 0..p {
        for r in 0..d {
            for s in 0..d {
                theta[layout.a_offset(lag) + r * d + s] = coef[(lag * d + s, r)];
            }
        }
    }
    for lag in 0..q {
        for r in 0..d {
            for s in 0..d {
                theta[layout.b_offset(lag) + r * d + s] = coef[((p + lag) * d + s, r)];
            }
        }
    }
    let xo = (p + q) * d;
    for r in 0..d {
        for k in 0..w {
            theta[layout.beta_offset() + r * w + k] = coef[(xo + k, r)];
        }
    }
    let residuals = zs
        .iter()
        .zip(&ys)
        .map(|(z, y)| (0..d).map(|r| y[r] - z.iter().enumerate().map(|(k, v)| v * coef[(k, r)]).sum::<f64>()).collect())
        .collect();
    Some((theta, residuals))
}

/// Maps uncentered regression coefficients to the centered form,
/// `beta = (I - sum_p A_p)^{-1} beta*`, column by column.
pub(crate) fn center_beta(layout: &ParamLayout, theta: &mut [f64]) {
    let d = layout.dim;
    let w = layout.mean_width;
    let mut m = DMatrix::<f64>::identity(d, d);
    for lag in 0..layout.p {
        for r in 0..d {
            for s in 0..d {
                m[(r, s)] -= theta[layout.a_offset(lag) + r * d + s];
            }
        }
    }
    let Some(lu) = m.lu().try_inverse() else {
        return;
    };
    for k in 0..w {
        let b = DVector::from_fn(d, |r, _| theta[layout.beta_offset() + r * w + k]);
        let c = &lu * b;
        for r in 0..d {
            theta[layout.beta_offset() + r * w + k] = c[r];
        }
    }
}

fn regression_init(spec: &ModelSpec, layout: &ParamLayout, data: &ModelData) -> Option<Vec<f64>> {
    let (mut head, residuals) = regression_estimates(layout, data)?;
    for (i, v) in head.iter_mut().enumerate() {
        if !layout.is_free(i) {
            *v = 0.0;
        }
    }
    if spec.parameterization == Parameterization::Centered {
        center_beta(layout, &mut head);
    }
    // alr-scale residual variance of component j is about
    // (1/mu_j + 1/mu_ref) / phi
    let d = layout.dim;
    let n = residuals.len() as f64;
    let mut mean_y = vec![0.0; spec.components];
    for t in 0..data.len {
        for (m, ly) in mean_y.iter_mut().zip(data.log_y_at(t)) {
            *m += ly.exp() / data.len as f64;
        }
    }
    let non_ref: Vec<usize> = (0..spec.components).filter(|&c| c != spec.reference).collect();
    let mut phi = 0.0;
    for r in 0..d {
        let var = residuals.iter().map(|e: &Vec<f64>| e[r] * e[r]).sum::<f64>() / n;
        phi += (1.0 / mean_y[non_ref[r]] + 1.0 / mean_y[spec.reference]) / var.max(1e-12) / d as f64;
    }
    let mut theta = head;
    theta.extend(std::iter::repeat(0.0).take(layout.scale_width));
    if spec.scale_design.intercept {
        theta[layout.gamma_offset()] = phi.clamp(1e-3, 1e8).ln();
    }
    Some(theta)
}

/// Conditional maximum-likelihood fit of the Dirichlet ARMA model.
/// Estimated coordinates are the unmasked entries of the parameter layout.
pub fn fit_mle_darma(spec: &ModelSpec, series: &CompositionalSeries, config: &MleConfig) -> Result<MleResult> {
    let spec = spec.resolved(series.len());
    spec.validate()?;
    if series.len() <= spec.m() {
        return Err(Error::Usage(format!("series of length {} has no steps beyond m = {}", series.len(), spec.m())));
    }
    let data = Arc::new(ModelData::new(&spec, series)?);
    let layout = spec.layout();
    let free = layout.free_indices();
    let all_names = layout.names();
    let names: Vec<String> = free.iter().map(|&i| all_names[i].clone()).collect();
    if is_degenerate(&data) {
        let est = regression_estimates(&layout, &data).map(|(t, _)| free.iter().filter_map(|&i| t.get(i).copied()).collect());
        return Ok(degenerate_result(names, est));
    }
    let mut ws = Workspace::new(spec.components);
    let mut theta = vec![0.0; layout.len()];
    let mut grad_theta = vec![0.0; layout.len()];
    let objective = |x: &[f64], g: &mut [f64]| -> f64 {
        for (k, &i) in free.iter().enumerate() {
            theta[i] = x[k];
        }
        grad_theta.iter_mut().for_each(|v| *v = 0.0);
        let eval = dirichlet_loglik(&spec, &layout, &data, &theta, Some(&mut grad_theta), &mut ws);
        for (k, &i) in free.iter().enumerate() {
            g[k] = -grad_theta[i];
        }
        if eval.value.is_finite() {
            -eval.value
        } else {
            f64::INFINITY
        }
    };
    let regression = match config.init {
        InitStrategy::Regression => regression_init(&spec, &layout, &data),
        InitStrategy::Uniform => None,
    };
    let mut rng = stream(config.seed, 0);
    let init = |attempt: usize| -> Vec<f64> {
        if attempt == 0 {
            if let Some(t) = &regression {
                return free.iter().map(|&i| t[i]).collect();
            }
        }
        (0..free.len()).map(|_| rng.gen_range(-config.init_range..=config.init_range)).collect()
    };
    Ok(fit_with_retries(names, objective, init, config))
}

impl MleResult {
    /// Estimate placed into the full parameter layout of `spec`.
    pub fn param_vector(&self, spec: &ModelSpec) -> Result<ParamVector> {
        let layout = spec.layout();
        let mut values = vec![0.0; layout.len()];
        for (k, i) in layout.free_indices().into_iter().enumerate() {
            values[i] = *self.estimate.get(k).ok_or_else(|| Error::Usage("estimate does not match the model layout".into()))?;
        }
        ParamVector::from_values(layout, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_hessian_of_quadratic() {
        // f = x0^2 + 3 x0 x1 + 5 x1^2
        let g = |x: &[f64], out: &mut [f64]| {
            out[0] = 2.0 * x[0] + 3.0 * x[1];
            out[1] = 3.0 * x[0] + 10.0 * x[1];
            0.0
        };
        let h = fd_hessian(g, &[0.3, -2.0], 1e-4);
        let expected = [2.0, 3.0, 3.0, 10.0];
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8);
        }
        let inv = spd_inverse(&h, 2).unwrap();
        // det = 11
        assert!((inv[0] - 10.0 / 11.0).abs() < 1e-8 && (inv[1] + 3.0 / 11.0).abs() < 1e-8);
        assert!(spd_inverse(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
