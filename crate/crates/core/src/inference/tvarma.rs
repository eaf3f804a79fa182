//! Gaussian VARMA on additive-log-ratio coordinates, fitted by conditional
//! maximum likelihood.

use nalgebra::DMatrix;
use rand::Rng;

use crate::design::CovariateSpec;
use crate::error::{Error, Result};
use crate::inference::mle::{degenerate_result, fit_with_retries, is_degenerate, regression_estimates, InitStrategy, MleConfig, MleResult};
use crate::inference::rng::stream;
use crate::model::data::ModelData;
use crate::model::recursion::Recursion;
use crate::model::{ModelSpec, ParamLayout, Parameterization};
use crate::series::CompositionalSeries;
use crate::simplex::Link;

/// Model specification for a tVARMA(P, Q) fit: alr link against the last
/// component, mean design `design`, no precision regression.
pub fn tvarma_spec(components: usize, p: usize, q: usize, design: CovariateSpec) -> ModelSpec {
    let mut spec = ModelSpec::new(components, p, q).with_parameterization(Parameterization::Uncentered);
    spec.link = Link::Alr;
    spec.reference = components.saturating_sub(1);
    spec.mean_design = design;
    spec.scale_design = CovariateSpec::empty();
    spec.prior.gamma_intercept = None;
    spec
}

/// Lower-triangular Cholesky factor from packed coordinates (row-major lower
/// triangle, diagonal on the log scale).
fn cholesky_factor(packed: &[f64], d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut k = 0;
    for r in 0..d {
        for s in 0..=r {
            l[(r, s)] = if r == s { packed[k].exp() } else { packed[k] };
            k += 1;
        }
    }
    l
}

fn pack_cholesky(l: &DMatrix<f64>) -> Vec<f64> {
    let d = l.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for r in 0..d {
        for s in 0..=r {
            out.push(if r == s { l[(r, s)].ln() } else { l[(r, s)] });
        }
    }
    out
}

struct Gaussian<'a> {
    spec: &'a ModelSpec,
    layout: &'a ParamLayout,
    data: &'a ModelData,
    free: &'a [usize],
    rec: Recursion,
    theta: Vec<f64>,
    grad_theta: Vec<f64>,
}

impl Gaussian<'_> {
    /// Negative conditional log likelihood and its gradient.
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        let d = self.layout.dim;
        let nf = self.free.len();
        for (k, &i) in self.free.iter().enumerate() {
            self.theta[i] = x[k];
        }
        let l = cholesky_factor(&x[nf..], d);
        let Some(l_inv) = l.clone().solve_lower_triangular(&DMatrix::identity(d, d)) else {
            return f64::INFINITY;
        };
        let prec = l_inv.transpose() * &l_inv;
        let m = self.spec.m();
        let n = self.data.len;
        self.rec.forward(self.layout, self.spec.parameterization, m, self.data, &self.theta);
        let mut scatter = DMatrix::<f64>::zeros(d, d);
        let mut quad = 0.0;
        let mut e = vec![0.0; d];
        for t in m..n {
            let u = self.data.u_at(t);
            for r in 0..d {
                e[r] = u[r] - self.rec.eta[t * d + r];
            }
            for r in 0..d {
                let pe: f64 = (0..d).map(|s| prec[(r, s)] * e[s]).sum();
                quad += e[r] * pe;
                self.rec.d_eta[t * d + r] = pe;
                for s in 0..d {
                    scatter[(r, s)] += e[r] * e[s];
                }
            }
        }
        let count = (n - m) as f64;
        let log_det_l: f64 = (0..d).map(|r| l[(r, r)].ln()).sum();
        let loglik = -0.5 * count * d as f64 * (2.0 * std::f64::consts::PI).ln() - count * log_det_l - 0.5 * quad;
        if !loglik.is_finite() {
            return f64::INFINITY;
        }
        self.grad_theta.iter_mut().for_each(|v| *v = 0.0);
        self.rec.backward(self.layout, self.spec.parameterization, m, self.data, &self.theta, &mut self.grad_theta);
        for (k, &i) in self.free.iter().enumerate() {
            g[k] = -self.grad_theta[i];
        }
        // dl/dSigma = -n/2 P + 1/2 P S P, dl/dL = 2 (dl/dSigma) L
        let gs = (&prec * &scatter * &prec - &prec * count) * 0.5;
        let gl = gs * &l * 2.0;
        let mut k = nf;
        for r in 0..d {
            for s in 0..=r {
                g[k] = -if r == s { gl[(r, s)] * l[(r, s)] } else { gl[(r, s)] };
                k += 1;
            }
        }
        -loglik
    }
}

/// Conditional maximum-likelihood fit of `alr(y_t) ~ N(eta_t, Sigma)` with
/// the DARMA mean recursion. `spec` is normally built by [`tvarma_spec`];
/// its precision design and priors are ignored. Estimated coordinates are
/// the unmasked mean parameters followed by the packed Cholesky factor of
/// `Sigma` (diagonal on the log scale).
pub fn fit_tvarma(spec: &ModelSpec, series: &CompositionalSeries, config: &MleConfig) -> Result<MleResult> {
    let mut spec = spec.resolved(series.len());
    spec.scale_design = CovariateSpec::empty();
    spec.prior.gamma_intercept = None;
    spec.validate()?;
    if spec.link != Link::Alr {
        return Err(Error::Usage("tVARMA is defined on alr coordinates".into()));
    }
    if series.len() <= spec.m() {
        return Err(Error::Usage(format!("series of length {} has no steps beyond m = {}", series.len(), spec.m())));
    }
    let data = ModelData::new(&spec, series)?;
    let layout = spec.layout();
    let d = layout.dim;
    let free = layout.free_indices();
    let all_names = layout.names();
    let mut names: Vec<String> = free.iter().map(|&i| all_names[i].clone()).collect();
    for r in 0..d {
        for s in 0..=r {
            names.push(format!("chol_{}_{}", r + 1, s + 1));
        }
    }
    let n_chol = d * (d + 1) / 2;
    if is_degenerate(&data) {
        let est = regression_estimates(&layout, &data).map(|(t, _)| free.iter().map(|&i| t[i]).collect());
        return Ok(degenerate_result(names, est));
    }

    let regression = match config.init {
        InitStrategy::Regression => regression_estimates(&layout, &data).and_then(|(theta, resid)| {
            let n = resid.len() as f64;
            let cov = DMatrix::from_fn(d, d, |r, s| resid.iter().map(|e| e[r] * e[s]).sum::<f64>() / n);
            let l = cov.cholesky()?.l();
            let mut x: Vec<f64> = free.iter().map(|&i| if layout.is_free(i) { theta[i] } else { 0.0 }).collect();
            x.extend(pack_cholesky(&l));
            Some(x)
        }),
        InitStrategy::Uniform => None,
    };
    let mut rng = stream(config.seed, 0);
    let init = |attempt: usize| -> Vec<f64> {
        if attempt == 0 {
            if let Some(x) = &regression {
                return x.clone();
            }
        }
        (0..free.len() + n_chol).map(|_| rng.gen_range(-config.init_range..=config.init_range)).collect()
    };
    let mut model = Gaussian {
        spec: &spec,
        layout: &layout,
        data: &data,
        free: &free,
        rec: Recursion::new(),
        theta: vec![0.0; layout.len()],
        grad_theta: vec![0.0; layout.len()],
    };
    let mut result = fit_with_retries(names, |x, g| model.eval(x, g), init, config);
    if result.estimate.iter().all(|v| v.is_finite()) {
        let l = cholesky_factor(&result.estimate[free.len()..], d);
        let sigma = &l * l.transpose();
        result.sigma = Some((0..d).flat_map(|r| (0..d).map(move |s| (r, s))).map(|(r, s)| sigma[(r, s)]).collect());
    }
    Ok(result)
}

/// `(sd_1, ..., sd_d, correlations in row-major lower-triangle order)` of a
/// row-major covariance matrix.
pub fn sigma_summary(sigma: &[f64], d: usize) -> Vec<f64> {
    let sd: Vec<f64> = (0..d).map(|r| sigma[r * d + r].sqrt()).collect();
    let mut out = sd.clone();
    for r in 0..d {
        for s in 0..r {
            out.push(sigma[r * d + s] / (sd[r] * sd[s]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_packing_round_trips() {
        let packed = vec![0.3, -0.2, -1.0];
        let l = cholesky_factor(&packed, 2);
        assert!((l[(0, 0)] - 0.3f64.exp()).abs() < 1e-15 && l[(0, 1)] == 0.0);
        let back = pack_cholesky(&l);
        for (a, b) in back.iter().zip(&packed) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_summary_of_known_matrix() {
        // sd 0.05, 0.05, rho 0.3
        let s = [0.0025, 0.00075, 0.00075, 0.0025];
        let out = sigma_summary(&s, 2);
        assert!((out[0] - 0.05).abs() < 1e-15 && (out[2] - 0.3).abs() < 1e-12);
    }
}
