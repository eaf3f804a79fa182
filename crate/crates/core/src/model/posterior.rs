//! Log posterior on an unconstrained parameter space.
//!
//! The unconstrained vector holds the free (unmasked) coordinates of
//! `theta` in layout order, with a Gamma-constrained scale intercept on
//! the log scale, followed by the log horseshoe local scales.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::data::ModelData;
use crate::model::likelihood::{dirichlet_loglik, Workspace};
use crate::model::prior::{coordinate_priors, half_cauchy_logpdf, horseshoe_groups, CoordPrior};
use crate::model::spec::{ModelSpec, ParamLayout, ParamVector};
use crate::series::CompositionalSeries;
use crate::special::ln_gamma;

/// A differentiable log density on `R^n`.
pub trait LogDensity: Clone + Send {
    fn dim(&self) -> usize;

    /// Log density at `x`, writing its gradient into `grad`. Returns
    /// `-inf` where the density is undefined or non-finite.
    fn logp_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// B-DARMA log posterior for one series.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    layout: ParamLayout,
    data: Arc<ModelData>,
    free: Vec<usize>,
    priors: Vec<CoordPrior>,
    groups: usize,
    ws: Workspace,
    theta: Vec<f64>,
    grad_theta: Vec<f64>,
}

impl Posterior {
    /// Posterior for `series`; the trend denominator is resolved to the
    /// series length when unset.
    pub fn new(spec: &ModelSpec, series: &CompositionalSeries) -> Result<Self> {
        let spec = spec.resolved(series.len());
        spec.validate()?;
        if series.len() < spec.m() {
            return Err(Error::Usage(format!(
                "series of length {} shorter than m = {}",
                series.len(),
                spec.m()
            )));
        }
        let data = Arc::new(ModelData::new(&spec, series)?);
        Self::with_data(spec, data)
    }

    pub(crate) fn with_data(spec: ModelSpec, data: Arc<ModelData>) -> Result<Self> {
        let layout = spec.layout();
        let free = layout.free_indices();
        let all = coordinate_priors(&spec);
        let priors = free.iter().map(|&i| all[i]).collect();
        let groups = horseshoe_groups(&spec).len();
        let n = layout.len();
        Ok(Self {
            ws: Workspace::new(spec.components),
            spec,
            layout,
            data,
            free,
            priors,
            groups,
            theta: vec![0.0; n],
            grad_theta: vec![0.0; n],
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn data(&self) -> &Arc<ModelData> {
        &self.data
    }

    /// Number of horseshoe local scales.
    pub fn local_scale_count(&self) -> usize {
        self.groups
    }

    /// Column names of the constrained draw: full `theta` layout then
    /// `lambda_k` for each horseshoe group.
    pub fn names(&self) -> Vec<String> {
        let mut names = self.layout.names();
        names.extend((1..=self.groups).map(|k| format!("lambda_{k}")));
        names
    }

    /// Maps an unconstrained point to `(theta, local scales)`.
    pub fn constrain(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut theta = vec![0.0; self.layout.len()];
        for (k, &i) in self.free.iter().enumerate() {
            theta[i] = match self.priors[k] {
                CoordPrior::Gamma(_) => x[k].exp(),
                _ => x[k],
            };
        }
        let lambdas = x[self.free.len()..].iter().map(|v| v.exp()).collect();
        (theta, lambdas)
    }

    /// Inverse of [`constrain`](Self::constrain).
    pub fn unconstrain(&self, theta: &[f64], lambdas: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .free
            .iter()
            .enumerate()
            .map(|(k, &i)| match self.priors[k] {
                CoordPrior::Gamma(_) => theta[i].ln(),
                _ => theta[i],
            })
            .collect();
        x.extend(lambdas.iter().map(|l| l.ln()));
        x
    }

    /// Log posterior (likelihood + prior + log-Jacobian) and, optionally,
    /// its gradient with respect to the unconstrained coordinates.
    pub fn evaluate(&mut self, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let nf = self.free.len();
        if x.len() != nf + self.groups {
            return Err(Error::Usage(format!("expected {} coordinates, got {}", nf + self.groups, x.len())));
        }
        self.theta.iter_mut().for_each(|v| *v = 0.0);
        for (k, &i) in self.free.iter().enumerate() {
            self.theta[i] = match self.priors[k] {
                CoordPrior::Gamma(_) => x[k].exp(),
                _ => x[k],
            };
        }
        let want_grad = grad.is_some();
        self.grad_theta.iter_mut().for_each(|v| *v = 0.0);
        let lik = dirichlet_loglik(
            &self.spec,
            &self.layout,
            &self.data,
            &self.theta,
            want_grad.then_some(&mut self.grad_theta[..]),
            &mut self.ws,
        );
        if !lik.value.is_finite() {
            return Err(Error::NonFinite { term: "log likelihood".into() });
        }
        let tau = self.spec.prior.tau;
        let lambdas: Vec<f64> = x[nf..].iter().map(|v| v.exp()).collect();
        let mut d_log_lambda = vec![0.0; self.groups];
        let mut prior = 0.0;
        let mut gx = vec![0.0; x.len()];
        for (k, &i) in self.free.iter().enumerate() {
            let th = self.theta[i];
            let g_lik = self.grad_theta[i];
            match self.priors[k] {
                CoordPrior::Normal { mean, sd } => {
                    let z = (th - mean) / sd;
                    prior += -0.5 * z * z - sd.ln();
                    gx[k] = g_lik - z / sd;
                }
                CoordPrior::Horseshoe { group } => {
                    let s = tau * lambdas[group];
                    let z = th / s;
                    prior += -0.5 * z * z - s.ln();
                    gx[k] = g_lik - z / s;
                    d_log_lambda[group] += z * z - 1.0;
                }
                CoordPrior::Gamma(g) => {
                    // theta = exp(x): density in x includes the Jacobian exp(x)
                    prior += g.shape * g.rate.ln() - ln_gamma(g.shape) + g.shape * x[k] - g.rate * th;
                    gx[k] = g_lik * th + g.shape - g.rate * th;
                }
            }
        }
        prior -= 0.918_938_533_204_672_8 * self.free.iter().zip(&self.priors).filter(|(_, p)| !matches!(p, CoordPrior::Gamma(_))).count() as f64;
        for (g, &lam) in lambdas.iter().enumerate() {
            // half-Cauchy plus log-Jacobian of lambda = exp(v)
            prior += half_cauchy_logpdf(lam) + x[nf + g];
            gx[nf + g] = d_log_lambda[g] - 2.0 * lam * lam / (1.0 + lam * lam) + 1.0;
        }
        if !prior.is_finite() {
            return Err(Error::NonFinite { term: "log prior".into() });
        }
        let total = lik.value + prior;
        if let Some(grad) = grad {
            if let Some(i) = gx.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { term: format!("gradient coordinate {i}") });
            }
            grad.copy_from_slice(&gx);
        }
        Ok(total)
    }

    /// Draw as a full [`ParamVector`].
    pub fn param_vector(&self, x: &[f64]) -> ParamVector {
        let (theta, _) = self.constrain(x);
        ParamVector::from_values(self.layout.clone(), theta).expect("constrained theta respects the mask")
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.free.len() + self.groups
    }

    fn logp_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(x, Some(grad)).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Log posterior and gradient at an unconstrained point.
pub fn log_posterior_and_grad(spec: &ModelSpec, x: &[f64], series: &CompositionalSeries) -> Result<(f64, Vec<f64>)> {
    let mut post = Posterior::new(spec, series)?;
    let mut grad = vec![0.0; post.dim()];
    let value = post.evaluate(x, Some(&mut grad))?;
    Ok((value, grad))
}
