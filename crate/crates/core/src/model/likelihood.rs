use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::data::ModelData;
use crate::model::recursion::{mat_vec_add, Recursion};
use crate::model::spec::{ModelSpec, ParamLayout, ParamVector, Parameterization};
use crate::series::CompositionalSeries;
use crate::simplex::{logpdf_logits, DirichletWork, LogRatioVector};

/// `z_t gamma` is clamped to `[-LOG_SCALE_BOUND, LOG_SCALE_BOUND]`.
pub const LOG_SCALE_BOUND: f64 = 30.0;

/// Log likelihood value and the number of time steps whose log scale was
/// clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub clamped: usize,
}

/// Reusable buffers for likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub rec: Recursion,
    work: DirichletWork,
    logits: Vec<f64>,
    d_eta: Vec<f64>,
    /// Per-step log densities for `t >= m` from the last evaluation.
    pub pointwise: Vec<f64>,
}

impl Workspace {
    pub fn new(components: usize) -> Self {
        Self {
            rec: Recursion::new(),
            work: DirichletWork::new(components),
            logits: vec![0.0; components],
            d_eta: vec![0.0; components.saturating_sub(1)],
            pointwise: Vec::new(),
        }
    }
}

/// Clamped log scale `z_t gamma`; the flag reports clamping.
#[inline]
pub fn log_scale(z: &[f64], gamma: &[f64]) -> (f64, bool) {
    let raw: f64 = z.iter().zip(gamma).map(|(a, b)| a * b).sum();
    if raw > LOG_SCALE_BOUND {
        (LOG_SCALE_BOUND, true)
    } else if raw < -LOG_SCALE_BOUND {
        (-LOG_SCALE_BOUND, true)
    } else {
        (raw, false)
    }
}

/// Dirichlet conditional log likelihood `sum_{t >= m} log p(y_t | eta_t, phi_t)`.
/// When `grad` is given, the gradient with respect to every coordinate of
/// `theta` is added into it.
pub fn dirichlet_loglik(
    spec: &ModelSpec,
    layout: &ParamLayout,
    data: &ModelData,
    theta: &[f64],
    grad: Option<&mut [f64]>,
    ws: &mut Workspace,
) -> LikelihoodEval {
    let m = spec.m();
    let d = layout.dim;
    let n = data.len;
    ws.rec.forward(layout, spec.parameterization, m, data, theta);
    let gamma = &theta[layout.gamma_offset()..];
    let with_grad = grad.is_some();
    let mut value = 0.0;
    let mut clamped = 0;
    ws.pointwise.clear();
    let go = layout.gamma_offset();
    let mut d_gamma = vec![0.0; layout.scale_width];
    for t in m..n {
        let eta = &ws.rec.eta[t * d..(t + 1) * d];
        data.link.logits(eta, &mut ws.logits);
        let z = data.z_at(t);
        let (ls, was_clamped) = log_scale(z, gamma);
        clamped += was_clamped as usize;
        let (lp, d_ls) = logpdf_logits(data.log_y_at(t), &ws.logits, ls, &mut ws.work, with_grad);
        value += lp;
        ws.pointwise.push(lp);
        if with_grad {
            data.link.pullback(&ws.work.d_logits, &mut ws.d_eta);
            ws.rec.d_eta[t * d..(t + 1) * d].copy_from_slice(&ws.d_eta);
            if !was_clamped {
                for (g, zk) in d_gamma.iter_mut().zip(z) {
                    *g += d_ls * zk;
                }
            }
        }
    }
    if let Some(grad) = grad {
        ws.rec.backward(layout, spec.parameterization, m, data, theta, grad);
        for (k, g) in d_gamma.iter().enumerate() {
            grad[go + k] += g;
        }
    }
    LikelihoodEval { value, clamped }
}

/// Conditional log likelihood of `series` at `theta`, conditioning on the
/// first `m` observations.
pub fn log_likelihood(spec: &ModelSpec, theta: &ParamVector, series: &CompositionalSeries) -> Result<LikelihoodEval> {
    if series.len() <= spec.m() {
        return Err(Error::Usage(format!("series of length {} has no steps beyond m = {}", series.len(), spec.m())));
    }
    let spec = spec.resolved(series.len());
    let data = ModelData::new(&spec, series)?;
    let mut ws = Workspace::new(spec.components);
    let eval = dirichlet_loglik(&spec, theta.layout(), &data, theta.values(), None, &mut ws);
    if !eval.value.is_finite() {
        return Err(Error::NonFinite { term: "log likelihood".into() });
    }
    Ok(eval)
}

/// Log predictive densities `log p(y_t | theta, y_{1:t-1})` for `t > m`.
pub fn pointwise_log_likelihood(spec: &ModelSpec, theta: &ParamVector, series: &CompositionalSeries) -> Result<Vec<f64>> {
    let spec = spec.resolved(series.len());
    let data = ModelData::new(&spec, series)?;
    let mut ws = Workspace::new(spec.components);
    dirichlet_loglik(&spec, theta.layout(), &data, theta.values(), None, &mut ws);
    Ok(ws.pointwise)
}

/// Scale `phi_t = exp(z_t gamma)` at 1-based time index `t` of `series`,
/// with a flag set when the exponent was clamped.
pub fn scale_value(spec: &ModelSpec, theta: &ParamVector, series: &CompositionalSeries, t: usize) -> Result<(f64, bool)> {
    if t == 0 || t > series.len() {
        return Err(Error::Usage(format!("time index {t} outside 1..={}", series.len())));
    }
    let z = spec.scale_design.row(series.time(t - 1) as f64, spec.trend_scale());
    let (ls, clamped) = log_scale(&z, theta.gamma());
    Ok((ls.exp(), clamped))
}

/// Linear predictor at 1-based time index `t`, given the predictors
/// `eta_1..eta_{t-1}` in `history`. For `t <= m` this is `g(y_t)`.
pub fn linear_predictor(
    spec: &ModelSpec,
    theta: &ParamVector,
    series: &CompositionalSeries,
    t: usize,
    history: &[LogRatioVector],
) -> Result<LogRatioVector> {
    let m = spec.m();
    if t == 0 || t > series.len() {
        return Err(Error::Usage(format!("time index {t} outside 1..={}", series.len())));
    }
    let data = ModelData::new(spec, series)?;
    let i = t - 1;
    if i < m {
        return LogRatioVector::new(data.u_at(i).to_vec(), spec.reference);
    }
    if history.len() < i {
        return Err(Error::Usage(format!(
            "eta at t = {t} needs {} earlier predictors, got {}",
            i,
            history.len()
        )));
    }
    let layout = theta.layout();
    let d = layout.dim;
    let xb_at = |k: usize| -> Vec<f64> {
        let x = data.x_at(k);
        (0..d).map(|r| x.iter().zip(&theta.beta()[r * layout.mean_width..]).map(|(a, b)| a * b).sum()).collect()
    };
    let mut state = PredictorState::new(layout);
    for k in i.saturating_sub(m)..i {
        state.push(data.u_at(k), history[k].values(), &xb_at(k));
    }
    let mut eta = vec![0.0; d];
    state.next_eta(theta.values(), spec.parameterization, &xb_at(i), &mut eta);
    LogRatioVector::new(eta, spec.reference)
}

/// The last `max(P, Q)` link coordinates, predictors, and regression means,
/// enough to advance the recursion one step. Most recent first.
#[derive(Debug, Clone)]
pub struct PredictorState {
    layout: ParamLayout,
    u: VecDeque<Vec<f64>>,
    eta: VecDeque<Vec<f64>>,
    xb: VecDeque<Vec<f64>>,
    tmp: Vec<f64>,
}

impl PredictorState {
    pub fn new(layout: &ParamLayout) -> Self {
        Self {
            layout: layout.clone(),
            u: VecDeque::new(),
            eta: VecDeque::new(),
            xb: VecDeque::new(),
            tmp: vec![0.0; layout.dim],
        }
    }

    /// State after the last `m` rows of a completed recursion.
    pub fn from_recursion(layout: &ParamLayout, rec: &Recursion, data: &ModelData) -> Self {
        let mut s = Self::new(layout);
        let m = layout.p.max(layout.q);
        let d = layout.dim;
        for t in data.len.saturating_sub(m)..data.len {
            s.push(data.u_at(t), &rec.eta[t * d..(t + 1) * d], &rec.xb[t * d..(t + 1) * d]);
        }
        s
    }

    pub fn push(&mut self, u: &[f64], eta: &[f64], xb: &[f64]) {
        let m = self.layout.p.max(self.layout.q);
        if m == 0 {
            return;
        }
        if self.u.len() == m {
            let mut u_old = self.u.pop_back().unwrap();
            let mut e_old = self.eta.pop_back().unwrap();
            let mut x_old = self.xb.pop_back().unwrap();
            u_old.copy_from_slice(u);
            e_old.copy_from_slice(eta);
            x_old.copy_from_slice(xb);
            self.u.push_front(u_old);
            self.eta.push_front(e_old);
            self.xb.push_front(x_old);
        } else {
            self.u.push_front(u.to_vec());
            self.eta.push_front(eta.to_vec());
            self.xb.push_front(xb.to_vec());
        }
    }

    /// Predictor for the next step given its regression mean `xb_t`.
    pub fn next_eta(&mut self, theta: &[f64], param: Parameterization, xb_t: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let d = l.dim;
        out.copy_from_slice(xb_t);
        for lag in 1..=l.p.min(self.u.len()) {
            let a = &theta[l.a_offset(lag - 1)..l.a_offset(lag - 1) + d * d];
            for s in 0..d {
                self.tmp[s] = self.u[lag - 1][s]
                    - if param == Parameterization::Centered { self.xb[lag - 1][s] } else { 0.0 };
            }
            mat_vec_add(a, &self.tmp, out);
        }
        for lag in 1..=l.q.min(self.u.len()) {
            let b = &theta[l.b_offset(lag - 1)..l.b_offset(lag - 1) + d * d];
            for s in 0..d {
                self.tmp[s] = self.u[lag - 1][s] - self.eta[lag - 1][s];
            }
            mat_vec_add(b, &self.tmp, out);
        }
    }
}
