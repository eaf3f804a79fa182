//! The VARMA linear-predictor recursion and its reverse-mode adjoint.
//!
//! For `t >= m = max(P, Q)`:
//!
//! ```text
//! eta_t = sum_p A_p (u_{t-p} - c X_{t-p} beta) + sum_q B_q (u_{t-q} - eta_{t-q}) + X_t beta
//! ```
//!
//! with `c = 1` (centered) or `c = 0` (uncentered). For `t < m`,
//! `eta_t = u_t`, so MA terms reaching back into that window vanish.

use crate::model::data::ModelData;
use crate::model::spec::{ParamLayout, Parameterization};

/// Recursion buffers, sized for one series.
#[derive(Debug, Clone, Default)]
pub struct Recursion {
    /// `len x d` linear predictors.
    pub eta: Vec<f64>,
    /// `len x d` regression means `X_t beta`.
    pub xb: Vec<f64>,
    /// `len x d` adjoints of `eta`; losses write their local gradients here.
    pub d_eta: Vec<f64>,
    d_xb: Vec<f64>,
    tmp: Vec<f64>,
    g: Vec<f64>,
}

impl Recursion {
    pub fn new() -> Self {
        Self::default()
    }

    fn resize(&mut self, n: usize, d: usize) {
        for v in [&mut self.eta, &mut self.xb, &mut self.d_eta, &mut self.d_xb] {
            v.clear();
            v.resize(n * d, 0.0);
        }
        self.tmp.clear();
        self.tmp.resize(d, 0.0);
        self.g.clear();
        self.g.resize(d, 0.0);
    }

    /// Fills `eta` and `xb` for every time step of `data`.
    pub fn forward(&mut self, layout: &ParamLayout, param: Parameterization, m: usize, data: &ModelData, theta: &[f64]) {
        let d = layout.dim;
        let w = layout.mean_width;
        let n = data.len;
        self.resize(n, d);
        let beta = &theta[layout.beta_offset()..layout.gamma_offset()];
        for t in 0..n {
            let x = data.x_at(t);
            for r in 0..d {
                let b = &beta[r * w..(r + 1) * w];
                self.xb[t * d + r] = x.iter().zip(b).map(|(a, b)| a * b).sum();
            }
        }
        let centered = param == Parameterization::Centered;
        for t in 0..n.min(m) {
            self.eta[t * d..(t + 1) * d].copy_from_slice(data.u_at(t));
        }
        for t in m..n {
            let (done, rest) = self.eta.split_at_mut(t * d);
            let eta_t = &mut rest[..d];
            eta_t.copy_from_slice(&self.xb[t * d..(t + 1) * d]);
            for lag in 1..=layout.p {
                let a = &theta[layout.a_offset(lag - 1)..layout.a_offset(lag - 1) + d * d];
                let s0 = (t - lag) * d;
                for s in 0..d {
                    let mut dev = data.u[s0 + s];
                    if centered {
                        dev -= self.xb[s0 + s];
                    }
                    self.tmp[s] = dev;
                }
                mat_vec_add(a, &self.tmp, eta_t);
            }
            for lag in 1..=layout.q {
                if t - lag < m {
                    continue;
                }
                let b = &theta[layout.b_offset(lag - 1)..layout.b_offset(lag - 1) + d * d];
                let s0 = (t - lag) * d;
                for s in 0..d {
                    self.tmp[s] = data.u[s0 + s] - done[s0 + s];
                }
                mat_vec_add(b, &self.tmp, eta_t);
            }
        }
    }

    /// Back-propagates `d_eta` (local loss gradients for `t >= m`) through the
    /// recursion, adding parameter gradients into `grad`. Consumes `d_eta`.
    pub fn backward(
        &mut self,
        layout: &ParamLayout,
        param: Parameterization,
        m: usize,
        data: &ModelData,
        theta: &[f64],
        grad: &mut [f64],
    ) {
        let d = layout.dim;
        let n = data.len;
        let centered = param == Parameterization::Centered;
        self.d_xb.iter_mut().for_each(|v| *v = 0.0);
        for t in (m..n).rev() {
            self.g.copy_from_slice(&self.d_eta[t * d..(t + 1) * d]);
            let g = &self.g;
            for r in 0..d {
                self.d_xb[t * d + r] += g[r];
            }
            for lag in 1..=layout.p {
                let off = layout.a_offset(lag - 1);
                let s0 = (t - lag) * d;
                for r in 0..d {
                    if g[r] == 0.0 {
                        continue;
                    }
                    for s in 0..d {
                        let mut dev = data.u[s0 + s];
                        if centered {
                            dev -= self.xb[s0 + s];
                        }
                        grad[off + r * d + s] += g[r] * dev;
                    }
                }
                if centered {
                    let a = &theta[off..off + d * d];
                    for s in 0..d {
                        let h: f64 = (0..d).map(|r| g[r] * a[r * d + s]).sum();
                        self.d_xb[s0 + s] -= h;
                    }
                }
            }
            for lag in 1..=layout.q {
                if t - lag < m {
                    continue;
                }
                let off = layout.b_offset(lag - 1);
                let s0 = (t - lag) * d;
                for r in 0..d {
                    if g[r] == 0.0 {
                        continue;
                    }
                    for s in 0..d {
                        grad[off + r * d + s] += g[r] * (data.u[s0 + s] - self.eta[s0 + s]);
                    }
                }
                let b = &theta[off..off + d * d];
                for s in 0..d {
                    let h: f64 = (0..d).map(|r| g[r] * b[r * d + s]).sum();
                    self.d_eta[s0 + s] -= h;
                }
            }
        }
        let w = layout.mean_width;
        let bo = layout.beta_offset();
        for t in 0..n {
            let x = data.x_at(t);
            for r in 0..d {
                let g = self.d_xb[t * d + r];
                if g == 0.0 {
                    continue;
                }
                for (k, xv) in x.iter().enumerate() {
                    grad[bo + r * w + k] += g * xv;
                }
            }
        }
    }

    pub fn eta_at(&self, t: usize, d: usize) -> &[f64] {
        &self.eta[t * d..(t + 1) * d]
    }
}

/// `out += M v` for a row-major square `M`.
#[inline]
pub(crate) fn mat_vec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * d..(r + 1) * d];
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}
