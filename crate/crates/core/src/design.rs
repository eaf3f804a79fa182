//! Deterministic covariates: intercept, linear trend, and Fourier pairs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K` harmonic pairs `(sin 2k pi t / w, cos 2k pi t / w)` of period `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub period: f64,
    pub harmonics: usize,
}

/// Kind of a single covariate column, used to pick its prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Intercept,
    Trend,
    Fourier,
}

/// Per-time-step covariate vector `x_t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub intercept: bool,
    /// Linear trend `t / trend_scale`.
    pub trend: bool,
    pub fourier: Vec<FourierTerm>,
}

impl CovariateSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intercept_only() -> Self {
        Self { intercept: true, ..Self::default() }
    }

    pub fn width(&self) -> usize {
        self.intercept as usize + self.trend as usize + 2 * self.fourier.iter().map(|f| f.harmonics).sum::<usize>()
    }

    pub fn kinds(&self) -> Vec<CovariateKind> {
        let mut kinds = Vec::with_capacity(self.width());
        if self.intercept {
            kinds.push(CovariateKind::Intercept);
        }
        if self.trend {
            kinds.push(CovariateKind::Trend);
        }
        kinds.extend(std::iter::repeat(CovariateKind::Fourier).take(self.width() - kinds.len()));
        kinds
    }

    /// Column names in `x_t` order.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.intercept {
            names.push("intercept".to_string());
        }
        if self.trend {
            names.push("trend".to_string());
        }
        for f in &self.fourier {
            for k in 1..=f.harmonics {
                names.push(format!("sin_{}_{}", f.period, k));
                names.push(format!("cos_{}_{}", f.period, k));
            }
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.fourier {
            if !(f.period > 0.0) {
                return Err(Error::Config(format!("Fourier period must be positive, got {}", f.period)));
            }
            if f.harmonics == 0 || f.harmonics as f64 > f.period / 2.0 {
                return Err(Error::Config(format!(
                    "Fourier block with period {} needs 1 <= K <= period/2, got K = {}",
                    f.period, f.harmonics
                )));
            }
        }
        Ok(())
    }

    /// Writes `x_t` into `out` (length [`width`](Self::width)).
    pub fn row_into(&self, t: f64, trend_scale: f64, out: &mut [f64]) {
        let mut i = 0;
        if self.intercept {
            out[i] = 1.0;
            i += 1;
        }
        if self.trend {
            out[i] = t / trend_scale;
            i += 1;
        }
        for f in &self.fourier {
            for k in 1..=f.harmonics {
                let angle = 2.0 * PI * k as f64 * t / f.period;
                out[i] = angle.sin();
                out[i + 1] = angle.cos();
                i += 2;
            }
        }
    }

    pub fn row(&self, t: f64, trend_scale: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.row_into(t, trend_scale, &mut out);
        out
    }
}

/// Dense `X_t = I_{J-1} (x) x_t`, a row-major `(J-1) x (J-1) r_0` matrix.
pub fn build_design(spec: &CovariateSpec, t: f64, components: usize, trend_scale: f64) -> Vec<f64> {
    let x = spec.row(t, trend_scale);
    let d = components - 1;
    let width = x.len() * d;
    let mut out = vec![0.0; d * width];
    for r in 0..d {
        out[r * width + r * x.len()..r * width + (r + 1) * x.len()].copy_from_slice(&x);
    }
    out
}
