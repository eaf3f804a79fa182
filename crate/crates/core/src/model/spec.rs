use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::CovariateSpec;
use crate::error::{Error, Result};
use crate::simplex::Link;

/// Whether the AR term subtracts the lagged regression mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// `A_p (g(y_{t-p}) - X_{t-p} beta)`.
    #[default]
    Centered,
    /// `A_p g(y_{t-p})`, with the regression mean absorbed into `beta`.
    Uncentered,
}

impl FromStr for Parameterization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(Self::Centered),
            "uncentered" => Ok(Self::Uncentered),
            other => Err(Error::Config(format!("unknown parameterization '{other}'"))),
        }
    }
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Centered => "centered",
            Self::Uncentered => "uncentered",
        })
    }
}

/// Named sparsity patterns for a square coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    #[default]
    Full,
    /// Diagonal and first off-diagonals.
    NearestNeighbor,
    Diagonal,
}

impl FromStr for MaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "nearest_neighbor" => Ok(Self::NearestNeighbor),
            "diagonal" => Ok(Self::Diagonal),
            other => Err(Error::Config(format!(
                "unknown mask '{other}' (expected full, nearest_neighbor, or diagonal)"
            ))),
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::NearestNeighbor => "nearest_neighbor",
            Self::Diagonal => "diagonal",
        })
    }
}

impl MaskKind {
    /// Whether entry `(r, s)` is free under this pattern.
    pub fn is_free(self, r: usize, s: usize) -> bool {
        match self {
            Self::Full => true,
            Self::NearestNeighbor => r.abs_diff(s) <= 1,
            Self::Diagonal => r == s,
        }
    }

    /// Number of free entries in a `dim x dim` matrix.
    pub fn free_count(self, dim: usize) -> usize {
        (0..dim).flat_map(|r| (0..dim).map(move |s| (r, s))).filter(|&(r, s)| self.is_free(r, s)).count()
    }
}

/// Prior on the entries of each `A_p` or `B_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatrixPrior {
    Normal { mean: f64, sd: f64 },
    /// Means depend on `|r - s|`: diagonal, first off-diagonals, and the rest.
    Band { diagonal_mean: f64, neighbor_mean: f64, other_mean: f64, sd: f64 },
    Horseshoe,
}

impl MatrixPrior {
    pub fn entry(&self, r: usize, s: usize) -> Option<(f64, f64)> {
        match *self {
            Self::Normal { mean, sd } => Some((mean, sd)),
            Self::Band { diagonal_mean, neighbor_mean, other_mean, sd } => {
                let mean = match r.abs_diff(s) {
                    0 => diagonal_mean,
                    1 => neighbor_mean,
                    _ => other_mean,
                };
                Some((mean, sd))
            }
            Self::Horseshoe => None,
        }
    }
}

/// Prior on regression coefficients, by covariate kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RegressionPrior {
    Normal { mean: f64, intercept_sd: f64, trend_sd: f64, fourier_sd: f64 },
    /// Grouped horseshoe. With `intercept_sd` set, intercepts are left out
    /// of the shrinkage and get `N(0, intercept_sd^2)` instead.
    Horseshoe { intercept_sd: Option<f64> },
}

/// Gamma(shape, rate) prior; used for a positive scale intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    /// Shape/rate pair with mean 5 and variance 7.
    pub const MEAN5_VAR7: GammaPrior = GammaPrior { shape: 25.0 / 7.0, rate: 5.0 / 7.0 };

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }
}

/// Per-block priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a: MatrixPrior,
    pub b: MatrixPrior,
    pub beta: RegressionPrior,
    pub gamma: RegressionPrior,
    /// When set, the scale intercept is constrained positive with this prior.
    pub gamma_intercept: Option<GammaPrior>,
    /// Fixed global horseshoe scale.
    pub tau: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::vague(0.5)
    }
}

impl PriorConfig {
    /// Independent `N(0, sd^2)` on every coefficient, normal scale intercept.
    pub fn vague(sd: f64) -> Self {
        let reg = RegressionPrior::Normal { mean: 0.0, intercept_sd: sd, trend_sd: sd, fourier_sd: sd };
        Self {
            a: MatrixPrior::Normal { mean: 0.0, sd },
            b: MatrixPrior::Normal { mean: 0.0, sd },
            beta: reg,
            gamma: reg,
            gamma_intercept: None,
            tau: 1.0,
        }
    }

    /// `N(0, 0.5^2)` on all of `beta, A, B` and Gamma(25/7, 5/7) on the
    /// log-scale intercept: the configuration of the J=3 simulation studies.
    pub fn simulation_study() -> Self {
        Self { gamma_intercept: Some(GammaPrior::MEAN5_VAR7), ..Self::vague(0.5) }
    }

    pub fn uses_horseshoe(&self) -> bool {
        matches!(self.a, MatrixPrior::Horseshoe)
            || matches!(self.b, MatrixPrior::Horseshoe)
            || matches!(self.beta, RegressionPrior::Horseshoe { .. })
            || matches!(self.gamma, RegressionPrior::Horseshoe { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {v}")))
            }
        };
        for m in [&self.a, &self.b] {
            match *m {
                MatrixPrior::Normal { sd, .. } | MatrixPrior::Band { sd, .. } => pos(sd, "prior sd")?,
                MatrixPrior::Horseshoe => {}
            }
        }
        for r in [&self.beta, &self.gamma] {
            match *r {
                RegressionPrior::Normal { intercept_sd, trend_sd, fourier_sd, .. } => {
                    pos(intercept_sd, "intercept sd")?;
                    pos(trend_sd, "trend sd")?;
                    pos(fourier_sd, "fourier sd")?;
                }
                RegressionPrior::Horseshoe { intercept_sd: Some(sd) } => pos(sd, "horseshoe intercept sd")?,
                RegressionPrior::Horseshoe { intercept_sd: None } => {}
            }
        }
        if let Some(g) = self.gamma_intercept {
            pos(g.shape, "gamma shape")?;
            pos(g.rate, "gamma rate")?;
        }
        pos(self.tau, "horseshoe tau")
    }
}

/// Full description of a DARMA(P, Q) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of components `J`.
    pub components: usize,
    pub p: usize,
    pub q: usize,
    pub link: Link,
    /// 0-based reference component (ALR and CLR links).
    pub reference: usize,
    pub parameterization: Parameterization,
    pub mean_design: CovariateSpec,
    pub scale_design: CovariateSpec,
    pub mask_a: MaskKind,
    pub mask_b: MaskKind,
    pub prior: PriorConfig,
    /// Denominator of the trend covariate; `None` until resolved against a
    /// training length.
    pub trend_scale: Option<f64>,
}

impl ModelSpec {
    /// ALR-linked, intercept-only DARMA(P, Q) with the last component as
    /// reference.
    pub fn new(components: usize, p: usize, q: usize) -> Self {
        Self {
            components,
            p,
            q,
            link: Link::Alr,
            reference: components.saturating_sub(1),
            parameterization: Parameterization::Centered,
            mean_design: CovariateSpec::intercept_only(),
            scale_design: CovariateSpec::intercept_only(),
            mask_a: MaskKind::Full,
            mask_b: MaskKind::Full,
            prior: PriorConfig::default(),
            trend_scale: None,
        }
    }

    pub fn with_parameterization(mut self, parameterization: Parameterization) -> Self {
        self.parameterization = parameterization;
        self
    }

    pub fn with_prior(mut self, prior: PriorConfig) -> Self {
        self.prior = prior;
        self
    }

    /// Number of leading observations conditioned on, `max(P, Q)`.
    pub fn m(&self) -> usize {
        self.p.max(self.q)
    }

    /// Dimension of the linear predictor, `J - 1`.
    pub fn dim(&self) -> usize {
        self.components - 1
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    /// Fixes the trend denominator to the training length if unset.
    pub fn resolved(&self, train_len: usize) -> Self {
        let mut s = self.clone();
        if s.trend_scale.is_none() {
            s.trend_scale = Some(train_len as f64);
        }
        s
    }

    pub fn trend_scale(&self) -> f64 {
        self.trend_scale.unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components < 2 {
            return Err(Error::Config(format!("need at least 2 components, got {}", self.components)));
        }
        if self.reference >= self.components {
            return Err(Error::Config(format!(
                "reference component {} out of range 1..={}",
                self.reference + 1,
                self.components
            )));
        }
        if self.p + self.q == 0 && self.mean_design.width() == 0 {
            return Err(Error::Config("model has no AR, MA, or regression terms".into()));
        }
        self.mean_design.validate()?;
        self.scale_design.validate()?;
        if self.prior.gamma_intercept.is_some() && !self.scale_design.intercept {
            return Err(Error::Config("gamma prior on the scale intercept needs an intercept".into()));
        }
        if let Some(ts) = self.trend_scale {
            if !(ts > 0.0) {
                return Err(Error::Config(format!("trend scale must be positive, got {ts}")));
            }
        }
        self.prior.validate()
    }
}

/// Which block a coordinate of `theta` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A { lag: usize, row: usize, col: usize },
    B { lag: usize, row: usize, col: usize },
    Beta { row: usize, covariate: usize },
    Gamma { covariate: usize },
}

/// Flattened parameter layout: `A_1..A_P` row-major, then `B_1..B_Q`
/// row-major, then `beta` (per linear-predictor row, one coefficient per
/// mean covariate), then `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub dim: usize,
    pub p: usize,
    pub q: usize,
    /// Width of the per-row mean covariate vector `x_t`.
    pub mean_width: usize,
    /// Width of `z_t`.
    pub scale_width: usize,
    free: Vec<bool>,
}

impl ParamLayout {
    fn new(spec: &ModelSpec) -> Self {
        let dim = spec.dim();
        let mean_width = spec.mean_design.width();
        let scale_width = spec.scale_design.width();
        let mut free = Vec::new();
        for _ in 0..spec.p {
            for r in 0..dim {
                for s in 0..dim {
                    free.push(spec.mask_a.is_free(r, s));
                }
            }
        }
        for _ in 0..spec.q {
            for r in 0..dim {
                for s in 0..dim {
                    free.push(spec.mask_b.is_free(r, s));
                }
            }
        }
        free.extend(std::iter::repeat(true).take(dim * mean_width + scale_width));
        Self { dim, p: spec.p, q: spec.q, mean_width, scale_width, free }
    }

    /// Total number of coordinates `C = (P+Q)(J-1)^2 + r_beta + r_gamma`.
    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn a_offset(&self, lag: usize) -> usize {
        lag * self.dim * self.dim
    }

    pub fn b_offset(&self, lag: usize) -> usize {
        (self.p + lag) * self.dim * self.dim
    }

    pub fn beta_offset(&self) -> usize {
        (self.p + self.q) * self.dim * self.dim
    }

    pub fn beta_len(&self) -> usize {
        self.dim * self.mean_width
    }

    pub fn gamma_offset(&self) -> usize {
        self.beta_offset() + self.beta_len()
    }

    pub fn is_free(&self, index: usize) -> bool {
        self.free[index]
    }

    /// Indices of unmasked coordinates in layout order.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.free[i]).collect()
    }

    pub fn block(&self, index: usize) -> Block {
        let sq = self.dim * self.dim;
        if index < self.p * sq {
            let lag = index / sq;
            let within = index % sq;
            Block::A { lag, row: within / self.dim, col: within % self.dim }
        } else if index < (self.p + self.q) * sq {
            let k = index - self.p * sq;
            let lag = k / sq;
            let within = k % sq;
            Block::B { lag, row: within / self.dim, col: within % self.dim }
        } else if index < self.gamma_offset() {
            let k = index - self.beta_offset();
            Block::Beta { row: k / self.mean_width, covariate: k % self.mean_width }
        } else {
            Block::Gamma { covariate: index - self.gamma_offset() }
        }
    }

    /// Column names for the flattened layout, 1-based like the usual
    /// `a_{prs}` notation: `a1_1_2`, `b1_2_2`, `beta_1_3`, `gamma_2`.
    pub fn names(&self) -> Vec<String> {
        (0..self.len())
            .map(|i| match self.block(i) {
                Block::A { lag, row, col } => format!("a{}_{}_{}", lag + 1, row + 1, col + 1),
                Block::B { lag, row, col } => format!("b{}_{}_{}", lag + 1, row + 1, col + 1),
                Block::Beta { row, covariate } => format!("beta_{}_{}", row + 1, covariate + 1),
                Block::Gamma { covariate } => format!("gamma_{}", covariate + 1),
            })
            .collect()
    }
}

/// Parameter values in the flattened layout of a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Usage(format!(
                "parameter vector has length {}, layout expects {}",
                values.len(),
                layout.len()
            )));
        }
        if let Some(i) = (0..values.len()).find(|&i| !layout.is_free(i) && values[i] != 0.0) {
            return Err(Error::Usage(format!("masked coordinate {} is nonzero", layout.names()[i])));
        }
        Ok(Self { layout, values })
    }

    /// Builds from blocks; `a` and `b` are row-major matrices.
    pub fn from_parts(layout: ParamLayout, a: &[Vec<f64>], b: &[Vec<f64>], beta: &[f64], gamma: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(layout.len());
        for m in a.iter().chain(b) {
            values.extend_from_slice(m);
        }
        values.extend_from_slice(beta);
        values.extend_from_slice(gamma);
        Self::from_values(layout, values)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn a(&self, lag: usize) -> &[f64] {
        let o = self.layout.a_offset(lag);
        &self.values[o..o + self.layout.dim * self.layout.dim]
    }

    pub fn b(&self, lag: usize) -> &[f64] {
        let o = self.layout.b_offset(lag);
        &self.values[o..o + self.layout.dim * self.layout.dim]
    }

    pub fn beta(&self) -> &[f64] {
        &self.values[self.layout.beta_offset()..self.layout.gamma_offset()]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.values[self.layout.gamma_offset()..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::FourierTerm;

    #[test]
    fn mask_counts_for_twelve_components() {
        let d = 11;
        assert_eq!(MaskKind::Full.free_count(d), 121);
        assert_eq!(MaskKind::NearestNeighbor.free_count(d), 31);
        assert_eq!(MaskKind::Diagonal.free_count(d), 11);
        assert_eq!(MaskKind::Full.free_count(d) - MaskKind::NearestNeighbor.free_count(d), 90);
    }

    #[test]
    fn masks_are_nested() {
        for r in 0..6 {
            for s in 0..6 {
                if MaskKind::Diagonal.is_free(r, s) {
                    assert!(MaskKind::NearestNeighbor.is_free(r, s));
                }
                if MaskKind::NearestNeighbor.is_free(r, s) {
                    assert!(MaskKind::Full.is_free(r, s));
                }
            }
        }
    }

    #[test]
    fn layout_length_and_offsets() {
        let mut spec = ModelSpec::new(3, 1, 1);
        spec.mean_design.fourier.push(FourierTerm { period: 7.0, harmonics: 1 });
        let l = spec.layout();
        // (P+Q)(J-1)^2 + r_beta + r_gamma = 2*4 + 2*3 + 1
        assert_eq!(l.len(), 15);
        assert_eq!(l.beta_offset(), 8);
        assert_eq!(l.gamma_offset(), 14);
        assert_eq!(l.names()[0], "a1_1_1");
        assert_eq!(l.names()[5], "b1_1_2");
        assert_eq!(l.names()[11], "beta_2_1");
        assert_eq!(l.names()[14], "gamma_1");
        assert_eq!(l.block(6), Block::B { lag: 0, row: 1, col: 0 });
    }

    #[test]
    fn masked_values_rejected() {
        let mut spec = ModelSpec::new(3, 1, 0);
        spec.mask_a = MaskKind::Diagonal;
        let l = spec.layout();
        assert!(!l.is_free(1));
        assert!(ParamVector::from_values(l.clone(), vec![0.5, 0.1, 0.0, 0.5, 0.0, 0.0, 0.0]).is_err());
        assert!(ParamVector::from_values(l, vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn gamma_prior_moments() {
        let g = GammaPrior::MEAN5_VAR7;
        assert!((g.mean() - 5.0).abs() < 1e-12);
        assert!((g.variance() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let mut spec = ModelSpec::new(3, 0, 0);
        spec.mean_design = CovariateSpec::empty();
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::new(3, 1, 0);
        spec.reference = 3;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::new(3, 1, 0);
        spec.prior.tau = 0.0;
        assert!(spec.validate().is_err());
    }
}
