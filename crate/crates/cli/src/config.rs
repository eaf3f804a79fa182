//! Flat TOML run configuration shared by every subcommand. Every key is
//! optional; see `docs/config.md` for the full list.

use std::path::Path;

use bdarma::design::{CovariateSpec, FourierTerm};
use bdarma::forecast::{ForecastConfig, FutureInnovations};
use bdarma::inference::{tvarma_spec, MleConfig, SamplerConfig};
use bdarma::lfo::LfoConfig;
use bdarma::model::{GammaPrior, MaskKind, MatrixPrior, ModelSpec, ParamVector, Parameterization, PriorConfig, RegressionPrior};
use bdarma::simplex::Link;
use bdarma::study::{BenchmarkConfig, Dgm, Engine, StudyConfig};
use bdarma::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixPriorKind {
    Normal,
    Band,
    Horseshoe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionPriorKind {
    Normal,
    Horseshoe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleInterceptPrior {
    /// Same prior as the other scale coefficients.
    Regression,
    /// Positive scale intercept with a Gamma prior.
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgmKind {
    Darma,
    Tvarma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Twelve-component daily benchmark model and parameters.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    SimulationDarma,
    SimulationTvarma,
    Benchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub seed: u64,
    pub engine: Engine,
    pub preset: Option<Preset>,

    pub components: usize,
    pub p: usize,
    pub q: usize,
    /// 1-based reference component; defaults to the last.
    pub reference: Option<usize>,
    pub link: Link,
    pub parameterization: Parameterization,
    pub mask_a: MaskKind,
    pub mask_b: MaskKind,
    pub mean_intercept: bool,
    pub mean_trend: bool,
    pub mean_fourier_periods: Vec<f64>,
    pub mean_fourier_harmonics: Vec<usize>,
    pub scale_intercept: bool,
    pub scale_trend: bool,
    pub scale_fourier_periods: Vec<f64>,
    pub scale_fourier_harmonics: Vec<usize>,
    pub trend_scale: Option<f64>,

    pub prior_matrix: MatrixPriorKind,
    pub prior_matrix_mean: f64,
    pub prior_matrix_sd: f64,
    pub prior_band_diagonal: f64,
    pub prior_band_neighbor: f64,
    pub prior_band_other: f64,
    pub prior_regression: RegressionPriorKind,
    pub prior_regression_mean: f64,
    pub prior_intercept_sd: f64,
    pub prior_trend_sd: f64,
    pub prior_fourier_sd: f64,
    /// Under a horseshoe regression prior, false gives intercepts
    /// `N(0, prior_intercept_sd^2)` instead of shrinking them.
    pub prior_horseshoe_intercepts: bool,
    pub prior_scale_intercept: ScaleInterceptPrior,
    pub prior_gamma_shape: f64,
    pub prior_gamma_rate: f64,
    pub prior_tau: f64,

    pub dgm: DgmKind,
    pub length: Option<usize>,
    pub burn_in: usize,
    pub start: i64,
    /// ISO date of the first observation.
    pub epoch: Option<String>,
    pub truth_a: Vec<f64>,
    pub truth_b: Vec<f64>,
    pub truth_beta: Vec<f64>,
    pub truth_gamma: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub max_regenerations: usize,

    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub init_range: f64,
    pub mle_retries: usize,

    pub horizon: usize,
    pub trajectories: usize,
    pub innovations: FutureInnovations,
    pub levels: Vec<f64>,

    pub min_history: usize,
    pub steps_ahead: usize,
    pub k_threshold: f64,
    pub lfo_exact: bool,

    pub study: StudyKind,
    pub replicates: usize,
    pub train_len: Option<usize>,
    pub test_len: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sampler = SamplerConfig::default();
        let fc = ForecastConfig::default();
        let lfo = LfoConfig::default();
        let gamma = GammaPrior::MEAN5_VAR7;
        Self {
            name: None,
            seed: 1,
            engine: Engine::Bayes,
            preset: None,
            components: 3,
            p: 1,
            q: 0,
            reference: None,
            link: Link::Alr,
            parameterization: Parameterization::Centered,
            mask_a: MaskKind::Full,
            mask_b: MaskKind::Full,
            mean_intercept: true,
            mean_trend: false,
            mean_fourier_periods: vec![],
            mean_fourier_harmonics: vec![],
            scale_intercept: true,
            scale_trend: false,
            scale_fourier_periods: vec![],
            scale_fourier_harmonics: vec![],
            trend_scale: None,
            prior_matrix: MatrixPriorKind::Normal,
            prior_matrix_mean: 0.0,
            prior_matrix_sd: 0.5,
            prior_band_diagonal: 0.4,
            prior_band_neighbor: 0.1,
            prior_band_other: 0.0,
            prior_regression: RegressionPriorKind::Normal,
            prior_regression_mean: 0.0,
            prior_intercept_sd: 0.5,
            prior_trend_sd: 0.5,
            prior_fourier_sd: 0.5,
            prior_horseshoe_intercepts: true,
            prior_scale_intercept: ScaleInterceptPrior::Regression,
            prior_gamma_shape: gamma.shape,
            prior_gamma_rate: gamma.rate,
            prior_tau: 1.0,
            dgm: DgmKind::Darma,
            length: None,
            burn_in: 100,
            start: 1,
            epoch: None,
            truth_a: vec![],
            truth_b: vec![],
            truth_beta: vec![],
            truth_gamma: vec![],
            sigma1: 0.05,
            sigma2: 0.05,
            rho: 0.3,
            max_regenerations: 100,
            chains: sampler.chains,
            warmup: 500,
            samples: 500,
            target_accept: sampler.target_accept,
            max_tree_depth: sampler.max_tree_depth,
            init_range: sampler.init_range,
            mle_retries: MleConfig::default().retries,
            horizon: fc.horizon,
            trajectories: fc.trajectories,
            innovations: fc.innovations,
            levels: fc.levels,
            min_history: lfo.min_history,
            steps_ahead: lfo.steps_ahead,
            k_threshold: lfo.k_threshold,
            lfo_exact: false,
            study: StudyKind::SimulationDarma,
            replicates: 50,
            train_len: None,
            test_len: None,
        }
    }
}

fn fourier(periods: &[f64], harmonics: &[usize], which: &str) -> Result<Vec<FourierTerm>> {
    if periods.len() != harmonics.len() {
        return Err(Error::Config(format!(
            "{which}_fourier_periods has {} entries but {which}_fourier_harmonics has {}",
            periods.len(),
            harmonics.len()
        )));
    }
    Ok(periods.iter().zip(harmonics).map(|(&period, &harmonics)| FourierTerm { period, harmonics }).collect())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat configuration serializes")
    }

    pub fn epoch(&self) -> Result<Option<NaiveDate>> {
        self.epoch
            .as_deref()
            .map(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Config(format!("epoch '{s}': {e}"))))
            .transpose()
    }

    pub fn prior(&self) -> PriorConfig {
        let matrix = match self.prior_matrix {
            MatrixPriorKind::Normal => MatrixPrior::Normal { mean: self.prior_matrix_mean, sd: self.prior_matrix_sd },
            MatrixPriorKind::Band => MatrixPrior::Band {
                diagonal_mean: self.prior_band_diagonal,
                neighbor_mean: self.prior_band_neighbor,
                other_mean: self.prior_band_other,
                sd: self.prior_matrix_sd,
            },
            MatrixPriorKind::Horseshoe => MatrixPrior::Horseshoe,
        };
        let regression = match self.prior_regression {
            RegressionPriorKind::Normal => RegressionPrior::Normal {
                mean: self.prior_regression_mean,
                intercept_sd: self.prior_intercept_sd,
                trend_sd: self.prior_trend_sd,
                fourier_sd: self.prior_fourier_sd,
            },
            RegressionPriorKind::Horseshoe => RegressionPrior::Horseshoe {
                intercept_sd: (!self.prior_horseshoe_intercepts).then_some(self.prior_intercept_sd),
            },
        };
        let gamma_intercept = match self.prior_scale_intercept {
            ScaleInterceptPrior::Regression => None,
            ScaleInterceptPrior::Gamma => Some(GammaPrior { shape: self.prior_gamma_shape, rate: self.prior_gamma_rate }),
        };
        PriorConfig { a: matrix, b: matrix, beta: regression, gamma: regression, gamma_intercept, tau: self.prior_tau }
    }

    /// Model for the configured engine.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        if self.preset == Some(Preset::Benchmark) {
            let (mut spec, _) = bdarma::study::benchmark_truth();
            spec.mask_a = self.mask_a;
            spec.mask_b = self.mask_b;
            spec.prior = self.prior();
            return Ok(spec);
        }
        let mean_design = CovariateSpec {
            intercept: self.mean_intercept,
            trend: self.mean_trend,
            fourier: fourier(&self.mean_fourier_periods, &self.mean_fourier_harmonics, "mean")?,
        };
        let scale_design = CovariateSpec {
            intercept: self.scale_intercept,
            trend: self.scale_trend,
            fourier: fourier(&self.scale_fourier_periods, &self.scale_fourier_harmonics, "scale")?,
        };
        let mut spec = match self.engine {
            Engine::Tvarma => {
                if self.link != Link::Alr {
                    return Err(Error::Config("the tvarma engine works on the alr scale; set link = \"alr\"".into()));
                }
                tvarma_spec(self.components, self.p, self.q, mean_design)
            }
            _ => {
                let mut s = ModelSpec::new(self.components, self.p, self.q).with_prior(self.prior());
                s.link = self.link;
                s.mean_design = mean_design;
                s.scale_design = scale_design;
                s
            }
        };
        spec.parameterization = self.parameterization;
        spec.mask_a = self.mask_a;
        spec.mask_b = self.mask_b;
        spec.trend_scale = self.trend_scale;
        if let Some(r) = self.reference {
            if r < 1 || r > self.components {
                return Err(Error::Config(format!("reference must lie in 1..={}, got {r}", self.components)));
            }
            spec.reference = r - 1;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Generating parameters laid out for `spec`.
    pub fn truth(&self, spec: &ModelSpec) -> Result<ParamVector> {
        if self.preset == Some(Preset::Benchmark) {
            let (s, theta) = bdarma::study::benchmark_truth();
            return ParamVector::from_values(s.layout(), theta);
        }
        let layout = spec.layout();
        let d = layout.dim;
        let split = |v: &[f64], lags: usize, what: &str| -> Result<Vec<Vec<f64>>> {
            if v.len() != lags * d * d {
                return Err(Error::Config(format!("{what} needs {} entries ({lags} lags of {d}x{d}), got {}", lags * d * d, v.len())));
            }
            Ok(v.chunks(d * d).map(<[f64]>::to_vec).collect())
        };
        let a = split(&self.truth_a, spec.p, "truth_a")?;
        let b = split(&self.truth_b, spec.q, "truth_b")?;
        ParamVector::from_parts(layout, &a, &b, &self.truth_beta, &self.truth_gamma)
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            warmup_iters: self.warmup,
            sampling_iters: self.samples,
            target_accept: self.target_accept,
            max_tree_depth: self.max_tree_depth,
            init_range: self.init_range,
            seed: self.seed,
        }
    }

    pub fn mle(&self) -> MleConfig {
        MleConfig { retries: self.mle_retries, seed: self.seed, ..MleConfig::default() }
    }

    pub fn forecast(&self) -> ForecastConfig {
        ForecastConfig {
            horizon: self.horizon,
            trajectories: self.trajectories,
            levels: self.levels.clone(),
            innovations: self.innovations,
            seed: self.seed,
        }
    }

    pub fn lfo(&self) -> LfoConfig {
        LfoConfig { min_history: self.min_history, steps_ahead: self.steps_ahead, k_threshold: self.k_threshold }
    }

    pub fn study_config(&self) -> StudyConfig {
        let mut config = match self.study {
            StudyKind::Benchmark => {
                let defaults = BenchmarkConfig::default();
                BenchmarkConfig {
                    replicates: self.replicates,
                    train_len: self.train_len.unwrap_or(defaults.train_len),
                    test_len: self.test_len.unwrap_or(defaults.test_len),
                    sampler: self.sampler(),
                    mle: self.mle(),
                    trajectories: self.trajectories,
                    seed: self.seed,
                }
                .study()
            }
            StudyKind::SimulationDarma => StudyConfig::simulation(Dgm::Darma, self.replicates),
            StudyKind::SimulationTvarma => {
                StudyConfig::simulation(Dgm::Tvarma { sigma1: self.sigma1, sigma2: self.sigma2, rho: self.rho }, self.replicates)
            }
        };
        if let Some(n) = self.train_len {
            config.train_len = n;
        }
        if let Some(n) = self.test_len {
            config.test_len = n;
        }
        config.burn_in = self.burn_in;
        config.max_regenerations = self.max_regenerations;
        config.sampler = self.sampler();
        config.mle = self.mle();
        config.trajectories = self.trajectories;
        config.seed = self.seed;
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut c = RunConfig {
            name: Some("k9".into()),
            epoch: Some("2015-01-01".into()),
            mean_fourier_periods: vec![7.0, 365.25],
            mean_fourier_harmonics: vec![3, 9],
            truth_a: vec![0.95, -0.18, 0.3, 0.95],
            prior_gamma_rate: 5.0 / 7.0,
            engine: Engine::MleDarma,
            mask_a: MaskKind::NearestNeighbor,
            innovations: FutureInnovations::Zero,
            study: StudyKind::Benchmark,
            train_len: Some(730),
            ..RunConfig::default()
        };
        c.k_threshold = 0.1 + 0.2;
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn mismatched_fourier_lists_are_rejected() {
        let c = RunConfig { mean_fourier_periods: vec![7.0], ..RunConfig::default() };
        assert!(matches!(c.model_spec(), Err(Error::Config(_))));
    }
}
