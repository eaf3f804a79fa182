//! Log prior densities for the coefficient blocks.

use std::f64::consts::PI;

use crate::design::CovariateKind;
use crate::error::{Error, Result};
use crate::model::spec::{Block, GammaPrior, ModelSpec, ParamVector, RegressionPrior};
use crate::special::ln_gamma;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - HALF_LN_2PI
}

/// Half-Cauchy(0, 1) log density for `x > 0`.
pub fn half_cauchy_logpdf(x: f64) -> f64 {
    (2.0 / PI).ln() - (1.0 + x * x).ln()
}

pub fn gamma_logpdf(x: f64, prior: GammaPrior) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    prior.shape * prior.rate.ln() - ln_gamma(prior.shape) + (prior.shape - 1.0) * x.ln() - prior.rate * x
}

/// Prior attached to one coordinate of `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordPrior {
    Normal { mean: f64, sd: f64 },
    /// `N(0, tau^2 lambda_g^2)` with `g` a compact horseshoe group index.
    Horseshoe { group: usize },
    /// Positive coordinate with a Gamma prior.
    Gamma(GammaPrior),
}

/// Raw horseshoe group of a coordinate: the linear-predictor row for
/// `A`, `B`, and `beta` entries, and `dim` for `gamma`.
fn raw_group(block: Block, dim: usize) -> usize {
    match block {
        Block::A { row, .. } | Block::B { row, .. } | Block::Beta { row, .. } => row,
        Block::Gamma { .. } => dim,
    }
}

/// Coordinate prior with horseshoe coordinates still carrying their raw group.
fn raw_priors(spec: &ModelSpec) -> Vec<CoordPrior> {
    let layout = spec.layout();
    let mean_kinds = spec.mean_design.kinds();
    let scale_kinds = spec.scale_design.kinds();
    let hs = |block: Block| CoordPrior::Horseshoe { group: raw_group(block, layout.dim) };
    let regression = |prior: RegressionPrior, kind: CovariateKind, block: Block| match (prior, kind) {
        (RegressionPrior::Normal { mean, intercept_sd, trend_sd, fourier_sd }, _) => {
            let sd = match kind {
                CovariateKind::Intercept => intercept_sd,
                CovariateKind::Trend => trend_sd,
                CovariateKind::Fourier => fourier_sd,
            };
            CoordPrior::Normal { mean, sd }
        }
        (RegressionPrior::Horseshoe { intercept_sd: Some(sd) }, CovariateKind::Intercept) => {
            CoordPrior::Normal { mean: 0.0, sd }
        }
        (RegressionPrior::Horseshoe { .. }, _) => hs(block),
    };
    (0..layout.len())
        .map(|i| {
            let block = layout.block(i);
            match block {
                Block::A { row, col, .. } => match spec.prior.a.entry(row, col) {
                    Some((mean, sd)) => CoordPrior::Normal { mean, sd },
                    None => hs(block),
                },
                Block::B { row, col, .. } => match spec.prior.b.entry(row, col) {
                    Some((mean, sd)) => CoordPrior::Normal { mean, sd },
                    None => hs(block),
                },
                Block::Beta { covariate, .. } => regression(spec.prior.beta, mean_kinds[covariate], block),
                Block::Gamma { covariate } => {
                    let kind = scale_kinds[covariate];
                    match (spec.prior.gamma_intercept, kind) {
                        (Some(g), CovariateKind::Intercept) => CoordPrior::Gamma(g),
                        _ => regression(spec.prior.gamma, kind, block),
                    }
                }
            }
        })
        .collect()
}

/// Horseshoe groups actually used by `spec`, in increasing raw-group order.
/// Raw groups `0..J-1` are the linear-predictor rows and `J-1` is the scale.
pub fn horseshoe_groups(spec: &ModelSpec) -> Vec<usize> {
    let layout = spec.layout();
    let mut used = vec![false; layout.dim + 1];
    for (i, p) in raw_priors(spec).into_iter().enumerate() {
        if let (true, CoordPrior::Horseshoe { group }) = (layout.is_free(i), p) {
            used[group] = true;
        }
    }
    (0..used.len()).filter(|&g| used[g]).collect()
}

/// Prior for every coordinate of the layout of `spec` (masked ones included).
pub fn coordinate_priors(spec: &ModelSpec) -> Vec<CoordPrior> {
    let groups = horseshoe_groups(spec);
    raw_priors(spec)
        .into_iter()
        .map(|p| match p {
            // a masked coordinate in an otherwise unused group never enters the density
            CoordPrior::Horseshoe { group } => {
                CoordPrior::Horseshoe { group: groups.iter().position(|&g| g == group).unwrap_or(0) }
            }
            other => other,
        })
        .collect()
}

/// Log prior density of `theta` (constrained scale, no Jacobians). Masked
/// coordinates contribute nothing. `local_scales` holds one horseshoe
/// scale per group of [`horseshoe_groups`], each with a half-Cauchy prior.
pub fn log_prior(spec: &ModelSpec, theta: &ParamVector, local_scales: Option<&[f64]>) -> Result<f64> {
    let groups = horseshoe_groups(spec);
    let scales = local_scales.unwrap_or(&[]);
    if scales.len() != groups.len() {
        return Err(Error::Usage(format!(
            "model has {} horseshoe groups, got {} local scales",
            groups.len(),
            scales.len()
        )));
    }
    if let Some(i) = scales.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Domain { index: i, value: scales[i] });
    }
    let layout = theta.layout();
    let tau = spec.prior.tau;
    let mut total: f64 = scales.iter().map(|&l| half_cauchy_logpdf(l)).sum();
    for (i, prior) in coordinate_priors(spec).into_iter().enumerate() {
        if !layout.is_free(i) {
            continue;
        }
        let x = theta.values()[i];
        total += match prior {
            CoordPrior::Normal { mean, sd } => normal_logpdf(x, mean, sd),
            CoordPrior::Horseshoe { group } => normal_logpdf(x, 0.0, tau * scales[group]),
            CoordPrior::Gamma(g) => gamma_logpdf(x, g),
        };
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{CovariateSpec, FourierTerm};

    #[test]
    fn normal_density_at_mean() {
        // ln(1 / (0.5 sqrt(2 pi)))
        let expected = -(0.5 * (2.0 * PI).sqrt()).ln();
        assert!((normal_logpdf(0.0, 0.0, 0.5) - expected).abs() < 1e-15);
        assert!((normal_logpdf(0.0, 0.0, 0.5) - (-0.225_791_352_644_727_4)).abs() < 1e-12);
    }

    #[test]
    fn half_cauchy_at_one() {
        assert!((half_cauchy_logpdf(1.0) + PI.ln()).abs() < 1e-15);
    }

    #[test]
    fn gamma_prior_mean5_var7_integrates_to_moments() {
        let g = GammaPrior::MEAN5_VAR7;
        // trapezoid over (0, 80]
        let h = 1e-3;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 1..80_000 {
            let x = i as f64 * h;
            let p = gamma_logpdf(x, g).exp();
            z += p * h;
            m1 += x * p * h;
            m2 += x * x * p * h;
        }
        assert!((z - 1.0).abs() < 1e-4);
        assert!((m1 - 5.0).abs() < 1e-3);
        assert!((m2 - m1 * m1 - 7.0).abs() < 1e-2);
    }

    #[test]
    fn horseshoe_grouping_by_row_and_scale() {
        let mut spec = ModelSpec::new(4, 1, 0);
        spec.mean_design = CovariateSpec { intercept: true, trend: true, fourier: vec![FourierTerm { period: 7.0, harmonics: 1 }] };
        spec.prior.beta = RegressionPrior::Horseshoe { intercept_sd: None };
        spec.prior.gamma = RegressionPrior::Horseshoe { intercept_sd: None };
        assert_eq!(horseshoe_groups(&spec), vec![0, 1, 2, 3]);
        let priors = coordinate_priors(&spec);
        let layout = spec.layout();
        assert!(matches!(priors[0], CoordPrior::Normal { .. }));
        // beta row 2 (0-based) -> group 2
        let idx = layout.beta_offset() + 2 * layout.mean_width + 1;
        assert_eq!(priors[idx], CoordPrior::Horseshoe { group: 2 });
        assert_eq!(priors[layout.gamma_offset()], CoordPrior::Horseshoe { group: 3 });
    }

    #[test]
    fn horseshoe_can_leave_intercepts_out() {
        let mut spec = ModelSpec::new(3, 1, 0);
        spec.mean_design = CovariateSpec { intercept: true, trend: true, fourier: vec![] };
        spec.prior.beta = RegressionPrior::Horseshoe { intercept_sd: Some(2.0) };
        let layout = spec.layout();
        let priors = coordinate_priors(&spec);
        let b = layout.beta_offset();
        assert_eq!(priors[b], CoordPrior::Normal { mean: 0.0, sd: 2.0 });
        assert_eq!(priors[b + 1], CoordPrior::Horseshoe { group: 0 });
        assert_eq!(horseshoe_groups(&spec), vec![0, 1]);

        // intercept-only rows leave no horseshoe group behind
        spec.mean_design = CovariateSpec { intercept: true, trend: false, fourier: vec![] };
        assert!(horseshoe_groups(&spec).is_empty());
    }

    #[test]
    fn log_prior_sums_blocks_and_rejects_bad_scales() {
        let mut spec = ModelSpec::new(3, 1, 0);
        spec.prior = crate::model::spec::PriorConfig::simulation_study();
        let layout = spec.layout();
        let mut values = vec![0.0; layout.len()];
        values[layout.gamma_offset()] = 5.0;
        let theta = ParamVector::from_values(layout, values).unwrap();
        let lp = log_prior(&spec, &theta, None).unwrap();
        let expected = 6.0 * normal_logpdf(0.0, 0.0, 0.5) + gamma_logpdf(5.0, GammaPrior::MEAN5_VAR7);
        assert!((lp - expected).abs() < 1e-12);

        spec.prior.beta = RegressionPrior::Horseshoe { intercept_sd: None };
        assert!(log_prior(&spec, &theta, Some(&[1.0, -1.0])).is_err());
        assert!(log_prior(&spec, &theta, None).is_err());
        let lp = log_prior(&spec, &theta, Some(&[1.0, 2.0])).unwrap();
        let expected = 4.0 * normal_logpdf(0.0, 0.0, 0.5)
            + normal_logpdf(0.0, 0.0, 1.0)
            + normal_logpdf(0.0, 0.0, 2.0)
            + half_cauchy_logpdf(1.0)
            + half_cauchy_logpdf(2.0)
            + gamma_logpdf(5.0, GammaPrior::MEAN5_VAR7);
        assert!((lp - expected).abs() < 1e-12);
    }
}
