//! Forecast accuracy and parameter-recovery metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-component forecast errors. Totals are sums over components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub frmse: Vec<f64>,
    pub fmae: Vec<f64>,
    pub total_frmse: f64,
    pub total_fmae: f64,
    /// Number of (replicate, step) pairs.
    pub count: usize,
}

/// Running sums of squared and absolute forecast errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForecastErrors {
    sq: Vec<f64>,
    abs: Vec<f64>,
    count: usize,
}

impl ForecastErrors {
    pub fn new(components: usize) -> Self {
        Self { sq: vec![0.0; components], abs: vec![0.0; components], count: 0 }
    }

    pub fn add(&mut self, actual: &[f64], forecast: &[f64]) -> Result<()> {
        if actual.len() != self.sq.len() || forecast.len() != self.sq.len() {
            return Err(Error::Usage(format!(
                "expected {} components, got actual {} and forecast {}",
                self.sq.len(),
                actual.len(),
                forecast.len()
            )));
        }
        for (c, (a, f)) in actual.iter().zip(forecast).enumerate() {
            let e = a - f;
            self.sq[c] += e * e;
            self.abs[c] += e.abs();
        }
        self.count += 1;
        Ok(())
    }

    /// Combines two accumulators.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.sq.len() != self.sq.len() {
            return Err(Error::Usage("cannot merge errors over different component counts".into()));
        }
        for c in 0..self.sq.len() {
            self.sq[c] += other.sq[c];
            self.abs[c] += other.abs[c];
        }
        self.count += other.count;
        Ok(())
    }

    pub fn report(&self) -> ForecastMetrics {
        let n = self.count.max(1) as f64;
        let frmse: Vec<f64> = self.sq.iter().map(|s| (s / n).sqrt()).collect();
        let fmae: Vec<f64> = self.abs.iter().map(|s| s / n).collect();
        ForecastMetrics {
            total_frmse: frmse.iter().sum(),
            total_fmae: fmae.iter().sum(),
            frmse,
            fmae,
            count: self.count,
        }
    }
}

/// FRMSE and FMAE over replicates (outer) and forecast steps (inner) of
/// per-component actuals and point forecasts.
pub fn forecast_metrics(actuals: &[Vec<Vec<f64>>], forecasts: &[Vec<Vec<f64>>]) -> Result<ForecastMetrics> {
    if actuals.len() != forecasts.len() {
        return Err(Error::Usage(format!("{} actual replicates but {} forecasts", actuals.len(), forecasts.len())));
    }
    let components = actuals.iter().flatten().next().map_or(0, |v| v.len());
    let mut acc = ForecastErrors::new(components);
    for (r, (a, f)) in actuals.iter().zip(forecasts).enumerate() {
        if a.len() != f.len() {
            return Err(Error::Usage(format!("replicate {r}: {} actual steps but {} forecast steps", a.len(), f.len())));
        }
        for (ya, yf) in a.iter().zip(f) {
            acc.add(ya, yf)?;
        }
    }
    Ok(acc.report())
}

/// Recovery of one coordinate across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub bias: f64,
    pub rmse: f64,
    /// Mean interval length.
    pub cil: f64,
    /// Fraction of intervals containing the truth.
    pub coverage: f64,
    pub replicates: usize,
}

/// Bias, RMSE, mean interval length, and coverage of point estimates and
/// `(lower, upper)` intervals for a coordinate with true value `truth`.
pub fn recovery_metrics(estimates: &[f64], intervals: &[(f64, f64)], truth: f64) -> Result<RecoveryMetrics> {
    if estimates.len() != intervals.len() {
        return Err(Error::Usage(format!("{} estimates but {} intervals", estimates.len(), intervals.len())));
    }
    if estimates.is_empty() {
        return Err(Error::Usage("no replicates".into()));
    }
    let n = estimates.len() as f64;
    let bias = estimates.iter().map(|e| e - truth).sum::<f64>() / n;
    let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n).sqrt();
    let cil = intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / n;
    let coverage = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count() as f64 / n;
    Ok(RecoveryMetrics { bias, rmse, cil, coverage, replicates: estimates.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_errors() {
        let actual = vec![vec![vec![0.5], vec![0.5]]];
        let fc = vec![vec![vec![0.4], vec![0.8]]];
        let m = forecast_metrics(&actual, &fc).unwrap();
        assert!((m.frmse[0] - 0.05f64.sqrt()).abs() < 1e-12);
        assert!((m.fmae[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_symmetric_recovery() {
        let r = recovery_metrics(&[1.0, 1.0], &[(1.0, 1.0), (1.0, 1.0)], 1.0).unwrap();
        assert_eq!((r.bias, r.rmse, r.cil, r.coverage), (0.0, 0.0, 0.0, 1.0));
        let r = recovery_metrics(&[1.1, 0.9], &[(1.0, 1.2), (0.8, 0.95)], 1.0).unwrap();
        assert!(r.bias.abs() < 1e-12 && (r.rmse - 0.1).abs() < 1e-12);
        assert_eq!(r.coverage, 0.5);
    }

    #[test]
    fn misaligned_shapes_are_rejected() {
        assert!(forecast_metrics(&[vec![vec![0.5]]], &[]).is_err());
        assert!(forecast_metrics(&[vec![vec![0.5]]], &[vec![]]).is_err());
    }
}
