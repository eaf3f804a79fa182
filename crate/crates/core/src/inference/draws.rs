use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::diagnostics::{effective_sample_size, split_rhat};
use crate::inference::nuts::{run_chain, ChainOutput, SamplerConfig};
use crate::inference::rng::chain_rng;
use crate::model::{LogDensity, ModelSpec, Posterior};
use crate::series::CompositionalSeries;

/// Divergent transitions above this fraction of post-warm-up draws trigger
/// a warning.
pub const DIVERGENCE_WARNING_FRACTION: f64 = 0.01;
/// Split R-hat above this value triggers a non-convergence warning.
pub const RHAT_WARNING: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub mean_accept_stat: f64,
    pub step_size: f64,
    pub mean_tree_depth: f64,
    pub max_tree_depth_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub chains: Vec<ChainDiagnostics>,
    /// Split R-hat per column.
    pub rhat: Vec<f64>,
    /// Effective sample size per column.
    pub ess: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Post-warm-up draws on the constrained scale, chain-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    /// One row per draw.
    pub values: Vec<Vec<f64>>,
    pub chain: Vec<usize>,
    pub iter: Vec<usize>,
    pub lp: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[index]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|i| self.column(i))
    }

    pub fn num_chains(&self) -> usize {
        self.chain.iter().max().map_or(0, |c| c + 1)
    }

    /// Draws of column `index` split by chain.
    pub fn chains_of(&self, index: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.num_chains()];
        for (row, &c) in self.values.iter().zip(&self.chain) {
            out[c].push(row[index]);
        }
        out
    }

    /// Assembles draws from chain outputs; `constrain` maps an
    /// unconstrained point to a row matching `names`.
    pub fn from_chains(names: Vec<String>, chains: &[ChainOutput], constrain: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::new();
        let mut chain = Vec::new();
        let mut iter = Vec::new();
        let mut lp = Vec::new();
        let mut chain_diag = Vec::new();
        for (c, out) in chains.iter().enumerate() {
            for (i, q) in out.draws.iter().enumerate() {
                values.push(constrain(q));
                chain.push(c);
                iter.push(i + 1);
                lp.push(out.lp[i]);
            }
            let n = out.draws.len().max(1) as f64;
            let max_depth = out.tree_depth.iter().copied().max().unwrap_or(0);
            chain_diag.push(ChainDiagnostics {
                divergences: out.divergent.iter().filter(|&&d| d).count(),
                warmup_divergences: out.warmup_divergences,
                mean_accept_stat: out.accept_stat.iter().sum::<f64>() / n,
                step_size: out.step_size,
                mean_tree_depth: out.tree_depth.iter().sum::<usize>() as f64 / n,
                max_tree_depth_hits: out.tree_depth.iter().filter(|&&d| d == max_depth && d > 0).count(),
            });
        }
        let mut draws = Self {
            names,
            values,
            chain,
            iter,
            lp,
            diagnostics: Diagnostics { chains: chain_diag, rhat: Vec::new(), ess: Vec::new(), warnings: Vec::new() },
        };
        draws.compute_diagnostics();
        draws
    }

    fn compute_diagnostics(&mut self) {
        let cols = self.names.len();
        let mut rhat = Vec::with_capacity(cols);
        let mut ess = Vec::with_capacity(cols);
        for k in 0..cols {
            let per_chain = self.chains_of(k);
            let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
            rhat.push(split_rhat(&refs));
            ess.push(effective_sample_size(&refs));
        }
        let mut warnings = Vec::new();
        let divergences: usize = self.diagnostics.chains.iter().map(|c| c.divergences).sum();
        let fraction = divergences as f64 / self.len().max(1) as f64;
        if fraction > DIVERGENCE_WARNING_FRACTION {
            warnings.push(format!(
                "{divergences} of {} post-warm-up transitions diverged ({:.1}%)",
                self.len(),
                100.0 * fraction
            ));
        }
        let bad: Vec<String> = rhat
            .iter()
            .zip(&self.names)
            .filter(|(r, _)| **r > RHAT_WARNING)
            .map(|(r, n)| format!("{n} ({r:.3})"))
            .collect();
        if !bad.is_empty() {
            warnings.push(format!("split R-hat above {RHAT_WARNING}: {}", bad.join(", ")));
        }
        self.diagnostics.rhat = rhat;
        self.diagnostics.ess = ess;
        self.diagnostics.warnings = warnings;
    }
}

/// Runs `config.chains` independent chains on `target`. Chain `c` uses
/// stream `c + 1` of `config.seed`; the result does not depend on the
/// number of worker threads.
pub fn sample_chains<D: LogDensity + Sync>(target: &D, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(config.seed, c);
            run_chain(target.clone(), config, &mut rng)
        })
        .collect()
}

/// Posterior draws of the B-DARMA model. Columns are the full parameter
/// layout followed by any horseshoe local scales.
pub fn sample_posterior(spec: &ModelSpec, series: &CompositionalSeries, config: &SamplerConfig) -> Result<PosteriorDraws> {
    if series.len() <= spec.m() {
        return Err(Error::Usage(format!("series of length {} has no steps beyond m = {}", series.len(), spec.m())));
    }
    let post = Posterior::new(spec, series)?;
    let chains = sample_chains(&post, config)?;
    Ok(PosteriorDraws::from_chains(post.names(), &chains, |q| {
        let (mut theta, lambdas) = post.constrain(q);
        theta.extend(lambdas);
        theta
    }))
}

/// Per-column summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    pub rhat: f64,
    pub ess: f64,
}

/// Linear-interpolation (type 7) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, standard deviation, and type-7 quantile of each column.
pub fn summarize(draws: &PosteriorDraws, levels: &[f64]) -> Result<Vec<Summary>> {
    if draws.is_empty() {
        return Err(Error::Usage("cannot summarize an empty set of draws".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Usage(format!("quantile level {l} outside [0, 1]")));
    }
    Ok((0..draws.names.len())
        .map(|k| {
            let mut col = draws.column(k);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = if col.len() > 1 {
                (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            col.sort_by(|a, b| a.total_cmp(b));
            Summary {
                name: draws.names[k].clone(),
                mean,
                sd,
                quantiles: levels.iter().map(|&p| (p, quantile_sorted(&col, p))).collect(),
                rhat: draws.diagnostics.rhat.get(k).copied().unwrap_or(f64::NAN),
                ess: draws.diagnostics.ess.get(k).copied().unwrap_or(f64::NAN),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_sorted(&x, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile_sorted(&x, 0.975) - 97.525).abs() < 1e-12);
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 100.0);
    }
}
