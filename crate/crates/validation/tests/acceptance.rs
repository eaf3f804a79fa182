//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per
//! criterion and exits nonzero when any of them fails.
//!
//! The two simulation studies and the synthetic benchmark dominate the
//! runtime (roughly 10 minutes and an hour on one core).

use std::process::ExitCode;
use std::time::Instant;

use bdarma::design::{CovariateSpec, FourierTerm};
use bdarma::forecast::{forecast, FitSource, ForecastConfig};
use bdarma::inference::{
    fit_tvarma, sample_posterior, tvarma_spec, InitStrategy, MleConfig, SamplerConfig,
};
use bdarma::lfo::{lfo_elpd_exact, lfo_elpd_psis, LfoConfig};
use bdarma::model::{
    log_likelihood, LogDensity, MaskKind, ModelSpec, ParamVector, Parameterization, Posterior,
    PriorConfig, RegressionPrior,
};
use bdarma::psis::fit_gpd_tail;
use bdarma::series::CompositionalSeries;
use bdarma::simplex::{
    alr, alr_inv, clr, clr_inv, dirichlet_logpdf, dirichlet_sample, ilr, ilr_inv, Composition,
    DirichletParams, ZeroPolicy,
};
use bdarma::simulate::{bivariate_cholesky, simulate_darma, simulate_tvarma};
use bdarma::study::{
    run_airbnb_style_benchmark, run_study, BenchmarkConfig, Dgm, StudyConfig, StudyReport,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// Published study-1 FRMSE for (y1, y2, y3) by model.
const STUDY_ONE_FRMSE: [(&str, [f64; 3]); 3] = [
    ("B-DARMA", [0.1054, 0.1342, 0.1015]),
    ("DARMA", [0.1091, 0.1367, 0.1082]),
    ("tVARMA", [0.1063, 0.1356, 0.1470]),
];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn failed(err: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {err}"))
    }
}

/// Joins sub-checks; the verdict passes only when all of them do.
fn all(parts: Vec<Verdict>) -> Verdict {
    let pass = parts.iter().all(|p| p.pass);
    let detail = parts
        .iter()
        .map(|p| format!("[{}] {}", if p.pass { "ok" } else { "FAIL" }, p.detail))
        .collect::<Vec<_>>()
        .join("; ");
    Verdict::new(pass, detail)
}

fn frmse(report: &StudyReport, model: &str, component: &str) -> f64 {
    report
        .forecast_for(model, component)
        .map_or(f64::NAN, |r| r.frmse)
}

fn criterion_one(study: &StudyReport) -> Verdict {
    let rows: Vec<_> = study
        .recovery
        .iter()
        .filter(|r| r.model == "B-DARMA")
        .collect();
    let bad_bias: Vec<String> = rows
        .iter()
        .filter(|r| !(r.bias.abs() <= 0.02))
        .map(|r| format!("{}={:.4}", r.parameter, r.bias))
        .collect();
    let bad_cov: Vec<String> = rows
        .iter()
        .filter(|r| !(0.88..=0.99).contains(&r.coverage))
        .map(|r| format!("{}={:.3}", r.parameter, r.coverage))
        .collect();
    let max_bias = rows.iter().map(|r| r.bias.abs()).fold(0.0, f64::max);
    let (lo, hi) = rows.iter().fold((1.0f64, 0.0f64), |(lo, hi), r| {
        (lo.min(r.coverage), hi.max(r.coverage))
    });
    let b_rows: Vec<String> = rows
        .iter()
        .filter(|r| r.parameter.starts_with("b1_"))
        .map(|r| {
            let tv = study
                .recovery_for("tVARMA", &r.parameter)
                .map_or(f64::NAN, |t| t.rmse);
            format!(
                "{} {:.4}<{:.4}{}",
                r.parameter,
                r.rmse,
                tv,
                if r.rmse < tv { "" } else { " NO" }
            )
        })
        .collect();
    let b_ok = b_rows.len() == 4 && b_rows.iter().all(|s| !s.ends_with(" NO"));
    all(vec![
        Verdict::new(
            rows.len() == 10 && bad_bias.is_empty(),
            format!(
                "max |bias| {max_bias:.4} over {} coefficients {bad_bias:?}",
                rows.len()
            ),
        ),
        Verdict::new(
            bad_cov.is_empty(),
            format!("coverage {lo:.3}..{hi:.3} {bad_cov:?}"),
        ),
        Verdict::new(
            b_ok,
            format!("b RMSE B-DARMA<tVARMA: {}", b_rows.join(", ")),
        ),
    ])
}

fn criterion_two(study: &StudyReport) -> Verdict {
    let bd = frmse(study, "B-DARMA", "y3");
    let tv = frmse(study, "tVARMA", "y3");
    let gap = Verdict::new(
        bd <= 0.8 * tv,
        format!(
            "y3 FRMSE {bd:.4} vs tVARMA {tv:.4} ({:.0}% lower)",
            100.0 * (1.0 - bd / tv)
        ),
    );
    let mut off = Vec::new();
    let mut worst = 0.0f64;
    for (model, refs) in STUDY_ONE_FRMSE {
        for (j, r) in refs.iter().enumerate() {
            let got = frmse(study, model, &format!("y{}", j + 1));
            let rel = (got - r).abs() / r;
            worst = worst.max(rel);
            if !(rel <= 0.25) {
                off.push(format!("{model} y{} {got:.4} vs {r}", j + 1));
            }
        }
    }
    let cells = Verdict::new(
        off.is_empty(),
        format!("largest relative deviation {:.1}% {off:?}", 100.0 * worst),
    );
    all(vec![gap, cells])
}

fn criterion_three(study: &StudyReport) -> Verdict {
    let pairs: Vec<(String, f64, f64)> = study
        .recovery
        .iter()
        .filter(|r| r.model == "tVARMA")
        .filter_map(|t| {
            study
                .recovery_for("B-DARMA", &t.parameter)
                .map(|b| (t.parameter.clone(), t.rmse, b.rmse))
        })
        .collect();
    let wins = pairs.iter().filter(|(_, tv, bd)| tv <= bd).count();
    let gap =
        pairs.iter().map(|(_, tv, bd)| (bd - tv) / tv).sum::<f64>() / pairs.len().max(1) as f64;
    let bd = frmse(study, "B-DARMA", "y3");
    let tv = frmse(study, "tVARMA", "y3");
    all(vec![
        Verdict::new(
            pairs.len() == 10 && wins >= 7,
            format!("tVARMA RMSE <= B-DARMA on {wins} of {}", pairs.len()),
        ),
        Verdict::new(
            gap <= 0.10,
            format!("mean relative RMSE gap {:.1}%", 100.0 * gap),
        ),
        Verdict::new(
            bd < tv,
            format!("y3 FRMSE B-DARMA {bd:.4} vs tVARMA {tv:.4}"),
        ),
    ])
}

/// Reduced benchmark: two years of training data, the full test year,
/// and a short sampler run per fit.
fn benchmark_config() -> BenchmarkConfig {
    BenchmarkConfig {
        replicates: 5,
        train_len: 730,
        test_len: 365,
        sampler: SamplerConfig {
            chains: 2,
            warmup_iters: 150,
            sampling_iters: 150,
            max_tree_depth: 8,
            ..SamplerConfig::default()
        },
        trajectories: 200,
        ..BenchmarkConfig::default()
    }
}

fn criterion_four() -> Verdict {
    let report = match run_airbnb_style_benchmark(&benchmark_config()) {
        Ok(r) => r,
        Err(e) => return Verdict::failed(e),
    };
    let order = [
        "Normal Full",
        "Horseshoe Full",
        "Normal Nearest Neighbor",
        "Normal Diagonal",
    ];
    let mut held = 0;
    let mut per_rep = Vec::new();
    for rep in 0..report.replicates {
        let scores: Vec<f64> = order
            .iter()
            .map(|m| {
                report
                    .scores
                    .iter()
                    .find(|s| s.model == *m && s.replicate == rep)
                    .map_or(f64::NAN, |s| s.frmse)
            })
            .collect();
        let ok = scores.windows(2).all(|w| w[0] <= w[1]);
        held += usize::from(ok);
        per_rep.push(format!(
            "{:?}",
            scores
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        ));
    }
    let totals: Vec<(String, f64)> = report
        .forecast
        .iter()
        .filter(|r| r.component == "total")
        .map(|r| (r.model.clone(), r.frmse))
        .collect();
    let tvar = totals
        .iter()
        .find(|(m, _)| m == "tVAR(1)")
        .map_or(f64::NAN, |t| t.1);
    let worst = totals.iter().all(|(m, v)| m == "tVAR(1)" || *v < tvar);
    let failed: usize = report.failures.iter().map(|f| f.failed).sum();
    all(vec![
        Verdict::new(
            held >= 4,
            format!(
                "ordering held in {held} of {} replicates {}",
                report.replicates,
                per_rep.join(" ")
            ),
        ),
        Verdict::new(
            worst && totals.len() == 6,
            format!(
                "total FRMSE {} ({failed} failed fits)",
                totals
                    .iter()
                    .map(|(m, v)| format!("{m} {v:.4}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ),
    ])
}

fn random_composition(rng: &mut ChaCha8Rng, j: usize) -> Composition {
    Composition::from_parts(
        (0..j).map(|_| rng.gen_range(-8.0f64..2.0).exp()).collect(),
        ZeroPolicy::Reject,
    )
    .unwrap()
}

fn random_series(rng: &mut ChaCha8Rng, j: usize, t: usize) -> CompositionalSeries {
    let params =
        DirichletParams::new(random_composition(rng, j), rng.gen_range(20.0..80.0)).unwrap();
    CompositionalSeries::new((0..t).map(|_| dirichlet_sample(&params, rng)).collect()).unwrap()
}

fn random_theta(rng: &mut ChaCha8Rng, spec: &ModelSpec, gamma0: f64) -> ParamVector {
    let layout = spec.layout();
    let mut v: Vec<f64> = (0..layout.len())
        .map(|i| {
            if layout.is_free(i) {
                rng.gen_range(-0.4..0.4)
            } else {
                0.0
            }
        })
        .collect();
    v[layout.gamma_offset()] = gamma0;
    ParamVector::from_values(layout, v).unwrap()
}

fn dirichlet_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..300 {
        let j = [2, 3, 12][case % 3];
        let alpha: Vec<f64> = (0..j).map(|_| rng.gen_range(0.2..40.0)).collect();
        let y = random_composition(&mut rng, j);
        let params = DirichletParams::from_alpha(&alpha).unwrap();
        let oracle = ln_gamma(alpha.iter().sum())
            + alpha
                .iter()
                .zip(y.values())
                .map(|(a, v)| (a - 1.0) * v.ln() - ln_gamma(*a))
                .sum::<f64>();
        worst = worst.max((dirichlet_logpdf(&y, &params) - oracle).abs());
    }
    Verdict::new(
        worst <= 1e-10,
        format!("Dirichlet logpdf max error {worst:.1e}"),
    )
}

fn gradient_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let mut spec = ModelSpec::new(3, 1, 1).with_prior(PriorConfig::simulation_study());
        if case % 2 == 1 {
            spec.parameterization = Parameterization::Uncentered;
        }
        if case % 4 >= 2 {
            spec.mean_design = CovariateSpec {
                intercept: true,
                trend: true,
                fourier: vec![FourierTerm {
                    period: 7.0,
                    harmonics: 1,
                }],
            };
            spec.scale_design = spec.mean_design.clone();
            spec.prior.beta = RegressionPrior::Horseshoe { intercept_sd: None };
        }
        let series = random_series(&mut rng, 3, 20);
        let gamma0 = rng.gen_range(2.0..4.0);
        let theta = random_theta(&mut rng, &spec, gamma0);
        let mut post = Posterior::new(&spec, &series).unwrap();
        let lambdas: Vec<f64> = (0..post.local_scale_count())
            .map(|_| rng.gen_range(0.3..2.0))
            .collect();
        let x = post.unconstrain(theta.values(), &lambdas);
        let mut grad = vec![0.0; x.len()];
        post.logp_grad(&x, &mut grad);
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd =
                (post.evaluate(&xp, None).unwrap() - post.evaluate(&xm, None).unwrap()) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1.0));
        }
    }
    Verdict::new(
        worst <= 1e-5,
        format!("gradient max relative error {worst:.1e} on 20 instances"),
    )
}

fn tvarma_ols_oracle() -> Verdict {
    let spec = tvarma_spec(3, 1, 0, CovariateSpec::intercept_only());
    let truth = ParamVector::from_parts(
        spec.layout(),
        &[vec![0.6, -0.1, 0.2, 0.5]],
        &[],
        &[-0.07, 0.1],
        &[],
    )
    .unwrap();
    let chol = bivariate_cholesky(0.05, 0.05, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let series = simulate_tvarma(&spec, &truth, &chol, 300, 100, 1, &mut rng).unwrap();
    let config = MleConfig {
        init: InitStrategy::Uniform,
        init_range: 0.5,
        seed: 3,
        ..MleConfig::default()
    };
    let fit = match fit_tvarma(&spec, &series, &config) {
        Ok(f) => f,
        Err(e) => return Verdict::failed(e),
    };
    let est = fit.param_vector(&spec).unwrap();
    let u: Vec<Vec<f64>> = series
        .observations()
        .iter()
        .map(|y| alr(y, 2).unwrap().values().to_vec())
        .collect();
    let n = u.len() - 1;
    let x = DMatrix::from_fn(n, 3, |i, k| if k < 2 { u[i][k] } else { 1.0 });
    let y = DMatrix::from_fn(n, 2, |i, r| u[i + 1][r]);
    let coef = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
    let mut worst = 0.0f64;
    for r in 0..2 {
        for s in 0..2 {
            worst = worst.max((est.a(0)[r * 2 + s] - coef[(s, r)]).abs());
        }
        worst = worst.max((est.beta()[r] - coef[(2, r)]).abs());
    }
    Verdict::new(
        fit.converged && worst <= 1e-6,
        format!("tVARMA vs least squares max error {worst:.1e}"),
    )
}

fn gpd_sample(k: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            if k == 0.0 {
                -sigma * u.ln()
            } else {
                sigma * (u.powf(-k) - 1.0) / k
            }
        })
        .collect()
}

fn pareto_shape_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for (i, k) in [0.0, 0.2, 0.5, 0.8].into_iter().enumerate() {
        for rep in 0..5 {
            let fit = fit_gpd_tail(&gpd_sample(k, 1.5, 2000, 400 + 10 * i as u64 + rep));
            worst = worst.max((fit.k - k).abs());
        }
    }
    Verdict::new(
        worst <= 0.1,
        format!("Pareto shape max error {worst:.3} at n = 2000"),
    )
}

fn lfo_oracle() -> Verdict {
    let spec = ModelSpec::new(3, 1, 0).with_prior(PriorConfig::vague(1.0));
    let truth = ParamVector::from_parts(
        spec.layout(),
        &[vec![0.5, 0.1, 0.0, 0.4]],
        &[],
        &[0.2, -0.1],
        &[50f64.ln()],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let series = simulate_darma(&spec, &truth, 200, 100, 1, &mut rng).unwrap();
    let lfo = LfoConfig {
        min_history: 150,
        steps_ahead: 1,
        k_threshold: 0.7,
    };
    let sampler = SamplerConfig {
        chains: 4,
        warmup_iters: 500,
        sampling_iters: 500,
        seed: 5,
        ..SamplerConfig::default()
    };
    let (exact, psis) = match (
        lfo_elpd_exact(&spec, &series, &lfo, &sampler),
        lfo_elpd_psis(&spec, &series, &lfo, &sampler),
    ) {
        (Ok(e), Ok(p)) => (e, p),
        (Err(e), _) | (_, Err(e)) => return Verdict::failed(e),
    };
    let se = (exact.mcse * exact.mcse + psis.mcse * psis.mcse).sqrt();
    let diff = (exact.elpd - psis.elpd).abs();
    Verdict::new(
        diff <= 2.0 * se,
        format!(
            "LFO exact {:.3} vs PSIS {:.3} (|diff| {diff:.3}, 2 MC SE {:.3}, {} refits)",
            exact.elpd,
            psis.elpd,
            2.0 * se,
            psis.refits()
        ),
    )
}

fn criterion_five() -> Verdict {
    all(vec![
        dirichlet_oracle(),
        gradient_oracle(),
        tvarma_ols_oracle(),
        pareto_shape_oracle(),
        lfo_oracle(),
    ])
}

fn transform_round_trips() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for j in [2, 3, 12] {
        for i in 0..1000 {
            let y = random_composition(&mut rng, j);
            let back = [
                alr_inv(&alr(&y, i % j).unwrap()),
                clr_inv(&clr(&y).unwrap()),
                ilr_inv(&ilr(&y).unwrap()),
            ];
            for b in &back {
                for (u, v) in y.values().iter().zip(b.values()) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
    }
    Verdict::new(
        worst <= 1e-10,
        format!("alr/clr/ilr round-trip max error {worst:.1e}"),
    )
}

fn trajectories_are_compositions() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut bad = 0usize;
    let mut checked = 0usize;
    let mut tally = |fc: &bdarma::forecast::ForecastResult| {
        for s in 0..fc.trajectories() {
            for h in 0..fc.horizon {
                let y = fc.sample(s, h);
                checked += 1;
                if !(y.iter().all(|v| *v > 0.0 && *v <= 1.0)
                    && (y.iter().sum::<f64>() - 1.0).abs() <= 1e-10)
                {
                    bad += 1;
                }
            }
        }
    };
    for case in 0..12 {
        let j = [3, 4, 12][case % 3];
        let spec = ModelSpec::new(j, 1, 1);
        let gamma0 = rng.gen_range(0.0..9.0);
        let theta = random_theta(&mut rng, &spec, gamma0);
        let history = random_series(&mut rng, j, 5);
        let config = ForecastConfig {
            horizon: 20,
            trajectories: 50,
            seed: case as u64,
            ..ForecastConfig::default()
        };
        match forecast(&spec, FitSource::PlugIn(&theta), &history, &config) {
            Ok(fc) => tally(&fc),
            Err(e) => return Verdict::failed(e),
        }
        let gspec = tvarma_spec(j, 1, 1, CovariateSpec::intercept_only());
        let gtheta = random_theta_tvarma(&mut rng, &gspec);
        let d = j - 1;
        let sigma: Vec<f64> = (0..d * d)
            .map(|k| if k / d == k % d { 0.04 } else { 0.01 })
            .collect();
        match forecast(
            &gspec,
            FitSource::Gaussian {
                params: &gtheta,
                sigma: &sigma,
            },
            &history,
            &config,
        ) {
            Ok(fc) => tally(&fc),
            Err(e) => return Verdict::failed(e),
        }
    }
    Verdict::new(
        bad == 0,
        format!("{bad} invalid of {checked} sampled compositions"),
    )
}

fn random_theta_tvarma(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> ParamVector {
    let layout = spec.layout();
    let v = (0..layout.len())
        .map(|i| {
            if layout.is_free(i) {
                rng.gen_range(-0.4..0.4)
            } else {
                0.0
            }
        })
        .collect();
    ParamVector::from_values(layout, v).unwrap()
}

fn centered_matches_uncentered() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let series = random_series(&mut rng, 4, 15);
        let spec_c = ModelSpec::new(4, 1, case % 2);
        let spec_u = spec_c
            .clone()
            .with_parameterization(Parameterization::Uncentered);
        let theta = random_theta(&mut rng, &spec_c, 3.0);
        let a = theta.a(0);
        let beta = theta.beta();
        let mut v = theta.values().to_vec();
        let bo = spec_c.layout().beta_offset();
        for r in 0..3 {
            let ab: f64 = (0..3).map(|s| a[r * 3 + s] * beta[s]).sum();
            v[bo + r] = beta[r] - ab;
        }
        let theta_u = ParamVector::from_values(spec_u.layout(), v).unwrap();
        let lc = log_likelihood(&spec_c, &theta, &series).unwrap().value;
        let lu = log_likelihood(&spec_u, &theta_u, &series).unwrap().value;
        worst = worst.max((lc - lu).abs());
    }
    Verdict::new(
        worst <= 1e-9,
        format!("centered vs uncentered max difference {worst:.1e}"),
    )
}

fn mask_zeros_exact() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut spec = ModelSpec::new(5, 1, 1);
    spec.mask_a = MaskKind::NearestNeighbor;
    spec.mask_b = MaskKind::Diagonal;
    let truth = ParamVector::from_parts(
        spec.layout(),
        &[(0..16usize)
            .map(|k| {
                if k / 4 == k % 4 {
                    0.5
                } else if (k / 4).abs_diff(k % 4) == 1 {
                    0.1
                } else {
                    0.0
                }
            })
            .collect()],
        &[(0..16)
            .map(|k| if k / 4 == k % 4 { 0.2 } else { 0.0 })
            .collect()],
        &[0.3, 0.1, -0.2, 0.0],
        &[4.0],
    )
    .unwrap();
    let series = match simulate_darma(&spec, &truth, 80, 50, 1, &mut rng) {
        Ok(s) => s,
        Err(e) => return Verdict::failed(e),
    };
    let layout = spec.layout();
    let names = layout.names();
    let sampler = SamplerConfig {
        chains: 2,
        warmup_iters: 100,
        sampling_iters: 100,
        seed: 9,
        ..SamplerConfig::default()
    };
    let draws = match sample_posterior(&spec, &series, &sampler) {
        Ok(d) => d,
        Err(e) => return Verdict::failed(e),
    };
    let mut masked = 0;
    let mut nonzero = 0;
    for i in (0..layout.len()).filter(|&i| !layout.is_free(i)) {
        masked += 1;
        match draws.column_by_name(&names[i]) {
            Some(col) => nonzero += col.iter().filter(|v| **v != 0.0).count(),
            None => nonzero += 1,
        }
    }
    Verdict::new(
        masked > 0 && nonzero == 0,
        format!("{masked} masked coordinates, {nonzero} nonzero draws"),
    )
}

fn thread_invariance() -> Verdict {
    let mut config = StudyConfig::simulation(Dgm::Darma, 3);
    config.train_len = 100;
    config.test_len = 5;
    config.trajectories = 100;
    config.sampler = SamplerConfig {
        chains: 2,
        warmup_iters: 100,
        sampling_iters: 100,
        ..config.sampler
    };
    let mut outputs = Vec::new();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        match pool.install(|| run_study(&config)) {
            Ok(r) => outputs.push(serde_json::to_string(&r).unwrap()),
            Err(e) => return Verdict::failed(e),
        }
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Verdict::new(
        same,
        format!("study output identical across 1, 2 and 4 threads: {same}"),
    )
}

fn criterion_six() -> Verdict {
    all(vec![
        transform_round_trips(),
        trajectories_are_compositions(),
        centered_matches_uncentered(),
        mask_zeros_exact(),
        thread_invariance(),
    ])
}

fn criterion_seven() -> Verdict {
    let dim = 11;
    let removed = MaskKind::Full.free_count(dim) - MaskKind::NearestNeighbor.free_count(dim);
    Verdict::new(removed == 91, format!("nearest-neighbor mask frees {removed} fewer A entries than full for J = 12 (expected 91)"))
}

fn report(n: usize, start: Instant, v: &Verdict) {
    println!(
        "criterion {n}: {} ({:.0}s) {}",
        if v.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        v.detail
    );
}

fn main() -> ExitCode {
    let mut verdicts = Vec::new();
    let mut run = |n: usize, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        report(n, start, &v);
        verdicts.push(v.pass);
    };

    let start = Instant::now();
    let study_one = run_study(&StudyConfig::simulation(Dgm::Darma, 50));
    println!("study 1 finished in {:.0}s", start.elapsed().as_secs_f64());
    run(1, &mut || {
        study_one
            .as_ref()
            .map_or_else(Verdict::failed, criterion_one)
    });
    run(2, &mut || {
        study_one
            .as_ref()
            .map_or_else(Verdict::failed, criterion_two)
    });
    run(3, &mut || {
        run_study(&StudyConfig::simulation_two(50))
            .map_or_else(Verdict::failed, |s| criterion_three(&s))
    });
    run(4, &mut criterion_four);
    run(5, &mut criterion_five);
    run(6, &mut criterion_six);
    run(7, &mut criterion_seven);

    let failed = verdicts.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
