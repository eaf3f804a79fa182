use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bdarma::forecast::{forecast, FitSource, ForecastResult};
use bdarma::inference::{fit_mle_darma, fit_tvarma, sample_posterior, Diagnostics, MleResult, PosteriorDraws};
use bdarma::io;
use bdarma::lfo::{lfo_elpd_exact, lfo_elpd_psis, rank_models, LfoReport};
use bdarma::metrics::{ForecastErrors, ForecastMetrics};
use bdarma::model::{MaskKind, ModelSpec};
use bdarma::series::CompositionalSeries;
use bdarma::simplex::{alr, Composition, ZeroPolicy};
use bdarma::simulate::{bivariate_cholesky, simulate_darma, simulate_tvarma};
use bdarma::study::{run_study, Engine, StudyReport};
use bdarma::Error;

use crate::config::{DgmKind, Preset, RunConfig, StudyKind};
use crate::manifest::Recorder;

/// Effective configuration plus the recorder that hashes it.
fn load_config(path: Option<&Path>, seed: Option<u64>, rec: &mut Recorder) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => {
            rec.hash_file(p).map_err(|e| Error::Config(e.to_string()))?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn read_series(path: &Path, start: i64, policy: ZeroPolicy, rec: &mut Recorder) -> Result<CompositionalSeries> {
    let bytes = fs::read(path).map_err(|e| Error::Data { row: 0, message: format!("{}: {e}", path.display()) })?;
    rec.hash_bytes(&bytes);
    Ok(io::read_series_csv(bytes.as_slice(), start, policy).map_err(|e| match e {
        Error::Data { row, message } => Error::Data { row, message: format!("{}: {message}", path.display()) },
        other => other,
    })?)
}

fn bytes_of(f: impl FnOnce(&mut Vec<u8>) -> bdarma::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn simulate(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut rec = Recorder::new("simulate", out)?;
    let mut config = load_config(Some(config_path), seed, &mut rec)?;
    let benchmark = config.preset == Some(Preset::Benchmark);
    if benchmark {
        config.epoch.get_or_insert_with(|| "2015-01-01".into());
    }
    let spec = config.model_spec()?;
    let length = config.length.unwrap_or(if benchmark { 1492 + 365 } else { 200 });
    let train = config.train_len.unwrap_or(length).min(length);
    let spec = spec.resolved(train);
    let theta = config.truth(&spec)?;
    let mut last = None;
    let mut series = None;
    for attempt in 0..=config.max_regenerations {
        let mut rng = bdarma::inference::rng::stream(config.seed, attempt as u64);
        let out = match config.dgm {
            DgmKind::Darma => simulate_darma(&spec, &theta, length, config.burn_in, config.start, &mut rng),
            DgmKind::Tvarma => {
                if spec.components != 3 {
                    return Err(Error::Config("the tvarma generator takes sigma1, sigma2, rho and needs 3 components".into()).into());
                }
                let chol = bivariate_cholesky(config.sigma1, config.sigma2, config.rho);
                simulate_tvarma(&spec, &theta, &chol, length, config.burn_in, config.start, &mut rng)
            }
        };
        match out {
            Ok(s) => {
                if attempt > 0 {
                    rec.warn(format!("discarded {attempt} explosive trajectories"));
                }
                series = Some(s);
                break;
            }
            Err(e @ Error::Explosive { .. }) => last = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    let mut series = series.ok_or_else(|| last.expect("at least one attempt"))?;
    if let Some(e) = config.epoch()? {
        series = series.with_epoch(e);
    }
    rec.hash_bytes(config.to_toml().as_bytes());
    rec.write("series.csv", &bytes_of(|b| io::write_series_csv(b, &series))?)?;
    finish(rec, config.seed)
}

fn finish(rec: Recorder, seed: u64) -> Result<()> {
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    rec.finish(seed)?;
    Ok(())
}

pub struct FitArgs<'a> {
    pub data: &'a Path,
    pub config: Option<&'a Path>,
    pub engine: Option<Engine>,
    pub mask: Option<MaskKind>,
    pub seed: Option<u64>,
    pub zero_policy: ZeroPolicy,
    pub out: &'a Path,
}

/// Fits and persists: `model.toml`, `data.csv`, and either `draws.csv` with
/// `diagnostics.json` or `mle.csv` with `mle.json`.
pub fn fit(args: FitArgs) -> Result<()> {
    let mut rec = Recorder::new("fit", args.out)?;
    let mut config = load_config(args.config, args.seed, &mut rec)?;
    if let Some(e) = args.engine {
        config.engine = e;
    }
    if let Some(m) = args.mask {
        config.mask_a = m;
        config.mask_b = m;
    }
    let series = read_series(args.data, config.start, args.zero_policy, &mut rec)?;
    if series.components() != config.components {
        config.components = series.components();
    }
    let spec = config.model_spec()?;
    rec.hash_bytes(config.to_toml().as_bytes());
    rec.write("model.toml", config.to_toml().as_bytes())?;
    rec.write("data.csv", &bytes_of(|b| io::write_series_csv(b, &series))?)?;
    match config.engine {
        Engine::Bayes => {
            let draws = sample_posterior(&spec, &series, &config.sampler())?;
            for w in &draws.diagnostics.warnings {
                rec.warn(w.clone());
            }
            rec.write("draws.csv", &bytes_of(|b| io::write_draws_csv(b, &draws))?)?;
            rec.write("diagnostics.json", &bytes_of(|b| io::write_json(b, &draws.diagnostics))?)?;
        }
        Engine::MleDarma | Engine::Tvarma => {
            let fit = if config.engine == Engine::Tvarma {
                fit_tvarma(&spec, &series, &config.mle())?
            } else {
                fit_mle_darma(&spec, &series, &config.mle())?
            };
            if fit.retries > 0 {
                rec.warn(format!("optimizer restarted {} times: {:?}", fit.retries, fit.failures));
            }
            rec.write("mle.csv", &bytes_of(|b| io::write_mle_csv(b, &fit))?)?;
            rec.write("mle.json", &bytes_of(|b| io::write_json(b, &fit))?)?;
            if !fit.converged {
                let seed = config.seed;
                rec.warn("no attempt converged; the persisted estimate is the last attempt".into());
                finish(rec, seed)?;
                return Err(Error::Numerical(format!("fit did not converge after {} retries", fit.retries)).into());
            }
        }
    }
    finish(rec, config.seed)
}

/// A fit directory written by [`fit`].
struct FitDir {
    config: RunConfig,
    spec: ModelSpec,
    series: CompositionalSeries,
    draws: Option<PosteriorDraws>,
    mle: Option<MleResult>,
}

fn load_fit(dir: &Path, rec: &mut Recorder) -> Result<FitDir> {
    let config_path = dir.join("model.toml");
    rec.hash_file(&config_path).map_err(|e| Error::Usage(format!("{}: not a fit directory ({e})", dir.display())))?;
    let config = RunConfig::load(&config_path)?;
    let series = read_series(&dir.join("data.csv"), config.start, ZeroPolicy::Reject, rec)?;
    let spec = config.model_spec()?.resolved(series.len());
    let (mut draws, mut mle) = (None, None);
    let open = |name: &str, rec: &mut Recorder| -> Result<Vec<u8>> {
        let p = dir.join(name);
        let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        rec.hash_bytes(&bytes);
        Ok(bytes)
    };
    if config.engine == Engine::Bayes {
        let diag: Diagnostics = io::read_json(open("diagnostics.json", rec)?.as_slice())?;
        draws = Some(io::read_draws_csv(open("draws.csv", rec)?.as_slice(), diag)?);
    } else {
        mle = Some(io::read_json(open("mle.json", rec)?.as_slice())?);
    }
    Ok(FitDir { config, spec, series, draws, mle })
}

/// Actual compositions keyed by forecast time. Rows indexed by `t` keep
/// their times; dated rows are placed by date relative to `reference`
/// when both carry dates, otherwise the first row sits at `first_t`.
fn align(actuals: &CompositionalSeries, reference: Option<&CompositionalSeries>, first_t: i64) -> Vec<(i64, Vec<f64>)> {
    let offset = match (actuals.epoch(), reference.and_then(|r| r.epoch().map(|e| (e, r.start())))) {
        (Some(a), Some((e, s))) => s + (a - e).num_days() - actuals.start(),
        (Some(_), None) => first_t - actuals.start(),
        (None, _) => 0,
    };
    actuals.observations().iter().enumerate().map(|(i, y)| (actuals.time(i) + offset, y.values().to_vec())).collect()
}

/// FRMSE and FMAE of the `mean` column against the actuals at matching
/// times; the single code path behind `forecast --actuals` and `evaluate`.
fn score(rows: &[io::ForecastCsvRow], actual: &[(i64, Vec<f64>)]) -> Result<(ForecastMetrics, Vec<(i64, Vec<f64>, Vec<f64>)>)> {
    let j = actual.first().map_or(0, |a| a.1.len());
    let mut times: Vec<i64> = rows.iter().map(|r| r.t).collect();
    times.dedup();
    let mut errors = ForecastErrors::new(j);
    let mut matched = Vec::new();
    for t in times {
        let Some((_, y)) = actual.iter().find(|a| a.0 == t) else { continue };
        let mut point = vec![f64::NAN; j];
        for r in rows.iter().filter(|r| r.t == t) {
            if r.component == 0 || r.component > j {
                return Err(Error::Data { row: 0, message: format!("forecast component {} outside 1..={j}", r.component) }.into());
            }
            point[r.component - 1] = r.mean;
        }
        errors.add(y, &point)?;
        matched.push((t, y.clone(), point));
    }
    if matched.is_empty() {
        return Err(Error::Data { row: 0, message: "no actual observation matches a forecast time".into() }.into());
    }
    Ok((errors.report(), matched))
}

fn metrics_csv(m: &ForecastMetrics) -> Vec<u8> {
    let mut s = String::from("component,frmse,fmae\n");
    for c in 0..m.frmse.len() {
        s += &format!("y{},{},{}\n", c + 1, io::fmt_f64(m.frmse[c]), io::fmt_f64(m.fmae[c]));
    }
    s += &format!("total,{},{}\n", io::fmt_f64(m.total_frmse), io::fmt_f64(m.total_fmae));
    s.into_bytes()
}

fn rows_of(fc: &ForecastResult) -> Vec<io::ForecastCsvRow> {
    fc.summaries
        .iter()
        .map(|s| io::ForecastCsvRow { t: s.t, component: s.component + 1, mean: s.mean, median: s.median, quantiles: s.quantiles.clone() })
        .collect()
}

pub struct ForecastArgs<'a> {
    pub fit: &'a Path,
    pub horizon: Option<usize>,
    pub actuals: Option<&'a Path>,
    pub seed: Option<u64>,
    pub zero_policy: ZeroPolicy,
    pub out: &'a Path,
}

pub fn forecast_cmd(args: ForecastArgs) -> Result<()> {
    let mut rec = Recorder::new("forecast", args.out)?;
    let fit = load_fit(args.fit, &mut rec)?;
    let mut fc_config = fit.config.forecast();
    if let Some(h) = args.horizon {
        fc_config.horizon = h;
    }
    if let Some(s) = args.seed {
        fc_config.seed = s;
    }
    let params;
    let source = match (&fit.draws, &fit.mle) {
        (Some(d), _) => FitSource::Posterior(d),
        (None, Some(m)) => {
            params = m.param_vector(&fit.spec)?;
            match &m.sigma {
                Some(sigma) => FitSource::Gaussian { params: &params, sigma },
                None => FitSource::PlugIn(&params),
            }
        }
        (None, None) => unreachable!("load_fit reads one kind of fit"),
    };
    let fc = forecast(&fit.spec, source, &fit.series, &fc_config)?;
    rec.write("forecast.csv", &bytes_of(|b| io::write_forecast_csv(b, &fc))?)?;
    if let Some(path) = args.actuals {
        let actuals = read_series(path, 0, args.zero_policy, &mut rec)?;
        let aligned = align(&actuals, Some(&fit.series), fc.times[0]);
        let (metrics, matched) = score(&rows_of(&fc), &aligned)?;
        rec.write("metrics.csv", &metrics_csv(&metrics))?;
        let reference = fit.spec.reference;
        let residuals = matched
            .iter()
            .map(|(_, y, p)| {
                let a = alr(&Composition::new(y.clone())?, reference)?;
                let b = alr(&Composition::new(p.clone())?, reference)?;
                Ok(a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect())
            })
            .collect::<bdarma::Result<Vec<Vec<f64>>>>()?;
        let times: Vec<i64> = matched.iter().map(|m| m.0).collect();
        rec.write("residuals.csv", &bytes_of(|b| io::write_residuals_csv(b, &times, &residuals))?)?;
    }
    finish(rec, fc_config.seed)
}

pub fn evaluate(actuals: &Path, forecast_path: &Path, zero_policy: ZeroPolicy, out: &Path) -> Result<()> {
    let mut rec = Recorder::new("evaluate", out)?;
    let bytes = fs::read(forecast_path).map_err(|e| Error::Data { row: 0, message: format!("{}: {e}", forecast_path.display()) })?;
    rec.hash_bytes(&bytes);
    let rows = io::read_forecast_csv(bytes.as_slice())?;
    let first_t = rows.first().map(|r| r.t).ok_or_else(|| Error::Data { row: 1, message: "empty forecast".into() })?;
    let series = read_series(actuals, 0, zero_policy, &mut rec)?;
    let (metrics, _) = score(&rows, &align(&series, None, first_t))?;
    rec.write("metrics.csv", &metrics_csv(&metrics))?;
    finish(rec, 0)
}

pub struct SelectArgs<'a> {
    pub data: &'a Path,
    pub config: Option<&'a Path>,
    pub candidates: &'a [PathBuf],
    pub seed: Option<u64>,
    pub zero_policy: ZeroPolicy,
    pub out: &'a Path,
}

/// LFO-ELPD for every candidate; candidates that fail are reported and
/// left out of the ranking.
pub fn select(args: SelectArgs) -> Result<()> {
    let mut rec = Recorder::new("select", args.out)?;
    if args.candidates.len() < 2 {
        return Err(Error::Usage("select needs at least two --candidate configurations".into()).into());
    }
    let base = load_config(args.config, args.seed, &mut rec)?;
    let series = read_series(args.data, base.start, args.zero_policy, &mut rec)?;
    let mut results: Vec<(String, LfoReport)> = Vec::new();
    let mut status = Vec::new();
    for path in args.candidates {
        rec.hash_file(path).map_err(|e| Error::Config(e.to_string()))?;
        let mut cand = RunConfig::load(path)?;
        let name = cand.name.clone().unwrap_or_else(|| path.file_stem().map_or("candidate".into(), |s| s.to_string_lossy().into_owned()));
        cand.components = series.components();
        let spec = cand.model_spec()?;
        let run = if base.lfo_exact {
            lfo_elpd_exact(&spec, &series, &base.lfo(), &base.sampler())
        } else {
            lfo_elpd_psis(&spec, &series, &base.lfo(), &base.sampler())
        };
        match run {
            Ok(report) => {
                rec.write(&format!("lfo_{name}.csv"), &bytes_of(|b| io::write_lfo_csv(b, &report.points))?)?;
                println!("{name} elpd={} mcse={} refits={}", report.elpd, report.mcse, report.refits());
                if report.points.iter().any(|p| !p.reliable) {
                    rec.warn(format!("{name}: some fits carried sampler warnings"));
                }
                results.push((name.clone(), report));
                status.push((name, "ok".to_string()));
            }
            Err(e) => {
                rec.warn(format!("{name}: {e}"));
                status.push((name, format!("failed: {e}")));
            }
        }
    }
    let ranked = rank_models(&results);
    let mut s = String::from("model,elpd,elpd_diff,refits,status\n");
    for r in &ranked {
        s += &format!("{},{},{},{},ok\n", r.name, io::fmt_f64(r.elpd), io::fmt_f64(r.elpd_diff), r.refits);
    }
    for (name, st) in status.iter().filter(|s| s.1 != "ok") {
        s += &format!("{name},NaN,NaN,0,\"{}\"\n", st.replace('"', "'"));
    }
    rec.write("ranking.csv", s.as_bytes())?;
    if ranked.is_empty() {
        let seed = base.seed;
        finish(rec, seed)?;
        return Err(Error::Numerical("every candidate failed to fit".into()).into());
    }
    finish(rec, base.seed)
}

/// Table file names for each study.
fn table_names(kind: StudyKind) -> (&'static str, Option<&'static str>) {
    match kind {
        StudyKind::SimulationDarma => ("table1_frmse.csv", Some("supp_table1_recovery.csv")),
        StudyKind::SimulationTvarma => ("table1_frmse.csv", Some("supp_table2_recovery.csv")),
        StudyKind::Benchmark => ("table3_airbnb_style.csv", None),
    }
}

pub fn write_study(rec: &mut Recorder, kind: StudyKind, report: &StudyReport) -> Result<()> {
    let (forecast_name, recovery_name) = table_names(kind);
    rec.write(forecast_name, &bytes_of(|b| io::write_forecast_table_csv(b, &report.forecast))?)?;
    if let Some(name) = recovery_name {
        rec.write(name, &bytes_of(|b| io::write_recovery_csv(b, &report.recovery))?)?;
    }
    rec.write("failures.csv", &bytes_of(|b| io::write_failures_csv(b, &report.failures))?)?;
    Ok(())
}

pub fn replicate_study(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut rec = Recorder::new("replicate-study", out)?;
    let config = load_config(Some(config_path), seed, &mut rec)?;
    rec.hash_bytes(config.to_toml().as_bytes());
    let report = run_study(&config.study_config())?;
    write_study(&mut rec, config.study, &report)?;
    for f in &report.failures {
        println!("{}: fitted {}, failed {}, optimizer restarts {}", f.model, f.fitted, f.failed, f.retries);
    }
    if report.regenerations > 0 {
        rec.warn(format!("regenerated {} explosive replicates", report.regenerations));
    }
    for m in &report.messages {
        rec.warn(m.clone());
    }
    finish(rec, config.seed)
}
