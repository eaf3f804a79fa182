//! CSV artifacts. Floats are written with 17 significant digits so every
//! reader below reproduces the written values exactly.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::forecast::ForecastResult;
use crate::inference::{Diagnostics, MleResult, PosteriorDraws};
use crate::lfo::LfoPoint;
use crate::series::CompositionalSeries;
use crate::simplex::{Composition, ZeroPolicy};
use crate::study::{FailureRow, ForecastRow, RecoveryRow};

/// Scientific notation with 17 significant digits; `NaN`, `inf`, `-inf`
/// for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str, row: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Data { row, message: format!("cannot parse '{s}' as a number") })
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

/// Header `date,component_1..component_J` when the series has an epoch,
/// `t,component_1..` otherwise.
pub fn write_series_csv<W: Write>(w: W, series: &CompositionalSeries) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec![if series.epoch().is_some() { "date".to_string() } else { "t".to_string() }];
    header.extend((1..=series.components()).map(|j| format!("component_{j}")));
    out.write_record(&header)?;
    for (i, y) in series.observations().iter().enumerate() {
        let t = series.time(i);
        let mut rec = vec![series.date(t).map_or_else(|| t.to_string(), |d| d.format("%Y-%m-%d").to_string())];
        rec.extend(y.values().iter().map(|&v| fmt_f64(v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a series CSV. Rows must be consecutive days (or consecutive
/// integer times); a dated series gets its first row at time `start`.
/// Rows that already sum to one are kept as written, others are closed,
/// and exact zeros follow `policy`.
pub fn read_series_csv<R: Read>(r: R, start: i64, policy: ZeroPolicy) -> Result<CompositionalSeries> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    let first = header.get(0).unwrap_or("");
    let dated = match first {
        "date" => true,
        "t" => false,
        other => return Err(Error::Data { row: 0, message: format!("first column must be 'date' or 't', found '{other}'") }),
    };
    let j = header.len() - 1;
    if j < 2 {
        return Err(Error::Data { row: 0, message: "need at least two component columns".into() });
    }
    let mut obs = Vec::new();
    let mut epoch: Option<NaiveDate> = None;
    let mut t0 = start;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != j + 1 {
            return Err(Error::Data { row, message: format!("expected {} fields, found {}", j + 1, rec.len()) });
        }
        if dated {
            let d = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| Error::Data { row, message: format!("bad date '{}': {e}", &rec[0]) })?;
            match epoch {
                None => epoch = Some(d),
                Some(e) if (d - e).num_days() != i as i64 => {
                    return Err(Error::Data { row, message: format!("date {d} breaks the daily sequence") })
                }
                _ => {}
            }
        } else {
            let t: i64 = rec[0].parse().map_err(|_| Error::Data { row, message: format!("bad time '{}'", &rec[0]) })?;
            if i == 0 {
                t0 = t;
            } else if t != t0 + i as i64 {
                return Err(Error::Data { row, message: format!("time {t} breaks the sequence") });
            }
        }
        let values = (1..=j).map(|k| parse_f64(&rec[k], row)).collect::<Result<Vec<f64>>>()?;
        let y = Composition::new(values.clone())
            .or_else(|_| Composition::from_parts(values, policy))
            .map_err(|e| Error::Data { row, message: e.to_string() })?;
        obs.push(y);
    }
    if obs.is_empty() {
        return Err(Error::Data { row: 1, message: "no observations".into() });
    }
    let series = CompositionalSeries::with_start(obs, t0)?;
    Ok(match epoch {
        Some(e) => series.with_epoch(e),
        None => series,
    })
}

/// One row per draw: parameter columns, then `chain`, `iter`, `lp`.
pub fn write_draws_csv<W: Write>(w: W, draws: &PosteriorDraws) -> Result<()> {
    let mut out = writer(w);
    let mut header = draws.names.clone();
    header.extend(["chain", "iter", "lp"].map(String::from));
    out.write_record(&header)?;
    for (k, row) in draws.values.iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(draws.chain[k].to_string());
        rec.push(draws.iter[k].to_string());
        rec.push(fmt_f64(draws.lp[k]));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads draws written by [`write_draws_csv`] and attaches `diagnostics`.
pub fn read_draws_csv<R: Read>(r: R, diagnostics: Diagnostics) -> Result<PosteriorDraws> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 3 || &header[n - 3] != "chain" || &header[n - 2] != "iter" || &header[n - 1] != "lp" {
        return Err(Error::Data { row: 0, message: "draws must end with chain, iter, lp columns".into() });
    }
    let names: Vec<String> = header.iter().take(n - 3).map(String::from).collect();
    let mut draws = PosteriorDraws { names, values: Vec::new(), chain: Vec::new(), iter: Vec::new(), lp: Vec::new(), diagnostics };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let values = (0..n - 3).map(|k| parse_f64(&rec[k], row)).collect::<Result<Vec<f64>>>()?;
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Data { row, message: format!("bad integer '{s}'") });
        draws.values.push(values);
        draws.chain.push(int(&rec[n - 3])?);
        draws.iter.push(int(&rec[n - 2])?);
        draws.lp.push(parse_f64(&rec[n - 1], row)?);
    }
    Ok(draws)
}

/// `name, estimate, std_error` per estimated coordinate.
pub fn write_mle_csv<W: Write>(w: W, fit: &MleResult) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["name", "estimate", "std_error"])?;
    for ((n, e), s) in fit.names.iter().zip(&fit.estimate).zip(fit.std_errors()) {
        out.write_record([n.clone(), fmt_f64(*e), fmt_f64(s)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: serde::Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<R: Read, T: DeserializeOwned>(r: R) -> Result<T> {
    Ok(serde_json::from_reader(r)?)
}

/// A row of the forecast CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCsvRow {
    pub t: i64,
    /// 1-based component.
    pub component: usize,
    pub mean: f64,
    pub median: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
}

fn level_label(level: f64) -> String {
    // percent, cleaned of binary noise such as 2.5000000000000004
    format!("q{}", (level * 1e8).round() / 1e6)
}

/// Long format: `t, component, mean, median, q2.5, q97.5` (one quantile
/// column per configured level).
pub fn write_forecast_csv<W: Write>(w: W, fc: &ForecastResult) -> Result<()> {
    let mut out = writer(w);
    let levels: Vec<f64> = fc.summaries.first().map(|s| s.quantiles.iter().map(|q| q.0).collect()).unwrap_or_default();
    let mut header: Vec<String> = ["t", "component", "mean", "median"].map(String::from).to_vec();
    header.extend(levels.iter().map(|&l| level_label(l)));
    out.write_record(&header)?;
    for s in &fc.summaries {
        let mut rec = vec![s.t.to_string(), (s.component + 1).to_string(), fmt_f64(s.mean), fmt_f64(s.median)];
        rec.extend(s.quantiles.iter().map(|q| fmt_f64(q.1)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_forecast_csv<R: Read>(r: R) -> Result<Vec<ForecastCsvRow>> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    let fixed = ["t", "component", "mean", "median"];
    if header.len() < 4 || header.iter().take(4).ne(fixed) {
        return Err(Error::Data { row: 0, message: "forecast CSV must start with t, component, mean, median".into() });
    }
    let levels = header
        .iter()
        .skip(4)
        .map(|h| h.strip_prefix('q').and_then(|v| v.parse::<f64>().ok()).map(|v| v / 100.0))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::Data { row: 0, message: "quantile columns must be named q<percent>".into() })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let t = rec[0].parse().map_err(|_| Error::Data { row, message: format!("bad time '{}'", &rec[0]) })?;
        let component = rec[1].parse().map_err(|_| Error::Data { row, message: format!("bad component '{}'", &rec[1]) })?;
        let quantiles = levels.iter().enumerate().map(|(k, &l)| Ok((l, parse_f64(&rec[4 + k], row)?))).collect::<Result<_>>()?;
        rows.push(ForecastCsvRow { t, component, mean: parse_f64(&rec[2], row)?, median: parse_f64(&rec[3], row)?, quantiles });
    }
    Ok(rows)
}

/// Log-ratio residuals `link(y_t) - link(point_t)`: `t, coordinate, residual`.
pub fn write_residuals_csv<W: Write>(w: W, times: &[i64], residuals: &[Vec<f64>]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "coordinate", "residual"])?;
    for (t, r) in times.iter().zip(residuals) {
        for (k, v) in r.iter().enumerate() {
            out.write_record([t.to_string(), (k + 1).to_string(), fmt_f64(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_lfo_csv<W: Write>(w: W, points: &[LfoPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "elpd", "k_hat", "refit", "reliable", "mcse"])?;
    for p in points {
        out.write_record([p.t.to_string(), fmt_f64(p.elpd), fmt_f64(p.k_hat), p.refit.to_string(), p.reliable.to_string(), fmt_f64(p.mcse)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_lfo_csv<R: Read>(r: R) -> Result<Vec<LfoPoint>> {
    read_rows(r)
}

pub fn write_recovery_csv<W: Write>(w: W, rows: &[RecoveryRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["model", "parameter", "truth", "bias", "rmse", "cil", "coverage", "replicates"])?;
    for r in rows {
        out.write_record([
            r.model.clone(),
            r.parameter.clone(),
            fmt_f64(r.truth),
            fmt_f64(r.bias),
            fmt_f64(r.rmse),
            fmt_f64(r.cil),
            fmt_f64(r.coverage),
            r.replicates.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_forecast_table_csv<W: Write>(w: W, rows: &[ForecastRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["model", "component", "frmse", "fmae"])?;
    for r in rows {
        out.write_record([r.model.clone(), r.component.clone(), fmt_f64(r.frmse), fmt_f64(r.fmae)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_failures_csv<W: Write>(w: W, rows: &[FailureRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["model", "fitted", "failed", "retries", "warned"])?;
    for r in rows {
        out.write_record([r.model.clone(), r.fitted.to_string(), r.failed.to_string(), r.retries.to_string(), r.warned.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Deserializes every row of a headed CSV table.
pub fn read_rows<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}
