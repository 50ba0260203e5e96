//! Cross-replication summaries and figure-ready CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fmt_f64, TTEReport};

/// Per-time statistics over successful replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: usize,
    pub replications: usize,
    pub mean_estimate: f64,
    pub mean_truth: f64,
    /// 2.5% and 97.5% quantiles of the point estimates across replications.
    pub estimate_q025: f64,
    pub estimate_q975: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub mean_ci_low: Option<f64>,
    pub mean_ci_high: Option<f64>,
    pub mean_ci_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rows: Vec<AggregateRow>,
}

const AGGREGATE_HEADER: [&str; 12] = [
    "t",
    "replications",
    "mean_estimate",
    "mean_truth",
    "estimate_q025",
    "estimate_q975",
    "bias",
    "rmse",
    "coverage",
    "mean_ci_low",
    "mean_ci_high",
    "mean_ci_width",
];

/// Per-time coverage, bias, RMSE and band statistics. Every report must carry
/// ground truth; bands are summarized only when all reports have them.
pub fn coverage_report(reports: &[TTEReport]) -> Result<Aggregate> {
    let first = reports.first().ok_or(Error::EmptyAggregate)?;
    let len = first.estimate.len();
    for r in reports {
        let truth = r
            .ground_truth
            .as_ref()
            .ok_or_else(|| Error::param(format!("replication {} has no ground truth", r.replication_id)))?;
        if r.estimate.len() != len || truth.len() != len {
            return Err(Error::param("reports have different horizons"));
        }
    }
    let with_ci = reports.iter().all(|r| r.ci_low.is_some() && r.ci_high.is_some());
    let k = reports.len() as f64;
    let mut rows = Vec::with_capacity(len);
    let mut estimates = vec![0.0; reports.len()];
    for t in 0..len {
        let truth = |r: &TTEReport| r.ground_truth.as_ref().expect("checked")[t];
        for (e, r) in estimates.iter_mut().zip(reports) {
            *e = r.estimate[t];
        }
        let mean_estimate = estimates.iter().sum::<f64>() / k;
        let mean_truth = reports.iter().map(truth).sum::<f64>() / k;
        let bias = reports.iter().map(|r| r.estimate[t] - truth(r)).sum::<f64>() / k;
        let mse = reports
            .iter()
            .map(|r| (r.estimate[t] - truth(r)).powi(2))
            .sum::<f64>()
            / k;
        estimates.sort_by(f64::total_cmp);
        let (mut coverage, mut ci_low, mut ci_high, mut width) = (None, None, None, None);
        if with_ci {
            let band = |r: &TTEReport| {
                (
                    r.ci_low.as_ref().expect("checked")[t],
                    r.ci_high.as_ref().expect("checked")[t],
                )
            };
            let covered = reports
                .iter()
                .filter(|r| {
                    let (lo, hi) = band(r);
                    lo <= truth(r) && truth(r) <= hi
                })
                .count();
            coverage = Some(covered as f64 / k);
            ci_low = Some(reports.iter().map(|r| band(r).0).sum::<f64>() / k);
            ci_high = Some(reports.iter().map(|r| band(r).1).sum::<f64>() / k);
            width = Some(reports.iter().map(|r| band(r).1 - band(r).0).sum::<f64>() / k);
        }
        rows.push(AggregateRow {
            t,
            replications: reports.len(),
            mean_estimate,
            mean_truth,
            estimate_q025: crate::inference::quantile(&estimates, 0.025),
            estimate_q975: crate::inference::quantile(&estimates, 0.975),
            bias,
            rmse: mse.sqrt(),
            coverage,
            mean_ci_low: ci_low,
            mean_ci_high: ci_high,
            mean_ci_width: width,
        });
    }
    Ok(Aggregate { rows })
}

impl Aggregate {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(AGGREGATE_HEADER)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.replications.to_string(),
                fmt_f64(r.mean_estimate),
                fmt_f64(r.mean_truth),
                fmt_f64(r.estimate_q025),
                fmt_f64(r.estimate_q975),
                fmt_f64(r.bias),
                fmt_f64(r.rmse),
                opt(r.coverage),
                opt(r.mean_ci_low),
                opt(r.mean_ci_high),
                opt(r.mean_ci_width),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::param(format!("bad number `{}` in aggregate", field(i))))
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                if field(i).is_empty() {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            rows.push(AggregateRow {
                t: num(0)? as usize,
                replications: num(1)? as usize,
                mean_estimate: num(2)?,
                mean_truth: num(3)?,
                estimate_q025: num(4)?,
                estimate_q975: num(5)?,
                bias: num(6)?,
                rmse: num(7)?,
                coverage: opt(8)?,
                mean_ci_low: opt(9)?,
                mean_ci_high: opt(10)?,
                mean_ci_width: opt(11)?,
            });
        }
        Ok(Aggregate { rows })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureKind {
    Trajectory,
    DegreeHistogram,
}

/// Trajectory panels: `fig2`, `fig3`, `fig5`, `fig4-left`, `fig5-left`.
/// Degree distribution: `fig4`, `fig4-right`, `fig5-right`.
pub fn figure_kind(id: &str) -> Result<FigureKind> {
    match id {
        "fig2" | "fig3" | "fig5" | "fig4-left" | "fig5-left" => Ok(FigureKind::Trajectory),
        "fig4" | "fig4-right" | "fig5-right" => Ok(FigureKind::DegreeHistogram),
        other => Err(Error::UnknownFigure(other.to_string())),
    }
}

/// Inputs a figure can be drawn from.
#[derive(Clone, Debug, Default)]
pub struct FigureSource {
    pub aggregate: Option<Aggregate>,
    pub degree_histogram: Option<Vec<(usize, usize)>>,
}

/// Writes one tidy CSV. Trajectory panels have columns
/// `t,mean_estimate,ci_low,ci_high,mean_truth,band_low,band_high`, where
/// `ci_*` average the per-replication resampling bands and `band_*` are the
/// spread of the point estimates. Degree panels have `degree,count`.
pub fn emit_figure_data<W: Write>(source: &FigureSource, id: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match figure_kind(id)? {
        FigureKind::Trajectory => {
            let agg = source
                .aggregate
                .as_ref()
                .filter(|a| !a.rows.is_empty() && a.rows[0].replications > 0)
                .ok_or(Error::EmptyAggregate)?;
            w.write_record(["t", "mean_estimate", "ci_low", "ci_high", "mean_truth", "band_low", "band_high"])?;
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            for r in &agg.rows {
                w.write_record([
                    r.t.to_string(),
                    fmt_f64(r.mean_estimate),
                    opt(r.mean_ci_low),
                    opt(r.mean_ci_high),
                    fmt_f64(r.mean_truth),
                    fmt_f64(r.estimate_q025),
                    fmt_f64(r.estimate_q975),
                ])?;
            }
        }
        FigureKind::DegreeHistogram => {
            let hist = source.degree_histogram.as_ref().ok_or_else(|| {
                Error::param("no degree histogram; the run did not use a graph scenario")
            })?;
            write_degree_histogram(hist, &mut w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_degree_histogram<W: Write>(hist: &[(usize, usize)], w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(["degree", "count"])?;
    for (d, c) in hist {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    Ok(())
}

pub fn read_degree_histogram<R: Read>(input: R) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::param("bad degree histogram row"))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}
