//! Replicated experiments: simulate, estimate, compare with twin-run truth,
//! and write reports.

pub mod config;
pub mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::TteEstimator;
use crate::inference::resample_tte_ci;
use crate::model::TTEReport;
use crate::rng::Streams;

pub use config::{Experiment, ExperimentConfig, Scenario};
pub use report::{coverage_report, emit_figure_data, Aggregate, AggregateRow, FigureSource};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "CAUSAL_MP_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication_id: u64,
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<TTEReport>,
    pub failures: Vec<ReplicationFailure>,
    pub degree_histogram: Option<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub n_units: usize,
    pub horizon: usize,
    pub replications: usize,
    pub successes: usize,
    pub failures: Vec<ReplicationFailure>,
}

pub fn replication_streams(master_seed: u64, replication: u64) -> Streams {
    Streams::new(master_seed).replication(replication)
}

/// One replication: observed panel, twins, point estimate, and band.
pub fn run_replication(exp: &Experiment, replication: u64) -> Result<TTEReport> {
    let streams = replication_streams(exp.config.master_seed, replication);
    let sim = exp.simulator(&streams)?;
    let (observed, pair) = sim.observed_with_twins(&streams)?;
    let fit = TteEstimator::new(exp.clamp).fit_panel(&observed, &exp.design)?;
    let mut report = TTEReport {
        estimate: fit.tte,
        ci_low: None,
        ci_high: None,
        ground_truth: Some(pair.tte_truth),
        replication_id: replication,
        seed: streams.seed(),
    };
    if let Some(spec) = &exp.resample {
        let ci = resample_tte_ci(&observed, &exp.design, exp.clamp, spec, &streams.child("ci"))?;
        // The band is centered on the subsample mean; widen it where needed
        // so it always contains the full-sample estimate.
        let low = ci.ci_low.iter().zip(&report.estimate).map(|(l, e)| l.min(*e)).collect();
        let high = ci.ci_high.iter().zip(&report.estimate).map(|(h, e)| h.max(*e)).collect();
        report.ci_low = Some(low);
        report.ci_high = Some(high);
    }
    Ok(report)
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn configured_workers() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs every replication on a worker pool. Failures are recorded, not fatal.
pub fn run_replications(exp: &Experiment) -> Result<RunOutput> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = configured_workers() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(u64, Result<TTEReport>)> = pool.install(|| {
        (0..exp.config.replications as u64)
            .into_par_iter()
            .map(|r| (r, run_replication(exp, r)))
            .collect()
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                failures.push(ReplicationFailure {
                    replication_id: r,
                    seed: replication_streams(exp.config.master_seed, r).seed(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let degree_histogram = exp
        .graph(&replication_streams(exp.config.master_seed, 0))?
        .map(|g| g.degree_histogram());
    Ok(RunOutput {
        reports,
        failures,
        degree_histogram,
    })
}

pub const CONFIG_FILE: &str = "config.json";
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DEGREE_FILE: &str = "degree_histogram.csv";

/// Validates the config, runs it, and writes all report files into
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let exp = config.prepare()?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("output_dir is not set".into()))?;
    let out = run_replications(&exp)?;
    write_outputs(&exp, &out, &dir)
}

pub fn write_outputs(exp: &Experiment, out: &RunOutput, dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };

    let mut f = create(CONFIG_FILE)?;
    serde_json::to_writer_pretty(&mut f, &exp.config)?;
    writeln!(f)?;
    f.flush()?;

    let mut csv_out = csv::Writer::from_writer(create(REPLICATIONS_FILE)?);
    csv_out.write_record(crate::model::TTEReport::CSV_HEADER)?;
    for r in &out.reports {
        r.write_csv_rows(&mut csv_out)?;
    }
    csv_out.flush()?;

    let mut f = create(REPORTS_FILE)?;
    for r in &out.reports {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    f.flush()?;

    // An empty run still leaves an aggregate with only the header.
    let aggregate = match coverage_report(&out.reports) {
        Ok(a) => a,
        Err(Error::EmptyAggregate) => Aggregate { rows: Vec::new() },
        Err(e) => return Err(e),
    };
    aggregate.write_csv(create(AGGREGATE_FILE)?)?;

    let dpath = dir.join(DEGREE_FILE);
    match &out.degree_histogram {
        Some(hist) => {
            let mut w = csv::Writer::from_writer(create(DEGREE_FILE)?);
            report::write_degree_histogram(hist, &mut w)?;
            w.flush()?;
        }
        None if dpath.exists() => std::fs::remove_file(&dpath)?,
        None => {}
    }

    let summary = RunSummary {
        scenario: exp.config.scenario,
        n_units: exp.n_units,
        horizon: exp.design.horizon(),
        replications: exp.config.replications,
        successes: out.reports.len(),
        failures: out.failures.clone(),
    };
    let mut f = create(SUMMARY_FILE)?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    f.flush()?;
    Ok(summary)
}

/// Loads what a finished run directory offers for figures.
pub fn load_figure_source(dir: &Path) -> Result<FigureSource> {
    let agg_path = dir.join(AGGREGATE_FILE);
    let deg_path = dir.join(DEGREE_FILE);
    Ok(FigureSource {
        aggregate: if agg_path.exists() {
            Some(Aggregate::read_csv(File::open(agg_path)?)?)
        } else {
            None
        },
        degree_histogram: if deg_path.exists() {
            Some(report::read_degree_histogram(File::open(deg_path)?)?)
        } else {
            None
        },
    })
}

/// Writes `figure_<id>.csv` into `dir` and returns its path. Nothing is
/// written when the figure cannot be produced.
pub fn write_figure(dir: &Path, id: &str) -> Result<PathBuf> {
    let source = load_figure_source(dir)?;
    let mut buf = Vec::new();
    emit_figure_data(&source, id, &mut buf)?;
    let path = dir.join(format!("figure_{id}.csv"));
    std::fs::write(&path, buf)?;
    Ok(path)
}
