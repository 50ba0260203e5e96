//! Confidence bands for the TTE trajectory by Bernoulli subsampling of units.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{ClampBounds, TteEstimator};
use crate::model::{ExperimentDesign, PanelData};
use crate::rng::Streams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    /// Inclusion probability of each unit.
    pub q: f64,
    pub b_samples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Use empirical quantiles instead of mean +- z sd.
    #[serde(default)]
    pub percentile: bool,
}

fn default_level() -> f64 {
    0.95
}

impl ResampleSpec {
    pub fn new(q: f64, b_samples: usize) -> Self {
        ResampleSpec {
            q,
            b_samples,
            level: default_level(),
            percentile: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::param(format!("q = {} must lie in (0, 1)", self.q)));
        }
        if self.b_samples < 2 {
            return Err(Error::param("at least two resamples are needed"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param(format!("level = {} must lie in (0, 1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterferenceLevel {
    Low,
    Moderate,
    High,
}

/// Subsampling rate that shrinks with N; stronger interference needs smaller
/// subsamples.
pub fn default_q(n_units: usize, level: InterferenceLevel) -> f64 {
    match level {
        InterferenceLevel::Low => 0.7,
        InterferenceLevel::Moderate => match n_units {
            0..=500 => 0.4,
            501..=2000 => 0.3,
            _ => 0.25,
        },
        InterferenceLevel::High => match n_units {
            0..=500 => 0.2,
            501..=2000 => 0.15,
            _ => 0.1,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleCi {
    pub center: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub sd: Vec<f64>,
    /// Subsamples discarded and drawn again.
    pub redraws: usize,
}

/// Per-time means over the units marked in `keep`.
fn subsample_means(panel: &PanelData, keep: &[usize]) -> Vec<f64> {
    let k = keep.len() as f64;
    (0..=panel.horizon())
        .map(|t| {
            let col = panel.column(t);
            keep.iter().map(|&i| col[i]).sum::<f64>() / k
        })
        .collect()
}

pub fn resample_tte_ci(
    panel: &PanelData,
    design: &ExperimentDesign,
    clamp: ClampBounds,
    spec: &ResampleSpec,
    streams: &Streams,
) -> Result<ResampleCi> {
    spec.validate()?;
    clamp.validate()?;
    let n = panel.n_units();
    if spec.q * (n as f64) < 10.0 {
        return Err(Error::Inference(format!(
            "expected subsample size {:.1} is below 10",
            spec.q * n as f64
        )));
    }
    let estimator = TteEstimator::new(clamp);
    let budget = 10 * spec.b_samples;

    let draws: Vec<Result<(Vec<f64>, usize)>> = (0..spec.b_samples)
        .into_par_iter()
        .map(|b| {
            let mut keep = Vec::with_capacity((spec.q * n as f64) as usize + 16);
            for attempt in 0..=budget {
                let mut rng = streams.rng(&format!("resample/{b}/{attempt}"));
                keep.clear();
                keep.extend((0..n).filter(|_| rng.random::<f64>() < spec.q));
                if keep.len() < 2 {
                    continue;
                }
                match estimator.fit_means(&subsample_means(panel, &keep), design) {
                    Ok(fit) => return Ok((fit.tte, attempt)),
                    Err(Error::SingularFit(_) | Error::Divergence { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Inference(format!("resample {b} failed {budget} times")))
        })
        .collect();
    let mut trajectories = Vec::with_capacity(spec.b_samples);
    let mut redraws = 0;
    for d in draws {
        let (tte, attempts) = d?;
        redraws += attempts;
        trajectories.push(tte);
    }
    if redraws > budget {
        return Err(Error::Inference(format!(
            "{redraws} subsamples had to be redrawn, more than the budget of {budget}"
        )));
    }

    let horizon = panel.horizon();
    let bf = spec.b_samples as f64;
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 * (1.0 + spec.level));
    let mut out = ResampleCi {
        center: Vec::with_capacity(horizon + 1),
        ci_low: Vec::with_capacity(horizon + 1),
        ci_high: Vec::with_capacity(horizon + 1),
        sd: Vec::with_capacity(horizon + 1),
        redraws,
    };
    let mut column = vec![0.0; spec.b_samples];
    for t in 0..=horizon {
        for (c, tr) in column.iter_mut().zip(&trajectories) {
            *c = tr[t];
        }
        let mean = column.iter().sum::<f64>() / bf;
        let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (bf - 1.0);
        let sd = var.sqrt();
        let (lo, hi) = if spec.percentile {
            column.sort_by(f64::total_cmp);
            let tail = 0.5 * (1.0 - spec.level);
            (quantile(&column, tail), quantile(&column, 1.0 - tail))
        } else {
            (mean - z * sd, mean + z * sd)
        };
        out.center.push(mean);
        out.sd.push(sd);
        out.ci_low.push(clamp.apply(lo));
        out.ci_high.push(clamp.apply(hi));
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let (i, frac) = (h.floor() as usize, h - h.floor());
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}
