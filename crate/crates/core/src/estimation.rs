//! Total treatment effect from stage-wise lag-1 regressions of the sample
//! mean trajectory, and the two-design equilibrium estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentDesign, PanelData, TTEReport};
use crate::simulation::DIVERGENCE_BOUND;

/// Per-time mean over units, `t = 0..=T`.
pub fn sample_means(panel: &PanelData) -> Vec<f64> {
    let n = panel.n_units() as f64;
    (0..=panel.horizon())
        .map(|t| panel.column(t).iter().sum::<f64>() / n)
        .collect()
}

/// Least squares of `means[t + 1]` on `means[t]` for `t` in `range`.
/// Returns `(slope, intercept)`.
pub fn fit_lag1_ols(means: &[f64], range: std::ops::Range<usize>) -> Result<(f64, f64)> {
    if range.len() < 2 || range.end >= means.len() {
        return Err(Error::SingularFit(format!(
            "need at least two lag pairs inside the series, got range {range:?} of {} means",
            means.len()
        )));
    }
    let x = &means[range.start..range.end];
    let y = &means[range.start + 1..range.end + 1];
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    // Anything below rounding noise of the centered predictor is zero.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 16.0 * k * (f64::EPSILON * scale).powi(2);
    if !(sxx > tol) {
        return Err(Error::SingularFit(format!(
            "predictor has no variance over {range:?}"
        )));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredParams {
    pub xi_hat: f64,
    pub gamma_hat: f64,
    pub lambda_hat: f64,
    pub b1: f64,
    pub a1: f64,
    pub b2: f64,
    pub a2: f64,
}

/// Inverts the two stage regressions `b_j = xi + gamma pi_j`,
/// `a_j = c + lambda pi_j`.
pub fn recover_params(b1: f64, a1: f64, b2: f64, a2: f64, pi1: f64, pi2: f64) -> Result<RecoveredParams> {
    if pi1 == pi2 {
        return Err(Error::NonIdentifiable(pi1));
    }
    let d = pi2 - pi1;
    let params = RecoveredParams {
        xi_hat: 0.5 * (b2 + b1 - (b2 - b1) * (pi2 + pi1) / d),
        gamma_hat: (b2 - b1) / d,
        lambda_hat: (a2 - a1) / d,
        b1,
        a1,
        b2,
        a2,
    };
    if [params.xi_hat, params.gamma_hat, params.lambda_hat]
        .iter()
        .all(|v| v.is_finite())
    {
        Ok(params)
    } else {
        Err(Error::SingularFit("recovered parameters are not finite".into()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClampBounds {
    pub low: Option<f64>,
    pub high: Option<f64>,
}

impl ClampBounds {
    pub const UNBOUNDED: ClampBounds = ClampBounds {
        low: None,
        high: None,
    };

    pub fn new(low: Option<f64>, high: Option<f64>) -> Result<Self> {
        let c = ClampBounds { low, high };
        c.validate()?;
        Ok(c)
    }

    pub fn between(low: f64, high: f64) -> Result<Self> {
        Self::new(Some(low), Some(high))
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.is_some_and(f64::is_nan) || self.high.is_some_and(f64::is_nan) {
            return Err(Error::param("clamp bound is NaN"));
        }
        if let (Some(l), Some(h)) = (self.low, self.high) {
            if l > h {
                return Err(Error::param(format!("clamp bounds [{l}, {h}] are inverted")));
            }
        }
        Ok(())
    }

    pub fn is_unbounded(&self) -> bool {
        self.low.is_none() && self.high.is_none()
    }

    pub fn apply(&self, x: f64) -> f64 {
        let x = self.low.map_or(x, |l| x.max(l));
        self.high.map_or(x, |h| x.min(h))
    }
}

/// Estimator output beyond the report: the fitted parameters and the
/// forecast all-treated mean trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TteFit {
    pub params: RecoveredParams,
    pub tte: Vec<f64>,
    pub nu_treated: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TteEstimator {
    pub clamp: ClampBounds,
    /// Optional bounds for the forecast all-treated mean; off by default.
    pub nu_clamp: Option<ClampBounds>,
}

impl TteEstimator {
    pub fn new(clamp: ClampBounds) -> Self {
        TteEstimator {
            clamp,
            nu_clamp: None,
        }
    }

    pub fn fit_means(&self, means: &[f64], design: &ExperimentDesign) -> Result<TteFit> {
        self.clamp.validate()?;
        if design.is_override() {
            return Err(Error::param("a single-arm design cannot be used for estimation"));
        }
        let (t1, t2) = (design.t1, design.t2);
        if t1 < 2 || t2 < 2 {
            return Err(Error::param(format!(
                "each stage needs at least two periods, got T1 = {t1}, T2 = {t2}"
            )));
        }
        let horizon = t1 + t2;
        if means.len() != horizon + 1 {
            return Err(Error::param(format!(
                "expected {} means for horizon {horizon}, got {}",
                horizon + 1,
                means.len()
            )));
        }
        let (b1, a1) = fit_lag1_ols(means, 0..t1)?;
        let (b2, a2) = fit_lag1_ols(means, t1..horizon)?;
        let params = recover_params(b1, a1, b2, a2, design.pi1, design.pi2)?;
        let RecoveredParams {
            xi_hat: xi,
            gamma_hat: gamma,
            lambda_hat: lambda,
            ..
        } = params;

        let mut tte = vec![0.0; horizon + 1];
        let mut nu1 = vec![0.0; horizon + 1];
        nu1[0] = means[0];
        for t in 0..horizon {
            let pi = design.prob_at(t + 1);
            let raw = xi * tte[t] + lambda + gamma * nu1[t];
            if self.clamp.is_unbounded() && !(raw.abs() <= DIVERGENCE_BOUND) {
                return Err(Error::Divergence {
                    t: t + 1,
                    detail: format!("estimated TTE reached {raw}"),
                });
            }
            tte[t + 1] = self.clamp.apply(raw);
            let next = means[t + 1] + xi * (nu1[t] - means[t]) + lambda * (1.0 - pi) + gamma * (nu1[t] - pi * means[t]);
            nu1[t + 1] = self.nu_clamp.map_or(next, |c| c.apply(next));
        }
        Ok(TteFit {
            params,
            tte,
            nu_treated: nu1,
        })
    }

    pub fn fit_panel(&self, panel: &PanelData, design: &ExperimentDesign) -> Result<TteFit> {
        if panel.horizon() != design.horizon() {
            return Err(Error::param(format!(
                "panel horizon {} does not match design horizon {}",
                panel.horizon(),
                design.horizon()
            )));
        }
        self.fit_means(&sample_means(panel), design)
    }
}

/// Point-estimate report for one panel; intervals and truth left empty.
pub fn estimate_tte_trajectory(panel: &PanelData, design: &ExperimentDesign, clamp: ClampBounds) -> Result<TTEReport> {
    let fit = TteEstimator::new(clamp).fit_panel(panel, design)?;
    Ok(TTEReport {
        estimate: fit.tte,
        ci_low: None,
        ci_high: None,
        ground_truth: None,
        replication_id: 0,
        seed: 0,
    })
}

/// Difference of mean outcomes under two Bernoulli designs, per unit of
/// treatment probability.
pub fn tte_equilibrium(mean_pi1: f64, mean_pi2: f64, pi1: f64, pi2: f64) -> Result<f64> {
    if pi1 == pi2 {
        return Err(Error::NonIdentifiable(pi1));
    }
    Ok((mean_pi2 - mean_pi1) / (pi2 - pi1))
}

/// Asymptotic bias of [`tte_equilibrium`] under the linear family.
pub fn equilibrium_bias(
    xi: f64,
    gamma: f64,
    pi1: f64,
    pi2: f64,
    mean_pi1: f64,
    mean_pi2: f64,
    mean_all1: f64,
) -> Result<f64> {
    if gamma == 0.0 {
        return Ok(0.0);
    }
    if xi == 1.0 {
        return Err(Error::Pole);
    }
    if pi1 == pi2 {
        return Err(Error::NonIdentifiable(pi1));
    }
    let weighted = (pi2 * mean_pi2 - pi1 * mean_pi1) / (pi2 - pi1);
    Ok(gamma / (1.0 - xi) * (weighted - mean_all1))
}
