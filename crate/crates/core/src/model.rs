//! Shared domain types: panels, designs, interference and outcome parameters,
//! state-evolution states and treatment-effect reports.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Observed outcomes of `n_units` units over times `0..=horizon`, plus the
/// treatment assignment for times `1..=horizon`.
///
/// Outcomes are stored by time: column `t` (the vector `Y_t`) is the
/// contiguous slice `outcomes[t * n_units .. (t + 1) * n_units]`. Treatments
/// are stored as `horizon` rows of length `n_units`; row `t - 1` holds
/// `w(t)`, the assignment that drives the transition `Y_{t-1} -> Y_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    n_units: usize,
    horizon: usize,
    outcomes: Vec<f64>,
    treatments: Vec<f64>,
}

impl PanelData {
    /// Builds a panel and rejects it if [`validate_panel`] finds violations.
    pub fn new(
        n_units: usize,
        horizon: usize,
        outcomes: Vec<f64>,
        treatments: Vec<f64>,
    ) -> Result<Self> {
        let panel = Self::from_parts_unchecked(n_units, horizon, outcomes, treatments);
        let report = validate_panel(&panel);
        if report.is_ok() {
            Ok(panel)
        } else {
            Err(Error::InvalidPanel(report.to_string()))
        }
    }

    pub fn from_parts_unchecked(
        n_units: usize,
        horizon: usize,
        outcomes: Vec<f64>,
        treatments: Vec<f64>,
    ) -> Self {
        PanelData {
            n_units,
            horizon,
            outcomes,
            treatments,
        }
    }

    /// Builds a panel from per-unit trajectories (`rows[n][t]`).
    pub fn from_unit_rows(rows: &[Vec<f64>], treatments: Vec<f64>) -> Result<Self> {
        let n_units = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidPanel("ragged or empty unit rows".into()));
        }
        let horizon = width - 1;
        let mut outcomes = vec![0.0; n_units * width];
        for (n, row) in rows.iter().enumerate() {
            for (t, &y) in row.iter().enumerate() {
                outcomes[t * n_units + n] = y;
            }
        }
        Self::new(n_units, horizon, outcomes, treatments)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.outcomes[t * self.n_units..(t + 1) * self.n_units]
    }

    pub fn outcome(&self, unit: usize, t: usize) -> f64 {
        self.outcomes[t * self.n_units + unit]
    }

    /// Treatment of `unit` at time `t`, for `t` in `1..=horizon`.
    pub fn treatment(&self, t: usize, unit: usize) -> f64 {
        assert!(t >= 1 && t <= self.horizon, "treatment time {t} out of range");
        self.treatments[(t - 1) * self.n_units + unit]
    }

    pub fn treatment_row(&self, t: usize) -> &[f64] {
        &self.treatments[(t - 1) * self.n_units..t * self.n_units]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn treatments(&self) -> &[f64] {
        &self.treatments
    }

    /// Trajectory of one unit, `Y_0(n) ..= Y_T(n)`.
    pub fn unit_trajectory(&self, unit: usize) -> Vec<f64> {
        (0..=self.horizon).map(|t| self.outcome(unit, t)).collect()
    }

    /// Panel restricted to the given units (in the given order), keeping
    /// their outcomes and treatment assignments.
    pub fn select_units(&self, units: &[usize]) -> PanelData {
        let m = units.len();
        let mut outcomes = Vec::with_capacity(m * (self.horizon + 1));
        for t in 0..=self.horizon {
            let col = self.column(t);
            outcomes.extend(units.iter().map(|&u| col[u]));
        }
        let mut treatments = Vec::with_capacity(m * self.horizon);
        for t in 1..=self.horizon {
            let row = self.treatment_row(t);
            treatments.extend(units.iter().map(|&u| row[u]));
        }
        PanelData::from_parts_unchecked(m, self.horizon, outcomes, treatments)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ZeroUnits,
    ZeroHorizon,
    OutcomeShape { expected: usize, found: usize },
    TreatmentShape { expected: usize, found: usize },
    NonFiniteOutcome { unit: usize, t: usize },
    NonFiniteTreatment { t: usize, unit: usize },
    NonBinaryTreatment { t: usize, unit: usize, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::ZeroUnits => write!(f, "panel has no units"),
            Violation::ZeroHorizon => write!(f, "panel horizon is zero"),
            Violation::OutcomeShape { expected, found } => {
                write!(f, "outcomes hold {found} values, expected N*(T+1) = {expected}")
            }
            Violation::TreatmentShape { expected, found } => {
                write!(f, "treatments hold {found} values, expected T*N = {expected}")
            }
            Violation::NonFiniteOutcome { unit, t } => {
                write!(f, "outcome of unit {unit} at t={t} is not finite")
            }
            Violation::NonFiniteTreatment { t, unit } => {
                write!(f, "treatment of unit {unit} at t={t} is not finite")
            }
            Violation::NonBinaryTreatment { t, unit, value } => {
                write!(f, "treatment of unit {unit} at t={t} is {value}, expected 0 or 1")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PanelValidation {
    pub violations: Vec<Violation>,
}

impl PanelValidation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for PanelValidation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every panel invariant and reports each violation with its
/// coordinates. Treatments must be 0/1 since all designs here are Bernoulli.
pub fn validate_panel(panel: &PanelData) -> PanelValidation {
    let mut violations = Vec::new();
    let (n, horizon) = (panel.n_units, panel.horizon);
    if n == 0 {
        violations.push(Violation::ZeroUnits);
    }
    if horizon == 0 {
        violations.push(Violation::ZeroHorizon);
    }
    let expected_outcomes = n * (horizon + 1);
    let expected_treatments = n * horizon;
    let outcomes_ok = panel.outcomes.len() == expected_outcomes;
    let treatments_ok = panel.treatments.len() == expected_treatments;
    if !outcomes_ok {
        violations.push(Violation::OutcomeShape {
            expected: expected_outcomes,
            found: panel.outcomes.len(),
        });
    }
    if !treatments_ok {
        violations.push(Violation::TreatmentShape {
            expected: expected_treatments,
            found: panel.treatments.len(),
        });
    }
    if n > 0 {
        for (i, y) in panel.outcomes.iter().enumerate() {
            if !y.is_finite() {
                violations.push(Violation::NonFiniteOutcome {
                    unit: i % n,
                    t: i / n,
                });
            }
        }
        for (i, &w) in panel.treatments.iter().enumerate() {
            let (t, unit) = (i / n + 1, i % n);
            if !w.is_finite() {
                violations.push(Violation::NonFiniteTreatment { t, unit });
            } else if w != 0.0 && w != 1.0 {
                violations.push(Violation::NonBinaryTreatment { t, unit, value: w });
            }
        }
    }
    PanelValidation { violations }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignMode {
    /// Independent Bernoulli(pi_j) draw per stage, held fixed within it.
    TwoStageStatic,
    /// Stage-1 treated units stay treated; stage 2 tops up to pi2.
    StaggeredRollout,
    /// Fresh Bernoulli(pi_j) draw every period.
    MicroRandomized,
}

/// Two-stage Bernoulli design: probability `pi1` for periods `1..=t1`, `pi2`
/// for `t1+1..=t1+t2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub pi1: f64,
    pub pi2: f64,
    pub t1: usize,
    pub t2: usize,
    pub mode: DesignMode,
    #[serde(default)]
    pub all_control_override: bool,
    #[serde(default)]
    pub all_treated_override: bool,
}

impl ExperimentDesign {
    pub fn new(pi1: f64, pi2: f64, t1: usize, t2: usize, mode: DesignMode) -> Result<Self> {
        let design = ExperimentDesign {
            pi1,
            pi2,
            t1,
            t2,
            mode,
            all_control_override: false,
            all_treated_override: false,
        };
        design.validate()?;
        Ok(design)
    }

    /// The same horizon with every unit forced to control.
    pub fn all_control(&self) -> Self {
        ExperimentDesign {
            all_control_override: true,
            all_treated_override: false,
            ..*self
        }
    }

    /// The same horizon with every unit forced to treatment.
    pub fn all_treated(&self) -> Self {
        ExperimentDesign {
            all_control_override: false,
            all_treated_override: true,
            ..*self
        }
    }

    pub fn horizon(&self) -> usize {
        self.t1 + self.t2
    }

    pub fn is_override(&self) -> bool {
        self.all_control_override || self.all_treated_override
    }

    /// Treatment probability in force at time `t` (`1..=horizon`).
    pub fn prob_at(&self, t: usize) -> f64 {
        if self.all_treated_override {
            1.0
        } else if self.all_control_override {
            0.0
        } else if t <= self.t1 {
            self.pi1
        } else {
            self.pi2
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("pi1", self.pi1), ("pi2", self.pi2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("{name} = {p} is not a probability")));
            }
        }
        if self.t1 == 0 || self.t2 == 0 {
            return Err(Error::param("stage lengths t1 and t2 must be positive"));
        }
        if self.all_control_override && self.all_treated_override {
            return Err(Error::param("both override flags are set"));
        }
        if !self.is_override() && self.pi1 == self.pi2 {
            return Err(Error::NonIdentifiable(self.pi1));
        }
        if self.mode == DesignMode::StaggeredRollout && self.pi2 < self.pi1 {
            return Err(Error::param("staggered roll-out requires pi2 >= pi1"));
        }
        Ok(())
    }

    /// Draws the `horizon x n_units` treatment matrix (row `t-1` is `w(t)`).
    pub fn assign(&self, n_units: usize, rng: &mut StreamRng) -> Vec<f64> {
        let horizon = self.horizon();
        if self.is_override() {
            let w = if self.all_treated_override { 1.0 } else { 0.0 };
            return vec![w; horizon * n_units];
        }
        let bernoulli =
            |rng: &mut StreamRng, p: f64| -> f64 { f64::from(u8::from(rng.random::<f64>() < p)) };
        let mut treatments = Vec::with_capacity(horizon * n_units);
        match self.mode {
            DesignMode::TwoStageStatic | DesignMode::StaggeredRollout => {
                let stage1: Vec<f64> = (0..n_units).map(|_| bernoulli(rng, self.pi1)).collect();
                let stage2: Vec<f64> = if self.mode == DesignMode::TwoStageStatic {
                    (0..n_units).map(|_| bernoulli(rng, self.pi2)).collect()
                } else {
                    // Each stage-1 control joins with probability
                    // (pi2 - pi1) / (1 - pi1), so the stage-2 marginal is pi2.
                    let top_up = if self.pi1 >= 1.0 {
                        0.0
                    } else {
                        (self.pi2 - self.pi1) / (1.0 - self.pi1)
                    };
                    stage1
                        .iter()
                        .map(|&w| {
                            let joins = bernoulli(rng, top_up);
                            if w == 1.0 {
                                1.0
                            } else {
                                joins
                            }
                        })
                        .collect()
                };
                for _ in 0..self.t1 {
                    treatments.extend_from_slice(&stage1);
                }
                for _ in 0..self.t2 {
                    treatments.extend_from_slice(&stage2);
                }
            }
            DesignMode::MicroRandomized => {
                for t in 1..=horizon {
                    let p = self.prob_at(t);
                    treatments.extend((0..n_units).map(|_| bernoulli(rng, p)));
                }
            }
        }
        treatments
    }
}

/// Gaussian interference scales: the fixed matrix has entries
/// `N(mu/N, sigma^2/N)`, the time-varying one `N(mu_t/N, sigma_t^2/N)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSpec {
    pub mu: f64,
    pub sigma: f64,
    pub mu_t: f64,
    pub sigma_t: f64,
    #[serde(default = "default_true")]
    pub resample_time_varying: bool,
}

fn default_true() -> bool {
    true
}

impl InterferenceSpec {
    pub fn new(mu: f64, sigma: f64, mu_t: f64, sigma_t: f64) -> Self {
        InterferenceSpec {
            mu,
            sigma,
            mu_t,
            sigma_t,
            resample_time_varying: true,
        }
    }

    /// Deterministic interference `mu_total / N` in every entry.
    pub fn mean_only(mu_total: f64) -> Self {
        Self::new(mu_total, 0.0, 0.0, 0.0)
    }

    pub fn total_mean(&self) -> f64 {
        self.mu + self.mu_t
    }

    pub fn total_variance(&self) -> f64 {
        self.sigma * self.sigma + self.sigma_t * self.sigma_t
    }

    /// True when `mu + mu_t = 1`, the normalization used with the linear
    /// outcome family.
    pub fn is_normalized(&self) -> bool {
        (self.total_mean() - 1.0).abs() <= 1e-12
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu_t.is_finite()) {
            return Err(Error::param("interference means must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma_t >= 0.0)
            || !self.sigma.is_finite()
            || !self.sigma_t.is_finite()
        {
            return Err(Error::param("interference scales must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_e: f64,
}

impl NoiseSpec {
    pub fn new(sigma_e: f64) -> Self {
        NoiseSpec { sigma_e }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_e >= 0.0 && self.sigma_e.is_finite() {
            Ok(())
        } else {
            Err(Error::param("sigma_e must be finite and >= 0"))
        }
    }
}

/// Per-unit standard deviations of the linear-family coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSd {
    pub delta: f64,
    pub xi: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl CoefficientSd {
    pub fn is_zero(&self) -> bool {
        *self == CoefficientSd::default()
    }
}

/// Population means of the linear outcome family
/// `g(y, w) = delta + xi*y + lambda*w + gamma*y*w + theta`, where `theta`
/// is the unit's aggregated covariate effect with mean `theta_bar`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearOutcomeParams {
    pub delta: f64,
    pub xi: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub theta_bar: f64,
    #[serde(default)]
    pub unit_coef_sd: CoefficientSd,
}

impl LinearOutcomeParams {
    pub fn new(delta: f64, xi: f64, lambda: f64, gamma: f64, theta_bar: f64) -> Self {
        LinearOutcomeParams {
            delta,
            xi,
            lambda,
            gamma,
            theta_bar,
            unit_coef_sd: CoefficientSd::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let means = [self.delta, self.xi, self.lambda, self.gamma, self.theta_bar];
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("linear outcome coefficients must be finite"));
        }
        let sd = self.unit_coef_sd;
        let sds = [sd.delta, sd.xi, sd.lambda, sd.gamma, sd.theta];
        if sds.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("coefficient sds must be finite and >= 0"));
        }
        Ok(())
    }

    /// Mean-coefficient evaluation of `g`.
    pub fn eval(&self, y: f64, w: f64) -> f64 {
        self.delta + self.theta_bar + self.xi * y + w * (self.lambda + self.gamma * y)
    }
}

/// Mean and standard deviation of the Gaussian limit of outcomes at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SEState {
    pub nu: f64,
    pub rho: f64,
}

impl SEState {
    pub fn new(nu: f64, rho: f64) -> Result<Self> {
        let state = SEState { nu, rho };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu.is_finite() && self.rho.is_finite() && self.rho >= 0.0 {
            Ok(())
        } else {
            Err(Error::param(format!("invalid state ({}, {})", self.nu, self.rho)))
        }
    }
}

/// Estimated total-treatment-effect trajectory of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTEReport {
    pub estimate: Vec<f64>,
    pub ci_low: Option<Vec<f64>>,
    pub ci_high: Option<Vec<f64>>,
    pub ground_truth: Option<Vec<f64>>,
    pub replication_id: u64,
    pub seed: u64,
}

impl TTEReport {
    pub fn horizon(&self) -> usize {
        self.estimate.len().saturating_sub(1)
    }

    /// Writes `replication_id,seed,t,tte,ci_low,ci_high,ground_truth` rows,
    /// leaving absent columns empty.
    pub fn write_csv_rows<W: Write>(&self, out: &mut csv::Writer<W>) -> Result<()> {
        let opt = |v: &Option<Vec<f64>>, t: usize| v.as_ref().map(|v| fmt_f64(v[t]));
        for (t, est) in self.estimate.iter().enumerate() {
            out.write_record([
                self.replication_id.to_string(),
                self.seed.to_string(),
                t.to_string(),
                fmt_f64(*est),
                opt(&self.ci_low, t).unwrap_or_default(),
                opt(&self.ci_high, t).unwrap_or_default(),
                opt(&self.ground_truth, t).unwrap_or_default(),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "replication_id",
        "seed",
        "t",
        "tte",
        "ci_low",
        "ci_high",
        "ground_truth",
    ];
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes a panel as `unit,t,outcome,treatment` rows (unit-major). The
/// treatment field is empty at `t = 0`.
pub fn write_panel_csv<W: Write>(panel: &PanelData, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["unit", "t", "outcome", "treatment"])?;
    for n in 0..panel.n_units() {
        for t in 0..=panel.horizon() {
            let w = if t == 0 {
                String::new()
            } else {
                fmt_f64(panel.treatment(t, n))
            };
            writer.write_record([
                n.to_string(),
                t.to_string(),
                fmt_f64(panel.outcome(n, t)),
                w,
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(input: R) -> Result<PanelData> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows: Vec<(usize, usize, f64, Option<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let parse_err = |what: &str| Error::InvalidPanel(format!("bad {what} in row {record:?}"));
        let unit: usize = field(0).parse().map_err(|_| parse_err("unit"))?;
        let t: usize = field(1).parse().map_err(|_| parse_err("t"))?;
        let y: f64 = field(2).parse().map_err(|_| parse_err("outcome"))?;
        let w = match field(3).as_str() {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| parse_err("treatment"))?),
        };
        rows.push((unit, t, y, w));
    }
    let n_units = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let horizon = rows.iter().map(|r| r.1).max().unwrap_or(0);
    if rows.len() != n_units * (horizon + 1) {
        return Err(Error::InvalidPanel(format!(
            "{} rows do not cover {n_units} units x {} times",
            rows.len(),
            horizon + 1
        )));
    }
    let mut outcomes = vec![f64::NAN; n_units * (horizon + 1)];
    let mut treatments = vec![f64::NAN; n_units * horizon];
    for (unit, t, y, w) in rows {
        outcomes[t * n_units + unit] = y;
        match (t, w) {
            (0, None) => {}
            (0, Some(_)) => {
                return Err(Error::InvalidPanel("treatment given at t=0".into()));
            }
            (_, Some(w)) => treatments[(t - 1) * n_units + unit] = w,
            (_, None) => {
                return Err(Error::InvalidPanel(format!(
                    "missing treatment for unit {unit} at t={t}"
                )));
            }
        }
    }
    PanelData::new(n_units, horizon, outcomes, treatments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::spawn_stream;

    fn minimal() -> PanelData {
        // 2 units, horizon 1: outcome columns t=0,1; one treatment row.
        PanelData::from_parts_unchecked(2, 1, vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0])
    }

    #[test]
    fn minimal_panel_is_valid() {
        assert!(validate_panel(&minimal()).is_ok());
    }

    #[test]
    fn nan_outcome_is_located() {
        let mut outcomes = vec![0.0, 1.0, 2.0, 3.0];
        outcomes[3] = f64::NAN;
        let panel = PanelData::from_parts_unchecked(2, 1, outcomes, vec![0.0, 1.0]);
        let report = validate_panel(&panel);
        assert_eq!(
            report.violations,
            vec![Violation::NonFiniteOutcome { unit: 1, t: 1 }]
        );
    }

    #[test]
    fn short_treatment_matrix_is_shape_violation() {
        // T = 3 (four outcome columns) but only T - 1 = 2 treatment rows.
        let panel = PanelData::from_parts_unchecked(2, 3, vec![0.0; 8], vec![0.0; 4]);
        let report = validate_panel(&panel);
        assert!(report
            .violations
            .contains(&Violation::TreatmentShape { expected: 6, found: 4 }));
    }

    #[test]
    fn non_binary_treatment_flagged() {
        let panel = PanelData::from_parts_unchecked(2, 1, vec![0.0; 4], vec![0.0, 0.5]);
        assert_eq!(
            validate_panel(&panel).violations,
            vec![Violation::NonBinaryTreatment { t: 1, unit: 1, value: 0.5 }]
        );
    }

    #[test]
    fn csv_leaves_t0_treatment_empty() {
        let mut buf = Vec::new();
        write_panel_csv(&minimal(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "unit,t,outcome,treatment");
        assert_eq!(lines[1], "0,0,0,");
        assert_eq!(lines[2], "0,1,2,0");
        assert_eq!(read_panel_csv(text.as_bytes()).unwrap(), minimal());
    }

    #[test]
    fn design_rejects_equal_probabilities() {
        assert!(matches!(
            ExperimentDesign::new(0.3, 0.3, 2, 2, DesignMode::TwoStageStatic),
            Err(Error::NonIdentifiable(_))
        ));
        let d = ExperimentDesign::new(0.3, 0.5, 2, 2, DesignMode::TwoStageStatic).unwrap();
        assert!(d.all_treated().validate().is_ok());
        assert!(ExperimentDesign::new(0.5, 0.2, 2, 2, DesignMode::StaggeredRollout).is_err());
    }

    #[test]
    fn staggered_rollout_is_monotone_with_right_marginal() {
        let d = ExperimentDesign::new(0.2, 0.5, 3, 3, DesignMode::StaggeredRollout).unwrap();
        let n = 20_000;
        let w = d.assign(n, &mut spawn_stream(5, "w"));
        let stage1 = &w[0..n];
        let stage2 = &w[3 * n..4 * n];
        assert!(stage1.iter().zip(stage2).all(|(a, b)| *a <= *b));
        let frac1 = stage1.iter().sum::<f64>() / n as f64;
        let frac2 = stage2.iter().sum::<f64>() / n as f64;
        assert!((frac1 - 0.2).abs() < 0.015, "{frac1}");
        assert!((frac2 - 0.5).abs() < 0.015, "{frac2}");
        // Held fixed within a stage.
        assert_eq!(&w[0..n], &w[2 * n..3 * n]);
    }

    #[test]
    fn micro_randomized_redraws_each_period() {
        let d = ExperimentDesign::new(0.25, 0.75, 2, 2, DesignMode::MicroRandomized).unwrap();
        let n = 1000;
        let w = d.assign(n, &mut spawn_stream(1, "w"));
        assert_ne!(&w[0..n], &w[n..2 * n]);
        let frac4 = w[3 * n..].iter().sum::<f64>() / n as f64;
        assert!((frac4 - 0.75).abs() < 0.06);
    }

    #[test]
    fn select_units_keeps_rows() {
        let p = minimal().select_units(&[1]);
        assert_eq!(p.n_units(), 1);
        assert_eq!(p.unit_trajectory(0), vec![1.0, 3.0]);
        assert_eq!(p.treatment(1, 0), 1.0);
    }
}
