//! Common interface of every data-generating process: observed panels under a
//! design, and counterfactual twins that share all randomness.

use crate::error::{Error, Result};
use crate::model::{ExperimentDesign, PanelData};
use crate::rng::Streams;

/// Outcomes larger than this in magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Ground-truth twins of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualPair {
    pub all_control: PanelData,
    pub all_treated: PanelData,
    /// `mean(Y_t | all treated) - mean(Y_t | all control)`; entry 0 is 0.
    pub tte_truth: Vec<f64>,
}

impl CounterfactualPair {
    pub fn new(all_control: PanelData, all_treated: PanelData) -> Self {
        let tte_truth = tte_between(&all_control, &all_treated);
        CounterfactualPair {
            all_control,
            all_treated,
            tte_truth,
        }
    }
}

/// Per-time difference of means `treated - control`, pinned to 0 at `t = 0`.
pub fn tte_between(control: &PanelData, treated: &PanelData) -> Vec<f64> {
    let mean = |p: &PanelData, t: usize| p.column(t).iter().sum::<f64>() / p.n_units() as f64;
    (0..=control.horizon())
        .map(|t| if t == 0 { 0.0 } else { mean(treated, t) - mean(control, t) })
        .collect()
}

pub trait PanelSimulator: Sync {
    fn n_units(&self) -> usize;

    fn design(&self) -> &ExperimentDesign;

    /// Runs one trajectory per treatment matrix, all driven by the same
    /// random streams (common random numbers).
    fn simulate_coupled(&self, streams: &Streams, assignments: &[&[f64]]) -> Result<Vec<PanelData>>;

    /// Treatment matrix of the observed experiment.
    fn assign(&self, streams: &Streams) -> Vec<f64> {
        self.design()
            .assign(self.n_units(), &mut streams.rng("treatment"))
    }

    fn simulate_panel(&self, streams: &Streams) -> Result<PanelData> {
        let w = self.assign(streams);
        let mut panels = self.simulate_coupled(streams, &[&w])?;
        Ok(panels.remove(0))
    }

    fn counterfactual_pair(&self, streams: &Streams) -> Result<CounterfactualPair> {
        let (control, treated) = forced_assignments(self.design(), self.n_units());
        let mut panels = self.simulate_coupled(streams, &[&control, &treated])?;
        let treated = panels.pop().ok_or_else(|| Error::param("missing twin"))?;
        let control = panels.pop().ok_or_else(|| Error::param("missing twin"))?;
        Ok(CounterfactualPair::new(control, treated))
    }

    /// Observed panel plus its twins, simulated together so that the truth
    /// shares the observed run's noise wherever the process allows it.
    fn observed_with_twins(&self, streams: &Streams) -> Result<(PanelData, CounterfactualPair)> {
        let observed = self.assign(streams);
        let (control, treated) = forced_assignments(self.design(), self.n_units());
        let mut panels = self.simulate_coupled(streams, &[&observed, &control, &treated])?;
        let treated = panels.pop().ok_or_else(|| Error::param("missing twin"))?;
        let control = panels.pop().ok_or_else(|| Error::param("missing twin"))?;
        let observed = panels.pop().ok_or_else(|| Error::param("missing panel"))?;
        Ok((observed, CounterfactualPair::new(control, treated)))
    }
}

pub(crate) fn forced_assignments(design: &ExperimentDesign, n_units: usize) -> (Vec<f64>, Vec<f64>) {
    let cells = design.horizon() * n_units;
    (vec![0.0; cells], vec![1.0; cells])
}

pub(crate) fn check_assignments(design: &ExperimentDesign, n_units: usize, assignments: &[&[f64]]) -> Result<()> {
    let cells = design.horizon() * n_units;
    if assignments.is_empty() {
        return Err(Error::param("no treatment assignment to simulate"));
    }
    if let Some(bad) = assignments.iter().find(|w| w.len() != cells) {
        return Err(Error::param(format!(
            "treatment matrix has {} entries, expected {cells}",
            bad.len()
        )));
    }
    Ok(())
}

/// Indices of the first occurrence of each distinct vector, and for every
/// input the index of its representative.
pub(crate) fn dedup_vectors(vectors: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
    let mut reps: Vec<usize> = Vec::new();
    let mut map = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        match reps.iter().position(|&r| vectors[r] == *v) {
            Some(k) => map.push(k),
            None => {
                map.push(reps.len());
                reps.push(i);
            }
        }
    }
    (reps, map)
}

pub(crate) fn check_divergence(y: &[f64], t: usize, what: &str) -> Result<()> {
    if let Some(v) = y.iter().find(|v| !(v.abs() <= DIVERGENCE_BOUND)) {
        return Err(Error::Divergence {
            t,
            detail: format!("{what} reached {v}"),
        });
    }
    Ok(())
}
