//! Binary outcomes driven by the count of active neighbors.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentDesign, PanelData};
use crate::rng::Streams;
use crate::scenarios::graph::Graph;
use crate::simulation::{check_assignments, PanelSimulator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrtParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub p_edge: f64,
}

impl MrtParams {
    /// `(0.5, 0.04, 0.04, 0.01)` with edge probability `3/N`.
    pub fn for_size(n_units: usize) -> Self {
        MrtParams {
            alpha: 0.5,
            beta: 0.04,
            gamma: 0.04,
            delta: 0.01,
            p_edge: 3.0 / n_units as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta, self.p_edge];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("MRT parameters must be finite"));
        }
        if !(0.0..=1.0).contains(&self.p_edge) {
            return Err(Error::param(format!("p_edge = {} is not a probability", self.p_edge)));
        }
        Ok(())
    }

    /// Success probability, clamped to `[0, 1]`.
    pub fn probability(&self, w: f64, y: f64, z: f64) -> f64 {
        let p = self.alpha + self.beta * w * z + self.gamma * y * z + self.delta * w * y * z;
        p.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct BinaryMrt {
    pub graph: Arc<Graph>,
    pub params: MrtParams,
    pub design: ExperimentDesign,
    pub burn_in: usize,
}

impl BinaryMrt {
    pub fn new(graph: Arc<Graph>, params: MrtParams, design: ExperimentDesign) -> Self {
        BinaryMrt {
            graph,
            params,
            design,
            burn_in: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.design.validate()
    }

    fn step(&self, y: &[f64], w: &[f64], u: &[f64], out: &mut Vec<f64>) {
        let g = &*self.graph;
        out.clear();
        out.extend((0..g.n_vertices()).map(|i| {
            let z: f64 = g.neighbors(i).iter().map(|&j| y[j as usize]).sum();
            let p = self.params.probability(w[i], y[i], z);
            if u[i] < p {
                1.0
            } else {
                0.0
            }
        }));
    }
}

fn uniforms(streams: &Streams, label: &str, n: usize) -> Vec<f64> {
    let mut rng = streams.rng(&format!("uniform/{label}"));
    (0..n).map(|_| rng.random::<f64>()).collect()
}

impl PanelSimulator for BinaryMrt {
    fn n_units(&self) -> usize {
        self.graph.n_vertices()
    }

    fn design(&self) -> &ExperimentDesign {
        &self.design
    }

    fn simulate_coupled(&self, streams: &Streams, assignments: &[&[f64]]) -> Result<Vec<PanelData>> {
        self.validate()?;
        let n = self.n_units();
        check_assignments(&self.design, n, assignments)?;
        let horizon = self.design.horizon();
        let mut y: Vec<f64> = uniforms(streams, "y0", n)
            .into_iter()
            .map(|u| if u < self.params.alpha { 1.0 } else { 0.0 })
            .collect();
        let zeros = vec![0.0; n];
        let mut next = Vec::with_capacity(n);
        for b in 0..self.burn_in {
            self.step(&y, &zeros, &uniforms(streams, &format!("burn{b}"), n), &mut next);
            std::mem::swap(&mut y, &mut next);
        }
        let mut outcomes: Vec<Vec<f64>> = assignments
            .iter()
            .map(|_| {
                let mut o = Vec::with_capacity(n * (horizon + 1));
                o.extend_from_slice(&y);
                o
            })
            .collect();
        let mut current = vec![y; assignments.len()];
        for t in 0..horizon {
            let u = uniforms(streams, &format!("t{t}"), n);
            for (r, cur) in current.iter_mut().enumerate() {
                self.step(cur, &assignments[r][t * n..(t + 1) * n], &u, &mut next);
                std::mem::swap(cur, &mut next);
                outcomes[r].extend_from_slice(cur);
            }
        }
        outcomes
            .into_iter()
            .zip(assignments)
            .map(|(o, w)| PanelData::new(n, horizon, o, w.to_vec()))
            .collect()
    }
}
