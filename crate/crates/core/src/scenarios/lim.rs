//! Linear-in-means dynamics on a fixed graph.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentDesign, PanelData};
use crate::rng::Streams;
use crate::scenarios::graph::Graph;
use crate::simulation::{check_assignments, check_divergence, PanelSimulator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Expected degree of the random geometric graph.
    pub kappa: f64,
}

impl Default for LimParams {
    fn default() -> Self {
        LimParams {
            alpha: -1.0,
            beta: 0.8,
            delta: 1.0,
            gamma: 1.0,
            kappa: 8.0,
        }
    }
}

impl LimParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.delta, self.gamma, self.kappa];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("linear-in-means parameters must be finite"));
        }
        if self.kappa <= 0.0 {
            return Err(Error::param("kappa must be positive"));
        }
        Ok(())
    }

    /// Long-run gap between the all-treated and all-control fixed points.
    pub fn equilibrium_tte(&self) -> f64 {
        (self.gamma + self.delta) / (1.0 - self.beta)
    }
}

/// Per-unit shock added at every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LimNoise {
    /// `N(0,1)` plus the unit's first coordinate minus one half.
    #[default]
    Homophily,
    Gaussian,
    Off,
}

#[derive(Clone, Debug)]
pub struct LinearInMeans {
    pub graph: Arc<Graph>,
    pub params: LimParams,
    pub design: ExperimentDesign,
    pub noise: LimNoise,
    /// Redraw the Gaussian shock every period; otherwise one draw per unit
    /// is reused throughout.
    pub noise_redraw: bool,
    pub burn_in: usize,
    /// Outcomes before burn-in; i.i.d. `N(0,1)` when absent.
    pub y0: Option<Vec<f64>>,
}

impl LinearInMeans {
    pub fn new(graph: Arc<Graph>, params: LimParams, design: ExperimentDesign, noise: LimNoise) -> Self {
        LinearInMeans {
            graph,
            params,
            design,
            noise,
            noise_redraw: true,
            burn_in: 0,
            y0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.design.validate()?;
        if self.noise == LimNoise::Homophily && self.graph.positions().is_none() {
            return Err(Error::param("homophily noise needs vertex positions"));
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != self.graph.n_vertices() {
                return Err(Error::param("initial outcomes do not match the graph size"));
            }
        }
        Ok(())
    }

    fn shock(&self, streams: &Streams, label: &str, fixed: &Option<Vec<f64>>) -> Option<Vec<f64>> {
        let n = self.graph.n_vertices();
        let offset = |i: usize| match (self.noise, self.graph.positions()) {
            (LimNoise::Homophily, Some(pos)) => pos[i][0] - 0.5,
            _ => 0.0,
        };
        match self.noise {
            LimNoise::Off => None,
            _ => Some(match fixed {
                Some(f) => f.clone(),
                None => {
                    let mut rng = streams.rng(&format!("noise/{label}"));
                    (0..n)
                        .map(|i| rng.sample::<f64, _>(StandardNormal) + offset(i))
                        .collect()
                }
            }),
        }
    }

    /// One step of the dynamics. `w` is the treatment in force for the step.
    pub fn step(&self, y: &[f64], w: &[f64], shock: Option<&[f64]>, out: &mut Vec<f64>) {
        let p = &self.params;
        let g = &*self.graph;
        out.clear();
        out.extend((0..g.n_vertices()).map(|i| {
            let nb = g.neighbors(i);
            let (my, mw) = if nb.is_empty() {
                (0.0, 0.0)
            } else {
                let k = nb.len() as f64;
                let sy: f64 = nb.iter().map(|&j| y[j as usize]).sum();
                let sw: f64 = nb.iter().map(|&j| w[j as usize]).sum();
                (sy / k, sw / k)
            };
            let e = shock.map_or(0.0, |s| s[i]);
            p.alpha + p.beta * my + p.delta * mw + p.gamma * w[i] + e
        }));
    }
}

impl PanelSimulator for LinearInMeans {
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
        let fixed = if self.noise_redraw {
            None
        } else {
            self.shock(streams, "fixed", &None)
        };
        let mut y = match &self.y0 {
            Some(y0) => y0.clone(),
            None => {
                let mut rng = streams.rng("y0");
                (0..n).map(|_| rng.sample(StandardNormal)).collect()
            }
        };
        let zeros = vec![0.0; n];
        let mut next = Vec::with_capacity(n);
        for b in 0..self.burn_in {
            let e = self.shock(streams, &format!("burn{b}"), &fixed);
            self.step(&y, &zeros, e.as_deref(), &mut next);
            std::mem::swap(&mut y, &mut next);
            check_divergence(&y, 0, &format!("burn-in period {b}"))?;
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
            let e = self.shock(streams, &format!("t{t}"), &fixed);
            for (r, cur) in current.iter_mut().enumerate() {
                let w = &assignments[r][t * n..(t + 1) * n];
                self.step(cur, w, e.as_deref(), &mut next);
                std::mem::swap(cur, &mut next);
                check_divergence(cur, t + 1, "outcome")?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignMode;
    use crate::scenarios::graph::{gen_rgg, Graph};
    use crate::rng::spawn_stream;

    fn staggered(t: usize) -> ExperimentDesign {
        ExperimentDesign::new(0.2, 0.5, t, t, DesignMode::StaggeredRollout).unwrap()
    }

    fn complete(n: usize) -> Arc<Graph> {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Arc::new(Graph::from_edges(n, edges).0)
    }

    #[test]
    fn neighbor_mean_by_hand() {
        let params = LimParams {
            alpha: 0.0,
            beta: 0.8,
            delta: 0.0,
            gamma: 0.0,
            kappa: 1.0,
        };
        let sim = LinearInMeans::new(complete(3), params, staggered(1), LimNoise::Off);
        let mut out = Vec::new();
        sim.step(&[0.0, 3.0, 6.0], &[0.0; 3], None, &mut out);
        let want = [3.6, 2.4, 1.2];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_fixed_point() {
        let params = LimParams {
            alpha: 2.5,
            beta: 0.0,
            delta: 0.0,
            gamma: 0.0,
            kappa: 1.0,
        };
        let mut sim = LinearInMeans::new(complete(5), params, staggered(3), LimNoise::Off);
        sim.y0 = Some(vec![1.0, -4.0, 0.0, 9.0, 3.0]);
        let panel = sim.simulate_panel(&Streams::new(1)).unwrap();
        for t in 1..=6 {
            assert!(panel.column(t).iter().all(|&y| y == 2.5));
        }
    }

    #[test]
    fn isolated_vertex_has_no_neighbor_terms() {
        let g = Arc::new(Graph::from_edges(3, [(0, 1)]).0);
        let sim = LinearInMeans::new(g, LimParams::default(), staggered(1), LimNoise::Off);
        let mut out = Vec::new();
        sim.step(&[5.0, 5.0, 5.0], &[1.0, 1.0, 1.0], None, &mut out);
        // alpha + gamma for the isolated vertex
        assert_eq!(out[2], 0.0);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn no_direct_or_spillover_effect_gives_zero_truth() {
        let graph = Arc::new(gen_rgg(300, 8.0, &mut spawn_stream(3, "graph")).unwrap());
        let params = LimParams {
            gamma: 0.0,
            delta: 0.0,
            ..LimParams::default()
        };
        let mut sim = LinearInMeans::new(graph, params, staggered(5), LimNoise::Homophily);
        sim.burn_in = 4;
        let pair = sim.counterfactual_pair(&Streams::new(8)).unwrap();
        assert!(pair.tte_truth.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truth_approaches_equilibrium() {
        let graph = Arc::new(gen_rgg(400, 8.0, &mut spawn_stream(4, "graph")).unwrap());
        let mut sim = LinearInMeans::new(graph, LimParams::default(), staggered(40), LimNoise::Homophily);
        sim.burn_in = 10;
        let pair = sim.counterfactual_pair(&Streams::new(2)).unwrap();
        // Noise is shared, so the gap follows the deterministic recursion
        // 2 + 0.8 * gap on every unit with a neighbor.
        let isolated = (0..400).filter(|&i| sim.graph.degree(i) == 0).count() as f64;
        let last = *pair.tte_truth.last().unwrap();
        let expected = (1.0 - isolated / 400.0) * 10.0 + isolated / 400.0 * 1.0;
        assert!((last - expected).abs() < 0.02, "{last} vs {expected}");
        assert!((LimParams::default().equilibrium_tte() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn staggered_panel_is_valid_and_reproducible() {
        let graph = Arc::new(gen_rgg(200, 8.0, &mut spawn_stream(5, "graph")).unwrap());
        let mut sim = LinearInMeans::new(graph, LimParams::default(), staggered(6), LimNoise::Homophily);
        sim.burn_in = 10;
        let a = sim.simulate_panel(&Streams::new(4)).unwrap();
        let b = sim.simulate_panel(&Streams::new(4)).unwrap();
        assert_eq!(a, b);
        for n in 0..200 {
            for t in 1..6 {
                assert!(a.treatment(t, n) <= a.treatment(t + 1, n));
            }
        }
    }

    #[test]
    fn frozen_noise_repeats() {
        let mut sim = LinearInMeans::new(complete(4), LimParams::default(), staggered(2), LimNoise::Gaussian);
        sim.noise_redraw = false;
        let streams = Streams::new(3);
        let fixed = sim.shock(&streams, "fixed", &None);
        assert_eq!(sim.shock(&streams, "t0", &fixed), sim.shock(&streams, "t1", &fixed));
    }

    #[test]
    fn homophily_needs_positions() {
        let sim = LinearInMeans::new(complete(4), LimParams::default(), staggered(2), LimNoise::Homophily);
        assert!(sim.simulate_panel(&Streams::new(1)).is_err());
    }
}
