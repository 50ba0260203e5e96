//! Gaussian-interference data-generating process.
//!
//! `Y_{t+1} = (A + B_t) g(Y_t, w(t+1)) + eps_t` with `A` drawn once,
//! `B_t` fresh each period and i.i.d. Gaussian noise.
//!
//! `A` is held as `mu/N` plus `sigma/sqrt(N)` times an `N x N` matrix of
//! standard normals stored in `f32`; the dense product is the only O(N^2)
//! kernel and runs row-parallel. For `B_t` two exact samplers exist. `Dense`
//! draws the full matrix row by row. `Projected` uses that `B_t` is
//! independent of everything it multiplies: for fixed inputs `v_1..v_k` the
//! rows of `[B_t v_1 .. B_t v_k]` are i.i.d. Gaussian with mean
//! `(mu_t/N) 1^T v_r` and covariance `(sigma_t^2/N) V^T V`, so they can be
//! drawn in O(N k^2) with the same joint law as a shared dense draw.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentDesign, InterferenceSpec, LinearOutcomeParams, NoiseSpec, PanelData};
use crate::rng::{StreamKey, Streams};
use crate::simulation::{check_assignments, check_divergence, dedup_vectors, PanelSimulator};
use crate::state_evolution::OutcomeFunction;

/// `N x N` Gaussian matrix with i.i.d. entries `N(mean_entry, sd_entry^2)`.
#[derive(Clone, Debug)]
pub struct InterferenceMatrix {
    n: usize,
    mean_entry: f64,
    sd_entry: f64,
    standard: Option<Vec<f32>>,
}

impl InterferenceMatrix {
    /// Entries `N(mean_scale/N, sd_scale^2/N)`, row `i` drawn from sub-stream
    /// `i` of `key`.
    pub fn sample(n: usize, mean_scale: f64, sd_scale: f64, key: StreamKey) -> Self {
        let nf = n as f64;
        let standard = (sd_scale != 0.0).then(|| {
            let mut z = vec![0f32; n * n];
            z.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
                let mut rng = key.indexed(i as u64);
                for x in row.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
            });
            z
        });
        InterferenceMatrix {
            n,
            mean_entry: mean_scale / nf,
            sd_entry: sd_scale / nf.sqrt(),
            standard,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let z = self.standard.as_ref().map_or(0.0, |z| f64::from(z[i * self.n + j]));
        self.mean_entry + self.sd_entry * z
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.n * self.n)
            .map(|k| self.entry(k / self.n, k % self.n))
            .collect()
    }

    /// Adds `M v_r` to `out_r` for every input.
    pub fn apply_add(&self, inputs: &[Vec<f64>], outputs: &mut [Vec<f64>]) {
        for (v, out) in inputs.iter().zip(outputs.iter_mut()) {
            let shift = self.mean_entry * v.iter().sum::<f64>();
            out.iter_mut().for_each(|o| *o += shift);
        }
        let Some(z) = &self.standard else { return };
        let n = self.n;
        let k = inputs.len();
        let mut rows = vec![0.0; n * k];
        rows.par_chunks_mut(k).enumerate().for_each(|(i, acc)| {
            let zrow = &z[i * n..(i + 1) * n];
            for (r, v) in inputs.iter().enumerate() {
                acc[r] = dot_f32_f64(zrow, v);
            }
        });
        for (r, out) in outputs.iter_mut().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.sd_entry * rows[i * k + r];
            }
        }
    }
}

fn dot_f32_f64(a: &[f32], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (x, y) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += f64::from(x[l]) * y[l];
        }
    }
    let tail: f64 = a[chunks..]
        .iter()
        .zip(&b[chunks..])
        .map(|(x, y)| f64::from(*x) * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Fixed interference matrix `A` of a replication.
pub fn sample_fixed_interference(n_units: usize, interference: &InterferenceSpec, streams: &Streams) -> InterferenceMatrix {
    InterferenceMatrix::sample(n_units, interference.mu, interference.sigma, streams.key("interference/fixed"))
}

/// How the time-varying matrix is sampled. Both are exact in distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeVaryingDraw {
    #[default]
    Projected,
    Dense,
}

/// The outcome map `g` applied by the DGP.
#[derive(Clone)]
pub enum OutcomeModel {
    /// Linear family with per-unit coefficients drawn once per unit.
    Linear(LinearOutcomeParams),
    /// Any function, shared by all units.
    General(Arc<dyn OutcomeFunction>),
}

impl std::fmt::Debug for OutcomeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutcomeModel::Linear(p) => f.debug_tuple("Linear").field(p).finish(),
            OutcomeModel::General(_) => f.write_str("General(..)"),
        }
    }
}

/// Per-unit coefficient draws `(delta + theta, xi, lambda, gamma)`.
struct UnitCoefficients {
    base: Vec<f64>,
    xi: Vec<f64>,
    lambda: Vec<f64>,
    gamma: Vec<f64>,
}

impl UnitCoefficients {
    fn draw(p: &LinearOutcomeParams, n: usize, streams: &Streams) -> Self {
        let sd = p.unit_coef_sd;
        let mut rng = streams.rng("coefficients");
        let mut c = UnitCoefficients {
            base: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
            lambda: Vec::with_capacity(n),
            gamma: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let mut draw = |m: f64, s: f64| m + s * rng.sample::<f64, _>(StandardNormal);
            let delta = draw(p.delta, sd.delta);
            let theta = draw(p.theta_bar, sd.theta);
            c.base.push(delta + theta);
            c.xi.push(draw(p.xi, sd.xi));
            c.lambda.push(draw(p.lambda, sd.lambda));
            c.gamma.push(draw(p.gamma, sd.gamma));
        }
        c
    }
}

enum UnitMap<'a> {
    Linear(UnitCoefficients),
    General(&'a dyn OutcomeFunction),
}

impl UnitMap<'_> {
    fn apply(&self, y: &[f64], w: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            UnitMap::Linear(c) => out.extend((0..y.len()).map(|n| {
                c.base[n] + c.xi[n] * y[n] + w[n] * (c.lambda[n] + c.gamma[n] * y[n])
            })),
            UnitMap::General(g) => out.extend(y.iter().zip(w).map(|(&y, &w)| g.eval(y, w))),
        }
    }
}

/// Simulation config for the Gaussian-interference DGP.
#[derive(Clone, Debug)]
pub struct GaussianDgp {
    pub n_units: usize,
    pub design: ExperimentDesign,
    pub outcome: OutcomeModel,
    pub interference: InterferenceSpec,
    pub noise: NoiseSpec,
    /// Initial outcomes before burn-in; i.i.d. `N(0,1)` when absent.
    pub y0: Option<Vec<f64>>,
    /// All-control periods simulated and discarded before `t = 0`.
    pub burn_in: usize,
    pub time_varying: TimeVaryingDraw,
}

impl GaussianDgp {
    pub fn new(
        n_units: usize,
        design: ExperimentDesign,
        params: LinearOutcomeParams,
        interference: InterferenceSpec,
        noise: NoiseSpec,
    ) -> Self {
        GaussianDgp {
            n_units,
            design,
            outcome: OutcomeModel::Linear(params),
            interference,
            noise,
            y0: None,
            burn_in: 0,
            time_varying: TimeVaryingDraw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::param("n_units must be positive"));
        }
        self.design.validate()?;
        self.interference.validate()?;
        self.noise.validate()?;
        if let OutcomeModel::Linear(p) = &self.outcome {
            p.validate()?;
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != self.n_units {
                return Err(Error::param(format!(
                    "y0 has length {}, expected {}",
                    y0.len(),
                    self.n_units
                )));
            }
        }
        Ok(())
    }

    fn time_varying_key(&self, streams: &Streams, label: &str) -> StreamKey {
        if self.interference.resample_time_varying {
            streams.key(&format!("interference/varying/{label}"))
        } else {
            streams.key("interference/varying/frozen")
        }
    }

    fn dense_rows(&self, key: StreamKey) -> DenseRows {
        let nf = self.n_units as f64;
        DenseRows {
            n: self.n_units,
            mean_entry: self.interference.mu_t / nf,
            sd_entry: self.interference.sigma_t / nf.sqrt(),
            key,
        }
    }

    /// Materializes the dense time-varying matrix used at step `t -> t+1`
    /// (row-major). Only meaningful with [`TimeVaryingDraw::Dense`] or a
    /// frozen matrix; intended for small-N checks.
    pub fn dense_time_varying_matrix(&self, streams: &Streams, t: usize) -> Vec<f64> {
        self.dense_rows(self.time_varying_key(streams, &format!("t{t}"))).materialize()
    }

    /// Adds `B_t v_r + eps_t` for period stream `label`.
    fn add_time_varying_and_noise(&self, streams: &Streams, label: &str, inputs: &[Vec<f64>], outputs: &mut [Vec<f64>]) {
        let n = self.n_units;
        let spec = &self.interference;
        let fresh = spec.resample_time_varying;
        let b_key = self.time_varying_key(streams, label);
        match (self.time_varying, fresh) {
            (TimeVaryingDraw::Projected, true) => {
                add_projected(n, spec.mu_t, spec.sigma_t, b_key, inputs, outputs);
            }
            // Dense draws, and frozen matrices (which must repeat exactly),
            // regenerate rows from their sub-streams on every use.
            _ if spec.sigma_t != 0.0 || spec.mu_t != 0.0 => {
                self.dense_rows(b_key).apply_add(inputs, outputs);
            }
            _ => {}
        }
        if self.noise.sigma_e != 0.0 {
            let mut rng = streams.rng(&format!("noise/{label}"));
            let eps: Vec<f64> = (0..n)
                .map(|_| self.noise.sigma_e * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for out in outputs.iter_mut() {
                out.iter_mut().zip(&eps).for_each(|(o, e)| *o += e);
            }
        }
    }
}

/// Gaussian matrix whose rows are regenerated on demand from sub-streams.
struct DenseRows {
    n: usize,
    mean_entry: f64,
    sd_entry: f64,
    key: StreamKey,
}

impl DenseRows {
    fn row(&self, i: usize) -> Vec<f64> {
        let mut rng = self.key.indexed(i as u64);
        (0..self.n)
            .map(|_| self.mean_entry + self.sd_entry * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn materialize(&self) -> Vec<f64> {
        (0..self.n).flat_map(|i| self.row(i)).collect()
    }

    fn apply_add(&self, inputs: &[Vec<f64>], outputs: &mut [Vec<f64>]) {
        let n = self.n;
        let k = inputs.len();
        let mut rows = vec![0.0; n * k];
        rows.par_chunks_mut(k).enumerate().for_each(|(i, acc)| {
            let row = self.row(i);
            for (r, v) in inputs.iter().enumerate() {
                acc[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
            }
        });
        for (r, out) in outputs.iter_mut().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += rows[i * k + r];
            }
        }
    }
}

/// Exact joint draw of `B v_1 .. B v_k` for a fresh Gaussian `B`.
fn add_projected(n: usize, mu_t: f64, sigma_t: f64, key: StreamKey, inputs: &[Vec<f64>], outputs: &mut [Vec<f64>]) {
    let nf = n as f64;
    for (v, out) in inputs.iter().zip(outputs.iter_mut()) {
        let shift = mu_t / nf * v.iter().sum::<f64>();
        out.iter_mut().for_each(|o| *o += shift);
    }
    if sigma_t == 0.0 {
        return;
    }
    let k = inputs.len();
    let mut gram = vec![0.0; k * k];
    for r in 0..k {
        for s in 0..=r {
            let g: f64 = inputs[r].iter().zip(&inputs[s]).map(|(a, b)| a * b).sum();
            gram[r * k + s] = g;
            gram[s * k + r] = g;
        }
    }
    let chol = cholesky_psd(&gram, k);
    let scale = sigma_t / nf.sqrt();
    let mut rng = key.rng();
    let mut z = vec![0.0; k];
    for i in 0..n {
        for zr in z.iter_mut() {
            *zr = rng.sample(StandardNormal);
        }
        for (r, out) in outputs.iter_mut().enumerate() {
            let lz: f64 = (0..=r).map(|s| chol[r * k + s] * z[s]).sum();
            out[i] += scale * lz;
        }
    }
}

/// Lower Cholesky factor of a positive semi-definite matrix; directions with
/// (numerically) zero pivot get a zero column.
fn cholesky_psd(a: &[f64], k: usize) -> Vec<f64> {
    let mut l = vec![0.0; k * k];
    let max_diag = (0..k).map(|i| a[i * k + i]).fold(0.0f64, f64::max);
    let tol = max_diag * 1e-13;
    for j in 0..k {
        let d = a[j * k + j] - (0..j).map(|s| l[j * k + s] * l[j * k + s]).sum::<f64>();
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[j * k + j] = ljj;
        for i in j + 1..k {
            let v = a[i * k + j] - (0..j).map(|s| l[i * k + s] * l[j * k + s]).sum::<f64>();
            l[i * k + j] = v / ljj;
        }
    }
    l
}

impl PanelSimulator for GaussianDgp {
    fn n_units(&self) -> usize {
        self.n_units
    }

    fn design(&self) -> &ExperimentDesign {
        &self.design
    }

    fn simulate_coupled(&self, streams: &Streams, assignments: &[&[f64]]) -> Result<Vec<PanelData>> {
        self.validate()?;
        check_assignments(&self.design, self.n_units, assignments)?;
        let n = self.n_units;
        let horizon = self.design.horizon();
        let a = sample_fixed_interference(n, &self.interference, streams);
        let map = match &self.outcome {
            OutcomeModel::Linear(p) => UnitMap::Linear(UnitCoefficients::draw(p, n, streams)),
            OutcomeModel::General(g) => UnitMap::General(g.as_ref()),
        };
        let mut y = match &self.y0 {
            Some(y0) => y0.clone(),
            None => {
                let mut rng = streams.rng("y0");
                (0..n).map(|_| rng.sample(StandardNormal)).collect()
            }
        };

        let zeros = vec![0.0; n];
        let mut g = Vec::with_capacity(n);
        for b in 0..self.burn_in {
            map.apply(&y, &zeros, &mut g);
            let inputs = vec![std::mem::take(&mut g)];
            let mut next = vec![vec![0.0; n]];
            a.apply_add(&inputs, &mut next);
            self.add_time_varying_and_noise(streams, &format!("burn{b}"), &inputs, &mut next);
            y = next.pop().expect("one output");
            g = inputs.into_iter().next().expect("one input");
            check_divergence(&y, 0, &format!("burn-in period {b}"))?;
        }

        let k = assignments.len();
        let mut outcomes: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mut o = Vec::with_capacity(n * (horizon + 1));
                o.extend_from_slice(&y);
                o
            })
            .collect();
        let mut current: Vec<Vec<f64>> = vec![y; k];
        for t in 0..horizon {
            let messages: Vec<Vec<f64>> = (0..k)
                .map(|r| {
                    let w = &assignments[r][t * n..(t + 1) * n];
                    let mut out = Vec::with_capacity(n);
                    map.apply(&current[r], w, &mut out);
                    out
                })
                .collect();
            let (reps, index) = dedup_vectors(&messages);
            let distinct: Vec<Vec<f64>> = reps.iter().map(|&r| messages[r].clone()).collect();
            let mut next = vec![vec![0.0; n]; distinct.len()];
            a.apply_add(&distinct, &mut next);
            self.add_time_varying_and_noise(streams, &format!("t{t}"), &distinct, &mut next);
            for (r, cur) in current.iter_mut().enumerate() {
                cur.clone_from(&next[index[r]]);
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
