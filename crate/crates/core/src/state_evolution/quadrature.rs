//! Expectations over a standard normal variable.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::spawn_stream;

pub const DEFAULT_GH_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadratureMethod {
    GaussHermite,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub nodes_or_draws: usize,
    pub mc_seed: Option<u64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::gauss_hermite(DEFAULT_GH_NODES)
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite(nodes: usize) -> Self {
        QuadratureSpec {
            method: QuadratureMethod::GaussHermite,
            nodes_or_draws: nodes,
            mc_seed: None,
        }
    }

    pub fn monte_carlo(draws: usize, seed: u64) -> Self {
        QuadratureSpec {
            method: QuadratureMethod::MonteCarlo,
            nodes_or_draws: draws,
            mc_seed: Some(seed),
        }
    }
}

/// Weighted points `(z_i, p_i)` with `E[f(Z)] ~= sum p_i f(z_i)`, `Z ~ N(0,1)`.
#[derive(Clone, Debug)]
pub struct GaussianRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianRule {
    pub fn from_spec(spec: &QuadratureSpec) -> Result<Self> {
        if spec.nodes_or_draws == 0 {
            return Err(Error::param("quadrature needs at least one node"));
        }
        Ok(match spec.method {
            QuadratureMethod::GaussHermite => Self::gauss_hermite(spec.nodes_or_draws),
            QuadratureMethod::MonteCarlo => {
                let mut rng = spawn_stream(spec.mc_seed.unwrap_or(0), "state-evolution/mc");
                let n = spec.nodes_or_draws;
                let points = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                GaussianRule {
                    points,
                    weights: vec![1.0 / n as f64; n],
                }
            }
        })
    }

    /// `n`-point Gauss-Hermite rule rescaled to the standard normal density.
    pub fn gauss_hermite(n: usize) -> Self {
        let (x, w) = hermite_nodes(n);
        let scale = std::f64::consts::PI.sqrt();
        GaussianRule {
            points: x.iter().map(|x| std::f64::consts::SQRT_2 * x).collect(),
            weights: w.iter().map(|w| w / scale).collect(),
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&z, &p)| p * f(z))
            .sum()
    }
}

/// Nodes and weights for `int exp(-x^2) f(x) dx` (physicists' convention),
/// found by Newton iteration on the orthonormal Hermite recurrence.
fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut derivative = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PI_M4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            derivative = (2.0 * nf).sqrt() * p2;
            let step = p1 / derivative;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (derivative * derivative);
        w[n - 1 - i] = w[i];
    }
    // Ascending order; the middle node of an odd rule is exactly zero.
    x.reverse();
    w.reverse();
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}
