//! One-dimensional state evolution `(nu_t, rho_t)` of the outcome process.
//!
//! With `Y = nu + rho Z`, `Z ~ N(0,1)` and an independent Bernoulli(pi)
//! treatment `W`,
//!
//! ```text
//! nu'    = (mu + mu_t) E[g(Y, W)]
//! rho'^2 = (sigma^2 + sigma_t^2) E[g(Y, W)^2] + sigma_e^2
//! ```
//!
//! The linear outcome family has a closed form; any other `g` is integrated
//! with a [`GaussianRule`]. The treatment is always marginalized exactly as a
//! two-point mixture.

pub mod quadrature;

use crate::error::{Error, Result};
use crate::model::{
    ExperimentDesign, InterferenceSpec, LinearOutcomeParams, NoiseSpec, PanelData, SEState,
};

pub use quadrature::{GaussianRule, QuadratureMethod, QuadratureSpec, DEFAULT_GH_NODES};

/// Outcome map `g(y, w)` applied by every unit before mixing.
pub trait OutcomeFunction: Send + Sync {
    fn eval(&self, y: f64, w: f64) -> f64;

    /// Polynomial growth order of `g` in `y`.
    fn growth_order(&self) -> usize {
        1
    }
}

impl OutcomeFunction for LinearOutcomeParams {
    fn eval(&self, y: f64, w: f64) -> f64 {
        LinearOutcomeParams::eval(self, y, w)
    }
}

/// Closure-backed outcome function.
pub struct FnOutcome<F> {
    f: F,
    growth_order: usize,
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> FnOutcome<F> {
    pub fn new(growth_order: usize, f: F) -> Self {
        FnOutcome { f, growth_order }
    }
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> OutcomeFunction for FnOutcome<F> {
    fn eval(&self, y: f64, w: f64) -> f64 {
        (self.f)(y, w)
    }

    fn growth_order(&self) -> usize {
        self.growth_order
    }
}

/// Tolerance below zero for a computed `rho'^2` before it counts as an error.
const NEGATIVE_VARIANCE_TOL: f64 = 1e-12;

fn finish_step(mean_g: f64, mean_g2: f64, interference: &InterferenceSpec, noise: &NoiseSpec) -> Result<SEState> {
    let nu = interference.total_mean() * mean_g;
    let mut rho2 = interference.total_variance() * mean_g2 + noise.sigma_e * noise.sigma_e;
    if !(nu.is_finite() && rho2.is_finite()) {
        return Err(Error::Divergence {
            t: 0,
            detail: format!("non-finite state evolution step (nu={nu}, rho^2={rho2})"),
        });
    }
    if rho2 < -NEGATIVE_VARIANCE_TOL {
        return Err(Error::Divergence {
            t: 0,
            detail: format!("negative variance {rho2}"),
        });
    }
    rho2 = rho2.max(0.0);
    Ok(SEState {
        nu,
        rho: rho2.sqrt(),
    })
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(format!("treatment probability {p} outside [0, 1]")))
    }
}

/// Closed-form step for the linear family. Per-unit coefficient spread
/// (`unit_coef_sd`) enters `E[g^2]` as independent coefficient variance.
pub fn se_step_linear(
    state: SEState,
    params: &LinearOutcomeParams,
    treat_prob: f64,
    interference: &InterferenceSpec,
    noise: &NoiseSpec,
) -> Result<SEState> {
    state.validate()?;
    check_prob(treat_prob)?;
    let p = params;
    let sd = p.unit_coef_sd;
    let (ey, ey2) = (state.nu, state.nu * state.nu + state.rho * state.rho);

    let mean_g = p.delta + p.theta_bar + p.xi * ey + treat_prob * (p.lambda + p.gamma * ey);

    // E[(c0 + c1 Y)^2] for independent coefficients c0, c1.
    let second = |m0: f64, v0: f64, m1: f64, v1: f64| (m0 * m0 + v0) + 2.0 * m0 * m1 * ey + (m1 * m1 + v1) * ey2;
    let base_var = sd.delta.powi(2) + sd.theta.powi(2);
    let control = second(p.delta + p.theta_bar, base_var, p.xi, sd.xi.powi(2));
    let treated = second(
        p.delta + p.theta_bar + p.lambda,
        base_var + sd.lambda.powi(2),
        p.xi + p.gamma,
        sd.xi.powi(2) + sd.gamma.powi(2),
    );
    let mean_g2 = treat_prob * treated + (1.0 - treat_prob) * control;
    finish_step(mean_g, mean_g2, interference, noise)
}

fn step_with_rule(
    state: SEState,
    g: &dyn OutcomeFunction,
    treat_prob: f64,
    interference: &InterferenceSpec,
    noise: &NoiseSpec,
    rule: &GaussianRule,
) -> Result<SEState> {
    state.validate()?;
    check_prob(treat_prob)?;
    let moments = |w: f64| {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (&z, &p) in rule.points.iter().zip(&rule.weights) {
            let v = g.eval(state.nu + state.rho * z, w);
            m1 += p * v;
            m2 += p * v * v;
        }
        (m1, m2)
    };
    let (mut mean_g, mut mean_g2) = (0.0, 0.0);
    if treat_prob > 0.0 {
        let (m1, m2) = moments(1.0);
        mean_g += treat_prob * m1;
        mean_g2 += treat_prob * m2;
    }
    if treat_prob < 1.0 {
        let (m1, m2) = moments(0.0);
        mean_g += (1.0 - treat_prob) * m1;
        mean_g2 += (1.0 - treat_prob) * m2;
    }
    finish_step(mean_g, mean_g2, interference, noise)
}

fn check_nodes(g: &dyn OutcomeFunction, quad: &QuadratureSpec) -> Result<()> {
    if quad.method == QuadratureMethod::GaussHermite && quad.nodes_or_draws < g.growth_order() + 1 {
        return Err(Error::param(format!(
            "{} Gauss-Hermite nodes cannot integrate growth order {}",
            quad.nodes_or_draws,
            g.growth_order()
        )));
    }
    Ok(())
}

/// Numerical step for an arbitrary outcome function.
pub fn se_step_general(
    state: SEState,
    g: &dyn OutcomeFunction,
    treat_prob: f64,
    interference: &InterferenceSpec,
    noise: &NoiseSpec,
    quad: &QuadratureSpec,
) -> Result<SEState> {
    check_nodes(g, quad)?;
    let rule = GaussianRule::from_spec(quad)?;
    step_with_rule(state, g, treat_prob, interference, noise, &rule)
}

/// Outcome dynamics fed to [`se_trajectory`].
#[derive(Clone, Copy)]
pub enum Dynamics<'a> {
    Linear(&'a LinearOutcomeParams),
    General {
        g: &'a dyn OutcomeFunction,
        quad: &'a QuadratureSpec,
    },
}

/// Iterates the state evolution over the design horizon: entry 0 is `init`,
/// entry `t` uses the treatment probability in force at time `t`.
pub fn se_trajectory(
    init: SEState,
    design: &ExperimentDesign,
    dynamics: Dynamics<'_>,
    interference: &InterferenceSpec,
    noise: &NoiseSpec,
) -> Result<Vec<SEState>> {
    design.validate()?;
    interference.validate()?;
    noise.validate()?;
    let rule = match dynamics {
        Dynamics::General { g, quad } => {
            check_nodes(g, quad)?;
            Some(GaussianRule::from_spec(quad)?)
        }
        Dynamics::Linear(p) => {
            p.validate()?;
            None
        }
    };
    let horizon = design.horizon();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(init);
    let mut state = init;
    for t in 1..=horizon {
        let pi = design.prob_at(t);
        let next = match (dynamics, &rule) {
            (Dynamics::Linear(p), _) => se_step_linear(state, p, pi, interference, noise),
            (Dynamics::General { g, .. }, Some(rule)) => {
                step_with_rule(state, g, pi, interference, noise, rule)
            }
            (Dynamics::General { .. }, None) => unreachable!("rule built above"),
        };
        state = next.map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { t, detail },
            other => other,
        })?;
        out.push(state);
    }
    Ok(out)
}

/// Per-time `(mean, sd)` of the observed outcomes, with the population
/// (`1/N`) normalization.
pub fn empirical_moments(panel: &PanelData) -> Result<Vec<(f64, f64)>> {
    let n = panel.n_units();
    if n < 2 {
        return Err(Error::param("empirical sd needs at least two units"));
    }
    Ok((0..=panel.horizon())
        .map(|t| column_moments(panel.column(t)))
        .collect())
}

pub(crate) fn column_moments(col: &[f64]) -> (f64, f64) {
    let nf = col.len() as f64;
    let mean = col.iter().sum::<f64>() / nf;
    let var = col.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / nf;
    (mean, var.sqrt())
}

/// Initial state from the empirical moments of the `t = 0` column.
pub fn init_from_panel(panel: &PanelData) -> Result<SEState> {
    if panel.n_units() < 2 {
        return Err(Error::param("empirical sd needs at least two units"));
    }
    let (nu, rho) = column_moments(panel.column(0));
    SEState::new(nu, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignMode;
    use crate::rng::spawn_stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn unit_mixing(var: f64) -> InterferenceSpec {
        InterferenceSpec::new(1.0, var.sqrt(), 0.0, 0.0)
    }

    /// Independent Monte Carlo oracle: samples (Z, W) jointly.
    fn mc_oracle(state: SEState, p: &LinearOutcomeParams, pi: f64, var: f64, sigma_e: f64, draws: usize) -> (f64, f64, f64) {
        let mut rng = spawn_stream(99, "oracle");
        let (mut s1, mut s2, mut s1sq) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let z: f64 = rng.sample(StandardNormal);
            let w = if rng.random::<f64>() < pi { 1.0 } else { 0.0 };
            let y = state.nu + state.rho * z;
            let g = p.delta + p.theta_bar + p.xi * y + p.lambda * w + p.gamma * y * w;
            s1 += g;
            s1sq += g * g;
            s2 += g * g;
        }
        let nf = draws as f64;
        let mean = s1 / nf;
        let sd_of_mean = ((s1sq / nf - mean * mean) / nf).sqrt();
        let rho = (var * s2 / nf + sigma_e * sigma_e).sqrt();
        (mean, rho, sd_of_mean)
    }

    #[test]
    fn noise_floor_only() {
        let zero = LinearOutcomeParams::default();
        for state in [SEState { nu: 3.0, rho: 2.0 }, SEState { nu: -1.0, rho: 0.0 }] {
            let next = se_step_linear(state, &zero, 0.4, &unit_mixing(0.0), &NoiseSpec::new(0.3)).unwrap();
            assert_eq!(next.nu, 0.0);
            assert!((next.rho - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_linear_step() {
        let p = LinearOutcomeParams::new(0.0, 0.5, 1.0, 0.0, 0.0);
        let state = SEState { nu: 1.0, rho: 0.0 };
        let next = se_step_linear(state, &p, 0.2, &unit_mixing(0.0), &NoiseSpec::new(0.0)).unwrap();
        assert!((next.nu - 0.7).abs() < 1e-15);
        assert_eq!(next.rho, 0.0);
        let (mc_nu, _, sd) = mc_oracle(state, &p, 0.2, 0.0, 0.0, 200_000);
        assert!((mc_nu - 0.7).abs() < 3.0 * sd, "{mc_nu} vs 0.7 (sd {sd})");
    }

    #[test]
    fn identity_map_preserves_unit_variance() {
        let p = LinearOutcomeParams::new(0.0, 1.0, 0.0, 0.0, 0.0);
        let state = SEState { nu: 0.0, rho: 1.0 };
        for pi in [0.0, 0.3, 1.0] {
            let next = se_step_linear(state, &p, pi, &unit_mixing(1.0), &NoiseSpec::new(0.0)).unwrap();
            assert!(next.nu.abs() < 1e-15);
            assert!((next.rho - 1.0).abs() < 1e-15);
        }
        let (mc_nu, mc_rho, sd) = mc_oracle(state, &p, 0.3, 1.0, 0.0, 200_000);
        assert!(mc_nu.abs() < 3.0 * sd);
        assert!((mc_rho - 1.0).abs() < 0.01);
    }

    #[test]
    fn heterogeneous_coefficients_match_monte_carlo() {
        let mut p = LinearOutcomeParams::new(0.2, 0.5, 1.0, 0.3, -0.1);
        p.unit_coef_sd = crate::model::CoefficientSd { delta: 0.3, xi: 0.2, lambda: 0.1, gamma: 0.4, theta: 0.5 };
        let state = SEState { nu: 0.7, rho: 0.9 };
        let pi = 0.35;
        let next = se_step_linear(state, &p, pi, &unit_mixing(1.0), &NoiseSpec::new(0.0)).unwrap();
        // Oracle: draw every coefficient per sample.
        let mut rng = spawn_stream(5, "coef-oracle");
        let draws = 400_000;
        let mut s2 = 0.0;
        let nrm = |rng: &mut crate::rng::StreamRng, m: f64, s: f64| m + s * rng.sample::<f64, _>(StandardNormal);
        for _ in 0..draws {
            let y = state.nu + state.rho * rng.sample::<f64, _>(StandardNormal);
            let w = if rng.random::<f64>() < pi { 1.0 } else { 0.0 };
            let sd = p.unit_coef_sd;
            let g = nrm(&mut rng, p.delta, sd.delta)
                + nrm(&mut rng, p.theta_bar, sd.theta)
                + nrm(&mut rng, p.xi, sd.xi) * y
                + w * (nrm(&mut rng, p.lambda, sd.lambda) + nrm(&mut rng, p.gamma, sd.gamma) * y);
            s2 += g * g;
        }
        let mc_rho = (s2 / draws as f64).sqrt();
        assert!((mc_rho - next.rho).abs() / next.rho < 0.01, "{mc_rho} vs {}", next.rho);
    }

    #[test]
    fn constant_function_general_step() {
        let g = FnOutcome::new(0, |_, _| 1.0);
        let inter = InterferenceSpec::new(1.0, 0.5, 0.0, 0.0);
        let next = se_step_general(SEState { nu: 4.0, rho: 2.0 }, &g, 0.5, &inter, &NoiseSpec::new(0.0), &QuadratureSpec::default()).unwrap();
        assert!((next.nu - 1.0).abs() < 1e-13);
        assert!((next.rho - 0.5).abs() < 1e-13);
    }

    #[test]
    fn square_function_gives_second_moment() {
        let g = FnOutcome::new(2, |y, _| y * y);
        let next = se_step_general(SEState { nu: 0.0, rho: 1.0 }, &g, 0.3, &unit_mixing(0.0), &NoiseSpec::new(0.0), &QuadratureSpec::default()).unwrap();
        assert!((next.nu - 1.0).abs() < 1e-13);
    }

    #[test]
    fn general_step_matches_closed_form() {
        let p = LinearOutcomeParams::new(0.3, -0.4, 0.8, 0.6, 0.1);
        let inter = InterferenceSpec::new(0.7, 0.4, 0.3, 0.2);
        let noise = NoiseSpec::new(0.25);
        let state = SEState { nu: -0.6, rho: 1.3 };
        let a = se_step_linear(state, &p, 0.35, &inter, &noise).unwrap();
        let b = se_step_general(state, &p, 0.35, &inter, &noise, &QuadratureSpec::gauss_hermite(64)).unwrap();
        assert!((a.nu - b.nu).abs() < 1e-10);
        assert!((a.rho - b.rho).abs() < 1e-10);
    }

    #[test]
    fn too_few_nodes_rejected() {
        let g = FnOutcome::new(4, |y, _| y.powi(4));
        let r = se_step_general(SEState { nu: 0.0, rho: 1.0 }, &g, 0.5, &unit_mixing(0.0), &NoiseSpec::new(0.0), &QuadratureSpec::gauss_hermite(3));
        assert!(r.is_err());
    }

    #[test]
    fn divergence_reported() {
        let g = FnOutcome::new(1, |_, _| f64::INFINITY);
        let r = se_step_general(SEState { nu: 0.0, rho: 1.0 }, &g, 0.5, &unit_mixing(0.0), &NoiseSpec::new(0.0), &QuadratureSpec::default());
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    fn design(pi1: f64, pi2: f64, t1: usize, t2: usize) -> ExperimentDesign {
        ExperimentDesign::new(pi1, pi2, t1, t2, DesignMode::TwoStageStatic).unwrap()
    }

    #[test]
    fn trajectory_noise_only() {
        let traj = se_trajectory(
            SEState { nu: 0.0, rho: 0.0 },
            &design(0.2, 0.5, 1, 2),
            Dynamics::Linear(&LinearOutcomeParams::default()),
            &unit_mixing(0.0),
            &NoiseSpec::new(0.1),
        )
        .unwrap();
        let nus: Vec<f64> = traj.iter().map(|s| s.nu).collect();
        let rhos: Vec<f64> = traj.iter().map(|s| s.rho).collect();
        assert_eq!(nus, vec![0.0; 4]);
        assert_eq!(rhos[0], 0.0);
        for r in &rhos[1..] {
            assert!((r - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn trajectory_two_stages_and_override() {
        let p = LinearOutcomeParams::new(0.0, 0.5, 1.0, 0.0, 0.0);
        let d = design(0.2, 0.5, 1, 1);
        let init = SEState { nu: 1.0, rho: 0.0 };
        let (inter, noise) = (unit_mixing(0.0), NoiseSpec::new(0.0));
        let nus = |d: &ExperimentDesign| -> Vec<f64> {
            se_trajectory(init, d, Dynamics::Linear(&p), &inter, &noise).unwrap().iter().map(|s| s.nu).collect()
        };
        let observed = nus(&d);
        for (got, want) in observed.iter().zip([1.0, 0.7, 0.85]) {
            assert!((got - want).abs() < 1e-15, "{observed:?}");
        }
        let treated = nus(&d.all_treated());
        for (got, want) in treated.iter().zip([1.0, 1.5, 1.75]) {
            assert!((got - want).abs() < 1e-15, "{treated:?}");
        }
        assert_eq!(nus(&d.all_control()), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn moments_of_small_columns() {
        assert_eq!(column_moments(&[1.0, 1.0, 1.0]), (1.0, 0.0));
        assert_eq!(column_moments(&[0.0, 2.0]), (1.0, 1.0));
        let (m, s) = column_moments(&[-1.0, 1.0, 3.0]);
        assert_eq!(m, 1.0);
        assert!((s - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s - 1.632_993_161_855_452).abs() < 1e-12);
    }

    #[test]
    fn empirical_moments_need_two_units() {
        let one = PanelData::from_parts_unchecked(1, 1, vec![0.0, 1.0], vec![0.0]);
        assert!(empirical_moments(&one).is_err());
    }
}
