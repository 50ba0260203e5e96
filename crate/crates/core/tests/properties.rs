use proptest::prelude::*;

use causal_mp::dgp::{GaussianDgp, TimeVaryingDraw};
use causal_mp::harness::{ExperimentConfig, Scenario};
use causal_mp::model::{
    DesignMode, ExperimentDesign, InterferenceSpec, LinearOutcomeParams, NoiseSpec, SEState, TTEReport,
};
use causal_mp::rng::{spawn_stream, Streams};
use causal_mp::state_evolution::se_step_linear;

fn unit() -> impl Strategy<Value = f64> {
    -1.0f64..1.0
}

/// Values with short binary expansions survive a JSON round trip exactly.
fn dyadic() -> impl Strategy<Value = f64> {
    (-4096i32..4096).prop_map(|k| f64::from(k) / 64.0)
}

proptest! {
    #[test]
    fn se_step_scales_with_level_terms(
        delta in unit(), xi in unit(), lambda in unit(), gamma in unit(), theta in unit(),
        nu in -2.0f64..2.0, rho in 0.0f64..2.0, pi in 0.0f64..1.0,
        mu in unit(), sigma in 0.0f64..1.0, sigma_e in 0.0f64..1.0, c in 0.1f64..10.0,
    ) {
        let interf = InterferenceSpec::new(mu, sigma, 0.5 * mu, 0.5 * sigma);
        let p = LinearOutcomeParams::new(delta, xi, lambda, gamma, theta);
        let scaled = LinearOutcomeParams::new(c * delta, xi, c * lambda, gamma, c * theta);
        let a = se_step_linear(SEState::new(nu, rho).unwrap(), &p, pi, &interf, &NoiseSpec::new(sigma_e)).unwrap();
        let b = se_step_linear(SEState::new(c * nu, c * rho).unwrap(), &scaled, pi, &interf, &NoiseSpec::new(c * sigma_e))
            .unwrap();
        prop_assert!((b.nu - c * a.nu).abs() <= 1e-9 * (1.0 + c * a.nu.abs()));
        prop_assert!((b.rho - c * a.rho).abs() <= 1e-9 * (1.0 + c * a.rho));
        prop_assert!(a.rho >= sigma_e * (1.0 - 1e-12));
    }

    #[test]
    fn staggered_rollout_never_untreats(pi1 in 0.0f64..1.0, extra in 0.0f64..1.0, n in 1usize..200, seed in any::<u64>()) {
        let pi2 = pi1 + extra * (1.0 - pi1);
        let d = ExperimentDesign::new(pi1, pi2, 3, 4, DesignMode::StaggeredRollout).unwrap();
        let w = d.assign(n, &mut spawn_stream(seed, "w"));
        prop_assert_eq!(w.len(), 7 * n);
        for t in 1..7 {
            for i in 0..n {
                prop_assert!(w[t * n + i] >= w[(t - 1) * n + i]);
            }
        }
    }

    #[test]
    fn design_and_report_round_trip(
        pi1 in 0.0f64..0.45, pi2 in 0.55f64..1.0, t1 in 2usize..50, t2 in 2usize..50,
        est in prop::collection::vec(dyadic(), 1..40), id in any::<u64>(), seed in any::<u64>(),
    ) {
        let d = ExperimentDesign::new(pi1, pi2, t1, t2, DesignMode::MicroRandomized).unwrap();
        let back: ExperimentDesign = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);

        let r = TTEReport {
            ci_low: Some(est.iter().map(|x| x - 1.0).collect()),
            ci_high: None,
            ground_truth: Some(est.clone()),
            estimate: est,
            replication_id: id,
            seed,
        };
        let back: TTEReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn config_round_trip(n in 50usize..5000, t1 in 2usize..40, t2 in 2usize..40, seed in any::<u64>(), kappa in 1u32..20) {
        let mut cfg = ExperimentConfig::new(Scenario::LinearInMeans, n, t1, t2, 0.25, 0.75);
        cfg.master_seed = seed;
        cfg.kappa = Some(f64::from(kappa));
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn dense_time_varying_rows_have_target_moments() {
    let n = 400;
    let design = ExperimentDesign::new(0.3, 0.6, 2, 2, DesignMode::TwoStageStatic).unwrap();
    let mut dgp = GaussianDgp::new(
        n,
        design,
        LinearOutcomeParams::new(0.0, 0.5, 1.0, 0.2, 0.0),
        InterferenceSpec::new(0.5, 0.4, 2.0, 0.8),
        NoiseSpec::new(0.3),
    );
    dgp.time_varying = TimeVaryingDraw::Dense;
    let streams = Streams::new(11);
    let b = dgp.dense_time_varying_matrix(&streams, 0);
    assert_eq!(b.len(), n * n);
    let nf = n as f64;
    let mean = b.iter().sum::<f64>() / (nf * nf);
    let var = b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf * nf);
    assert!((mean * nf - 2.0).abs() < 0.05, "scaled mean {}", mean * nf);
    assert!((var.sqrt() * nf.sqrt() - 0.8).abs() < 0.01);
    // Row sums concentrate around mu_t with spread sigma_t.
    let sums: Vec<f64> = b.chunks(n).map(|r| r.iter().sum()).collect();
    let m = sums.iter().sum::<f64>() / nf;
    let sd = (sums.iter().map(|s| (s - m).powi(2)).sum::<f64>() / nf).sqrt();
    assert!((m - 2.0).abs() < 0.15 && (sd - 0.8).abs() < 0.12, "row sums {m} {sd}");
    // Fresh periods differ; the same period regenerates exactly.
    assert_ne!(b, dgp.dense_time_varying_matrix(&streams, 1));
    assert_eq!(b, dgp.dense_time_varying_matrix(&streams, 0));
}
