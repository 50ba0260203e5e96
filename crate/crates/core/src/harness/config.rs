//! Flat JSON experiment configuration and its resolution into simulators.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dgp::{GaussianDgp, TimeVaryingDraw};
use crate::error::{Error, Result};
use crate::estimation::ClampBounds;
use crate::inference::{default_q, InterferenceLevel, ResampleSpec};
use crate::model::{DesignMode, ExperimentDesign, InterferenceSpec, LinearOutcomeParams, NoiseSpec};
use crate::rng::Streams;
use crate::scenarios::{
    gen_er, gen_rgg, load_edge_list_report, BinaryMrt, Graph, JsqQueue, LimNoise, LimParams,
    LinearInMeans, MrtParams, QueueParams,
};
use crate::simulation::PanelSimulator;

pub const DEFAULT_BURN_IN: usize = 10;
pub const DEFAULT_REPLICATIONS: usize = 200;
pub const PAPER_SCALE_REPLICATIONS: usize = 5000;
pub const DEFAULT_RESAMPLES: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    GaussianLinear,
    LinearInMeans,
    BinaryMRT,
    JsqQueue,
    FileGraphLiM,
}

/// One experiment. Scenario parameters left out take the scenario's
/// published defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Required except for file graphs, where the file decides.
    #[serde(default)]
    pub n_units: Option<usize>,
    pub t1: usize,
    pub t2: usize,
    pub pi1: f64,
    pub pi2: f64,
    #[serde(default)]
    pub design_mode: Option<DesignMode>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Bounds on the estimated TTE; `{"low": null, "high": null}` disables
    /// the scenario default.
    #[serde(default)]
    pub clamp: Option<ClampBounds>,
    /// Number of resamples for confidence bands; 0 turns them off.
    #[serde(default)]
    pub resample_b: Option<usize>,
    #[serde(default)]
    pub resample_q: Option<f64>,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub ci_percentile: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,

    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub theta_bar: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub mu_t: Option<f64>,
    #[serde(default)]
    pub sigma_t: Option<f64>,
    #[serde(default)]
    pub sigma_e: Option<f64>,
    #[serde(default)]
    pub time_varying_draw: Option<TimeVaryingDraw>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub p_edge: Option<f64>,
    #[serde(default)]
    pub noise_mode: Option<LimNoise>,
    #[serde(default)]
    pub noise_redraw: Option<bool>,
    #[serde(default)]
    pub edge_list: Option<PathBuf>,
    #[serde(default)]
    pub arrival_rate_factor: Option<f64>,
    #[serde(default)]
    pub base_service_rate: Option<f64>,
    #[serde(default)]
    pub treated_service_rate: Option<f64>,
    #[serde(default)]
    pub max_jobs: Option<usize>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_level() -> f64 {
    0.95
}

impl ExperimentConfig {
    /// Minimal config for a scenario; everything else defaults.
    pub fn new(scenario: Scenario, n_units: usize, t1: usize, t2: usize, pi1: f64, pi2: f64) -> Self {
        let mut v = serde_json::json!({
            "scenario": scenario, "t1": t1, "t2": t2, "pi1": pi1, "pi2": pi2,
        });
        if scenario != Scenario::FileGraphLiM {
            v["n_units"] = n_units.into();
        }
        serde_json::from_value(v).expect("minimal config deserializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and applies `key=value` overrides. Override values
    /// are parsed as JSON when possible, otherwise taken as strings.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        apply_overrides(&mut value, overrides)?;
        let mut config = Self::from_value(value)?;
        // Relative edge-list paths are taken relative to the config file.
        if let (Some(edges), Some(dir)) = (&config.edge_list, path.parent()) {
            if edges.is_relative() && !edges.exists() {
                config.edge_list = Some(dir.join(edges));
            }
        }
        Ok(config)
    }

    pub fn design_mode(&self) -> DesignMode {
        self.design_mode.unwrap_or(match self.scenario {
            Scenario::LinearInMeans | Scenario::FileGraphLiM => DesignMode::StaggeredRollout,
            Scenario::BinaryMRT => DesignMode::MicroRandomized,
            Scenario::GaussianLinear | Scenario::JsqQueue => DesignMode::TwoStageStatic,
        })
    }

    pub fn clamp(&self) -> ClampBounds {
        self.clamp.unwrap_or(match self.scenario {
            Scenario::GaussianLinear => ClampBounds::UNBOUNDED,
            Scenario::LinearInMeans | Scenario::FileGraphLiM => ClampBounds {
                low: Some(-100.0),
                high: Some(100.0),
            },
            Scenario::BinaryMRT => ClampBounds {
                low: Some(-1.0),
                high: Some(1.0),
            },
            Scenario::JsqQueue => ClampBounds {
                low: Some(-1.0),
                high: Some(0.0),
            },
        })
    }

    fn interference_level(&self) -> InterferenceLevel {
        match self.scenario {
            Scenario::BinaryMRT => InterferenceLevel::Low,
            Scenario::JsqQueue => InterferenceLevel::High,
            _ => InterferenceLevel::Moderate,
        }
    }

    /// Confidence-band settings, or `None` when bands are off.
    pub fn resample_spec(&self, n_units: usize) -> Option<ResampleSpec> {
        let b = self.resample_b.unwrap_or(DEFAULT_RESAMPLES);
        if b == 0 {
            return None;
        }
        let q = self.resample_q.unwrap_or(match self.scenario {
            Scenario::FileGraphLiM => 0.15,
            _ => default_q(n_units, self.interference_level()),
        });
        Some(ResampleSpec {
            q,
            b_samples: b,
            level: self.ci_level,
            percentile: self.ci_percentile,
        })
    }

    fn set_params(&self) -> Vec<&'static str> {
        let fields: [(&str, bool); 23] = [
            ("alpha", self.alpha.is_some()),
            ("beta", self.beta.is_some()),
            ("gamma", self.gamma.is_some()),
            ("delta", self.delta.is_some()),
            ("xi", self.xi.is_some()),
            ("lambda", self.lambda.is_some()),
            ("theta_bar", self.theta_bar.is_some()),
            ("mu", self.mu.is_some()),
            ("sigma", self.sigma.is_some()),
            ("mu_t", self.mu_t.is_some()),
            ("sigma_t", self.sigma_t.is_some()),
            ("sigma_e", self.sigma_e.is_some()),
            ("time_varying_draw", self.time_varying_draw.is_some()),
            ("kappa", self.kappa.is_some()),
            ("p_edge", self.p_edge.is_some()),
            ("noise_mode", self.noise_mode.is_some()),
            ("noise_redraw", self.noise_redraw.is_some()),
            ("edge_list", self.edge_list.is_some()),
            ("arrival_rate_factor", self.arrival_rate_factor.is_some()),
            ("base_service_rate", self.base_service_rate.is_some()),
            ("treated_service_rate", self.treated_service_rate.is_some()),
            ("max_jobs", self.max_jobs.is_some()),
            ("n_units", self.n_units.is_some()),
        ];
        fields.iter().filter(|f| f.1).map(|f| f.0).collect()
    }

    fn allowed_params(&self) -> &'static [&'static str] {
        match self.scenario {
            Scenario::GaussianLinear => &[
                "n_units", "gamma", "delta", "xi", "lambda", "theta_bar", "mu", "sigma", "mu_t",
                "sigma_t", "sigma_e", "time_varying_draw",
            ],
            Scenario::LinearInMeans => &[
                "n_units", "alpha", "beta", "gamma", "delta", "kappa", "noise_mode", "noise_redraw",
            ],
            Scenario::FileGraphLiM => &[
                "n_units", "alpha", "beta", "gamma", "delta", "noise_mode", "noise_redraw", "edge_list",
            ],
            Scenario::BinaryMRT => &["n_units", "alpha", "beta", "gamma", "delta", "p_edge"],
            Scenario::JsqQueue => &[
                "n_units", "arrival_rate_factor", "base_service_rate", "treated_service_rate", "max_jobs",
            ],
        }
    }

    /// Checks the config and resolves defaults. File graphs are loaded here.
    pub fn prepare(&self) -> Result<Experiment> {
        let allowed = self.allowed_params();
        let stray: Vec<_> = self
            .set_params()
            .into_iter()
            .filter(|p| !allowed.contains(p))
            .collect();
        if !stray.is_empty() {
            return Err(Error::Config(format!(
                "{:?} does not use: {}",
                self.scenario,
                stray.join(", ")
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        let design = ExperimentDesign::new(self.pi1, self.pi2, self.t1, self.t2, self.design_mode())
            .map_err(config_error)?;
        if self.t1 < 2 || self.t2 < 2 {
            return Err(Error::Config("each stage needs at least two periods".into()));
        }
        let clamp = self.clamp();
        clamp.validate().map_err(config_error)?;

        let model = match self.scenario {
            Scenario::GaussianLinear => ScenarioModel::Gaussian {
                params: LinearOutcomeParams::new(
                    self.delta.unwrap_or(0.0),
                    self.xi.unwrap_or(0.5),
                    self.lambda.unwrap_or(1.0),
                    self.gamma.unwrap_or(0.2),
                    self.theta_bar.unwrap_or(0.0),
                ),
                interference: InterferenceSpec::new(
                    self.mu.unwrap_or(0.5),
                    self.sigma.unwrap_or(0.125f64.sqrt()),
                    self.mu_t.unwrap_or(0.5),
                    self.sigma_t.unwrap_or(0.125f64.sqrt()),
                ),
                noise: NoiseSpec::new(self.sigma_e.unwrap_or(0.3)),
                time_varying: self.time_varying_draw.unwrap_or_default(),
            },
            Scenario::LinearInMeans | Scenario::FileGraphLiM => {
                let d = LimParams::default();
                let params = LimParams {
                    alpha: self.alpha.unwrap_or(d.alpha),
                    beta: self.beta.unwrap_or(d.beta),
                    delta: self.delta.unwrap_or(d.delta),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    kappa: self.kappa.unwrap_or(d.kappa),
                };
                let file = self.scenario == Scenario::FileGraphLiM;
                let graph = if file {
                    let path = self
                        .edge_list
                        .as_ref()
                        .ok_or_else(|| Error::Config("FileGraphLiM needs edge_list".into()))?;
                    let load = load_edge_list_report(path)?;
                    log::info!(
                        "{}: {} vertices, {} edges ({} self-loops, {} duplicates dropped)",
                        path.display(),
                        load.graph.n_vertices(),
                        load.graph.n_edges(),
                        load.cleanup.self_loops,
                        load.cleanup.duplicates
                    );
                    Some(Arc::new(load.graph))
                } else {
                    None
                };
                ScenarioModel::Lim {
                    params,
                    noise: self.noise_mode.unwrap_or(if file { LimNoise::Gaussian } else { LimNoise::Homophily }),
                    noise_redraw: self.noise_redraw.unwrap_or(true),
                    graph,
                }
            }
            Scenario::BinaryMRT => {
                let n = self.n_units.unwrap_or(0);
                let d = MrtParams::for_size(n.max(1));
                ScenarioModel::Mrt(MrtParams {
                    alpha: self.alpha.unwrap_or(d.alpha),
                    beta: self.beta.unwrap_or(d.beta),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    delta: self.delta.unwrap_or(d.delta),
                    p_edge: self.p_edge.unwrap_or(d.p_edge),
                })
            }
            Scenario::JsqQueue => {
                let d = QueueParams::default();
                ScenarioModel::Queue {
                    params: QueueParams {
                        arrival_rate_factor: self.arrival_rate_factor.unwrap_or(d.arrival_rate_factor),
                        base_service_rate: self.base_service_rate.unwrap_or(d.base_service_rate),
                        treated_service_rate: self.treated_service_rate.unwrap_or(d.treated_service_rate),
                    },
                    max_jobs: self.max_jobs.unwrap_or(1_000_000),
                }
            }
        };

        let n_units = match (&model, self.n_units) {
            (ScenarioModel::Lim { graph: Some(g), .. }, n) => {
                if n.is_some_and(|n| n != g.n_vertices()) {
                    return Err(Error::Config(format!(
                        "n_units = {} but the edge list has {} vertices",
                        n.unwrap_or(0),
                        g.n_vertices()
                    )));
                }
                g.n_vertices()
            }
            (_, Some(n)) => n,
            (_, None) => return Err(Error::Config("n_units is required".into())),
        };
        if n_units < 2 {
            return Err(Error::Config("n_units must be at least 2".into()));
        }
        let resample = self.resample_spec(n_units);
        if let Some(spec) = &resample {
            spec.validate().map_err(config_error)?;
            if spec.q * (n_units as f64) < 10.0 {
                return Err(Error::Config(format!(
                    "resample_q = {} leaves fewer than 10 expected units",
                    spec.q
                )));
            }
        }
        let experiment = Experiment {
            config: self.clone(),
            n_units,
            design,
            clamp,
            resample,
            model,
        };
        experiment.check_model()?;
        Ok(experiment)
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Sets top-level keys of a JSON object from `key=value` strings.
pub fn apply_overrides(value: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    let obj: &mut Map<String, Value> = value
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    for (key, raw) in overrides {
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        obj.insert(key.clone(), parsed);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum ScenarioModel {
    Gaussian {
        params: LinearOutcomeParams,
        interference: InterferenceSpec,
        noise: NoiseSpec,
        time_varying: TimeVaryingDraw,
    },
    Lim {
        params: LimParams,
        noise: LimNoise,
        noise_redraw: bool,
        /// Fixed graph from a file; a fresh geometric graph per replication
        /// otherwise.
        graph: Option<Arc<Graph>>,
    },
    Mrt(MrtParams),
    Queue {
        params: QueueParams,
        max_jobs: usize,
    },
}

/// Validated config with every default filled in.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub n_units: usize,
    pub design: ExperimentDesign,
    pub clamp: ClampBounds,
    pub resample: Option<ResampleSpec>,
    pub model: ScenarioModel,
}

impl Experiment {
    fn check_model(&self) -> Result<()> {
        let r = match &self.model {
            ScenarioModel::Gaussian {
                params,
                interference,
                noise,
                ..
            } => params
                .validate()
                .and_then(|_| interference.validate())
                .and_then(|_| noise.validate()),
            ScenarioModel::Lim { params, .. } => params.validate(),
            ScenarioModel::Mrt(p) => p.validate(),
            ScenarioModel::Queue { params, .. } => params.validate(),
        };
        r.map_err(config_error)
    }

    /// Graph used by a replication, when the scenario has one.
    pub fn graph(&self, streams: &Streams) -> Result<Option<Arc<Graph>>> {
        Ok(match &self.model {
            ScenarioModel::Lim { graph: Some(g), .. } => Some(g.clone()),
            ScenarioModel::Lim { params, .. } => Some(Arc::new(gen_rgg(
                self.n_units,
                params.kappa,
                &mut streams.rng("graph"),
            )?)),
            ScenarioModel::Mrt(p) => Some(Arc::new(gen_er(self.n_units, p.p_edge, &mut streams.rng("graph"))?)),
            _ => None,
        })
    }

    pub fn simulator(&self, streams: &Streams) -> Result<Box<dyn PanelSimulator>> {
        let graph = self.graph(streams)?;
        let burn_in = self.config.burn_in;
        Ok(match &self.model {
            ScenarioModel::Gaussian {
                params,
                interference,
                noise,
                time_varying,
            } => {
                let mut dgp = GaussianDgp::new(self.n_units, self.design, *params, *interference, *noise);
                dgp.burn_in = burn_in;
                dgp.time_varying = *time_varying;
                Box::new(dgp)
            }
            ScenarioModel::Lim {
                params,
                noise,
                noise_redraw,
                ..
            } => {
                let mut sim = LinearInMeans::new(graph.expect("graph scenario"), *params, self.design, *noise);
                sim.noise_redraw = *noise_redraw;
                sim.burn_in = burn_in;
                Box::new(sim)
            }
            ScenarioModel::Mrt(p) => {
                let mut sim = BinaryMrt::new(graph.expect("graph scenario"), *p, self.design);
                sim.burn_in = burn_in;
                Box::new(sim)
            }
            ScenarioModel::Queue { params, max_jobs } => {
                let mut q = JsqQueue::new(self.n_units, *params, self.design);
                q.burn_in = burn_in;
                q.max_jobs = *max_jobs;
                Box::new(q)
            }
        })
    }
}
