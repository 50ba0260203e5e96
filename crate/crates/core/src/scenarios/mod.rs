//! Network and queueing data-generating processes sharing the
//! [`PanelSimulator`](crate::simulation::PanelSimulator) interface.

pub mod graph;
pub mod lim;
pub mod mrt;
pub mod queue;

pub use graph::{gen_er, gen_rgg, load_edge_list, load_edge_list_report, rgg_radius, Graph};
pub use lim::{LimNoise, LimParams, LinearInMeans};
pub use mrt::{BinaryMrt, MrtParams};
pub use queue::{JsqQueue, QueueParams};
