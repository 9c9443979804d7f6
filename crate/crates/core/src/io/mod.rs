//! Dataset files, bundled tables, run configuration and plot-data emission.

pub mod bundled;
pub mod config;
pub mod curve;
pub mod dataset;

pub use bundled::{bundled_names, load_bundled, ASYMPTOTIC_SWEEP, BUNDLED};
pub use config::{ChannelSpec, DetectorConfig, DistillSection, OverlapSource, RunConfig, SimulationConfig};
pub use curve::{emit_rate_curve, equivalent_distance_km, rate_curve, RatePoint};
pub use dataset::{load_dataset, parse_dataset, parse_dataset_with, save_dataset, write_dataset, PairsDefaults};
