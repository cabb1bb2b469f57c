//! Observation files, job configuration, synthetic data and result bundles.

mod job;
mod observations;
mod results;
mod synth;

pub use job::{
    parse_job, parse_json, read_job, read_json_file, schedule_from_segments, write_json, EstimationJob, ModelKind,
    PolarizationDesign, Segment, SimulationSpec, Sweep, SynthSpec, ThermalInit,
};
pub use observations::{read_observations, write_observations, Column, ObservationSeries, TIME_COLUMN};
pub use results::{read_samples, surrogate_section, write_ls_result, write_results, write_samples, SurrogateSection};
pub use synth::{generate_synthetic, sidecar_path, write_truth, Truth};
