pub mod hto;
pub mod plant;
pub mod polarization;
pub mod schedule;
pub mod thermal;

pub use hto::{
    hto_equilibrium_state, hto_transfer_steady_state, simulate_hto, HtoInit, HtoParams, HtoState, HtoTrajectory,
};
pub use plant::{CurrentUnit, LogBase, PlantConstants, Tau1Form};
pub use polarization::{cell_voltage, polarization_curve, CurveOptions, PolarizationParams};
pub use schedule::{InputSchedule, Interpolation, OperatingPoint, ScheduleInputs};
pub use thermal::{simulate_thermal, ThermalParams, ThermalState};
