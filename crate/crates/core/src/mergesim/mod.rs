//! Two-lane merging world: arrivals, FIFO coordination, noisy dynamics,
//! energy/fuel accounting and constraint monitoring.

mod arrivals;
mod dynamics;
mod metrics;
mod sim;

pub use arrivals::{arrivals_digest, spawn_arrivals, Arrival};
pub use dynamics::{
    step_dynamics, step_dynamics_nonlinear, FuelCoefficients, Lane, NoiseDraw, Resistance, VehicleState,
};
pub use metrics::{
    energy_from_log, Aggregate, CavMetrics, InfeasibilityEvent, LogRow, Metrics, ModeSwitch, ViolationEvent,
    LOG_HEADER, METRICS_SCHEMA_VERSION,
};
pub use sim::{
    coordinator_update, neighbors, run_scenario, scenario_arrivals, CavRecord, CavStatus, SimOutput, VIOLATION_TOL,
};
