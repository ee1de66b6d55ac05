//! Optimal-control plus control-barrier-function (OCBF) merging toolkit:
//! closed-form trajectory planning, HOCBF/CLF quadratic programs, noise
//! recovery and a two-lane merging simulator.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod hocbf;
pub mod mergesim;
pub mod ocplan;
pub mod oracle;
pub mod qpsolve;

pub use config::{ConfigError, ScenarioConfig};
pub use controller::{ControlMode, ControlParams, StepInput, StepOutput};
pub use hocbf::{BarrierSpec, RecoveryMode};
pub use mergesim::{run_scenario, Lane, Metrics, SimOutput, VehicleState};
pub use ocplan::{Plan, PlanPoint};
pub use qpsolve::{ConstraintRow, LpProblem, QpProblem, QpSolution, QpStatus, RowTag};
