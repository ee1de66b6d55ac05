use serde::{Deserialize, Serialize};

use super::Lane;
use crate::controller::ControlMode;
use crate::qpsolve::RowTag;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Trajectory log columns, in order.
pub const LOG_HEADER: [&str; 10] = ["t", "id", "lane", "x", "v", "u", "delta", "b_safety", "b_merge", "mode_flags"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavMetrics {
    pub id: usize,
    pub lane: Lane,
    pub t0: f64,
    pub v0: f64,
    pub tm: f64,
    pub travel_time: f64,
    /// `∫ ½ u² dt` over the zone.
    pub energy: f64,
    /// Fuel over the zone (mL).
    pub fuel: f64,
    /// `β · travel_time + energy`
    pub objective: f64,
    pub plan_travel_time: f64,
    pub plan_energy: f64,
    pub plan_objective: f64,
    pub gate_ok: bool,
    /// Controller in use when the CAV crossed.
    pub mode: ControlMode,
    /// Mean of `x - x*` and `v - v*` over the CAV's samples.
    pub mean_position_error: f64,
    pub mean_speed_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub travel_time: f64,
    pub energy: f64,
    pub fuel: f64,
    pub objective: f64,
    pub plan_travel_time: f64,
    pub plan_objective: f64,
}

impl Aggregate {
    pub fn of<'a>(cavs: impl IntoIterator<Item = &'a CavMetrics>) -> Self {
        let mut a = Aggregate::default();
        for c in cavs {
            a.count += 1;
            a.travel_time += c.travel_time;
            a.energy += c.energy;
            a.fuel += c.fuel;
            a.objective += c.objective;
            a.plan_travel_time += c.plan_travel_time;
            a.plan_objective += c.plan_objective;
        }
        if a.count > 0 {
            let n = a.count as f64;
            a.travel_time /= n;
            a.energy /= n;
            a.fuel /= n;
            a.objective /= n;
            a.plan_travel_time /= n;
            a.plan_objective /= n;
        }
        a
    }
}

/// A constraint sampled below `-tol`, from the first violating sample to
/// the first sample back above `-tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub id: usize,
    pub constraint: RowTag,
    pub t_start: f64,
    /// `None` if the CAV left the zone (or the run ended) still violating.
    pub t_end: Option<f64>,
    pub b_start: f64,
    pub b_min: f64,
    /// Smallest recovery rate applied during the event.
    pub min_rate: Option<f64>,
}

impl ViolationEvent {
    pub fn duration(&self) -> Option<f64> {
        self.t_end.map(|e| e - self.t_start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityEvent {
    pub id: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSwitch {
    pub id: usize,
    pub t: f64,
    pub from: ControlMode,
    pub to: ControlMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub seed: u64,
    pub mode: ControlMode,
    pub beta: f64,
    pub arrivals_sha256: String,
    pub cavs: Vec<CavMetrics>,
    pub overall: Aggregate,
    pub main: Aggregate,
    pub merge: Aggregate,
    /// CAVs still in the zone when the run stopped.
    pub unfinished: usize,
    pub violations: Vec<ViolationEvent>,
    pub infeasible: Vec<InfeasibilityEvent>,
    pub mode_switches: Vec<ModeSwitch>,
    /// Crossings that happened before an earlier-queued CAV crossed.
    pub fifo_inversions: usize,
    pub gate_pass_fraction: f64,
}

impl Metrics {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    pub fn violations_of(&self, tag: RowTag) -> impl Iterator<Item = &ViolationEvent> {
        self.violations.iter().filter(move |e| e.constraint == tag)
    }
}

/// One row per CAV per tick: the state at `t` and the control held over
/// `[t, t + Δt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub id: usize,
    pub lane: Lane,
    pub x: f64,
    pub v: f64,
    pub u: f64,
    pub delta: f64,
    pub b_safety: Option<f64>,
    pub b_merge: Option<f64>,
    pub mode_flags: String,
}

/// `∫ ½ u² dt` for one CAV from the log (zero-order hold, last interval cut
/// at `tm`).
pub fn energy_from_log(log: &[LogRow], id: usize, tm: f64, dt: f64) -> f64 {
    log.iter()
        .filter(|r| r.id == id && r.t < tm)
        .map(|r| 0.5 * r.u * r.u * dt.min(tm - r.t))
        .sum()
}
