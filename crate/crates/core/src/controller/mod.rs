//! Per-step decision problems for one CAV.
//!
//! Each step assembles barrier rows for the speed limits, the rear-end
//! headway to the same-lane predecessor and the continuous merging headway
//! to the queue predecessor in the other lane, then solves a small QP or LP
//! over `(u, δ, aux..., c...)`:
//!
//! * `ocbf`: `½(u - u_ref)² + β δ²` with a CLF row tracking the plan speed;
//! * `cbf_fuel`: fuel rate plus `β δ²`, CLF towards `v_max`;
//! * `comfort_lp`: fuel rate plus `β₁ δ + β₂ |u - u_prev|/Δt`;
//! * `track_only`: the clamped reference, no optimization.
//!
//! Violated barriers swap their row for a recovery row. Rows are formed
//! with the sampled-data Lie derivatives of forward-Euler dynamics, so for
//! the double integrator `b(t+Δt) ≥ (1 - pΔt) b(t)` holds exactly.

use serde::{Deserialize, Serialize};

use crate::hocbf::{self, BarrierError, BarrierSpec, RecoveryMode};
use crate::mergesim::{FuelCoefficients, Resistance, VehicleState};
use crate::ocplan::{make_u_ref, make_v_ref, Plan, TrackingGains};
use crate::qpsolve::{self, ConstraintRow, LpProblem, QpProblem, QpSolution, RowTag};
use nalgebra::{DMatrix, DVector};

/// Curvature on `u` in the fuel QP so the minimizer is unique.
const FUEL_U_REG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Ocbf,
    CbfFuel,
    ComfortLp,
    TrackOnly,
}

impl ControlMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlMode::Ocbf => "ocbf",
            ControlMode::CbfFuel => "cbf_fuel",
            ControlMode::ComfortLp => "comfort_lp",
            ControlMode::TrackOnly => "track_only",
        }
    }
}

impl std::str::FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ocbf" => Ok(ControlMode::Ocbf),
            "cbf_fuel" => Ok(ControlMode::CbfFuel),
            "comfort_lp" => Ok(ControlMode::ComfortLp),
            "track_only" => Ok(ControlMode::TrackOnly),
            other => Err(format!("unknown controller mode '{other}'")),
        }
    }
}

/// Class-K gains per barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Penalties {
    pub safety: f64,
    pub merge: f64,
    pub v_max: f64,
    pub v_min: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Self { safety: 1.0, merge: 1.0, v_max: 1.0, v_min: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub phi: f64,
    pub delta0: f64,
    pub length: f64,
    pub eps_clf: f64,
    pub penalties: Penalties,
    /// Weight on the CLF relaxation `δ²`.
    pub beta_relax: f64,
    pub dt: f64,
    pub recovery: RecoveryMode,
    /// Known disturbance bound `(W1, W2)`; enables the robust rows.
    pub noise_bound: Option<[f64; 2]>,
    pub gains: TrackingGains,
    pub fuel: FuelCoefficients,
    pub beta1: f64,
    pub beta2: f64,
    pub mode: ControlMode,
    /// `Some` for the resistance model, where `u` is the commanded
    /// acceleration `force / m`.
    pub resistance: Option<Resistance>,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            u_min: -3.924,
            u_max: 3.924,
            v_min: 0.0,
            v_max: 30.0,
            phi: 1.8,
            delta0: 0.0,
            length: 400.0,
            eps_clf: 10.0,
            penalties: Penalties::default(),
            beta_relax: 1.0,
            dt: 0.1,
            recovery: RecoveryMode::Maximize { k: 100.0, c_max: 5.0 },
            noise_bound: None,
            gains: TrackingGains::default(),
            fuel: FuelCoefficients::default(),
            beta1: 1.0,
            beta2: 1.0,
            mode: ControlMode::Ocbf,
            resistance: None,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.u_min < 0.0 && 0.0 < self.u_max) {
            return Err(format!("need u_min < 0 < u_max, got [{}, {}]", self.u_min, self.u_max));
        }
        if !(self.v_min < self.v_max) {
            return Err(format!("need v_min < v_max, got [{}, {}]", self.v_min, self.v_max));
        }
        if !(self.dt > 0.0) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.phi > 0.0 && self.delta0 >= 0.0 && self.length > 0.0) {
            return Err("geometry needs phi > 0, delta0 >= 0, L > 0".into());
        }
        if !(self.eps_clf > 0.0 && self.beta_relax > 0.0) {
            return Err("eps_clf and beta_relax must be > 0".into());
        }
        let p = self.penalties;
        if !(p.safety > 0.0 && p.merge > 0.0 && p.v_max > 0.0 && p.v_min > 0.0) {
            return Err("barrier penalties must be > 0".into());
        }
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err("comfort weights must be >= 0".into());
        }
        match self.recovery {
            RecoveryMode::Fixed { c } if !(c > 0.0) => return Err(format!("recovery rate must be > 0, got {c}")),
            RecoveryMode::Maximize { k, c_max } if !(k > 0.0 && c_max > 0.0) => {
                return Err("recovery K and c_max must be > 0".into())
            }
            _ => {}
        }
        if let Some(w) = self.noise_bound {
            if !(w[0] >= 0.0 && w[1] >= 0.0) {
                return Err("noise bounds must be >= 0".into());
            }
        }
        if let Some(r) = &self.resistance {
            r.validate()?;
        }
        self.gains.validate()
    }

    /// Deceleration from resistance at speed `v` (0 for the double integrator).
    pub fn drag(&self, v: f64) -> f64 {
        self.resistance.map_or(0.0, |r| r.decel(v))
    }
}

/// Merging headway ramp `Φ(x)`: `-δ₀/v0` at the lane origin, `φ` at the
/// merging point.
pub fn merge_phi(x: f64, v0: f64, length: f64, phi: f64, delta0: f64) -> f64 {
    -delta0 / v0 + (phi + delta0 / v0) * x / length
}

fn merge_phi_slope(v0: f64, length: f64, phi: f64, delta0: f64) -> f64 {
    (phi + delta0 / v0) / length
}

/// Everything one step needs; states are measurements.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub t: f64,
    pub me: VehicleState,
    /// Entry speed, for the merging ramp.
    pub v0: f64,
    pub plan: Option<&'a Plan>,
    /// Same-lane predecessor.
    pub ip: Option<VehicleState>,
    /// Queue predecessor, only when it is not `ip`.
    pub prev: Option<VehicleState>,
    /// Control applied on the previous step (comfort LP).
    pub u_prev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveOutcome {
    Solved,
    /// Hard rows were jointly infeasible with the CLF row present.
    ClfDropped,
    /// Still infeasible without the CLF row; maximum braking applied.
    Fallback,
    /// No optimization (track-only step).
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub outcome: SolveOutcome,
    pub b_safety: Option<f64>,
    pub b_merge: Option<f64>,
    /// Barriers whose row was replaced by a recovery row this step.
    pub recovering: Vec<RowTag>,
    /// Recovery rates chosen (maximize mode) or imposed (fixed mode).
    pub rates: Vec<f64>,
    /// Barriers whose control gradient vanished, so no row could be formed.
    pub skipped: Vec<RowTag>,
    pub objective: f64,
    pub iterations: usize,
    pub u_ref: f64,
    pub v_ref: f64,
}

impl StepDiagnostics {
    fn new() -> Self {
        Self {
            outcome: SolveOutcome::Solved,
            b_safety: None,
            b_merge: None,
            recovering: Vec::new(),
            rates: Vec::new(),
            skipped: Vec::new(),
            objective: 0.0,
            iterations: 0,
            u_ref: 0.0,
            v_ref: 0.0,
        }
    }

    pub fn infeasible(&self) -> bool {
        self.outcome == SolveOutcome::Fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: f64,
    pub delta: f64,
    pub diag: StepDiagnostics,
}

/// A degree-1 barrier together with its robust margin.
#[derive(Debug, Clone)]
struct Barrier {
    spec: BarrierSpec,
    noise_scale: Vec<f64>,
    extra_margin: f64,
}

fn barriers(input: &StepInput, params: &ControlParams) -> Vec<Barrier> {
    let me = input.me;
    let drag = params.drag(me.v);
    let w = params.noise_bound.unwrap_or([0.0, 0.0]);
    let pen = params.penalties;
    let mut out = vec![
        Barrier {
            spec: BarrierSpec::first_order(params.v_max - me.v, drag, vec![-1.0], pen.v_max, vec![-1.0], RowTag::SpeedMax),
            noise_scale: vec![w[1]],
            extra_margin: 0.0,
        },
        Barrier {
            spec: BarrierSpec::first_order(me.v - params.v_min, -drag, vec![1.0], pen.v_min, vec![1.0], RowTag::SpeedMin),
            noise_scale: vec![w[1]],
            extra_margin: 0.0,
        },
    ];
    if let Some(ip) = input.ip {
        let b = ip.x - me.x - params.phi * me.v - params.delta0;
        out.push(Barrier {
            spec: BarrierSpec::first_order(
                b,
                ip.v - me.v + params.phi * drag,
                vec![-params.phi],
                pen.safety,
                vec![-1.0, -params.phi, 1.0],
                RowTag::Safety,
            ),
            noise_scale: vec![w[0], w[1], w[0]],
            extra_margin: 0.0,
        });
    }
    if let Some(prev) = input.prev {
        let phi_x = merge_phi(me.x, input.v0, params.length, params.phi, params.delta0);
        let slope = merge_phi_slope(input.v0, params.length, params.phi, params.delta0);
        let b = prev.x - me.x - phi_x * me.v - params.delta0;
        // Exact one-step change of Φ(x)v under Euler: the position update
        // multiplies the control term by Φ(x + vΔt).
        let lg = -(phi_x + slope * me.v * params.dt);
        let lf = prev.v - me.v - slope * me.v * me.v - lg * drag;
        let u_span = params.u_max.max(-params.u_min);
        let cross = slope * params.dt * (w[0] * (u_span + drag) + me.v * w[1] + w[0] * w[1]);
        out.push(Barrier {
            spec: BarrierSpec::first_order(b, lf, vec![lg], pen.merge, vec![-1.0 - slope * me.v, -phi_x, 1.0], RowTag::Merge),
            noise_scale: vec![w[0], w[1], w[0]],
            extra_margin: cross,
        });
    }
    out
}

/// Barrier specs for the current step, in the order the rows are built.
/// The merge spec carries the sampled-data control coefficient.
pub fn barrier_specs(input: &StepInput, params: &ControlParams) -> Vec<BarrierSpec> {
    barriers(input, params).into_iter().map(|b| b.spec).collect()
}

/// Rows produced by the barrier set: plain or robust HOCBF rows, or
/// recovery rows (with an extra rate column in maximize mode).
struct BarrierRows {
    /// Rows over `[u]`.
    rows: Vec<ConstraintRow>,
    /// Rows over `[u, c]` with the rate's cost and bounds.
    rate_rows: Vec<(ConstraintRow, f64, (f64, f64))>,
    recovering: Vec<RowTag>,
    fixed_rates: Vec<f64>,
    skipped: Vec<RowTag>,
}

fn barrier_rows(list: &[Barrier], params: &ControlParams) -> BarrierRows {
    let mut out = BarrierRows {
        rows: Vec::new(),
        rate_rows: Vec::new(),
        recovering: Vec::new(),
        fixed_rates: Vec::new(),
        skipped: Vec::new(),
    };
    for br in list {
        let spec = &br.spec;
        if spec.value < 0.0 {
            match hocbf::recovery_row(spec, params.recovery) {
                Ok(r) => {
                    out.recovering.push(spec.tag);
                    match (r.rate_cost, r.rate_bounds) {
                        (Some(cost), Some(bounds)) => out.rate_rows.push((r.row, cost, bounds)),
                        _ => {
                            if let RecoveryMode::Fixed { c } = params.recovery {
                                out.fixed_rates.push(c);
                            }
                            out.rows.push(r.row);
                        }
                    }
                }
                Err(_) => out.skipped.push(spec.tag),
            }
            continue;
        }
        let row = if params.noise_bound.is_some() {
            hocbf::robust_hocbf_row(spec, &br.noise_scale).map(|mut r| {
                r.rhs -= br.extra_margin;
                r
            })
        } else {
            hocbf::hocbf_row(spec)
        };
        match row {
            Ok(r) => out.rows.push(r),
            Err(BarrierError::ZeroControlGradient) | Err(_) => out.skipped.push(spec.tag),
        }
    }
    out
}

/// Decision layout: `u` at column 0, `δ` at 1, mode-specific auxiliaries,
/// then one rate column per maximize-mode recovery row.
struct Assembled {
    n: usize,
    h_diag: Vec<f64>,
    f: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<ConstraintRow>,
    linear: bool,
}

impl Assembled {
    fn new(base: usize, linear: bool, params: &ControlParams) -> Self {
        let mut lower = vec![f64::NEG_INFINITY; base];
        let mut upper = vec![f64::INFINITY; base];
        lower[0] = params.u_min;
        upper[0] = params.u_max;
        Self { n: base, h_diag: vec![0.0; base], f: vec![0.0; base], lower, upper, rows: Vec::new(), linear }
    }

    fn add_barriers(&mut self, br: &BarrierRows) {
        for r in &br.rows {
            self.rows.push(r.embed(&[0], self.n));
        }
        let first_rate = self.n;
        let k = br.rate_rows.len();
        self.n += k;
        for row in &mut self.rows {
            row.coeffs.resize(self.n, 0.0);
        }
        for (j, (row, cost, (lo, hi))) in br.rate_rows.iter().enumerate() {
            self.h_diag.push(0.0);
            self.f.push(*cost);
            self.lower.push(*lo);
            self.upper.push(*hi);
            self.rows.push(row.embed(&[0, first_rate + j], self.n));
        }
    }

    fn push(&mut self, coeffs: &[(usize, f64)], rhs: f64, tag: RowTag) {
        let mut c = vec![0.0; self.n];
        for &(j, v) in coeffs {
            c[j] = v;
        }
        self.rows.push(ConstraintRow::new(c, rhs, tag));
    }

    fn solve(&self, drop_clf: bool) -> Result<QpSolution, qpsolve::QpError> {
        let rows: Vec<ConstraintRow> =
            self.rows.iter().filter(|r| !(drop_clf && r.tag == RowTag::Clf)).cloned().collect();
        if self.linear {
            let mut lp = LpProblem::new(self.f.clone()).with_bounds(self.lower.clone(), self.upper.clone());
            lp.rows = rows;
            qpsolve::solve_lp(&lp)
        } else {
            let mut qp = QpProblem::new(DMatrix::from_diagonal(&DVector::from_vec(self.h_diag.clone())), DVector::from_vec(self.f.clone()))
                .with_bounds(self.lower.clone(), self.upper.clone());
            qp.rows = rows;
            qpsolve::solve_qp(&qp)
        }
    }
}

fn run_ladder(asm: &Assembled, br: &BarrierRows, params: &ControlParams, mut diag: StepDiagnostics) -> StepOutput {
    diag.recovering = br.recovering.clone();
    diag.skipped = br.skipped.clone();
    let first_rate = asm.n - br.rate_rows.len();
    let attempt = |drop| asm.solve(drop).ok().filter(|s| s.is_optimal());
    let (sol, outcome) = match attempt(false) {
        Some(s) => (Some(s), SolveOutcome::Solved),
        None => match attempt(true) {
            Some(s) => (Some(s), SolveOutcome::ClfDropped),
            None => (None, SolveOutcome::Fallback),
        },
    };
    diag.outcome = outcome;
    match sol {
        Some(s) => {
            diag.objective = s.objective;
            diag.iterations = s.iterations;
            diag.rates = br.fixed_rates.clone();
            diag.rates.extend_from_slice(&s.z[first_rate..]);
            let u = s.z[0].clamp(params.u_min, params.u_max);
            StepOutput { u, delta: s.z[1], diag }
        }
        None => StepOutput { u: params.u_min, delta: 0.0, diag },
    }
}

fn fill_barrier_values(diag: &mut StepDiagnostics, list: &[Barrier]) {
    for b in list {
        match b.spec.tag {
            RowTag::Safety => diag.b_safety = Some(b.spec.value),
            RowTag::Merge => diag.b_merge = Some(b.spec.value),
            _ => {}
        }
    }
}

/// `(u_ref, v_ref)` from the plan at `t`.
pub fn references(input: &StepInput, params: &ControlParams) -> (f64, f64) {
    match input.plan {
        Some(plan) => {
            let pt = plan.eval(input.t);
            let g = &params.gains;
            (make_u_ref(g.u_form, pt, input.me.x, input.me.v, g), make_v_ref(g.v_form, pt, input.me.x, g))
        }
        None => (0.0, params.v_max),
    }
}

/// CLF row over `(u, δ)` for `V = (v - v_ref)²`. Left out while any
/// barrier is recovering so the slack cost cannot outbid the rate reward.
fn clf(asm: &mut Assembled, br: &BarrierRows, v: f64, v_ref: f64, drag: f64, eps: f64) {
    if !br.recovering.is_empty() {
        return;
    }
    let y = v - v_ref;
    let row = hocbf::clf_row(y, &[2.0 * y], -2.0 * y * drag, eps).expect("positive CLF gain");
    asm.rows.push(row.embed(&[0, 1], asm.n));
}

/// Plan-tracking QP step.
pub fn ocbf_step(input: &StepInput, params: &ControlParams) -> StepOutput {
    let list = barriers(input, params);
    let br = barrier_rows(&list, params);
    let (u_ref, v_ref) = references(input, params);
    // A CAV far off its plan can ask for any acceleration; outside the box
    // that only inflates the tracking term against the recovery reward.
    let u_ref = u_ref.clamp(params.u_min, params.u_max);
    let mut diag = StepDiagnostics::new();
    diag.u_ref = u_ref;
    diag.v_ref = v_ref;
    fill_barrier_values(&mut diag, &list);
    let mut asm = Assembled::new(2, false, params);
    asm.h_diag = vec![1.0, 2.0 * params.beta_relax];
    asm.f = vec![-u_ref, 0.0];
    clf(&mut asm, &br, input.me.v, v_ref, params.drag(input.me.v), params.eps_clf);
    asm.add_barriers(&br);
    let mut out = run_ladder(&asm, &br, params, diag);
    // Report ½(u - u_ref)² + βδ² + ... including the constant term.
    out.diag.objective += 0.5 * u_ref * u_ref;
    out
}

/// Fuel-minimizing QP over `(u, δ, s)` with `s ≥ max(u, 0)`, CLF to `v_max`.
pub fn cbf_fuel_step(input: &StepInput, params: &ControlParams) -> StepOutput {
    let list = barriers(input, params);
    let br = barrier_rows(&list, params);
    let v = input.me.v;
    let mut diag = StepDiagnostics::new();
    diag.v_ref = params.v_max;
    fill_barrier_values(&mut diag, &list);
    let mut asm = Assembled::new(3, false, params);
    asm.h_diag = vec![FUEL_U_REG, 2.0 * params.beta_relax, 0.0];
    asm.f = vec![0.0, 0.0, params.fuel.accel_coef(v)];
    asm.lower[2] = 0.0;
    clf(&mut asm, &br, v, params.v_max, params.drag(v), params.eps_clf);
    asm.push(&[(0, 1.0), (2, -1.0)], 0.0, RowTag::Aux);
    asm.add_barriers(&br);
    run_ladder(&asm, &br, params, diag)
}

fn fuel_lp(input: &StepInput, params: &ControlParams, jerk: bool) -> StepOutput {
    let list = barriers(input, params);
    let br = barrier_rows(&list, params);
    let v = input.me.v;
    let mut diag = StepDiagnostics::new();
    diag.v_ref = params.v_max;
    fill_barrier_values(&mut diag, &list);
    let base = if jerk { 4 } else { 3 };
    let mut asm = Assembled::new(base, true, params);
    asm.f[1] = params.beta1;
    asm.f[2] = params.fuel.accel_coef(v);
    asm.lower[1] = 0.0;
    asm.lower[2] = 0.0;
    clf(&mut asm, &br, v, params.v_max, params.drag(v), params.eps_clf);
    asm.push(&[(0, 1.0), (2, -1.0)], 0.0, RowTag::Aux);
    if jerk {
        asm.f[3] = params.beta2 / params.dt;
        asm.lower[3] = 0.0;
        asm.push(&[(0, 1.0), (3, -1.0)], input.u_prev, RowTag::Aux);
        asm.push(&[(0, -1.0), (3, -1.0)], -input.u_prev, RowTag::Aux);
    }
    asm.add_barriers(&br);
    run_ladder(&asm, &br, params, diag)
}

/// Fuel plus comfort LP over `(u, δ, s, w)` with `w ≥ |u - u_prev|`.
pub fn comfort_lp_step(input: &StepInput, params: &ControlParams) -> StepOutput {
    fuel_lp(input, params, true)
}

/// The comfort LP without the jerk term.
pub fn fuel_lp_step(input: &StepInput, params: &ControlParams) -> StepOutput {
    fuel_lp(input, params, false)
}

/// Clamped reference, no optimization.
pub fn track_only_step(input: &StepInput, params: &ControlParams) -> StepOutput {
    let (u_ref, v_ref) = references(input, params);
    let list = barriers(input, params);
    let mut diag = StepDiagnostics::new();
    diag.outcome = SolveOutcome::Direct;
    diag.u_ref = u_ref;
    diag.v_ref = v_ref;
    fill_barrier_values(&mut diag, &list);
    StepOutput { u: u_ref.clamp(params.u_min, params.u_max), delta: 0.0, diag }
}

/// Whether the clamped reference keeps every barrier nonnegative and
/// satisfies every barrier row; used to keep a gated CAV in track mode.
pub fn track_is_admissible(input: &StepInput, params: &ControlParams, u: f64) -> bool {
    let list = barriers(input, params);
    if list.iter().any(|b| b.spec.value < 0.0) {
        return false;
    }
    let br = barrier_rows(&list, params);
    br.rows.iter().all(|r| r.residual(&[u]) <= qpsolve::FEAS_TOL)
}

/// Dispatch on `params.mode`.
pub fn step(input: &StepInput, params: &ControlParams) -> StepOutput {
    match params.mode {
        ControlMode::Ocbf => ocbf_step(input, params),
        ControlMode::CbfFuel => cbf_fuel_step(input, params),
        ControlMode::ComfortLp => comfort_lp_step(input, params),
        ControlMode::TrackOnly => track_only_step(input, params),
    }
}
