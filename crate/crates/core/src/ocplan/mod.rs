//! Closed-form energy/time optimal plans for a double integrator crossing a
//! control zone of length `L`, plus the feasibility gates and the reference
//! generators that turn a plan into tracking targets.
//!
//! The unconstrained optimum has `u*(t) = a s + b` in local time `s`, with the
//! four integration constants and the free terminal time fixed by five
//! algebraic conditions: initial speed, initial position, terminal position,
//! `u*(t_M) = 0` and the transversality condition `β + a·v*(t_M) = 0`.
//!
//! Coefficients are stored relative to the start of the cubic segment (the
//! entry time `t0`, or the end of a leading `u_max` arc) so that residuals stay
//! at round-off level for arbitrary absolute entry times.

mod gate;
mod reference;

pub use gate::{check_unconstrained_ok, l_max, GateParams, GateReport, HeadwayCertificate, TpCheck};
pub use reference::{make_u_ref, make_v_ref, TrackingGains, UrefForm, VrefForm, RATIO_GUARD};

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual tolerance every returned plan satisfies.
pub const PLAN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
    #[error("alpha = 1 is pure minimum time; the cubic closed form does not apply")]
    MinimumTimeMode,
    #[error("planner did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("no admissible u_max arc end in the control zone")]
    NoAdmissibleArc,
}

/// Time weight `β` equivalent to the normalized convex combination weight `α`.
pub fn beta_from_alpha(alpha: f64, u_max: f64, u_min: f64) -> Result<f64, PlanError> {
    if alpha == 1.0 {
        return Err(PlanError::MinimumTimeMode);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(PlanError::InvalidInput(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let umax2 = (u_max * u_max).max(u_min * u_min);
    Ok(alpha * umax2 / (2.0 * (1.0 - alpha)))
}

/// Leading full-throttle arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmaxArc {
    /// Absolute switch time τ.
    pub end: f64,
    pub u_max: f64,
}

/// Planned position, speed and control at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanPoint {
    pub x: f64,
    pub v: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Control-zone entry time.
    pub t0: f64,
    pub v0: f64,
    pub length: f64,
    pub beta: f64,
    /// Cubic coefficients in local time `s = t - cubic_start()`:
    /// `u = a s + b`, `v = ½ a s² + b s + c`, `x = a s³/6 + b s²/2 + c s + d`.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Planned arrival time at the merging point.
    pub tm: f64,
    pub umax_arc: Option<UmaxArc>,
}

impl Plan {
    pub fn cubic_start(&self) -> f64 {
        self.umax_arc.map_or(self.t0, |arc| arc.end)
    }

    pub fn travel_time(&self) -> f64 {
        self.tm - self.t0
    }

    fn eval_cubic(&self, s: f64) -> PlanPoint {
        PlanPoint {
            x: self.a * s.powi(3) / 6.0 + self.b * s * s / 2.0 + self.c * s + self.d,
            v: 0.5 * self.a * s * s + self.b * s + self.c,
            u: self.a * s + self.b,
        }
    }

    /// Plan value at `t`, clamped to `[t0, tM]`; past `tM` the control is 0.
    pub fn eval(&self, t: f64) -> PlanPoint {
        let t = t.clamp(self.t0, self.tm);
        let mut p = self.eval_inside(t);
        if t >= self.tm {
            p.u = 0.0;
        }
        p
    }

    /// Like [`Plan::eval`] but past `tM` the vehicle keeps its terminal speed,
    /// and before `t0` it is extrapolated at its entry speed.
    pub fn eval_extended(&self, t: f64) -> PlanPoint {
        if t > self.tm {
            let end = self.eval(self.tm);
            PlanPoint { x: end.x + end.v * (t - self.tm), v: end.v, u: 0.0 }
        } else if t < self.t0 {
            PlanPoint { x: self.v0 * (t - self.t0), v: self.v0, u: 0.0 }
        } else {
            self.eval_inside(t)
        }
    }

    fn eval_inside(&self, t: f64) -> PlanPoint {
        match self.umax_arc {
            Some(arc) if t < arc.end => {
                let s = t - self.t0;
                PlanPoint {
                    x: self.v0 * s + 0.5 * arc.u_max * s * s,
                    v: self.v0 + arc.u_max * s,
                    u: arc.u_max,
                }
            }
            _ => self.eval_cubic(t - self.cubic_start()),
        }
    }

    /// Initial state of the cubic segment.
    fn cubic_initial(&self) -> (f64, f64) {
        match self.umax_arc {
            Some(arc) => {
                let s = arc.end - self.t0;
                (self.v0 * s + 0.5 * arc.u_max * s * s, self.v0 + arc.u_max * s)
            }
            None => (0.0, self.v0),
        }
    }

    /// The five boundary/optimality residuals on the cubic segment:
    /// initial speed, initial position, terminal position, terminal control,
    /// transversality.
    pub fn residuals(&self) -> [f64; 5] {
        let (x_s, v_s) = self.cubic_initial();
        cubic_residuals(&[self.a, self.b, self.c, self.d, self.tm - self.cubic_start()], x_s, v_s, self.length, self.beta)
    }

    /// `u*(τ) - u_max` at the arc junction (0 without an arc).
    pub fn continuity_residual(&self) -> f64 {
        self.umax_arc.map_or(0.0, |arc| self.b - arc.u_max)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals()
            .iter()
            .fold(self.continuity_residual().abs(), |m, r| m.max(r.abs()))
    }

    /// `∫ ½ u*² dt` over the plan.
    pub fn energy(&self) -> f64 {
        let prefix = self.umax_arc.map_or(0.0, |arc| 0.5 * arc.u_max * arc.u_max * (arc.end - self.t0));
        let t = self.tm - self.cubic_start();
        let (a, b) = (self.a, self.b);
        prefix + 0.5 * (a * a * t.powi(3) / 3.0 + a * b * t * t + b * b * t)
    }

    /// `β (tM - t0) + ∫ ½ u*² dt`
    pub fn objective(&self) -> f64 {
        self.beta * self.travel_time() + self.energy()
    }

    /// Coefficients of the cubic segment in absolute time `t`.
    pub fn absolute_coefficients(&self) -> [f64; 4] {
        let ts = self.cubic_start();
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        [
            a,
            b - a * ts,
            0.5 * a * ts * ts - b * ts + c,
            -a * ts.powi(3) / 6.0 + b * ts * ts / 2.0 - c * ts + d,
        ]
    }

    /// Largest planned speed (attained at `tM` for an unconstrained plan).
    pub fn peak_speed(&self) -> f64 {
        let mut vmax = self.v0;
        vmax = vmax.max(self.eval(self.tm).v);
        if self.a != 0.0 {
            let s_star = -self.b / self.a;
            let t = self.cubic_start() + s_star;
            if t > self.cubic_start() && t < self.tm {
                vmax = vmax.max(self.eval(t).v);
            }
        }
        vmax
    }
}

fn cubic_residuals(p: &[f64; 5], x_s: f64, v_s: f64, length: f64, beta: f64) -> [f64; 5] {
    let [a, b, c, d, t] = *p;
    [
        c - v_s,
        d - x_s,
        a * t.powi(3) / 6.0 + b * t * t / 2.0 + c * t + d - length,
        a * t + b,
        beta + 0.5 * a * a * t * t + a * b * t + a * c,
    ]
}

fn cubic_jacobian(p: &[f64; 5]) -> Matrix5<f64> {
    let [a, b, c, _d, t] = *p;
    Matrix5::from_row_slice(&[
        0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0,
        t.powi(3) / 6.0, t * t / 2.0, t, 1.0, a * t * t / 2.0 + b * t + c,
        t, 1.0, 0.0, 0.0, a,
        a * t * t + b * t + c, a * t, a, 0.0, a * a * t + a * b,
    ])
}

fn inf_norm(r: &[f64; 5]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Constants for given duration `T` from the reduced form.
fn reduced_coefficients(t: f64, x_s: f64, v_s: f64, length: f64) -> [f64; 5] {
    let dist = length - x_s;
    let a = 3.0 * (v_s * t - dist) / t.powi(3);
    [a, -a * t, v_s, x_s, t]
}

/// Damped Newton on the five conditions. Returns `[a, b, c, d, T]`.
fn newton_cubic(x_s: f64, v_s: f64, length: f64, beta: f64) -> Option<[f64; 5]> {
    let dist = length - x_s;
    let t_cruise = dist / v_s;
    let mut p = reduced_coefficients(t_cruise / 1.1, x_s, v_s, length);
    let mut r = cubic_residuals(&p, x_s, v_s, length, beta);
    for _ in 0..60 {
        let norm = inf_norm(&r);
        if norm <= 1e-13 * (1.0 + length + beta) {
            break;
        }
        let jac = cubic_jacobian(&p);
        let step = jac.lu().solve(&-Vector5::from_column_slice(&r))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = p;
            for k in 0..5 {
                trial[k] += lambda * step[k];
            }
            if trial[4] > 0.0 {
                let rt = cubic_residuals(&trial, x_s, v_s, length, beta);
                if inf_norm(&rt) < norm {
                    p = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // The physical branch decelerates towards tM: a ≤ 0, T ≤ cruise time.
    let ok = inf_norm(&r) <= PLAN_TOL && p[4] > 0.0 && p[4] <= t_cruise * (1.0 + 1e-12) && p[0] <= 1e-12;
    ok.then_some(p)
}

/// Transversality residual after eliminating the constants.
fn reduced_transversality(t: f64, x_s: f64, v_s: f64, length: f64, beta: f64) -> f64 {
    let a = 3.0 * (v_s * t - (length - x_s)) / t.powi(3);
    beta + a * v_s - 0.5 * a * a * t * t
}

fn bisect_cubic(x_s: f64, v_s: f64, length: f64, beta: f64) -> Option<[f64; 5]> {
    let t_hi0 = (length - x_s) / v_s;
    let mut lo = 0.5 * t_hi0;
    let mut guard = 0;
    while reduced_transversality(lo, x_s, v_s, length, beta) >= 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return None;
        }
    }
    let mut hi = t_hi0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reduced_transversality(mid, x_s, v_s, length, beta) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let p = reduced_coefficients(t, x_s, v_s, length);
    (inf_norm(&cubic_residuals(&p, x_s, v_s, length, beta)) <= PLAN_TOL).then_some(p)
}

/// Solve the cubic segment from state `(x_s, v_s)`; returns `[a, b, c, d, T]`.
fn solve_cubic(x_s: f64, v_s: f64, length: f64, beta: f64) -> Result<[f64; 5], PlanError> {
    if beta == 0.0 {
        return Ok([0.0, 0.0, v_s, x_s, (length - x_s) / v_s]);
    }
    if let Some(p) = newton_cubic(x_s, v_s, length, beta) {
        return Ok(p);
    }
    bisect_cubic(x_s, v_s, length, beta).ok_or_else(|| {
        let p = reduced_coefficients((length - x_s) / v_s * 0.9, x_s, v_s, length);
        PlanError::NoConvergence { residual: inf_norm(&cubic_residuals(&p, x_s, v_s, length, beta)) }
    })
}

fn check_inputs(v0: f64, length: f64, beta: f64) -> Result<(), PlanError> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(PlanError::InvalidInput(format!("entry speed must be > 0, got {v0}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(PlanError::InvalidInput(format!("zone length must be > 0, got {length}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(PlanError::InvalidInput(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

/// Unconstrained optimal plan from entry time `t0` at speed `v0`.
pub fn solve_unconstrained(t0: f64, v0: f64, length: f64, beta: f64) -> Result<Plan, PlanError> {
    check_inputs(v0, length, beta)?;
    let [a, b, c, d, t] = solve_cubic(0.0, v0, length, beta)?;
    Ok(Plan { t0, v0, length, beta, a, b, c, d, tm: t0 + t, umax_arc: None })
}

/// Optimal plan that starts with a `u_max` arc when the unconstrained plan
/// would open above `u_max`. The switch time is found by shooting on the
/// control-continuity residual.
pub fn plan_with_umax_arc(t0: f64, v0: f64, length: f64, beta: f64, u_max: f64) -> Result<Plan, PlanError> {
    let free = solve_unconstrained(t0, v0, length, beta)?;
    if !(u_max.is_finite()) || free.b <= u_max {
        return Ok(free);
    }
    if !(u_max > 0.0) {
        return Err(PlanError::InvalidInput(format!("u_max must be > 0, got {u_max}")));
    }
    // Arc duration at which the arc alone would reach the merging point.
    let s_end = (-v0 + (v0 * v0 + 2.0 * u_max * length).sqrt()) / u_max;
    let junction = |s: f64| -> Option<(f64, [f64; 5])> {
        let x_s = v0 * s + 0.5 * u_max * s * s;
        let v_s = v0 + u_max * s;
        let p = solve_cubic(x_s, v_s, length, beta).ok()?;
        Some((p[1] - u_max, p))
    };
    const GRID: usize = 400;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..GRID {
        let s = s_end * k as f64 / GRID as f64;
        match junction(s) {
            Some((r, _)) if r <= 0.0 => {
                hi = Some(s);
                break;
            }
            Some(_) => lo = s,
            None => break,
        }
    }
    let mut hi = hi.ok_or(PlanError::NoAdmissibleArc)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match junction(mid) {
            Some((r, _)) if r > 0.0 => lo = mid,
            Some(_) => hi = mid,
            None => return Err(PlanError::NoAdmissibleArc),
        }
        if hi - lo <= 1e-15 * s_end {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let (_, [a, b, c, d, t]) = junction(s).ok_or(PlanError::NoAdmissibleArc)?;
    let plan = Plan {
        t0,
        v0,
        length,
        beta,
        a,
        b,
        c,
        d,
        tm: t0 + s + t,
        umax_arc: Some(UmaxArc { end: t0 + s, u_max }),
    };
    if plan.max_residual() > PLAN_TOL {
        return Err(PlanError::NoConvergence { residual: plan.max_residual() });
    }
    Ok(plan)
}
