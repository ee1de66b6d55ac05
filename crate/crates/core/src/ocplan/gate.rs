//! Sufficient conditions under which a CAV can follow its unconstrained plan
//! without ever activating the safety, merging or speed constraints.

use serde::{Deserialize, Serialize};

use super::Plan;

const EPS_GRID: usize = 1000;
const ROOT_GRID_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub phi: f64,
    pub delta0: f64,
    pub length: f64,
    pub v_max: f64,
    pub beta: f64,
}

/// Result of the entry-headway test for one predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadwayCertificate {
    /// Entry-time difference `t_i⁰ - t_p⁰`.
    pub headway: f64,
    /// Best certifying ε (largest slack), if any.
    pub eps: Option<f64>,
    /// Required headway at `eps`, or the smallest required headway over the
    /// admissible grid when nothing certifies.
    pub threshold: f64,
    pub passed: bool,
}

/// How the whole-interval part of the same-lane check was established.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TpCheck {
    /// The predecessor reaches the merging point before `t_i⁰`.
    Vacuous,
    /// Roots of `v_i + φ u_i - v_p`, each with the barrier value there.
    Roots(Vec<(f64, f64)>),
    /// No root: the barrier is monotone, so its endpoint values decide.
    Monotone { b_start: f64, b_end: f64 },
}

impl TpCheck {
    pub fn established(&self) -> bool {
        match self {
            TpCheck::Vacuous => true,
            TpCheck::Roots(r) => r.iter().all(|&(_, b)| b >= 0.0),
            TpCheck::Monotone { b_start, b_end } => *b_start >= 0.0 && *b_end >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub safety_ok: bool,
    pub merge_ok: bool,
    pub speed_ok: bool,
    pub safety: Option<HeadwayCertificate>,
    pub tp: Option<TpCheck>,
    pub merge: Option<HeadwayCertificate>,
    pub l_max: f64,
}

impl GateReport {
    pub fn all_ok(&self) -> bool {
        self.safety_ok && self.merge_ok && self.speed_ok
    }
}

/// Largest zone length for which the unconstrained plan respects `v_max`.
pub fn l_max(v_max: f64, v0: f64, beta: f64) -> f64 {
    if beta <= 0.0 {
        return f64::INFINITY;
    }
    let num = 8.0 * v_max.powi(4) - 6.0 * v_max * v_max * v0 * v0 - 2.0 * v_max * v0.powi(3);
    if num <= 0.0 {
        0.0
    } else {
        (num / (9.0 * beta)).sqrt()
    }
}

fn headway_certificate(me: &Plan, pred: &Plan, params: &GateParams) -> HeadwayCertificate {
    let headway = me.t0 - pred.t0;
    let vp_m = pred.eval(pred.tm).v;
    let required = |eps: f64| {
        params.phi / eps
            + params.delta0 / (eps * me.v0)
            + 3.0 * params.length * (1.0 - eps) / (pred.v0 + 2.0 * vp_m)
    };
    let mut best: Option<(f64, f64)> = None;
    let mut min_required = f64::INFINITY;
    for k in 1..=EPS_GRID {
        let eps = k as f64 / EPS_GRID as f64;
        if eps * me.v0 > pred.v0 {
            break;
        }
        let req = required(eps);
        min_required = min_required.min(req);
        if headway >= req && best.is_none_or(|(_, r)| req < r) {
            best = Some((eps, req));
        }
    }
    match best {
        Some((eps, threshold)) => HeadwayCertificate { headway, eps: Some(eps), threshold, passed: true },
        None => HeadwayCertificate { headway, eps: None, threshold: min_required, passed: false },
    }
}

fn safety_barrier(me: &Plan, pred: &Plan, params: &GateParams, t: f64) -> f64 {
    let mine = me.eval(t);
    pred.eval_extended(t).x - mine.x - params.phi * mine.v - params.delta0
}

fn tp_check(me: &Plan, pred: &Plan, params: &GateParams) -> TpCheck {
    let (start, end) = (me.t0, pred.tm.min(me.tm));
    if end <= start {
        return TpCheck::Vacuous;
    }
    let h = |t: f64| {
        let mine = me.eval(t);
        mine.v + params.phi * mine.u - pred.eval_extended(t).v
    };
    let steps = ((end - start) / ROOT_GRID_STEP).ceil().max(1.0) as usize;
    let mut roots = Vec::new();
    let mut t_prev = start;
    let mut h_prev = h(start);
    if h_prev == 0.0 {
        roots.push(start);
    }
    for k in 1..=steps {
        let t = if k == steps { end } else { start + (end - start) * k as f64 / steps as f64 };
        let h_t = h(t);
        if h_t == 0.0 && t < end {
            roots.push(t);
        } else if h_prev * h_t < 0.0 {
            let (mut lo, mut hi, h_lo) = (t_prev, t, h_prev);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if h(mid) * h_lo > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 {
                    break;
                }
            }
            let root = 0.5 * (lo + hi);
            if root < end {
                roots.push(root);
            }
        }
        t_prev = t;
        h_prev = h_t;
    }
    if roots.is_empty() {
        TpCheck::Monotone {
            b_start: safety_barrier(me, pred, params, start),
            b_end: safety_barrier(me, pred, params, end),
        }
    } else {
        TpCheck::Roots(roots.into_iter().map(|t| (t, safety_barrier(me, pred, params, t))).collect())
    }
}

/// Gate report for CAV `me`. `ip` is the same-lane predecessor; `prev` is the
/// queue predecessor and must only be supplied when it differs from `ip`.
/// Missing neighbors make their checks hold vacuously.
pub fn check_unconstrained_ok(me: &Plan, ip: Option<&Plan>, prev: Option<&Plan>, params: &GateParams) -> GateReport {
    let (safety, tp) = match ip {
        Some(pred) => (Some(headway_certificate(me, pred, params)), Some(tp_check(me, pred, params))),
        None => (None, None),
    };
    let safety_ok = safety.is_none_or(|c| c.passed) && tp.as_ref().is_none_or(TpCheck::established);
    let merge = prev.map(|pred| headway_certificate(me, pred, params));
    let merge_ok = merge.is_none_or(|c| c.passed);
    let l_max = l_max(params.v_max, me.v0, params.beta);
    let speed_ok = me.v0 < params.v_max && params.length <= l_max;
    GateReport { safety_ok, merge_ok, speed_ok, safety, tp, merge, l_max }
}
