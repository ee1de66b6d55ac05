use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ocbf_core::controller::{barrier_specs, merge_phi, ControlParams, StepInput};
use ocbf_core::mergesim::{Lane, VehicleState};
use ocbf_core::ocplan::{solve_unconstrained, PLAN_TOL};
use ocbf_core::oracle::{enumerate_qp, fd_lie, planner_travel_time};
use ocbf_core::qpsolve::{solve_lp, solve_qp};
use ocbf_core::{ConstraintRow, LpProblem, QpProblem, RowTag, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

const CASES: usize = 200;
const BISECTION_TOL: f64 = 1e-8;
const QP_TOL: f64 = 1e-7;
const LIE_TOL: f64 = 1e-6;

struct Check {
    name: &'static str,
    ok: bool,
    detail: String,
}

fn worst_within(name: &'static str, worst: f64, tol: f64, what: &str) -> Check {
    Check { name, ok: worst <= tol, detail: format!("max {what} {worst:.3e} (tol {tol:.1e})") }
}

fn planner_checks(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, tol: Option<f64>) -> Vec<Check> {
    let a = &cfg.arrivals;
    let (mut residual, mut gap, mut failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..CASES {
        let v0 = if a.v0_max > a.v0_min { rng.random_range(a.v0_min..a.v0_max) } else { a.v0_min };
        let beta = rng.random_range(0.5..5.0);
        match solve_unconstrained(0.0, v0, cfg.geometry.length, beta) {
            Ok(p) => {
                residual = residual.max(p.max_residual());
                gap = gap.max((p.travel_time() - planner_travel_time(v0, cfg.geometry.length, beta, 1e-13)).abs());
            }
            Err(_) => failures += 1,
        }
    }
    let mut out = vec![
        worst_within("planner_residuals", residual, tol.unwrap_or(PLAN_TOL), "residual"),
        worst_within("planner_vs_bisection", gap, tol.unwrap_or(BISECTION_TOL), "|T - T_bisection|"),
    ];
    if failures > 0 {
        out[0].ok = false;
        out[0].detail += &format!(", {failures} solves failed");
    }
    out
}

fn qp_check(rng: &mut ChaCha8Rng, tol: Option<f64>) -> Check {
    let (mut worst, mut mismatched) = (0.0f64, 0);
    for case in 0..CASES {
        let n = rng.random_range(1..=3);
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..6.0)).collect();
        let f = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let rows: Vec<ConstraintRow> = (0..rng.random_range(0..=4))
            .map(|_| {
                let c = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                ConstraintRow::new(c, rng.random_range(-1.0..3.0), RowTag::Aux)
            })
            .collect();
        let lp = case % 2 == 1;
        let h = if lp {
            DMatrix::zeros(n, n)
        } else {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            &a * a.transpose() + DMatrix::identity(n, n) * 0.1
        };
        let mut qp = QpProblem::new(h, f.clone()).with_bounds(lo.clone(), hi.clone());
        qp.rows = rows.clone();
        let fast = if lp {
            let mut p = LpProblem::new(f.iter().copied().collect()).with_bounds(lo, hi);
            p.rows = rows;
            solve_lp(&p)
        } else {
            solve_qp(&qp)
        };
        let fast = fast.ok().filter(|s| s.is_optimal()).map(|s| s.objective);
        match (fast, enumerate_qp(&qp)) {
            (Some(a), Some((_, b))) => worst = worst.max((a - b).abs() / (1.0 + b.abs())),
            (None, None) => {}
            _ => mismatched += 1,
        }
    }
    let mut c = worst_within("qp_vs_enumeration", worst, tol.unwrap_or(QP_TOL), "relative objective gap");
    c.ok &= mismatched == 0;
    c.detail += &format!(", {mismatched} feasibility mismatches over {CASES} problems");
    c
}

/// Safety and speed rows against central differences of the continuous
/// flow; the merge row against one Euler step, which is the model it is
/// built for.
fn lie_check(params: &ControlParams, rng: &mut ChaCha8Rng, tol: Option<f64>) -> Check {
    let (phi, d0, l, dt) = (params.phi, params.delta0, params.length, params.dt);
    let drag = |v: f64| params.drag(v);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let v0 = rng.random_range(15.0..20.0);
        let me = VehicleState { x: rng.random_range(0.0..l), v: rng.random_range(1.0..29.0), u_applied: 0.0, lane: Lane::Main };
        let ip = VehicleState { x: me.x + rng.random_range(0.0..80.0), v: rng.random_range(1.0..29.0), ..me };
        let prev = VehicleState { x: me.x + rng.random_range(0.0..80.0), v: rng.random_range(1.0..29.0), lane: Lane::Merge, ..me };
        let input = StepInput { t: 0.0, me, v0, plan: None, ip: Some(ip), prev: Some(prev), u_prev: 0.0 };
        let state = [me.x, me.v, ip.x, ip.v];
        let f = |s: &[f64]| vec![s[1], -drag(s[1]), s[3], 0.0];
        let g = |_: &[f64]| vec![0.0, 1.0, 0.0, 0.0];
        for spec in barrier_specs(&input, params) {
            let (lf, lg) = match spec.tag {
                RowTag::SpeedMax => fd_lie(|s: &[f64]| params.v_max - s[1], f, g, &state, 1e-5),
                RowTag::SpeedMin => fd_lie(|s: &[f64]| s[1] - params.v_min, f, g, &state, 1e-5),
                RowTag::Safety => fd_lie(|s: &[f64]| s[2] - s[0] - phi * s[1] - d0, f, g, &state, 1e-5),
                RowTag::Merge => {
                    let b = |x: f64, v: f64, xp: f64| xp - x - merge_phi(x, v0, l, phi, d0) * v - d0;
                    let now = b(me.x, me.v, prev.x);
                    let flow = |u: f64| {
                        let (x, v) = (me.x + me.v * dt, me.v + (u - drag(me.v)) * dt);
                        (b(x, v, prev.x + prev.v * dt) - now) / dt
                    };
                    let at0 = flow(0.0);
                    (at0, flow(1.0) - at0)
                }
                _ => continue,
            };
            let scale = 1.0 + lf.abs();
            worst = worst.max((spec.lf - lf).abs() / scale).max((spec.lg[0] - lg).abs());
        }
    }
    worst_within("lie_derivatives", worst, tol.unwrap_or(LIE_TOL), "|row - finite difference|")
}

pub fn verify(config: Option<&Path>, tol: Option<f64>) -> Result<(), CliError> {
    let cfg = match config {
        Some(p) => ScenarioConfig::load_unvalidated(p)?,
        None => ScenarioConfig::default(),
    };
    let sigma = cfg.controller.gains.sigma;
    let mut checks = vec![
        Check {
            name: "gain_ordering",
            ok: sigma.windows(2).all(|w| 0.0 < w[0] && w[0] < w[1]),
            detail: format!("sigma = {sigma:?}"),
        },
        match cfg.validate() {
            Ok(()) => Check { name: "config", ok: true, detail: "valid".into() },
            Err(e) => Check { name: "config", ok: false, detail: e.to_string() },
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    checks.extend(planner_checks(&cfg, &mut rng, tol));
    checks.push(qp_check(&mut rng, tol));
    let params = if checks[1].ok { cfg.control_params() } else { ControlParams::default() };
    checks.push(lie_check(&params, &mut rng, tol));

    for c in &checks {
        println!("{} {}: {}", if c.ok { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match checks.iter().filter(|c| !c.ok).count() {
        0 => Ok(()),
        n => Err(CliError::Verify(n)),
    }
}
