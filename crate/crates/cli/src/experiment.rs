use std::path::Path;

use ocbf_core::mergesim::{run_scenario, Aggregate, CavMetrics, SimOutput};
use ocbf_core::{ControlMode, Lane, Metrics, ScenarioConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{ensure_dir, write_json, write_rows, write_trajectory};
use crate::CliError;

fn summary(label: &str, m: &Metrics) {
    let o = &m.overall;
    println!(
        "{label}: {} CAVs, travel time {:.4} s, energy {:.4}, objective {:.4}, fuel {:.2} mL, {} violations, {} infeasible steps",
        o.count,
        o.travel_time,
        o.energy,
        o.objective,
        o.fuel,
        m.violations.len(),
        m.infeasible.len()
    );
}

pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let SimOutput { metrics, log, .. } = run_scenario(cfg)?;
    ensure_dir(out)?;
    write_trajectory(&out.join("trajectory.csv"), &log)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    summary(&format!("seed {}", cfg.seed), &metrics);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    alpha: f64,
    beta: f64,
    seeds: u64,
    travel_time: f64,
    energy: f64,
    objective: f64,
    fuel: f64,
    violations: usize,
}

#[derive(Debug, Serialize)]
struct SweepScenario {
    alpha: f64,
    metrics: Metrics,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    axis: &'static str,
    points: Vec<SweepPoint>,
    scenarios: Vec<SweepScenario>,
}

pub fn sweep(base: &ScenarioConfig, out: &Path, alphas: &[f64], seeds: u64) -> Result<(), CliError> {
    let jobs: Vec<(f64, u64)> =
        alphas.iter().flat_map(|&a| (0..seeds.max(1)).map(move |k| (a, base.seed + k))).collect();
    let runs: Vec<SweepScenario> = jobs
        .par_iter()
        .map(|&(alpha, seed)| {
            let mut cfg = base.clone();
            cfg.set_alpha(alpha);
            cfg.seed = seed;
            Ok(SweepScenario { alpha, metrics: run_scenario(&cfg)?.metrics })
        })
        .collect::<Result<_, CliError>>()?;

    let mut points = Vec::new();
    for &alpha in alphas {
        let group: Vec<&Metrics> = runs.iter().filter(|r| r.alpha == alpha).map(|r| &r.metrics).collect();
        let n = group.len() as f64;
        let mean = |f: fn(&Aggregate) -> f64| group.iter().map(|m| f(&m.overall)).sum::<f64>() / n;
        points.push(SweepPoint {
            alpha,
            beta: group[0].beta,
            seeds: group.len() as u64,
            travel_time: mean(|a| a.travel_time),
            energy: mean(|a| a.energy),
            objective: mean(|a| a.objective),
            fuel: mean(|a| a.fuel),
            violations: group.iter().map(|m| m.violations.len()).sum(),
        });
    }
    ensure_dir(out)?;
    write_rows(&out.join("sweep_series.csv"), &points)?;
    for p in &points {
        println!(
            "alpha {:.3}: travel time {:.4} s, energy {:.4}, objective {:.4}, {} violations",
            p.alpha, p.travel_time, p.energy, p.objective, p.violations
        );
    }
    write_json(&out.join("sweep_report.json"), &SweepReport { axis: "alpha", points, scenarios: runs })
}

#[derive(Debug, Serialize)]
struct CavDelta {
    id: usize,
    lane: Lane,
    mode: ControlMode,
    travel_time: f64,
    energy: f64,
    objective: f64,
    fuel: f64,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    seed: u64,
    arrivals_sha256: String,
    baseline: ControlMode,
    runs: Vec<Metrics>,
    /// Each mode minus the baseline, per CAV that crossed in both runs.
    deltas: Vec<CavDelta>,
}

fn delta(mode: ControlMode, a: &CavMetrics, b: &CavMetrics) -> CavDelta {
    CavDelta {
        id: a.id,
        lane: a.lane,
        mode,
        travel_time: a.travel_time - b.travel_time,
        energy: a.energy - b.energy,
        objective: a.objective - b.objective,
        fuel: a.fuel - b.fuel,
    }
}

pub fn compare(base: &ScenarioConfig, out: &Path, modes: &[ControlMode]) -> Result<(), CliError> {
    let modes = if modes.is_empty() { &[ControlMode::Ocbf][..] } else { modes };
    let runs: Vec<Metrics> = modes
        .par_iter()
        .map(|&mode| {
            let mut cfg = base.clone();
            cfg.controller.mode = mode;
            Ok(run_scenario(&cfg)?.metrics)
        })
        .collect::<Result<_, CliError>>()?;
    let hash = runs[0].arrivals_sha256.clone();
    assert!(runs.iter().all(|m| m.arrivals_sha256 == hash), "modes saw different arrival streams");

    let baseline = &runs[0];
    let mut deltas = Vec::new();
    for (mode, m) in modes.iter().zip(&runs).skip(1) {
        for c in &m.cavs {
            if let Some(b) = baseline.cavs.iter().find(|b| b.id == c.id) {
                deltas.push(delta(*mode, c, b));
            }
        }
    }
    for (mode, m) in modes.iter().zip(&runs) {
        summary(mode.as_str(), m);
    }
    ensure_dir(out)?;
    write_rows(&out.join("compare_deltas.csv"), &deltas)?;
    write_json(
        &out.join("compare_report.json"),
        &CompareReport { seed: base.seed, arrivals_sha256: hash, baseline: modes[0], runs, deltas },
    )
}
