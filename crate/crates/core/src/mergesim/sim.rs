use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arrivals::{arrivals_digest, spawn_arrivals, Arrival};
use super::dynamics::{step_dynamics, step_dynamics_nonlinear, Lane, NoiseDraw, VehicleState};
use super::metrics::{
    Aggregate, CavMetrics, InfeasibilityEvent, LogRow, Metrics, ModeSwitch, ViolationEvent, METRICS_SCHEMA_VERSION,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::controller::{self, merge_phi, ControlMode, ControlParams, SolveOutcome, StepInput, StepOutput};
use crate::ocplan::{check_unconstrained_ok, plan_with_umax_arc, solve_unconstrained, GateParams, GateReport, Plan};
use crate::qpsolve::RowTag;

/// Samples below `-VIOLATION_TOL` count as constraint violations.
pub const VIOLATION_TOL: f64 = 1e-6;

/// Extra simulated time after the last arrival before giving up on CAVs
/// that have not crossed.
const DRAIN_TIME: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CavStatus {
    InCz,
    /// Past the merging point, cruising at constant speed while a follower
    /// still references it.
    Held,
}

#[derive(Debug, Clone)]
pub struct CavRecord {
    pub id: usize,
    pub t0: f64,
    pub v0: f64,
    pub state: VehicleState,
    pub plan: Plan,
    pub gate: GateReport,
    pub status: CavStatus,
    pub tm_actual: Option<f64>,
    pub mode: ControlMode,
    pub u_prev: f64,
    rng: ChaCha8Rng,
    energy: f64,
    fuel: f64,
    pos_err: f64,
    speed_err: f64,
    samples: usize,
}

/// Same-lane predecessor and queue predecessor (when different) of the CAV
/// at position `pos` in the queue.
pub fn neighbors(queue: &[CavRecord], pos: usize) -> (Option<usize>, Option<usize>) {
    let lane = queue[pos].state.lane;
    let ip = (0..pos).rev().find(|&k| queue[k].state.lane == lane);
    let prev = pos.checked_sub(1).filter(|&k| Some(k) != ip);
    (ip, prev)
}

/// Keep in-zone CAVs and the held CAVs some in-zone CAV still refers to.
pub fn coordinator_update(queue: &mut Vec<CavRecord>) {
    let mut keep = vec![false; queue.len()];
    for pos in 0..queue.len() {
        if queue[pos].status == CavStatus::InCz {
            keep[pos] = true;
            let (ip, prev) = neighbors(queue, pos);
            for k in ip.into_iter().chain(prev) {
                keep[k] = true;
            }
        }
    }
    let mut it = keep.into_iter();
    queue.retain(|_| it.next().unwrap_or(false));
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub log: Vec<LogRow>,
    pub arrivals: Vec<Arrival>,
}

fn noise_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 + id as u64);
    rng
}

fn draw(rng: &mut ChaCha8Rng, w: (f64, f64)) -> NoiseDraw {
    let w1 = if w.0 > 0.0 { rng.random_range(-w.0..=w.0) } else { 0.0 };
    let w2 = if w.1 > 0.0 { rng.random_range(-w.1..=w.1) } else { 0.0 };
    NoiseDraw { w1, w2 }
}

pub fn scenario_arrivals(cfg: &ScenarioConfig) -> Vec<Arrival> {
    let a = &cfg.arrivals;
    let mut list: Vec<Arrival> = if a.fixed.is_empty() {
        spawn_arrivals(a.rate_main, a.rate_merge, cfg.horizon, (a.v0_min, a.v0_max), cfg.seed)
    } else {
        let mut v: Vec<Arrival> = a.fixed.iter().map(|f| Arrival { t: f.t, lane: f.lane, v0: f.v0 }).collect();
        v.sort_by(|x, y| x.t.total_cmp(&y.t).then(x.lane.cmp(&y.lane)));
        v
    };
    if let Some(n) = cfg.max_cavs {
        list.truncate(n);
    }
    list
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    params: ControlParams,
    beta: f64,
    queue: Vec<CavRecord>,
    next_id: usize,
    crossed: usize,
    cavs: Vec<CavMetrics>,
    log: Vec<LogRow>,
    open: BTreeMap<(usize, RowTag), ViolationEvent>,
    violations: Vec<ViolationEvent>,
    infeasible: Vec<InfeasibilityEvent>,
    switches: Vec<ModeSwitch>,
    fifo_inversions: usize,
    gate_passed: usize,
}

impl World<'_> {
    fn make_plan(&self, t0: f64, v0: f64) -> Plan {
        let l = self.cfg.geometry.length;
        plan_with_umax_arc(t0, v0, l, self.beta, self.params.u_max)
            .or_else(|_| solve_unconstrained(t0, v0, l, self.beta))
            .expect("entry speed and zone length validated")
    }

    fn try_spawn(&mut self, a: &Arrival, t: f64) -> bool {
        let g = &self.cfg.geometry;
        // Entry waits until both the lane predecessor and the queue
        // predecessor are a full headway into the zone.
        let last_same_lane = self.queue.iter().rev().find(|c| c.state.lane == a.lane);
        let headway = g.phi * a.v0 + g.delta0;
        if last_same_lane.into_iter().chain(self.queue.last()).any(|c| c.state.x < headway) {
            return false;
        }
        let plan = self.make_plan(t, a.v0);
        let record_pos = self.queue.len();
        let ip = last_same_lane.map(|c| &c.plan);
        let prev = self.queue.last().filter(|c| c.state.lane != a.lane).map(|c| &c.plan);
        let gate = check_unconstrained_ok(
            &plan,
            ip,
            prev,
            &GateParams { phi: g.phi, delta0: g.delta0, length: g.length, v_max: self.params.v_max, beta: self.beta },
        );
        if gate.all_ok() {
            self.gate_passed += 1;
        }
        let mode = match self.params.mode {
            ControlMode::TrackOnly if !gate.all_ok() => ControlMode::Ocbf,
            m => m,
        };
        let id = self.next_id;
        self.next_id += 1;
        self.queue.push(CavRecord {
            id,
            t0: t,
            v0: a.v0,
            state: VehicleState { x: 0.0, v: a.v0, u_applied: 0.0, lane: a.lane },
            plan,
            gate,
            status: CavStatus::InCz,
            tm_actual: None,
            mode,
            u_prev: 0.0,
            rng: noise_rng(self.cfg.seed, id),
            energy: 0.0,
            fuel: 0.0,
            pos_err: 0.0,
            speed_err: 0.0,
            samples: 0,
        });
        debug_assert_eq!(self.queue.len(), record_pos + 1);
        true
    }

    fn control(&mut self, pos: usize, t: f64) -> StepOutput {
        let (ip, prev) = neighbors(&self.queue, pos);
        let cav = &self.queue[pos];
        let input = StepInput {
            t,
            me: cav.state,
            v0: cav.v0,
            plan: Some(&cav.plan),
            ip: ip.map(|k| self.queue[k].state),
            prev: prev.map(|k| self.queue[k].state),
            u_prev: cav.u_prev,
        };
        let mut params = self.params.clone();
        params.mode = cav.mode;
        if cav.mode == ControlMode::TrackOnly {
            let out = controller::track_only_step(&input, &params);
            if controller::track_is_admissible(&input, &params, out.u) {
                return out;
            }
            self.switches.push(ModeSwitch { id: cav.id, t, from: ControlMode::TrackOnly, to: ControlMode::Ocbf });
            params.mode = ControlMode::Ocbf;
            let out = controller::ocbf_step(&input, &params);
            self.queue[pos].mode = ControlMode::Ocbf;
            return out;
        }
        controller::step(&input, &params)
    }

    fn flags(mode: ControlMode, out: &StepOutput) -> String {
        let mut s = mode.as_str().to_string();
        if !out.diag.recovering.is_empty() {
            s.push_str("|recovery");
        }
        match out.diag.outcome {
            SolveOutcome::ClfDropped => s.push_str("|clf_dropped"),
            SolveOutcome::Fallback => s.push_str("|infeasible"),
            _ => {}
        }
        s
    }

    fn observe(&mut self, id: usize, tag: RowTag, value: f64, t: f64) {
        let key = (id, tag);
        if value < -VIOLATION_TOL {
            let ev = self.open.entry(key).or_insert(ViolationEvent {
                id,
                constraint: tag,
                t_start: t,
                t_end: None,
                b_start: value,
                b_min: value,
                min_rate: None,
            });
            ev.b_min = ev.b_min.min(value);
        } else if let Some(mut ev) = self.open.remove(&key) {
            ev.t_end = Some(t);
            self.violations.push(ev);
        }
    }

    fn note_rates(&mut self, id: usize, out: &StepOutput) {
        for (tag, rate) in out.diag.recovering.iter().zip(&out.diag.rates) {
            if let Some(ev) = self.open.get_mut(&(id, *tag)) {
                ev.min_rate = Some(ev.min_rate.map_or(*rate, |r: f64| r.min(*rate)));
            }
        }
    }

    fn close_all_for(&mut self, id: usize) {
        let keys: Vec<_> = self.open.keys().filter(|k| k.0 == id).copied().collect();
        for k in keys {
            if let Some(ev) = self.open.remove(&k) {
                self.violations.push(ev);
            }
        }
    }

    /// Check every constraint of the CAV at `pos` on the current states.
    fn check_constraints(&mut self, pos: usize, t: f64, just_crossed: bool) {
        let (ip, prev) = neighbors(&self.queue, pos);
        let me = self.queue[pos].state;
        let id = self.queue[pos].id;
        let v0 = self.queue[pos].v0;
        let (g, p) = (&self.cfg.geometry, &self.params);
        let mut checks = vec![(RowTag::SpeedMax, p.v_max - me.v), (RowTag::SpeedMin, me.v - p.v_min)];
        if let Some(k) = ip {
            checks.push((RowTag::Safety, self.queue[k].state.x - me.x - g.phi * me.v - g.delta0));
        }
        if let Some(k) = prev {
            let z = self.queue[k].state.x - me.x;
            let phi_x = merge_phi(me.x.min(g.length), v0, g.length, g.phi, g.delta0);
            let b = if just_crossed { z - g.phi * me.v - g.delta0 } else { z - phi_x * me.v - g.delta0 };
            checks.push((RowTag::Merge, b));
        }
        for (tag, value) in checks {
            self.observe(id, tag, value, t);
        }
    }

    fn finish_cav(&mut self, pos: usize, tm: f64) {
        let cav = &mut self.queue[pos];
        cav.status = CavStatus::Held;
        cav.tm_actual = Some(tm);
        let travel = tm - cav.t0;
        let n = cav.samples.max(1) as f64;
        self.cavs.push(CavMetrics {
            id: cav.id,
            lane: cav.state.lane,
            t0: cav.t0,
            v0: cav.v0,
            tm,
            travel_time: travel,
            energy: cav.energy,
            fuel: cav.fuel,
            objective: self.beta * travel + cav.energy,
            plan_travel_time: cav.plan.travel_time(),
            plan_energy: cav.plan.energy(),
            plan_objective: cav.plan.objective(),
            gate_ok: cav.gate.all_ok(),
            mode: cav.mode,
            mean_position_error: cav.pos_err / n,
            mean_speed_error: cav.speed_err / n,
        });
        if cav.id != self.crossed {
            self.fifo_inversions += 1;
        }
        self.crossed += 1;
    }
}

/// Run one scenario to completion: every arrival is spawned, planned,
/// controlled each `Δt` and integrated until it crosses the merging point.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimOutput, ConfigError> {
    cfg.validate()?;
    let beta = cfg.beta()?;
    let params = cfg.control_params();
    let arrivals = scenario_arrivals(cfg);
    let digest = arrivals_digest(&arrivals);
    let mut pending: VecDeque<Arrival> = arrivals.iter().copied().collect();
    let t_cap = arrivals.last().map_or(0.0, |a| a.t) + DRAIN_TIME;
    let dt = cfg.dt;
    let w = (cfg.noise.w1, cfg.noise.w2);
    let l = cfg.geometry.length;
    let mut world = World {
        cfg,
        params,
        beta,
        queue: Vec::new(),
        next_id: 0,
        crossed: 0,
        cavs: Vec::new(),
        log: Vec::new(),
        open: BTreeMap::new(),
        violations: Vec::new(),
        infeasible: Vec::new(),
        switches: Vec::new(),
        fifo_inversions: 0,
        gate_passed: 0,
    };

    let mut k: u64 = 0;
    loop {
        let t = k as f64 * dt;
        let active = world.queue.iter().any(|c| c.status == CavStatus::InCz);
        if (pending.is_empty() && !active) || t > t_cap {
            break;
        }
        // Spawn in arrival order; a blocked arrival also blocks later ones so
        // the queue stays FIFO in entry time.
        while let Some(a) = pending.front().copied() {
            if a.t > t + 1e-9 || !world.try_spawn(&a, t) {
                break;
            }
            pending.pop_front();
        }

        // Controls on the tick-start snapshot.
        let n = world.queue.len();
        let mut outputs: Vec<Option<StepOutput>> = vec![None; n];
        for (pos, slot) in outputs.iter_mut().enumerate() {
            if world.queue[pos].status == CavStatus::InCz {
                *slot = Some(world.control(pos, t));
            }
        }

        #[allow(clippy::needless_range_loop)]
        for pos in 0..n {
            let Some(out) = &outputs[pos] else { continue };
            let (ip, prev) = neighbors(&world.queue, pos);
            let cav = &world.queue[pos];
            let id = cav.id;
            world.log.push(LogRow {
                t,
                id,
                lane: cav.state.lane,
                x: cav.state.x,
                v: cav.state.v,
                u: out.u,
                delta: out.delta,
                b_safety: ip.and(out.diag.b_safety),
                b_merge: prev.and(out.diag.b_merge),
                mode_flags: World::flags(cav.mode, out),
            });
            if out.diag.infeasible() {
                world.infeasible.push(InfeasibilityEvent { id, t });
            }
            world.note_rates(id, out);
        }

        // Integrate every vehicle; held ones cruise with u = 0.
        let mut crossings = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for pos in 0..n {
            let u = outputs[pos].as_ref().map_or(0.0, |o| o.u);
            let resistance = world.params.resistance;
            let cav = &mut world.queue[pos];
            let noise = draw(&mut cav.rng, w);
            let before = cav.state;
            cav.state = match (resistance, cav.status) {
                (Some(r), CavStatus::InCz) => step_dynamics_nonlinear(before, u * r.mass, dt, &r, noise),
                // A held CAV is assumed to hold its speed exactly.
                (Some(r), CavStatus::Held) => step_dynamics_nonlinear(before, r.force(before.v), dt, &r, noise),
                (None, _) => step_dynamics(before, u, dt, noise),
            };
            if cav.status != CavStatus::InCz {
                continue;
            }
            let plan_pt = cav.plan.eval(t);
            cav.pos_err += before.x - plan_pt.x;
            cav.speed_err += before.v - plan_pt.v;
            cav.samples += 1;
            let span = if cav.state.x >= l {
                let frac = if cav.state.x > before.x { (l - before.x) / (cav.state.x - before.x) } else { 1.0 };
                let tm = t + dt * frac.clamp(0.0, 1.0);
                crossings.push((pos, tm));
                dt.min(tm - t)
            } else {
                dt
            };
            cav.energy += 0.5 * u * u * span;
            cav.fuel += world.params.fuel.rate(before.v, u) * span;
            cav.u_prev = u;
        }

        let t_next = (k + 1) as f64 * dt;
        for (pos, out) in outputs.iter().enumerate() {
            if out.is_some() {
                let just_crossed = crossings.iter().any(|&(p, _)| p == pos);
                world.check_constraints(pos, t_next, just_crossed);
            }
        }
        for &(pos, tm) in &crossings {
            let id = world.queue[pos].id;
            world.finish_cav(pos, tm);
            world.close_all_for(id);
        }
        coordinator_update(&mut world.queue);
        k += 1;
    }

    let unfinished = world.queue.iter().filter(|c| c.status == CavStatus::InCz).count();
    let ids: Vec<usize> = world.open.keys().map(|k| k.0).collect();
    for id in ids {
        world.close_all_for(id);
    }
    world.violations.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.id.cmp(&b.id)));
    world.cavs.sort_by_key(|c| c.id);
    let spawned = world.next_id.max(1) as f64;
    let metrics = Metrics {
        schema_version: METRICS_SCHEMA_VERSION,
        seed: cfg.seed,
        mode: cfg.controller.mode,
        beta,
        arrivals_sha256: digest,
        overall: Aggregate::of(&world.cavs),
        main: Aggregate::of(world.cavs.iter().filter(|c| c.lane == Lane::Main)),
        merge: Aggregate::of(world.cavs.iter().filter(|c| c.lane == Lane::Merge)),
        cavs: world.cavs,
        unfinished,
        violations: world.violations,
        infeasible: world.infeasible,
        mode_switches: world.switches,
        fifo_inversions: world.fifo_inversions,
        gate_pass_fraction: world.gate_passed as f64 / spawned,
    };
    Ok(SimOutput { metrics, log: world.log, arrivals })
}
