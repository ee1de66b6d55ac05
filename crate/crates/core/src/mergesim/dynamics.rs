//! Longitudinal vehicle models and the fuel-rate polynomial.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Main,
    Merge,
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Main => "main",
            Lane::Merge => "merge",
        }
    }
}

/// Measured state of one vehicle; `x` is the distance travelled from its
/// lane origin, so both lanes reach the merging point at `x = L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub v: f64,
    pub u_applied: f64,
    pub lane: Lane,
}

/// One additive disturbance sample on `(ẋ, v̇)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub w1: f64,
    pub w2: f64,
}

/// Rolling/aerodynamic resistance `F_r(v) = k0 sgn(v) + k1 v + k2 v²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resistance {
    pub mass: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for Resistance {
    fn default() -> Self {
        Self { mass: 1650.0, k0: 0.1, k1: 5.0, k2: 0.25 }
    }
}

impl Resistance {
    pub fn force(&self, v: f64) -> f64 {
        // sgn(0) = 0
        let sgn = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.k0 * sgn + self.k1 * v + self.k2 * v * v
    }

    /// Deceleration caused by resistance, `F_r(v)/m`.
    pub fn decel(&self, v: f64) -> f64 {
        self.force(v) / self.mass
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > 0.0) {
            return Err(format!("mass must be > 0, got {}", self.mass));
        }
        if !(self.k0 >= 0.0 && self.k1 >= 0.0 && self.k2 >= 0.0) {
            return Err("resistance coefficients must be >= 0".into());
        }
        Ok(())
    }
}

/// Forward-Euler step of the noisy double integrator.
pub fn step_dynamics(s: VehicleState, u: f64, dt: f64, noise: NoiseDraw) -> VehicleState {
    VehicleState {
        x: s.x + (s.v + noise.w1) * dt,
        v: s.v + (u + noise.w2) * dt,
        u_applied: u,
        lane: s.lane,
    }
}

/// Forward-Euler step with resistance; `force` is the traction force.
pub fn step_dynamics_nonlinear(s: VehicleState, force: f64, dt: f64, r: &Resistance, noise: NoiseDraw) -> VehicleState {
    let accel = (force - r.force(s.v)) / r.mass;
    VehicleState {
        x: s.x + (s.v + noise.w1) * dt,
        v: s.v + (accel + noise.w2) * dt,
        u_applied: force / r.mass,
        lane: s.lane,
    }
}

/// Polynomial fuel model (mL/s). The defaults are typical passenger-car
/// values; the accelerating term is zero while braking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuelCoefficients {
    /// Cruise polynomial `ω0 + ω1 v + ω2 v² + ω3 v³`.
    pub omega: [f64; 4],
    /// Acceleration multiplier `r0 + r1 v + r2 v²`.
    pub r: [f64; 3],
}

impl Default for FuelCoefficients {
    fn default() -> Self {
        Self { omega: [0.1569, 2.450e-2, -7.415e-4, 5.975e-5], r: [0.07224, 9.681e-2, 1.075e-3] }
    }
}

impl FuelCoefficients {
    pub fn cruise(&self, v: f64) -> f64 {
        let [w0, w1, w2, w3] = self.omega;
        w0 + v * (w1 + v * (w2 + v * w3))
    }

    pub fn accel_coef(&self, v: f64) -> f64 {
        let [r0, r1, r2] = self.r;
        r0 + v * (r1 + v * r2)
    }

    pub fn rate(&self, v: f64, u: f64) -> f64 {
        self.cruise(v) + u.max(0.0) * self.accel_coef(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::rk4_step;
    use approx::assert_abs_diff_eq;

    fn st(x: f64, v: f64) -> VehicleState {
        VehicleState { x, v, u_applied: 0.0, lane: Lane::Main }
    }

    #[test]
    fn euler_updates() {
        let s = step_dynamics(st(5.0, 20.0), 0.0, 0.1, NoiseDraw::default());
        assert_abs_diff_eq!(s.x, 7.0, epsilon = 1e-12);
        assert_eq!(s.v, 20.0);
        let s = step_dynamics(st(0.0, 20.0), 0.0, 0.1, NoiseDraw { w1: 2.0, w2: 0.0 });
        assert_abs_diff_eq!(s.x, 2.2, epsilon = 1e-12);
    }

    #[test]
    fn euler_close_to_rk4() {
        let dt = 0.1;
        let s = step_dynamics(st(0.0, 20.0), 1.5, dt, NoiseDraw::default());
        let r = rk4_step(|y| vec![y[1], 1.5], &[0.0, 20.0], dt);
        assert!((s.x - r[0]).abs() <= 1.5 * dt * dt);
        assert_abs_diff_eq!(s.v, r[1], epsilon = 1e-12);
    }

    #[test]
    fn nonlinear_equilibrium_and_degenerate() {
        let r = Resistance::default();
        let v = 20.0;
        let s = step_dynamics_nonlinear(st(0.0, v), r.force(v), 0.1, &r, NoiseDraw::default());
        assert_abs_diff_eq!(s.v, v, epsilon = 1e-12);
        let unit = Resistance { mass: 1.0, k0: 0.0, k1: 0.0, k2: 0.0 };
        let a = step_dynamics_nonlinear(st(3.0, 12.0), 0.7, 0.1, &unit, NoiseDraw::default());
        let b = step_dynamics(st(3.0, 12.0), 0.7, 0.1, NoiseDraw::default());
        assert_eq!(a, b);
        assert_eq!(r.force(0.0), 0.0);
    }

    #[test]
    fn nonlinear_close_to_rk4() {
        let r = Resistance::default();
        let f = 2000.0;
        let dt = 0.1;
        let s = step_dynamics_nonlinear(st(0.0, 20.0), f, dt, &r, NoiseDraw::default());
        let y = rk4_step(|y| vec![y[1], (f - r.force(y[1])) / r.mass], &[0.0, 20.0], dt);
        assert!((s.v - y[1]).abs() < 1e-4);
        assert!((s.x - y[0]).abs() < 0.01);
    }

    #[test]
    fn fuel_rate() {
        let c = FuelCoefficients::default();
        assert_eq!(c.rate(0.0, 0.0), c.omega[0]);
        assert_eq!(c.rate(15.0, -2.0), c.cruise(15.0));
        let cruise = 0.1569 + 2.450e-2 * 20.0 - 7.415e-4 * 400.0 + 5.975e-5 * 8000.0;
        let accel = 0.07224 + 9.681e-2 * 20.0 + 1.075e-3 * 400.0;
        assert_abs_diff_eq!(c.rate(20.0, 1.0), cruise + accel, epsilon = 1e-12);
    }
}
