//! Tracking references derived from a plan and the measured state.

use serde::{Deserialize, Serialize};

use super::PlanPoint;

/// States at or below this value make the ratio forms fall back to feedback.
pub const RATIO_GUARD: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrefForm {
    Exponential,
    Ratio,
    Feedback,
    /// `u_ref = 0`: pure energy minimization with the CLF doing the tracking.
    Zero,
    /// Open-loop replay of the planned control.
    Plan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VrefForm {
    Exponential,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingGains {
    /// Exponential weights for position and speed error, `σ₁ < σ₂`.
    pub sigma: [f64; 2],
    /// Exponential weight of the speed reference.
    pub sigma_v: f64,
    /// Feedback gains for position and speed error.
    pub k: [f64; 2],
    pub u_form: UrefForm,
    pub v_form: VrefForm,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            sigma: [4.0, 12.0],
            sigma_v: 40.0,
            k: [0.25, 0.1],
            u_form: UrefForm::Exponential,
            v_form: VrefForm::Exponential,
        }
    }
}

impl TrackingGains {
    pub fn validate(&self) -> Result<(), String> {
        let [s1, s2] = self.sigma;
        if !(s1 > 0.0 && s2 > 0.0 && self.sigma_v > 0.0) {
            return Err(format!("tracking sigmas must be positive, got {:?} and {}", self.sigma, self.sigma_v));
        }
        if s1 >= s2 {
            return Err(format!("tracking sigmas must increase with state order, got sigma1={s1} sigma2={s2}"));
        }
        if !(self.k[0] > 0.0 && self.k[1] > 0.0) {
            return Err(format!("feedback gains must be positive, got {:?}", self.k));
        }
        Ok(())
    }
}

fn feedback(plan: PlanPoint, x: f64, v: f64, gains: &TrackingGains) -> f64 {
    plan.u + gains.k[0] * (plan.x - x) + gains.k[1] * (plan.v - v)
}

/// Control reference for the current step.
pub fn make_u_ref(form: UrefForm, plan: PlanPoint, x: f64, v: f64, gains: &TrackingGains) -> f64 {
    match form {
        UrefForm::Exponential => ((plan.x - x) / gains.sigma[0] + (plan.v - v) / gains.sigma[1]).exp() * plan.u,
        UrefForm::Ratio if x > RATIO_GUARD && v > RATIO_GUARD => 0.5 * (plan.x / x + plan.v / v) * plan.u,
        UrefForm::Ratio | UrefForm::Feedback => feedback(plan, x, v, gains),
        UrefForm::Zero => 0.0,
        UrefForm::Plan => plan.u,
    }
}

/// Speed reference for the CLF row.
pub fn make_v_ref(form: VrefForm, plan: PlanPoint, x: f64, gains: &TrackingGains) -> f64 {
    match form {
        VrefForm::Exponential => ((plan.x - x) / gains.sigma_v).exp() * plan.v,
        VrefForm::Ratio if x > RATIO_GUARD => plan.x / x * plan.v,
        VrefForm::Ratio => plan.v + gains.k[0] * (plan.x - x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const PT: PlanPoint = PlanPoint { x: 100.0, v: 22.0, u: 1.0 };

    #[test]
    fn zero_error_identity() {
        let g = TrackingGains::default();
        for form in [UrefForm::Exponential, UrefForm::Ratio, UrefForm::Feedback] {
            assert_eq!(make_u_ref(form, PT, PT.x, PT.v, &g), PT.u);
        }
        for form in [VrefForm::Exponential, VrefForm::Ratio] {
            assert_eq!(make_v_ref(form, PT, PT.x, &g), PT.v);
        }
    }

    #[test]
    fn exponential_forms() {
        let g = TrackingGains::default();
        assert_abs_diff_eq!(make_u_ref(UrefForm::Exponential, PT, 96.0, 22.0, &g), std::f64::consts::E, epsilon = 1e-12);
        assert_abs_diff_eq!(make_v_ref(VrefForm::Exponential, PT, 140.0, &g), 22.0 / std::f64::consts::E, epsilon = 1e-12);
    }

    #[test]
    fn feedback_and_ratio() {
        let g = TrackingGains::default();
        assert_abs_diff_eq!(make_u_ref(UrefForm::Feedback, PT, 98.0, 23.0, &g), 1.4, epsilon = 1e-12);
        assert_abs_diff_eq!(make_v_ref(VrefForm::Ratio, PT, 110.0, &g), 20.0, epsilon = 1e-12);
        // Falls back to feedback at the origin.
        let origin = PlanPoint { x: 0.0, v: 20.0, u: 1.0 };
        assert_eq!(make_u_ref(UrefForm::Ratio, origin, 0.0, 20.0, &g), 1.0);
        assert_eq!(make_u_ref(UrefForm::Zero, PT, 0.0, 0.0, &g), 0.0);
    }

    #[test]
    fn sigma_ordering_is_checked() {
        let mut g = TrackingGains::default();
        assert!(g.validate().is_ok());
        g.sigma = [12.0, 4.0];
        assert!(g.validate().is_err());
    }
}
