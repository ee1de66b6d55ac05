//! Constraint-row builders: HOCBF rows for safety and state limits, CLF rows
//! for tracking, the noise-robust variant, and violation-recovery rows.
//!
//! Every builder returns rows in `coeffs · z ≤ rhs` form over a short local
//! decision vector (control inputs first, then any auxiliary variable the row
//! introduces). Callers place them into their own decision layout with
//! [`ConstraintRow::embed`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::qpsolve::{ConstraintRow, RowTag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("relative degree {0} not supported (expected 1 or 2)")]
    UnsupportedDegree(u8),
    #[error("barrier description inconsistent: {0}")]
    Malformed(String),
    #[error("control does not appear at the declared relative degree")]
    ZeroControlGradient,
    #[error("robust rows need relative degree 1; use the recovery sequence instead")]
    RobustNeedsDegreeOne,
    #[error("constraint is not violated (b = {0}); no recovery row needed")]
    NotViolated(f64),
    #[error("positive degree {0} does not need recovery")]
    NoRecoveryNeeded(u8),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Linear class-K function `α(s) = p·s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassK {
    pub p: f64,
}

impl ClassK {
    pub fn new(p: f64) -> Result<Self, BarrierError> {
        if p > 0.0 && p.is_finite() {
            Ok(Self { p })
        } else {
            Err(BarrierError::InvalidParameter(format!("class-K gain must be > 0, got {p}")))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.p * s
    }
}

/// Lie derivatives needed when the control first appears in `b̈`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrder {
    /// `L_f² b`
    pub lf2: f64,
    /// `L_g L_f b`, one entry per control input.
    pub lglf: Vec<f64>,
}

/// A barrier `b(x) ≥ 0` evaluated at the current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub value: f64,
    /// `L_f b`
    pub lf: f64,
    /// `L_g b`, one entry per control input (zero when `rel_degree = 2`).
    pub lg: Vec<f64>,
    pub second_order: Option<SecondOrder>,
    pub rel_degree: u8,
    /// One gain per derivative level.
    pub classk: Vec<ClassK>,
    /// `db/dx` over the states the noise acts on, for the robust row.
    pub grad: Vec<f64>,
    pub tag: RowTag,
}

impl BarrierSpec {
    /// Relative-degree-one barrier.
    pub fn first_order(value: f64, lf: f64, lg: Vec<f64>, p: f64, grad: Vec<f64>, tag: RowTag) -> Self {
        Self {
            value,
            lf,
            lg,
            second_order: None,
            rel_degree: 1,
            classk: vec![ClassK { p }],
            grad,
            tag,
        }
    }

    pub fn controls(&self) -> usize {
        self.lg.len()
    }

    pub fn validate(&self) -> Result<(), BarrierError> {
        match self.rel_degree {
            1 | 2 => {}
            m => return Err(BarrierError::UnsupportedDegree(m)),
        }
        let m = self.rel_degree as usize;
        if self.classk.len() != m {
            return Err(BarrierError::Malformed(format!(
                "{} class-K gains for relative degree {m}",
                self.classk.len()
            )));
        }
        if self.classk.iter().any(|k| !(k.p > 0.0)) {
            return Err(BarrierError::InvalidParameter("class-K gains must be positive".into()));
        }
        let finite = self.value.is_finite()
            && self.lf.is_finite()
            && self.lg.iter().all(|v| v.is_finite())
            && self.grad.iter().all(|v| v.is_finite());
        if !finite {
            return Err(BarrierError::Malformed("non-finite entries".into()));
        }
        match (m, &self.second_order) {
            (1, None) => {
                if self.lg.iter().all(|&v| v == 0.0) {
                    return Err(BarrierError::ZeroControlGradient);
                }
            }
            (2, Some(so)) => {
                if so.lglf.len() != self.lg.len() {
                    return Err(BarrierError::Malformed("L_gL_f b length differs from L_g b".into()));
                }
                if self.lg.iter().any(|&v| v != 0.0) {
                    return Err(BarrierError::Malformed(
                        "control appears in the first derivative; relative degree is 1".into(),
                    ));
                }
                if so.lglf.iter().all(|&v| v == 0.0) {
                    return Err(BarrierError::ZeroControlGradient);
                }
            }
            (1, Some(_)) => return Err(BarrierError::Malformed("second-order terms on a degree-1 barrier".into())),
            _ => return Err(BarrierError::Malformed("degree-2 barrier without second-order terms".into())),
        }
        Ok(())
    }

    /// `ψ₁ = L_f b + p₁ b` (degree 2 only).
    pub fn psi1(&self) -> f64 {
        self.lf + self.classk[0].eval(self.value)
    }

    /// Lower-order Lie terms `S(b)` of the degree-2 constraint; for linear
    /// class-K this is `p₁ L_f b`.
    pub fn s_term(&self) -> f64 {
        self.classk[0].p * self.lf
    }
}

/// HOCBF row over the control inputs.
///
/// Degree 1: `-L_g b · u ≤ L_f b + p b`.
/// Degree 2: `-L_g L_f b · u ≤ L_f² b + S(b) + p₂ ψ₁`.
pub fn hocbf_row(spec: &BarrierSpec) -> Result<ConstraintRow, BarrierError> {
    spec.validate()?;
    let row = match &spec.second_order {
        None => ConstraintRow::new(
            spec.lg.iter().map(|v| -v).collect(),
            spec.lf + spec.classk[0].eval(spec.value),
            spec.tag,
        ),
        Some(so) => ConstraintRow::new(
            so.lglf.iter().map(|v| -v).collect(),
            so.lf2 + spec.s_term() + spec.classk[1].eval(spec.psi1()),
            spec.tag,
        ),
    };
    Ok(row)
}

/// Degree-1 HOCBF row with the right-hand side tightened by `|db/dx| · W`.
pub fn robust_hocbf_row(spec: &BarrierSpec, noise_bound: &[f64]) -> Result<ConstraintRow, BarrierError> {
    spec.validate()?;
    if spec.rel_degree != 1 {
        return Err(BarrierError::RobustNeedsDegreeOne);
    }
    if noise_bound.len() != spec.grad.len() {
        return Err(BarrierError::Malformed(format!(
            "noise bound has {} entries, gradient has {}",
            noise_bound.len(),
            spec.grad.len()
        )));
    }
    if noise_bound.iter().any(|w| !(*w >= 0.0)) {
        return Err(BarrierError::InvalidParameter("noise bounds must be >= 0".into()));
    }
    let mut row = hocbf_row(spec)?;
    row.rhs -= noise_margin(&spec.grad, noise_bound);
    Ok(row)
}

/// `Σ |∂b/∂xⱼ| Wⱼ`
pub fn noise_margin(grad: &[f64], noise_bound: &[f64]) -> f64 {
    grad.iter().zip(noise_bound).map(|(g, w)| g.abs() * w).sum()
}

/// Smallest `i` with `b^{(i)} > 0`, else the number of derivatives supplied.
pub fn positive_degree(derivs: &[f64]) -> u8 {
    derivs
        .iter()
        .position(|&d| d > 0.0)
        .unwrap_or(derivs.len()) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RecoveryMode {
    /// Require `ḃ ≥ c` for a constant `c > 0`.
    Fixed { c: f64 },
    /// Make the rate a decision variable in `[0, c_max]` rewarded by `-K c`.
    Maximize { k: f64, c_max: f64 },
}

/// Output of [`recovery_row`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    /// Over `(u..., c)` in maximize mode, over `u...` in fixed mode.
    pub row: ConstraintRow,
    /// Linear cost coefficient on `c` (`-K`), maximize mode only.
    pub rate_cost: Option<f64>,
    /// Bounds on `c`, maximize mode only.
    pub rate_bounds: Option<(f64, f64)>,
}

/// Row forcing a violated degree-1 barrier to increase: `L_f b + L_g b·u ≥ c`.
pub fn recovery_row(spec: &BarrierSpec, mode: RecoveryMode) -> Result<RecoveryRow, BarrierError> {
    if spec.rel_degree != 1 {
        return Err(BarrierError::UnsupportedDegree(spec.rel_degree));
    }
    if spec.value >= 0.0 {
        return Err(BarrierError::NotViolated(spec.value));
    }
    spec.validate()?;
    let neg_lg: Vec<f64> = spec.lg.iter().map(|v| -v).collect();
    match mode {
        RecoveryMode::Fixed { c } => {
            if !(c > 0.0) {
                return Err(BarrierError::InvalidParameter(format!("recovery rate must be > 0, got {c}")));
            }
            Ok(RecoveryRow {
                row: ConstraintRow::new(neg_lg, spec.lf - c, RowTag::Recovery),
                rate_cost: None,
                rate_bounds: None,
            })
        }
        RecoveryMode::Maximize { k, c_max } => {
            if !(k > 0.0) || !(c_max > 0.0) {
                return Err(BarrierError::InvalidParameter("K and c_max must be > 0".into()));
            }
            let mut coeffs = neg_lg;
            coeffs.push(1.0);
            Ok(RecoveryRow {
                row: ConstraintRow::new(coeffs, spec.lf, RowTag::Recovery),
                rate_cost: Some(-k),
                rate_bounds: Some((0.0, c_max)),
            })
        }
    }
}

/// Recovery row for a degree-2 barrier at positive degree `rho ∈ {1, 2}`.
///
/// `rho = 2`: `b̈ ≥ ε`.
/// `rho = 1`: `b̈ + p₂ (ḃ - ε) ≥ 0`, which keeps `ḃ - ε ≥ 0` invariant once
/// reached, so `b` climbs back at rate at least `ε`.
pub fn recovery_sequence(spec: &BarrierSpec, rho: u8, eps: f64) -> Result<ConstraintRow, BarrierError> {
    if spec.rel_degree != 2 {
        return Err(BarrierError::UnsupportedDegree(spec.rel_degree));
    }
    spec.validate()?;
    if !(eps > 0.0) {
        return Err(BarrierError::InvalidParameter(format!("rate must be > 0, got {eps}")));
    }
    let so = spec.second_order.as_ref().expect("validated");
    let coeffs: Vec<f64> = so.lglf.iter().map(|v| -v).collect();
    match rho {
        0 => Err(BarrierError::NoRecoveryNeeded(0)),
        2 => Ok(ConstraintRow::new(coeffs, so.lf2 - eps, RowTag::Recovery)),
        1 => Ok(ConstraintRow::new(
            coeffs,
            so.lf2 + spec.classk[1].eval(spec.lf - eps),
            RowTag::Recovery,
        )),
        r => Err(BarrierError::InvalidParameter(format!("positive degree {r} exceeds relative degree 2"))),
    }
}

/// Default rate for [`recovery_sequence`]: `|dψ/dx|·W` when a noise bound is
/// known, otherwise 0.5.
pub fn default_recovery_rate(grad: &[f64], noise_bound: Option<&[f64]>) -> f64 {
    match noise_bound {
        Some(w) => {
            let m = noise_margin(grad, w);
            if m > 0.0 {
                m
            } else {
                0.5
            }
        }
        None => 0.5,
    }
}

/// CLF row over `(u..., δ)`: `L_fV + L_gV·u + εV ≤ δ` with `V = y²`.
pub fn clf_row(y: f64, lgv: &[f64], lfv: f64, eps: f64) -> Result<ConstraintRow, BarrierError> {
    if !(eps > 0.0) {
        return Err(BarrierError::InvalidParameter(format!("CLF gain must be > 0, got {eps}")));
    }
    let mut coeffs = lgv.to_vec();
    coeffs.push(-1.0);
    Ok(ConstraintRow::new(coeffs, -lfv - eps * y * y, RowTag::Clf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Merging safety barrier b = z - φ v - δ₀ for a double integrator.
    fn safety(z: f64, v: f64, vp: f64, phi: f64, p: f64) -> BarrierSpec {
        BarrierSpec::first_order(z - phi * v, vp - v, vec![-phi], p, vec![1.0, -phi], RowTag::Safety)
    }

    fn position_box(x: f64, v: f64, xmax: f64, p1: f64, p2: f64) -> BarrierSpec {
        BarrierSpec {
            value: xmax - x,
            lf: -v,
            lg: vec![0.0],
            second_order: Some(SecondOrder { lf2: 0.0, lglf: vec![-1.0] }),
            rel_degree: 2,
            classk: vec![ClassK { p: p1 }, ClassK { p: p2 }],
            grad: vec![1.0, 0.0],
            tag: RowTag::Aux,
        }
    }

    #[test]
    fn merging_safety_row() {
        let spec = safety(60.0, 20.0, 18.0, 1.8, 1.0);
        assert_abs_diff_eq!(spec.value, 24.0);
        let row = hocbf_row(&spec).unwrap();
        assert_abs_diff_eq!(row.coeffs[0], 1.8);
        assert_abs_diff_eq!(row.rhs, 22.0, epsilon = 1e-12);
    }

    #[test]
    fn speed_limit_at_boundary_forbids_acceleration() {
        let spec = BarrierSpec::first_order(0.0, 0.0, vec![-1.0], 1.0, vec![0.0, 1.0], RowTag::SpeedMax);
        let row = hocbf_row(&spec).unwrap();
        assert_eq!(row.coeffs, vec![1.0]);
        assert_abs_diff_eq!(row.rhs, 0.0);
    }

    #[test]
    fn position_box_degree_two() {
        // ψ₁ = -v + p₁(x_max - x) = 10, S = p₁ L_f b = 0, row: u ≤ 0 + 0 + 10.
        let row = hocbf_row(&position_box(0.0, 0.0, 10.0, 1.0, 1.0)).unwrap();
        assert_eq!(row.coeffs, vec![1.0]);
        assert_abs_diff_eq!(row.rhs, 10.0);
        // With motion: ψ₁ = -2 + 8 = 6, S = -2, row u ≤ -2 + 6 = 4.
        let row = hocbf_row(&position_box(2.0, 2.0, 10.0, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(row.rhs, 4.0);
    }

    #[test]
    fn rejects_bad_degrees() {
        let mut spec = safety(60.0, 20.0, 18.0, 1.8, 1.0);
        spec.rel_degree = 3;
        assert_eq!(hocbf_row(&spec), Err(BarrierError::UnsupportedDegree(3)));
        let mut flat = safety(60.0, 20.0, 18.0, 1.8, 1.0);
        flat.lg = vec![0.0];
        assert_eq!(hocbf_row(&flat), Err(BarrierError::ZeroControlGradient));
    }

    #[test]
    fn robust_row_reduction() {
        let spec = safety(60.0, 20.0, 18.0, 1.8, 1.0);
        let plain = hocbf_row(&spec).unwrap();
        assert_eq!(robust_hocbf_row(&spec, &[0.0, 0.0]).unwrap(), plain);
        let robust = robust_hocbf_row(&spec, &[2.0, 0.2]).unwrap();
        assert_abs_diff_eq!(robust.rhs, 19.64, epsilon = 1e-12);

        let vmax = BarrierSpec::first_order(5.0, 0.0, vec![-1.0], 1.0, vec![-1.0], RowTag::SpeedMax);
        let r = robust_hocbf_row(&vmax, &[0.2]).unwrap();
        assert_abs_diff_eq!(r.rhs, 4.8, epsilon = 1e-12);

        assert_eq!(
            robust_hocbf_row(&position_box(0.0, 0.0, 10.0, 1.0, 1.0), &[0.1, 0.1]),
            Err(BarrierError::RobustNeedsDegreeOne)
        );
    }

    #[test]
    fn positive_degree_cases() {
        assert_eq!(positive_degree(&[3.0]), 0);
        assert_eq!(positive_degree(&[-1.0, 2.0]), 1);
        assert_eq!(positive_degree(&[-1.0, -0.5]), 2);
        assert_eq!(positive_degree(&[0.0, 0.0]), 2);
    }

    #[test]
    fn fixed_recovery_row() {
        let spec = safety(-1.0 + 1.8 * 20.0, 20.0, 18.0, 1.8, 1.0);
        assert_abs_diff_eq!(spec.value, -1.0, epsilon = 1e-12);
        let rec = recovery_row(&spec, RecoveryMode::Fixed { c: 1.0 }).unwrap();
        let u_max = rec.row.rhs / rec.row.coeffs[0];
        assert_abs_diff_eq!(u_max, -3.0 / 1.8, epsilon = 1e-12);
        assert!(rec.rate_cost.is_none());
    }

    #[test]
    fn maximize_recovery_row_layout() {
        let spec = safety(35.0, 20.0, 18.0, 1.8, 1.0);
        let rec = recovery_row(&spec, RecoveryMode::Maximize { k: 100.0, c_max: 5.0 }).unwrap();
        assert_eq!(rec.row.coeffs, vec![1.8, 1.0]);
        assert_abs_diff_eq!(rec.row.rhs, -2.0);
        assert_eq!(rec.rate_cost, Some(-100.0));
        assert_eq!(rec.rate_bounds, Some((0.0, 5.0)));
    }

    #[test]
    fn recovery_rejects_satisfied_or_flat() {
        let ok = safety(60.0, 20.0, 18.0, 1.8, 1.0);
        assert!(matches!(recovery_row(&ok, RecoveryMode::Fixed { c: 1.0 }), Err(BarrierError::NotViolated(_))));
        let mut flat = safety(35.0, 20.0, 18.0, 1.8, 1.0);
        flat.lg = vec![0.0];
        assert_eq!(recovery_row(&flat, RecoveryMode::Fixed { c: 1.0 }), Err(BarrierError::ZeroControlGradient));
    }

    #[test]
    fn recovery_sequence_rows() {
        // b = x_max - x = -0.5, ḃ = -v.
        let spec = position_box(10.5, 1.0, 10.0, 1.0, 1.0);
        assert!(matches!(recovery_sequence(&spec, 0, 0.5), Err(BarrierError::NoRecoveryNeeded(0))));
        let r2 = recovery_sequence(&spec, 2, 0.5).unwrap();
        assert_eq!(r2.coeffs, vec![1.0]);
        assert_abs_diff_eq!(r2.rhs, -0.5);
        // ḃ = +1 (moving back): u ≤ p₂ (ḃ - ε).
        let spec = position_box(10.5, -1.0, 10.0, 1.0, 2.0);
        let r1 = recovery_sequence(&spec, 1, 0.5).unwrap();
        assert_abs_diff_eq!(r1.rhs, 2.0 * 0.5);
    }

    #[test]
    fn clf_rows() {
        let r = clf_row(0.0, &[0.0], 0.0, 10.0).unwrap();
        assert_eq!(r.coeffs, vec![0.0, -1.0]);
        assert_eq!(r.rhs, 0.0);
        let r = clf_row(2.0, &[4.0], 0.0, 10.0).unwrap();
        assert_eq!(r.coeffs, vec![4.0, -1.0]);
        assert_abs_diff_eq!(r.rhs, -40.0);
        let r = clf_row(-2.0, &[-4.0], 0.0, 10.0).unwrap();
        assert_eq!(r.coeffs, vec![-4.0, -1.0]);
        assert_abs_diff_eq!(r.rhs, -40.0);
        assert!(clf_row(1.0, &[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn default_rate_prefers_noise_margin() {
        assert_eq!(default_recovery_rate(&[1.0, 1.8], None), 0.5);
        assert_abs_diff_eq!(default_recovery_rate(&[1.0, -1.8], Some(&[2.0, 0.2])), 2.36, epsilon = 1e-12);
    }
}
