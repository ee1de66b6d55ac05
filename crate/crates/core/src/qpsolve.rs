//! Dense primal active-set solver for the tiny convex QPs and LPs solved at
//! every control step.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    ½ zᵀ H z + fᵀ z
//!     subject to  aᵢ · z ≤ rhsᵢ        (rows)
//!                 lower ≤ z ≤ upper    (box, entries may be infinite)
//! ```
//!
//! `H` only needs to be positive semidefinite. Directions of zero curvature are
//! followed as steepest-descent edges until a constraint blocks them, so LPs go
//! through exactly the same code path with `H = 0`. A phase-1 LP on a single
//! elastic variable finds the initial feasible point; its optimal value is the
//! infeasibility residual reported when no feasible point exists.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute feasibility tolerance on row residuals.
pub const FEAS_TOL: f64 = 1e-9;
/// Stationarity tolerance on the KKT gradient residual.
pub const STATIONARITY_TOL: f64 = 1e-8;

const MULT_TOL: f64 = 1e-10;

/// Where a row came from. Used for diagnostics and event logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowTag {
    Safety,
    SpeedMax,
    SpeedMin,
    Merge,
    Clf,
    Recovery,
    ControlBound,
    /// Auxiliary rows (epigraph splits, plain test problems).
    Aux,
}

/// One affine inequality `coeffs · z ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub tag: RowTag,
}

impl ConstraintRow {
    pub fn new(coeffs: Vec<f64>, rhs: f64, tag: RowTag) -> Self {
        Self { coeffs, rhs, tag }
    }

    /// `coeffs · z - rhs`; positive means violated.
    pub fn residual(&self, z: &[f64]) -> f64 {
        self.coeffs.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() - self.rhs
    }

    /// Re-index the row into a larger decision vector: entry `k` of this row
    /// lands in column `columns[k]` of a row of length `dim`.
    pub fn embed(&self, columns: &[usize], dim: usize) -> ConstraintRow {
        assert_eq!(columns.len(), self.coeffs.len(), "column map length");
        let mut coeffs = vec![0.0; dim];
        for (&col, &a) in columns.iter().zip(&self.coeffs) {
            coeffs[col] += a;
        }
        ConstraintRow { coeffs, rhs: self.rhs, tag: self.tag }
    }

    pub fn is_finite(&self) -> bool {
        self.rhs.is_finite() && self.coeffs.iter().all(|a| a.is_finite())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("cost matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("non-finite problem data: {0}")]
    NonFinite(String),
    #[error("lower bound exceeds upper bound on variable {0}")]
    InvertedBounds(usize),
    #[error("active-set iteration limit reached ({0} iterations)")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub rows: Vec<ConstraintRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpProblem {
    /// Unbounded box, no rows.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn with_row(mut self, row: ConstraintRow) -> Self {
        self.rows.push(row);
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        0.5 * zv.dot(&(&self.h * &zv)) + self.f.dot(&zv)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::Dimension(format!(
                "H is {}x{}, F has {} entries",
                self.h.nrows(),
                self.h.ncols(),
                n
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(QpError::Dimension("bound vectors".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(QpError::Dimension(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.is_finite() {
                return Err(QpError::NonFinite(format!("row {i}")));
            }
        }
        if self.h.iter().chain(self.f.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("H or F".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(QpError::NonFinite(format!("bounds of variable {j}")));
            }
            if self.lower[j] > self.upper[j] {
                return Err(QpError::InvertedBounds(j));
            }
        }
        let scale = self.h.amax().max(1.0);
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(QpError::NotSymmetric(asym));
        }
        if n > 0 {
            let min_eig = self.h.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * scale {
                return Err(QpError::NotPsd(min_eig));
            }
        }
        Ok(())
    }
}

/// Linear program over the same row/box structure.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            c,
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_row(mut self, row: ConstraintRow) -> Self {
        self.rows.push(row);
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        self.c.iter().zip(z).map(|(c, x)| c * x).sum()
    }

    fn to_qp(&self) -> QpProblem {
        let n = self.c.len();
        QpProblem {
            h: DMatrix::zeros(n, n),
            f: DVector::from_column_slice(&self.c),
            rows: self.rows.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A constraint that is in the final working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActiveConstraint {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub z: Vec<f64>,
    pub objective: f64,
    pub active_set: Vec<ActiveConstraint>,
    /// Multipliers of the explicit rows (zero for inactive rows).
    pub row_multipliers: Vec<f64>,
    /// `‖Hz + F + Aᵀλ‖∞` over rows and box constraints.
    pub stationarity: f64,
    /// Largest row/bound violation at `z`. For an infeasible problem this is
    /// the phase-1 optimum: no point violates every constraint by less.
    pub infeasibility: f64,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Internal constraint in `a · z ≤ b` form with its public identity.
#[derive(Debug, Clone)]
struct Ineq {
    a: DVector<f64>,
    b: f64,
    id: ActiveConstraint,
}

fn gather(rows: &[ConstraintRow], lower: &[f64], upper: &[f64], extra: usize) -> Vec<Ineq> {
    let n = lower.len();
    let dim = n + extra;
    let mut out = Vec::with_capacity(rows.len() + 2 * n);
    for (i, row) in rows.iter().enumerate() {
        let mut a = DVector::zeros(dim);
        a.rows_mut(0, n).copy_from_slice(&row.coeffs);
        out.push(Ineq { a, b: row.rhs, id: ActiveConstraint::Row(i) });
    }
    for j in 0..n {
        if lower[j].is_finite() {
            let mut a = DVector::zeros(dim);
            a[j] = -1.0;
            out.push(Ineq { a, b: -lower[j], id: ActiveConstraint::Lower(j) });
        }
        if upper[j].is_finite() {
            let mut a = DVector::zeros(dim);
            a[j] = 1.0;
            out.push(Ineq { a, b: upper[j], id: ActiveConstraint::Upper(j) });
        }
    }
    out
}

enum Outcome {
    Optimal { z: DVector<f64>, working: Vec<usize>, iterations: usize },
    Unbounded { z: DVector<f64>, iterations: usize },
}

/// Orthonormal basis of the null space of the rows of `cons[working]`.
fn null_space(cons: &[Ineq], working: &[usize], dim: usize) -> DMatrix<f64> {
    // Gram-Schmidt on the working normals, then on the unit vectors.
    let mut range: Vec<DVector<f64>> = Vec::with_capacity(working.len());
    for &k in working {
        let mut v = cons[k].a.clone();
        for q in &range {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let nrm = v.norm();
        if nrm > 1e-12 {
            range.push(v / nrm);
        }
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim - range.len());
    for e in 0..dim {
        if range.len() + basis.len() == dim {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[e] = 1.0;
        for _ in 0..2 {
            for q in range.iter().chain(basis.iter()) {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            basis.push(v / nrm);
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Least-squares multipliers for `A_Wᵀ λ = -grad`.
fn multipliers(cons: &[Ineq], working: &[usize], grad: &DVector<f64>) -> DVector<f64> {
    if working.is_empty() {
        return DVector::zeros(0);
    }
    let dim = grad.len();
    let mut at = DMatrix::zeros(dim, working.len());
    for (c, &k) in working.iter().enumerate() {
        at.set_column(c, &cons[k].a);
    }
    let gram = at.transpose() * &at;
    let rhs = -(at.transpose() * grad);
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(working.len())),
    }
}

/// Primal active-set iterations from a feasible `z`.
fn active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    cons: &[Ineq],
    mut z: DVector<f64>,
    mut working: Vec<usize>,
    max_iter: usize,
) -> Result<Outcome, QpError> {
    let dim = g.len();
    let h_scale = h.amax().max(1.0);
    let curv_tol = 1e-12 * h_scale;
    for iter in 0..max_iter {
        let grad = h * &z + g;
        let zb = null_space(cons, &working, dim);
        let mut p = DVector::zeros(dim);
        let mut natural_step = true;
        if zb.ncols() > 0 {
            let r = zb.transpose() * &grad;
            let reduced = zb.transpose() * h * &zb;
            let eig = SymmetricEigen::new(reduced);
            let grad_tol = 1e-11 * (1.0 + grad.amax());
            // Zero-curvature component of the reduced gradient.
            let mut flat = DVector::zeros(zb.ncols());
            let mut newton = DVector::zeros(zb.ncols());
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                let e = eig.eigenvectors.column(k);
                let rk = e.dot(&r);
                if lam <= curv_tol {
                    flat.axpy(rk, &e, 1.0);
                } else {
                    newton.axpy(rk / lam, &e, 1.0);
                }
            }
            if flat.amax() > grad_tol {
                p = -(&zb * flat);
                natural_step = false;
            } else {
                p = -(&zb * newton);
            }
        }

        let step_scale = 1e-13 * (1.0 + z.amax());
        if p.amax() <= step_scale {
            let lam = multipliers(cons, &working, &grad);
            let mut drop: Option<(usize, f64)> = None;
            for (pos, &l) in lam.iter().enumerate() {
                if l < -MULT_TOL {
                    let better = match drop {
                        None => true,
                        Some((bp, bl)) => {
                            l < bl - MULT_TOL
                                || (l <= bl + MULT_TOL && working[pos] < working[bp])
                        }
                    };
                    if better {
                        drop = Some((pos, l));
                    }
                }
            }
            match drop {
                None => {
                    return Ok(Outcome::Optimal { z, working, iterations: iter });
                }
                Some((pos, _)) => {
                    working.remove(pos);
                    continue;
                }
            }
        }

        // Ratio test; ties go to the lowest constraint index.
        let mut alpha = f64::INFINITY;
        let mut blocking: Option<usize> = None;
        for (k, c) in cons.iter().enumerate() {
            if working.contains(&k) {
                continue;
            }
            let ap = c.a.dot(&p);
            if ap > 1e-14 * (1.0 + c.a.amax() * p.amax()) {
                let slack = c.b - c.a.dot(&z);
                let step = (slack / ap).max(0.0);
                if step < alpha - 1e-15 {
                    alpha = step;
                    blocking = Some(k);
                }
            }
        }
        if natural_step && alpha >= 1.0 {
            z += &p;
            continue;
        }
        match blocking {
            Some(k) => {
                z.axpy(alpha, &p, 1.0);
                working.push(k);
                working.sort_unstable();
            }
            None => return Ok(Outcome::Unbounded { z, iterations: iter }),
        }
    }
    Err(QpError::IterationLimit(max_iter))
}

fn max_violation(cons: &[Ineq], z: &DVector<f64>) -> f64 {
    cons.iter()
        .map(|c| c.a.rows(0, z.len()).dot(z) - c.b)
        .fold(0.0, f64::max)
}

fn iteration_cap(n: usize, m: usize) -> usize {
    200 + 50 * (n + m)
}

/// Phase 1: minimize a single elastic variable `t` subject to
/// `aᵢ·z - t ≤ bᵢ` on rows, exact box bounds, `t ≥ 0`.
fn phase_one(p: &QpProblem, start: &DVector<f64>) -> Result<(DVector<f64>, f64, usize), QpError> {
    let n = p.dim();
    let mut z0 = start.clone();
    for j in 0..n {
        z0[j] = z0[j].clamp(p.lower[j], p.upper[j]);
        if !z0[j].is_finite() {
            z0[j] = 0.0_f64.clamp(p.lower[j], p.upper[j]);
        }
    }
    let t0 = p
        .rows
        .iter()
        .map(|r| r.residual(z0.as_slice()))
        .fold(0.0, f64::max);
    if t0 <= FEAS_TOL {
        return Ok((z0, t0, 0));
    }
    let mut cons = gather(&p.rows, &p.lower, &p.upper, 1);
    for c in cons.iter_mut() {
        if matches!(c.id, ActiveConstraint::Row(_)) {
            c.a[n] = -1.0;
        }
    }
    let mut a = DVector::zeros(n + 1);
    a[n] = -1.0;
    cons.push(Ineq { a, b: 0.0, id: ActiveConstraint::Lower(n) });

    let h = DMatrix::zeros(n + 1, n + 1);
    let mut g = DVector::zeros(n + 1);
    g[n] = 1.0;
    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(&z0);
    x[n] = t0;
    let cap = iteration_cap(n + 1, cons.len());
    match active_set(&h, &g, &cons, x, Vec::new(), cap)? {
        Outcome::Optimal { z, iterations, .. } => {
            let t = z[n].max(0.0);
            Ok((z.rows(0, n).into_owned(), t, iterations))
        }
        // t is bounded below; an unbounded phase 1 means numerical trouble.
        Outcome::Unbounded { iterations, .. } => Err(QpError::IterationLimit(iterations)),
    }
}

fn finish(p: &QpProblem, cons: &[Ineq], z: DVector<f64>, working: &[usize], iterations: usize) -> QpSolution {
    let grad = &p.h * &z + &p.f;
    let lam = multipliers(cons, working, &grad);
    let mut resid = grad.clone();
    let mut row_multipliers = vec![0.0; p.rows.len()];
    for (pos, &k) in working.iter().enumerate() {
        let l = lam[pos].max(0.0);
        resid.axpy(l, &cons[k].a, 1.0);
        if let ActiveConstraint::Row(i) = cons[k].id {
            row_multipliers[i] = l;
        }
    }
    let mut active_set: Vec<ActiveConstraint> = working.iter().map(|&k| cons[k].id).collect();
    active_set.sort();
    let objective = p.objective(z.as_slice());
    QpSolution {
        status: QpStatus::Optimal,
        infeasibility: max_violation(cons, &z),
        z: z.as_slice().to_vec(),
        objective,
        active_set,
        row_multipliers,
        stationarity: resid.amax(),
        iterations,
    }
}

/// Solve a convex QP starting from the origin (clamped into the box).
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_from(p, None)
}

/// Solve a convex QP from an optional warm-start point.
pub fn solve_qp_from(p: &QpProblem, start: Option<&[f64]>) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.dim();
    let start = match start {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite()) => DVector::from_column_slice(s),
        _ => DVector::zeros(n),
    };
    let (z0, t, it1) = phase_one(p, &start)?;
    let cons = gather(&p.rows, &p.lower, &p.upper, 0);
    if t > FEAS_TOL {
        return Ok(QpSolution {
            status: QpStatus::Infeasible,
            objective: p.objective(z0.as_slice()),
            z: z0.as_slice().to_vec(),
            active_set: Vec::new(),
            row_multipliers: vec![0.0; p.rows.len()],
            stationarity: f64::NAN,
            infeasibility: t,
            iterations: it1,
        });
    }
    let cap = iteration_cap(n, cons.len());
    match active_set(&p.h, &p.f, &cons, z0, Vec::new(), cap)? {
        Outcome::Optimal { z, working, iterations } => Ok(finish(p, &cons, z, &working, it1 + iterations)),
        Outcome::Unbounded { z, iterations } => Ok(QpSolution {
            status: QpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            infeasibility: max_violation(&cons, &z),
            z: z.as_slice().to_vec(),
            active_set: Vec::new(),
            row_multipliers: vec![0.0; p.rows.len()],
            stationarity: f64::NAN,
            iterations: it1 + iterations,
        }),
    }
}

/// Solve an LP through the active-set machinery with a zero Hessian.
pub fn solve_lp(p: &LpProblem) -> Result<QpSolution, QpError> {
    solve_qp(&p.to_qp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(coeffs: &[f64], rhs: f64) -> ConstraintRow {
        ConstraintRow::new(coeffs.to_vec(), rhs, RowTag::Aux)
    }

    #[test]
    fn unconstrained_scalar_minimum() {
        let p = QpProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, -2.0))
            .with_bounds(vec![-10.0], vec![10.0]);
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.z[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective, -2.0, epsilon = 1e-12);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn clamped_scalar_minimum() {
        let p = QpProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, -2.0))
            .with_row(row(&[1.0], 0.5));
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.z[0], 0.5, epsilon = 1e-12);
        assert_eq!(s.active_set, vec![ActiveConstraint::Row(0)]);
        assert_abs_diff_eq!(s.row_multipliers[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn two_dim_against_hand_enumeration() {
        // Active-set enumeration by hand: only {z1 + z2 <= 1} active gives
        // z = (2, -1), objective 0.5*(4+1) - 6 = -3.5 with multiplier 1 >= 0.
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-3.0, 0.0]))
            .with_row(row(&[1.0, 1.0], 1.0))
            .with_row(row(&[1.0, 0.0], 2.0));
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.z[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.z[1], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.objective, -3.5, epsilon = 1e-10);
        assert!(s.stationarity <= STATIONARITY_TOL);
    }

    #[test]
    fn lp_lower_bound_vertex() {
        let lp = LpProblem::new(vec![1.0]).with_bounds(vec![0.0], vec![5.0]);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.z[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lp_optimal_face() {
        let lp = LpProblem::new(vec![-1.0, 0.0])
            .with_row(row(&[1.0, 1.0], 2.0))
            .with_row(row(&[0.0, -1.0], 0.0))
            .with_bounds(vec![0.0, 0.0], vec![10.0, 10.0]);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.z[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.objective, -2.0, epsilon = 1e-10);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let lp = LpProblem::new(vec![0.0])
            .with_row(row(&[1.0], 0.0))
            .with_row(row(&[-1.0], -1.0));
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_abs_diff_eq!(s.infeasibility, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn zero_weight_variable_without_bound_is_unbounded() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = QpProblem::new(h.clone(), DVector::from_vec(vec![0.0, -1.0]));
        assert_eq!(solve_qp(&p).unwrap().status, QpStatus::Unbounded);
        let bounded = QpProblem::new(h, DVector::from_vec(vec![0.0, -1.0]))
            .with_bounds(vec![f64::NEG_INFINITY, 0.0], vec![f64::INFINITY, 5.0]);
        let s = solve_qp(&bounded).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.z[1], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_malformed_input() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let p = QpProblem::new(h, DVector::zeros(2));
        assert!(matches!(solve_qp(&p), Err(QpError::NotSymmetric(_))));
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let p = QpProblem::new(h, DVector::zeros(2));
        assert!(matches!(solve_qp(&p), Err(QpError::NotPsd(_))));
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_row(row(&[1.0], 0.0));
        assert!(matches!(solve_qp(&p), Err(QpError::Dimension(_))));
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Three rows through the same vertex in 2-D.
        let lp = LpProblem::new(vec![-1.0, -1.0])
            .with_row(row(&[1.0, 0.0], 1.0))
            .with_row(row(&[0.0, 1.0], 1.0))
            .with_row(row(&[1.0, 1.0], 2.0))
            .with_bounds(vec![-5.0, -5.0], vec![5.0, 5.0]);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.objective, -2.0, epsilon = 1e-10);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-3.0, 0.0]))
            .with_row(row(&[1.0, 1.0], 1.0));
        let cold = solve_qp(&p).unwrap();
        let warm = solve_qp_from(&p, Some(&[5.0, 5.0])).unwrap();
        assert_abs_diff_eq!(cold.objective, warm.objective, epsilon = 1e-12);
    }

    #[test]
    fn embed_places_coefficients() {
        let r = row(&[2.0, -1.0], 3.0).embed(&[0, 2], 4);
        assert_eq!(r.coeffs, vec![2.0, 0.0, -1.0, 0.0]);
        assert_eq!(r.residual(&[1.0, 9.0, 1.0, 9.0]), -2.0);
    }
}
