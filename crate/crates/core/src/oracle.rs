//! Slow, independent reference implementations used to cross-check the fast
//! paths: brute-force KKT/vertex enumeration for small QPs and LPs, scalar
//! bisection for the planner, finite-difference Lie derivatives and an RK4
//! integrator.

use nalgebra::{DMatrix, DVector};

use crate::qpsolve::{ConstraintRow, QpProblem};

const ENUM_FEAS_TOL: f64 = 1e-9;

/// All inequalities of `p` (rows and finite bounds) as `a·z ≤ b`.
fn inequalities(p: &QpProblem) -> Vec<(Vec<f64>, f64)> {
    let n = p.dim();
    let mut out: Vec<(Vec<f64>, f64)> = p.rows.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        if p.upper[j].is_finite() {
            e[j] = 1.0;
            out.push((e.clone(), p.upper[j]));
        }
        if p.lower[j].is_finite() {
            e[j] = -1.0;
            out.push((e, -p.lower[j]));
        }
    }
    out
}

fn feasible(cons: &[(Vec<f64>, f64)], z: &[f64]) -> bool {
    cons.iter().all(|(a, b)| {
        let lhs: f64 = a.iter().zip(z).map(|(x, y)| x * y).sum();
        lhs <= b + ENUM_FEAS_TOL * (1.0 + b.abs())
    })
}

fn subsets(m: usize, max_size: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(start: usize, m: usize, max_size: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        visit(cur);
        if cur.len() == max_size {
            return;
        }
        for k in start..m {
            cur.push(k);
            rec(k + 1, m, max_size, cur, visit);
            cur.pop();
        }
    }
    rec(0, m, max_size, &mut Vec::new(), &mut visit);
}

/// Global minimum of a small convex QP by trying every active set: each
/// subset of at most `n` constraints is made tight, the equality-constrained
/// KKT system is solved, and the best feasible stationary point wins.
/// For `H = 0` only vertices (`n` independent tight constraints) are tried.
/// Returns `None` when no candidate is feasible.
pub fn enumerate_qp(p: &QpProblem) -> Option<(Vec<f64>, f64)> {
    let n = p.dim();
    let cons = inequalities(p);
    let lp = p.h.iter().all(|v| *v == 0.0);
    let mut best: Option<(Vec<f64>, f64)> = None;
    subsets(cons.len(), n, |set| {
        if lp && set.len() != n {
            return;
        }
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for j in 0..n {
            rhs[j] = -p.f[j];
        }
        for (r, &ci) in set.iter().enumerate() {
            let (a, b) = &cons[ci];
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
            rhs[n + r] = *b;
        }
        let svd = kkt.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
            return;
        }
        let Ok(sol) = svd.solve(&rhs, 0.0) else { return };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            return;
        }
        let z: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        if !feasible(&cons, &z) {
            return;
        }
        let obj = p.objective(&z);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((z, obj));
        }
    });
    best
}

/// `true` when `z` satisfies every row and bound of `p` within `tol`.
pub fn is_feasible(p: &QpProblem, z: &[f64], tol: f64) -> bool {
    p.rows.iter().all(|r: &ConstraintRow| r.residual(z) <= tol)
        && z.iter().zip(&p.lower).all(|(v, l)| *v >= l - tol)
        && z.iter().zip(&p.upper).all(|(v, u)| *v <= u + tol)
}

/// Planner travel time by bisection on the reduced transversality equation
/// `β + A v0 - ½ A² T² = 0`, `A = 3 (v0 T - L) / T³`, over `(0, L/v0]`.
pub fn planner_travel_time(v0: f64, length: f64, beta: f64, tol: f64) -> f64 {
    if beta == 0.0 {
        return length / v0;
    }
    let g = |t: f64| {
        let a = 3.0 * (v0 * t - length) / t.powi(3);
        beta + a * v0 - 0.5 * a * a * t * t
    };
    let mut hi = length / v0;
    let mut lo = hi;
    while g(lo) >= 0.0 {
        lo *= 0.5;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Central-difference directional derivative `∇b(x) · d`.
pub fn fd_directional(b: impl Fn(&[f64]) -> f64, x: &[f64], d: &[f64], h: f64) -> f64 {
    let plus: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + h * di).collect();
    let minus: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi - h * di).collect();
    (b(&plus) - b(&minus)) / (2.0 * h)
}

/// `(L_f b, L_g b)` by finite differences for `ẋ = f(x) + g(x) u` with a
/// scalar control.
pub fn fd_lie(
    b: impl Fn(&[f64]) -> f64,
    f: impl Fn(&[f64]) -> Vec<f64>,
    g: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    h: f64,
) -> (f64, f64) {
    (fd_directional(&b, x, &f(x), h), fd_directional(&b, x, &g(x), h))
}

/// One classical Runge-Kutta step of `ẋ = rhs(x)`.
pub fn rk4_step(rhs: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], dt: f64) -> Vec<f64> {
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(ai, ki)| ai + s * ki).collect() };
    let k1 = rhs(x);
    let k2 = rhs(&axpy(x, &k1, 0.5 * dt));
    let k3 = rhs(&axpy(x, &k2, 0.5 * dt));
    let k4 = rhs(&axpy(x, &k3, dt));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
