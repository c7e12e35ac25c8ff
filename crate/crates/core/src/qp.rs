//! Dense strictly convex QP:
//!
//! ```text
//! minimize    ½ xᵀ H x + gᵀ x
//! subject to  A_in x ≤ b_in
//!             A_eq x = b_eq
//! ```
//!
//! Solved with the Goldfarb–Idnani dual active-set method, which starts
//! from the unconstrained minimizer and adds violated constraints one at a
//! time. When it concludes infeasibility, a phase-1 LP confirms the verdict
//! and supplies a Farkas certificate; if the LP disagrees the outcome is
//! reported as a numerical failure, never as infeasible. Optimal outcomes
//! are re-solved on the final active set and KKT-checked before return.

use crate::linalg::{cholesky, dot, norm_inf, Lu, Mat};
use crate::lp::{self, LpStatus};
use crate::scalar::Real;

/// Added to the Hessian diagonal so PSD costs become strictly convex.
pub const REGULARIZATION: f64 = 1e-9;
/// Primal feasibility of an optimal point.
pub const PRIMAL_TOL: f64 = 1e-7;
/// Stationarity, relative to the problem scale.
pub const STATIONARITY_TOL: f64 = 1e-6;
/// Phase-1 optimum below which a constraint system counts as feasible.
pub const PHASE1_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram<T> {
    pub hess: Mat<T>,
    pub grad: Vec<T>,
    pub a_ineq: Mat<T>,
    pub b_ineq: Vec<T>,
    pub a_eq: Mat<T>,
    pub b_eq: Vec<T>,
}

impl<T: Real> QuadraticProgram<T> {
    /// Symmetrizes `hess` and checks dimensions.
    pub fn new(hess: Mat<T>, grad: Vec<T>, a_ineq: Mat<T>, b_ineq: Vec<T>, a_eq: Mat<T>, b_eq: Vec<T>) -> Self {
        let n = grad.len();
        assert_eq!((hess.rows(), hess.cols()), (n, n), "Hessian must be n×n");
        assert_eq!(a_ineq.cols(), n, "inequality matrix has wrong column count");
        assert_eq!(a_ineq.rows(), b_ineq.len(), "inequality rhs length");
        assert_eq!(a_eq.cols(), n, "equality matrix has wrong column count");
        assert_eq!(a_eq.rows(), b_eq.len(), "equality rhs length");
        Self { hess: hess.symmetrized(), grad, a_ineq, b_ineq, a_eq, b_eq }
    }

    pub fn inequality_only(hess: Mat<T>, grad: Vec<T>, a_ineq: Mat<T>, b_ineq: Vec<T>) -> Self {
        let n = grad.len();
        Self::new(hess, grad, a_ineq, b_ineq, Mat::zeros(0, n), Vec::new())
    }

    pub fn num_vars(&self) -> usize {
        self.grad.len()
    }

    pub fn objective(&self, x: &[T]) -> T {
        T::lit(0.5) * dot(x, &self.hess.mul_vec(x)) + dot(&self.grad, x)
    }

    /// Plain-text dump: `qp n m_ineq m_eq`, then `H` rows, `g`, `[A_in | b_in]`
    /// rows and `[A_eq | b_eq]` rows.
    pub fn to_text(&self) -> String {
        let n = self.num_vars();
        let mut s = format!("qp {} {} {}\n", n, self.b_ineq.len(), self.b_eq.len());
        let mut line = |vals: &mut dyn Iterator<Item = T>| {
            let parts: Vec<String> = vals.map(|v| format!("{:?}", v.as_f64())).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        };
        for r in self.hess.row_iter() {
            line(&mut r.iter().copied());
        }
        line(&mut self.grad.iter().copied());
        for (r, &b) in self.a_ineq.row_iter().zip(&self.b_ineq) {
            line(&mut r.iter().copied().chain(std::iter::once(b)));
        }
        for (r, &b) in self.a_eq.row_iter().zip(&self.b_eq) {
            line(&mut r.iter().copied().chain(std::iter::once(b)));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Phase-1 result for `A_in x ≤ b_in, A_eq x = b_eq`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCertificate<T> {
    pub feasible: bool,
    /// Minimum total constraint violation `Σ max(0, A_in x − b_in) + Σ |A_eq x − b_eq|`.
    pub violation: T,
    /// Minimizer of the total violation.
    pub witness: Vec<T>,
    /// Farkas multipliers `(λ ≥ 0, ν)` with `A_inᵀλ + A_eqᵀν = 0` and
    /// `b_inᵀλ + b_eqᵀν = −violation`; present when infeasible.
    pub farkas: Option<(Vec<T>, Vec<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOutcome<T> {
    pub status: QpStatus,
    pub x: Vec<T>,
    pub objective: T,
    /// Inequality multipliers (`≥ 0`), one per row of `A_in`.
    pub lambda: Vec<T>,
    /// Equality multipliers.
    pub nu: Vec<T>,
    pub iterations: usize,
    pub certificate: Option<FeasibilityCertificate<T>>,
    pub detail: Option<String>,
}

impl<T: Real> QpOutcome<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    fn failure(status: QpStatus, n: usize, m: usize, p: usize, iterations: usize) -> Self {
        Self {
            status,
            x: vec![T::nan(); n],
            objective: T::nan(),
            lambda: vec![T::zero(); m],
            nu: vec![T::zero(); p],
            iterations,
            certificate: None,
            detail: None,
        }
    }
}

/// KKT residuals of a candidate primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T> {
    pub stationarity: T,
    pub primal: T,
    pub dual: T,
    pub complementarity: T,
}

pub fn kkt_residuals<T: Real>(qp: &QuadraticProgram<T>, x: &[T], lambda: &[T], nu: &[T]) -> KktResiduals<T> {
    let mut grad = qp.hess.mul_vec(x);
    for (gi, &g) in grad.iter_mut().zip(&qp.grad) {
        *gi += g;
    }
    let ai = qp.a_ineq.tr_mul_vec(lambda);
    let ae = qp.a_eq.tr_mul_vec(nu);
    let stat: Vec<T> = (0..x.len()).map(|i| grad[i] + ai[i] + ae[i]).collect();
    let mut primal = T::zero();
    let mut comp = T::zero();
    for ((r, &b), &l) in qp.a_ineq.row_iter().zip(&qp.b_ineq).zip(lambda) {
        let s = dot(r, x) - b;
        primal = primal.max(s);
        comp = comp.max((l * s).abs());
    }
    for (r, &b) in qp.a_eq.row_iter().zip(&qp.b_eq) {
        primal = primal.max((dot(r, x) - b).abs());
    }
    let dual = lambda.iter().fold(T::zero(), |acc, &l| acc.max(-l));
    KktResiduals { stationarity: norm_inf(&stat), primal, dual, complementarity: comp }
}

/// Phase-1 LP: minimize total violation over free `x`.
pub fn check_feasible<T: Real>(a_ineq: &Mat<T>, b_ineq: &[T], a_eq: &Mat<T>, b_eq: &[T]) -> FeasibilityCertificate<T> {
    let n = a_ineq.cols().max(a_eq.cols());
    let (m, p) = (a_ineq.rows(), a_eq.rows());
    if m + p == 0 {
        return FeasibilityCertificate { feasible: true, violation: T::zero(), witness: vec![T::zero(); n], farkas: None };
    }
    // Columns: x⁺ (n), x⁻ (n), s (m), w (m), e⁺ (p), e⁻ (p).
    //   A_in(x⁺ − x⁻) − s + w = b_in
    //   A_eq(x⁺ − x⁻) − e⁺ + e⁻ = b_eq
    let cols = 2 * n + 2 * m + 2 * p;
    let mut a = Mat::zeros(m + p, cols);
    let mut b = Vec::with_capacity(m + p);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = a_ineq[(i, j)];
            a[(i, n + j)] = -a_ineq[(i, j)];
        }
        a[(i, 2 * n + i)] = -T::one();
        a[(i, 2 * n + m + i)] = T::one();
        b.push(b_ineq[i]);
    }
    for i in 0..p {
        for j in 0..n {
            a[(m + i, j)] = a_eq[(i, j)];
            a[(m + i, n + j)] = -a_eq[(i, j)];
        }
        a[(m + i, 2 * n + 2 * m + i)] = -T::one();
        a[(m + i, 2 * n + 2 * m + p + i)] = T::one();
        b.push(b_eq[i]);
    }
    let mut c = vec![T::zero(); cols];
    for ci in c[2 * n..2 * n + m].iter_mut() {
        *ci = T::one();
    }
    for ci in c[2 * n + 2 * m..].iter_mut() {
        *ci = T::one();
    }
    let sol = lp::solve_standard(&c, &a, &b);
    if sol.status != LpStatus::Optimal {
        // Cannot happen for a bounded-below, always-feasible LP unless the
        // pivot cap is hit; report as infeasible without certificate.
        return FeasibilityCertificate { feasible: false, violation: T::infinity(), witness: vec![T::zero(); n], farkas: None };
    }
    let witness: Vec<T> = (0..n).map(|j| sol.x[j] - sol.x[n + j]).collect();
    let violation = sol.objective.max(T::zero());
    let feasible = violation <= T::tol(PHASE1_TOL);
    let farkas = if feasible {
        None
    } else {
        let lam: Vec<T> = sol.duals[..m].iter().map(|&y| (-y).max(T::zero())).collect();
        let nu: Vec<T> = sol.duals[m..].iter().map(|&y| -y).collect();
        Some((lam, nu))
    };
    FeasibilityCertificate { feasible, violation, witness, farkas }
}

/// Givens rotation `(c, s)` mapping `(a, b)` to `(h, 0)`.
fn givens<T: Real>(a: T, b: T) -> (T, T, T) {
    let h = a.hypot(b);
    if h == T::zero() {
        (T::one(), T::zero(), T::zero())
    } else {
        (a / h, b / h, h)
    }
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Ineq(usize),
    /// Equality row with the orientation used when it was added.
    Eq(usize, bool),
}

/// Factorized working set: `J = L⁻ᵀQ`, `R` upper triangular with
/// `J[:, ..q]ᵀ N = R` for the active normals `N`.
struct Working<T> {
    n: usize,
    /// Columns of `J`.
    j: Vec<Vec<T>>,
    /// Columns of `R`; column `k` has length `k + 1`.
    r: Vec<Vec<T>>,
    active: Vec<Kind>,
    u: Vec<T>,
}

impl<T: Real> Working<T> {
    fn q(&self) -> usize {
        self.active.len()
    }

    fn d(&self, np: &[T]) -> Vec<T> {
        self.j.iter().map(|c| dot(c, np)).collect()
    }

    fn step_dirs(&self, d: &[T]) -> (Vec<T>, Vec<T>) {
        let q = self.q();
        let mut z = vec![T::zero(); self.n];
        for k in q..self.n {
            let dk = d[k];
            if dk != T::zero() {
                for (zi, &jv) in z.iter_mut().zip(&self.j[k]) {
                    *zi += dk * jv;
                }
            }
        }
        // R r = d[..q]
        let mut r = d[..q].to_vec();
        for i in (0..q).rev() {
            let mut s = r[i];
            for k in (i + 1)..q {
                s -= self.r[k][i] * r[k];
            }
            r[i] = s / self.r[i][i];
        }
        (z, r)
    }

    fn rotate_j(&mut self, a: usize, b: usize, c: T, s: T) {
        let (lo, hi) = self.j.split_at_mut(b);
        let (ca, cb) = (&mut lo[a], &mut hi[0]);
        for (x, y) in ca.iter_mut().zip(cb.iter_mut()) {
            let (xa, yb) = (*x, *y);
            *x = c * xa + s * yb;
            *y = -s * xa + c * yb;
        }
    }

    fn add(&mut self, mut d: Vec<T>, kind: Kind, u: T) {
        let q = self.q();
        for k in ((q + 1)..self.n).rev() {
            if d[k] == T::zero() {
                continue;
            }
            let (c, s, h) = givens(d[k - 1], d[k]);
            d[k - 1] = h;
            d[k] = T::zero();
            self.rotate_j(k - 1, k, c, s);
        }
        self.r.push(d[..=q].to_vec());
        self.active.push(kind);
        self.u.push(u);
    }

    fn drop(&mut self, l: usize) {
        self.r.remove(l);
        self.active.remove(l);
        self.u.remove(l);
        let q = self.q();
        for jx in l..q {
            let (c, s, _) = givens(self.r[jx][jx], self.r[jx][jx + 1]);
            for col in self.r[jx..].iter_mut() {
                let (a, b) = (col[jx], col[jx + 1]);
                col[jx] = c * a + s * b;
                col[jx + 1] = -s * a + c * b;
            }
            self.r[jx].truncate(jx + 1);
            self.rotate_j(jx, jx + 1, c, s);
        }
    }
}

enum GiResult {
    Optimal,
    Infeasible,
    IterationCap,
}

/// Solves `qp`; see the module documentation for the status semantics.
pub fn solve<T: Real>(qp: &QuadraticProgram<T>) -> QpOutcome<T> {
    let n = qp.num_vars();
    let (m, p) = (qp.b_ineq.len(), qp.b_eq.len());
    let mut h = qp.hess.clone();
    let reg = T::tol(REGULARIZATION);
    for i in 0..n {
        h[(i, i)] += reg;
    }
    let Some(l) = cholesky(&h) else {
        let mut out = QpOutcome::failure(QpStatus::NumericalFailure, n, m, p, 0);
        out.detail = Some("Hessian is not positive semidefinite".into());
        return out;
    };
    // J = L⁻ᵀ: column k of J is row k of L⁻¹.
    let mut linv = Mat::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { T::one() } else { T::zero() };
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    let mut ws = Working { n, j: (0..n).map(|k| linv.row(k).to_vec()).collect(), r: Vec::new(), active: Vec::new(), u: Vec::new() };
    // Unconstrained minimizer x = −H⁻¹g = −J Jᵀ g.
    let jt_g: Vec<T> = ws.j.iter().map(|c| dot(c, &qp.grad)).collect();
    let mut x = vec![T::zero(); n];
    for (k, col) in ws.j.iter().enumerate() {
        for (xi, &v) in x.iter_mut().zip(col) {
            *xi -= jt_g[k] * v;
        }
    }

    let row_norm_in: Vec<T> = qp.a_ineq.row_iter().map(|r| crate::linalg::norm2(r).max(T::min_positive_value())).collect();
    let feas_tol = T::tol(1e-10);
    let tiny = T::tol(1e-13);
    let cap = 10 * (m + n + p) + 10;
    let mut iterations = 0usize;

    let outcome = 'outer: {
        for e in 0..p {
            let a = qp.a_eq.row(e);
            let mut np = a.to_vec();
            let mut s = dot(&np, &x) - qp.b_eq[e];
            let flip = s > T::zero();
            if flip {
                np.iter_mut().for_each(|v| *v = -*v);
                s = -s;
            }
            let d = ws.d(&np);
            let (z, r) = ws.step_dirs(&d);
            let zn = dot(&z, &np);
            if norm_inf(&z) <= tiny || zn <= tiny {
                if s.abs() <= feas_tol * (T::one() + qp.b_eq[e].abs()) {
                    continue;
                }
                break 'outer GiResult::Infeasible;
            }
            let t = -s / zn;
            for (xi, &zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (uk, &rk) in ws.u.iter_mut().zip(&r) {
                *uk -= t * rk;
            }
            ws.add(d, Kind::Eq(e, flip), t);
        }

        loop {
            iterations += 1;
            if iterations > cap {
                break 'outer GiResult::IterationCap;
            }
            // Most violated inequality, measured in distance.
            let mut pick: Option<(usize, T)> = None;
            for i in 0..m {
                if ws.active.iter().any(|k| matches!(k, Kind::Ineq(a) if *a == i)) {
                    continue;
                }
                let v = (dot(qp.a_ineq.row(i), &x) - qp.b_ineq[i]) / row_norm_in[i];
                if v > feas_tol * (T::one() + qp.b_ineq[i].abs() / row_norm_in[i]) && pick.is_none_or(|(_, best)| v > best) {
                    pick = Some((i, v));
                }
            }
            let Some((pi, _)) = pick else {
                break 'outer GiResult::Optimal;
            };
            // Constraint as nᵀx ≥ b with n = −a.
            let np: Vec<T> = qp.a_ineq.row(pi).iter().map(|&v| -v).collect();
            let bp = -qp.b_ineq[pi];
            let mut u_new = T::zero();
            loop {
                iterations += 1;
                if iterations > cap {
                    break 'outer GiResult::IterationCap;
                }
                let s = dot(&np, &x) - bp;
                let d = ws.d(&np);
                let (z, r) = ws.step_dirs(&d);
                let mut t1 = T::infinity();
                let mut drop_at = None;
                for (k, (&rk, kind)) in r.iter().zip(&ws.active).enumerate() {
                    if matches!(kind, Kind::Ineq(_)) && rk > tiny {
                        let ratio = ws.u[k] / rk;
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(k);
                        }
                    }
                }
                let zn = dot(&z, &np);
                let t2 = if norm_inf(&z) <= tiny || zn <= tiny { T::infinity() } else { -s / zn };
                let t = t1.min(t2);
                if !t.is_finite() {
                    break 'outer GiResult::Infeasible;
                }
                if t2.is_finite() {
                    for (xi, &zi) in x.iter_mut().zip(&z) {
                        *xi += t * zi;
                    }
                }
                for (uk, &rk) in ws.u.iter_mut().zip(&r) {
                    *uk -= t * rk;
                }
                u_new += t;
                if t2 <= t1 {
                    ws.add(d, Kind::Ineq(pi), u_new);
                    break;
                }
                ws.drop(drop_at.expect("partial step has a blocking constraint"));
            }
        }
    };

    match outcome {
        GiResult::IterationCap => {
            let mut out = QpOutcome::failure(QpStatus::NumericalFailure, n, m, p, iterations);
            out.detail = Some(format!("iteration cap {cap} reached"));
            out
        }
        GiResult::Infeasible => {
            let cert = check_feasible(&qp.a_ineq, &qp.b_ineq, &qp.a_eq, &qp.b_eq);
            let status = if cert.feasible { QpStatus::NumericalFailure } else { QpStatus::Infeasible };
            let mut out = QpOutcome::failure(status, n, m, p, iterations);
            if cert.feasible {
                out.detail = Some("dual active set reported infeasibility that phase 1 refutes".into());
            }
            out.certificate = Some(cert);
            out
        }
        GiResult::Optimal => {
            let mut lambda = vec![T::zero(); m];
            let mut nu = vec![T::zero(); p];
            for (kind, &u) in ws.active.iter().zip(&ws.u) {
                match *kind {
                    Kind::Ineq(i) => lambda[i] = u,
                    Kind::Eq(e, flip) => nu[e] = if flip { u } else { -u },
                }
            }
            if let Some((xp, lp, np)) = polish(qp, &ws.active) {
                let before = kkt_residuals(qp, &x, &lambda, &nu);
                let after = kkt_residuals(qp, &xp, &lp, &np);
                if after.primal <= before.primal.max(T::tol(PRIMAL_TOL)) && after.dual <= T::tol(1e-9) && after.stationarity <= before.stationarity {
                    x = xp;
                    lambda = lp;
                    nu = np;
                }
            }
            let res = kkt_residuals(qp, &x, &lambda, &nu);
            let scale = T::one().max(norm_inf(&qp.grad)).max(qp.hess.max_abs() * norm_inf(&x));
            let certified = res.primal <= T::tol(PRIMAL_TOL)
                && res.stationarity <= T::tol(STATIONARITY_TOL) * scale
                && res.dual <= T::tol(1e-9)
                && res.complementarity <= T::tol(PRIMAL_TOL) * scale;
            let objective = qp.objective(&x);
            let mut out = QpOutcome {
                status: if certified { QpStatus::Optimal } else { QpStatus::NumericalFailure },
                x,
                objective,
                lambda,
                nu,
                iterations,
                certificate: None,
                detail: None,
            };
            if !certified {
                out.detail = Some(format!("KKT check failed: {res:?}"));
            }
            out
        }
    }
}

/// Re-solves the equality-constrained QP on the final working set, with the
/// exact Hessian when the KKT matrix allows it.
fn polish<T: Real>(qp: &QuadraticProgram<T>, active: &[Kind]) -> Option<(Vec<T>, Vec<T>, Vec<T>)> {
    polish_with(qp, active, T::zero()).or_else(|| polish_with(qp, active, T::tol(REGULARIZATION)))
}

fn polish_with<T: Real>(qp: &QuadraticProgram<T>, active: &[Kind], reg: T) -> Option<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = qp.num_vars();
    let q = active.len();
    let mut k = Mat::zeros(n + q, n + q);
    k.set_block(0, 0, &qp.hess);
    for i in 0..n {
        k[(i, i)] += reg;
    }
    let mut rhs: Vec<T> = qp.grad.iter().map(|&g| -g).collect();
    for (c, kind) in active.iter().enumerate() {
        let (row, b) = match *kind {
            Kind::Ineq(i) => (qp.a_ineq.row(i), qp.b_ineq[i]),
            Kind::Eq(e, _) => (qp.a_eq.row(e), qp.b_eq[e]),
        };
        for j in 0..n {
            k[(n + c, j)] = row[j];
            k[(j, n + c)] = row[j];
        }
        rhs.push(b);
    }
    let sol = Lu::factor(&k, T::tol(1e-13))?.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol[..n].to_vec();
    let mut lambda = vec![T::zero(); qp.b_ineq.len()];
    let mut nu = vec![T::zero(); qp.b_eq.len()];
    for (c, kind) in active.iter().enumerate() {
        match *kind {
            Kind::Ineq(i) => lambda[i] = sol[n + c],
            Kind::Eq(e, _) => nu[e] = sol[n + c],
        }
    }
    Some((x, lambda, nu))
}
