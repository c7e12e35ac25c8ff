//! Dense two-phase tableau simplex.
//!
//! Solves `min cᵀx  s.t.  A x = b, x ≥ 0`. Entering columns follow
//! Dantzig's rule until a streak of degenerate pivots is seen, after which
//! the solver switches to Bland's rule for the rest of the run; leaving rows
//! break ties by smallest basic index. Both rules are deterministic.
//!
//! The tableau carries `B⁻¹` in extra columns so optimal duals are
//! available; [`maximize`] and [`deepest_point`] use them to read primal
//! maximizers off small dual LPs.

use crate::linalg::{dot, Mat};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal solution (meaningful when optimal).
    pub x: Vec<T>,
    pub objective: T,
    /// Optimal multipliers of the equality rows, `y = c_Bᵀ B⁻¹`.
    pub duals: Vec<T>,
    pub pivots: usize,
}

const DEGENERATE_STREAK: usize = 50;

struct Tableau<T> {
    m: usize,
    /// Rows: m constraint rows; each row holds the structural and artificial
    /// coefficients, then m
    /// tracking columns (B⁻¹), then rhs.
    t: Vec<T>,
    width: usize,
    basis: Vec<usize>,
    pivot_tol: T,
}

impl<T: Real> Tableau<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.t[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> T {
        self.t[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        let inv = T::one() / p;
        for j in 0..w {
            self.t[r * w + j] *= inv;
        }
        self.t[r * w + c] = T::one();
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != T::zero() {
                for (x, &pv) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
                row[c] = T::zero();
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs `c_j - c_Bᵀ B⁻¹ A_j` for eligible columns.
    fn reduced_costs(&self, cost: &[T], eligible: usize) -> Vec<T> {
        let mut rc: Vec<T> = cost[..eligible].to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != T::zero() {
                let row = &self.t[i * self.width..i * self.width + eligible];
                for (r, &a) in rc.iter_mut().zip(row) {
                    *r -= cb * a;
                }
            }
        }
        rc
    }

    /// Runs simplex iterations on `cost` over the first `eligible` columns.
    fn optimize(&mut self, cost: &[T], eligible: usize, max_iter: usize, pivots: &mut usize) -> LpStatus {
        let rc_tol = self.pivot_tol;
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if *pivots >= max_iter {
                return LpStatus::IterationLimit;
            }
            let rc = self.reduced_costs(cost, eligible);
            let entering = if bland {
                (0..eligible).find(|&j| rc[j] < -rc_tol)
            } else {
                let mut best: Option<(usize, T)> = None;
                for (j, &r) in rc.iter().enumerate() {
                    if r < -rc_tol && best.is_none_or(|(_, b)| r < b) {
                        best = Some((j, r));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else {
                return LpStatus::Optimal;
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > self.pivot_tol {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr || (ratio == lr && self.basis[i] < self.basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return LpStatus::Unbounded;
            };
            if ratio <= self.pivot_tol {
                degenerate += 1;
                if degenerate >= DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            *pivots += 1;
        }
    }
}

/// Solves `min cᵀx s.t. A x = b, x ≥ 0`.
pub fn solve_standard<T: Real>(c: &[T], a: &Mat<T>, b: &[T]) -> LpSolution<T> {
    let m = a.rows();
    let n = a.cols();
    assert_eq!(c.len(), n, "cost length mismatch");
    assert_eq!(b.len(), m, "rhs length mismatch");
    let pivot_tol = T::tol(1e-11);
    let feas_tol = T::tol(1e-9);

    // Normalize signs so b >= 0.
    let sign: Vec<T> = b.iter().map(|&v| if v < T::zero() { -T::one() } else { T::one() }).collect();

    // Columns already forming a unit vector with +1 can start in the basis.
    let mut basis = vec![usize::MAX; m];
    for j in 0..n {
        let mut pos = None;
        let mut ok = true;
        for i in 0..m {
            let v = a[(i, j)] * sign[i];
            if v == T::zero() {
                continue;
            }
            if v == T::one() && pos.is_none() {
                pos = Some(i);
            } else {
                ok = false;
                break;
            }
        }
        if ok {
            if let Some(i) = pos {
                if basis[i] == usize::MAX {
                    basis[i] = j;
                }
            }
        }
    }
    let art_rows: Vec<usize> = (0..m).filter(|&i| basis[i] == usize::MAX).collect();
    let ncols = n + art_rows.len();
    let width = ncols + m + 1;
    let mut t = vec![T::zero(); m * width];
    for i in 0..m {
        for j in 0..n {
            t[i * width + j] = a[(i, j)] * sign[i];
        }
        t[i * width + ncols + i] = sign[i];
        t[i * width + width - 1] = b[i] * sign[i];
    }
    for (k, &i) in art_rows.iter().enumerate() {
        t[i * width + n + k] = T::one();
        basis[i] = n + k;
    }
    let mut tab = Tableau { m, t, width, basis, pivot_tol };
    let max_iter = 50 * (m + n) + 1000;
    let mut pivots = 0usize;

    if !art_rows.is_empty() {
        let mut c1 = vec![T::zero(); ncols];
        for k in 0..art_rows.len() {
            c1[n + k] = T::one();
        }
        let st = tab.optimize(&c1, ncols, max_iter, &mut pivots);
        if st == LpStatus::IterationLimit {
            return failed(LpStatus::IterationLimit, n, m, pivots);
        }
        let infeas: T = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.rhs(i)).sum();
        let scale = b.iter().fold(T::one(), |acc, &v| acc.max(v.abs()));
        if infeas > feas_tol * scale {
            return failed(LpStatus::Infeasible, n, m, pivots);
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= n {
                let col = (0..n)
                    .filter(|&j| tab.at(i, j).abs() > pivot_tol)
                    .max_by(|&p, &q| tab.at(i, p).abs().partial_cmp(&tab.at(i, q).abs()).unwrap());
                if let Some(j) = col {
                    tab.pivot(i, j);
                    pivots += 1;
                }
                // Otherwise the row is redundant; the artificial stays basic at zero
                // and is never eligible to re-enter.
            }
        }
    }

    let mut c2 = vec![T::zero(); ncols];
    c2[..n].copy_from_slice(c);
    let st = tab.optimize(&c2, n, max_iter, &mut pivots);
    if st != LpStatus::Optimal {
        return failed(st, n, m, pivots);
    }
    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i);
        }
    }
    // y_i = sum_k c_B[k] * Binv[k][i] (Binv already includes the sign flip).
    let mut duals = vec![T::zero(); m];
    for k in 0..m {
        let cb = c2[tab.basis[k]];
        if cb != T::zero() {
            for (i, d) in duals.iter_mut().enumerate() {
                *d += cb * tab.at(k, ncols + i);
            }
        }
    }
    let objective = dot(c, &x);
    LpSolution { status: LpStatus::Optimal, x, objective, duals, pivots }
}

fn failed<T: Real>(status: LpStatus, n: usize, m: usize, pivots: usize) -> LpSolution<T> {
    LpSolution { status, x: vec![T::zero(); n], objective: T::nan(), duals: vec![T::zero(); m], pivots }
}

/// Outcome of maximizing a linear function over `{x : H x ≤ h}`.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxResult<T> {
    Optimal { value: T, argmax: Vec<T> },
    /// The feasible set is empty.
    Infeasible,
    /// The objective is unbounded above on a nonempty set.
    Unbounded,
    /// Iteration cap reached.
    Failed,
}

/// `max dᵀx s.t. H x ≤ h`, solved through its dual
/// `min hᵀy s.t. Hᵀy = d, y ≥ 0` which has only `dim` rows.
pub fn maximize<T: Real>(hm: &Mat<T>, hv: &[T], d: &[T]) -> MaxResult<T> {
    let dim = hm.cols();
    assert_eq!(d.len(), dim);
    let at = hm.transpose();
    let sol = solve_standard(hv, &at, d);
    match sol.status {
        LpStatus::Optimal => {
            // Duals of `Hᵀy = d` are a primal maximizer.
            MaxResult::Optimal { value: sol.objective, argmax: sol.duals }
        }
        // Dual unbounded below: primal infeasible.
        LpStatus::Unbounded => MaxResult::Infeasible,
        // Dual infeasible: primal unbounded or infeasible.
        LpStatus::Infeasible => match deepest_point_capped(hm, hv, T::one()) {
            Some((_, slack)) if slack >= -T::tol(1e-9) => MaxResult::Unbounded,
            _ => MaxResult::Infeasible,
        },
        LpStatus::IterationLimit => MaxResult::Failed,
    }
}

/// Point maximizing the uniform slack `t` in `H x + t·1 ≤ h`.
///
/// Returns `(x, t)`; the set is empty iff `t < 0`. For unit-norm rows `t`
/// is the Chebyshev radius. `None` when `t` is unbounded (the rows admit a
/// common recession direction, e.g. an unbounded set) or on solver failure.
pub fn deepest_point<T: Real>(hm: &Mat<T>, hv: &[T]) -> Option<(Vec<T>, T)> {
    slack_lp(hm, hv, None)
}

/// As [`deepest_point`] with the extra bound `t ≤ cap`, so the LP is always
/// bounded. `None` only on solver failure.
pub fn deepest_point_capped<T: Real>(hm: &Mat<T>, hv: &[T], cap: T) -> Option<(Vec<T>, T)> {
    slack_lp(hm, hv, Some(cap))
}

fn slack_lp<T: Real>(hm: &Mat<T>, hv: &[T], cap: Option<T>) -> Option<(Vec<T>, T)> {
    let (m, dim) = (hm.rows(), hm.cols());
    // min hᵀy (+ cap·z)  s.t. Hᵀy = 0, 1ᵀy (+ z) = 1, y ≥ 0
    let ncols = m + usize::from(cap.is_some());
    let mut a = Mat::zeros(dim + 1, ncols);
    for i in 0..m {
        for j in 0..dim {
            a[(j, i)] = hm[(i, j)];
        }
        a[(dim, i)] = T::one();
    }
    let mut c = hv.to_vec();
    if let Some(cap) = cap {
        a[(dim, m)] = T::one();
        c.push(cap);
    }
    let mut b = vec![T::zero(); dim + 1];
    b[dim] = T::one();
    let sol = solve_standard(&c, &a, &b);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let x = sol.duals[..dim].to_vec();
    Some((x, sol.duals[dim]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let h = Mat::<f64>::from_f64_rows(&[[1.0, 0.0], [0.0, 2.0], [3.0, 2.0], [-1.0, 0.0], [0.0, -1.0]]);
        let hv = [4.0, 12.0, 18.0, 0.0, 0.0];
        match maximize(&h, &hv, &[3.0, 5.0]) {
            MaxResult::Optimal { value, argmax } => {
                assert!((value - 36.0).abs() < 1e-12);
                assert!((argmax[0] - 2.0).abs() < 1e-12 && (argmax[1] - 6.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let h = Mat::<f64>::from_f64_rows(&[[1.0], [-1.0]]);
        assert_eq!(maximize(&h, &[-1.0, -1.0], &[1.0]), MaxResult::Infeasible);
        let half = Mat::<f64>::from_f64_rows(&[[-1.0]]);
        assert_eq!(maximize(&half, &[0.0], &[1.0]), MaxResult::Unbounded);
    }

    #[test]
    fn standard_form_with_redundant_equalities() {
        // x1 + x2 = 1 twice, min x1 -> x1 = 0
        let a = Mat::<f64>::from_f64_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let sol = solve_standard(&[1.0, 0.0], &a, &[1.0, 1.0]);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective.abs() < 1e-12);
    }

    #[test]
    fn deepest_point_of_box_is_center() {
        let h = Mat::<f64>::from_f64_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        let (x, t) = deepest_point(&h, &[3.0, -1.0, 1.0, 1.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!((t - 1.0).abs() < 1e-12);
        let (_, t) = deepest_point(&h, &[-1.0, -1.0, 1.0, 1.0]).unwrap();
        assert!(t < 0.0);
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Classic Beale cycling example in standard form.
        let a = Mat::<f64>::from_f64_rows(&[
            [0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0],
            [0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ]);
        let c = [-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0];
        let sol = solve_standard(&c, &a, &[0.0, 0.0, 1.0]);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 1.25).abs() < 1e-12);
    }
}
