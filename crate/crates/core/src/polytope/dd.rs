//! Double-description (Motzkin) conversion from an H-representation to the
//! vertex list of a bounded polyhedron.
//!
//! `{x : H x ≤ h}` is homogenized to the pointed cone
//! `{(t, x) : t·hᵢ − Hᵢx ≥ 0, t ≥ 0}` whose extreme rays with `t > 0` are the
//! vertices. Rows are inserted one at a time and new rays are generated
//! from combinatorially adjacent pairs.

use crate::linalg::{dot, Mat};
use crate::scalar::{tolerance, Real};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum DdOutcome<T> {
    Vertices(Vec<Vec<T>>),
    /// Homogenized constraint matrix is rank deficient: the polyhedron has a
    /// recession direction or a lineality space.
    Unbounded,
}

#[derive(Clone)]
struct Ray<T> {
    v: Vec<T>,
    zeros: Vec<u64>,
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1u64 << (i % 64);
}

fn count(bits: &[u64]) -> u32 {
    bits.iter().map(|w| w.count_ones()).sum()
}

fn intersect(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn is_superset(sup: &[u64], sub: &[u64]) -> bool {
    sup.iter().zip(sub).all(|(s, t)| s & t == *t)
}

fn normalize<T: Real>(v: &mut [T]) {
    let m = v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    if m > T::zero() {
        for x in v.iter_mut() {
            *x /= m;
        }
    }
}

/// Selection of `n` linearly independent rows, taking the row with the
/// largest residual after projecting out the rows already chosen.
fn independent_rows<T: Real>(rows: &[Vec<T>], n: usize, tol: T) -> Option<Vec<usize>> {
    let mut resid: Vec<Vec<T>> = rows.to_vec();
    let mut chosen = Vec::with_capacity(n);
    while chosen.len() < n {
        let (best, mag) = resid
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, r)| (i, dot(r, r).sqrt()))
            .fold((usize::MAX, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best == usize::MAX || mag <= tol {
            return None;
        }
        chosen.push(best);
        let q: Vec<T> = resid[best].iter().map(|&x| x / mag).collect();
        for r in resid.iter_mut() {
            let c = dot(r, &q);
            for (x, &y) in r.iter_mut().zip(&q) {
                *x -= c * y;
            }
        }
    }
    Some(chosen)
}

pub(crate) fn enumerate_vertices<T: Real>(hm: &Mat<T>, hv: &[T]) -> DdOutcome<T> {
    let dim = hm.cols();
    let n = dim + 1;
    // Homogenized rows a·(t, x) >= 0, each scaled to unit infinity norm.
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(hm.rows() + 1);
    let mut t_row = vec![T::zero(); n];
    t_row[0] = T::one();
    rows.push(t_row);
    for (i, r) in hm.row_iter().enumerate() {
        let mut a = Vec::with_capacity(n);
        a.push(hv[i]);
        a.extend(r.iter().map(|&x| -x));
        normalize(&mut a);
        rows.push(a);
    }
    let m = rows.len();
    let words = m.div_ceil(64);
    let rank_tol = T::tol(tolerance::RANK);
    let zero_tol = T::tol(1e-10);

    let Some(init) = independent_rows(&rows, n, rank_tol) else {
        return DdOutcome::Unbounded;
    };
    let a0 = Mat::from_rows(&init.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
    let Some(inv) = crate::linalg::inverse(&a0) else {
        return DdOutcome::Unbounded;
    };
    let mut rays: Vec<Ray<T>> = (0..n)
        .map(|j| {
            let mut v = inv.col(j);
            normalize(&mut v);
            let mut zeros = vec![0u64; words];
            for (k, &ri) in init.iter().enumerate() {
                if k != j {
                    set_bit(&mut zeros, ri);
                }
            }
            Ray { v, zeros }
        })
        .collect();

    let mut processed = vec![false; m];
    for &i in &init {
        processed[i] = true;
    }
    for i in 0..m {
        if processed[i] {
            continue;
        }
        processed[i] = true;
        let a = &rows[i];
        let vals: Vec<T> = rays.iter().map(|r| dot(a, &r.v)).collect();
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        let mut zero = Vec::new();
        for (k, &v) in vals.iter().enumerate() {
            if v > zero_tol {
                plus.push(k);
            } else if v < -zero_tol {
                minus.push(k);
            } else {
                zero.push(k);
            }
        }
        if minus.is_empty() {
            for &k in &zero {
                set_bit(&mut rays[k].zeros, i);
            }
            continue;
        }
        let mut next: Vec<Ray<T>> = Vec::with_capacity(plus.len() + zero.len() + plus.len() * 2);
        for &p in &plus {
            for &q in &minus {
                let common = intersect(&rays[p].zeros, &rays[q].zeros);
                if (count(&common) as usize) + 2 < n {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(k, r)| k == p || k == q || !is_superset(&r.zeros, &common));
                if !adjacent {
                    continue;
                }
                let (vp, vq) = (vals[p], vals[q]);
                let mut v: Vec<T> =
                    rays[q].v.iter().zip(&rays[p].v).map(|(&xq, &xp)| vp * xq - vq * xp).collect();
                normalize(&mut v);
                // Degenerate inputs put new rays on more rows than the pair shares.
                let mut zeros = common;
                set_bit(&mut zeros, i);
                for (k, row) in rows.iter().enumerate() {
                    if processed[k] && dot(row, &v).abs() <= zero_tol {
                        set_bit(&mut zeros, k);
                    }
                }
                next.push(Ray { v, zeros });
            }
        }
        for &k in &plus {
            next.push(rays[k].clone());
        }
        for &k in &zero {
            let mut r = rays[k].clone();
            set_bit(&mut r.zeros, i);
            next.push(r);
        }
        rays = next;
        if rays.is_empty() {
            break;
        }
    }

    let mut verts: Vec<Vec<T>> = Vec::new();
    let dedup_tol = T::tol(1e-9);
    let mut recession = false;
    for r in &rays {
        let t = r.v[0];
        if t <= zero_tol {
            recession = true;
            continue;
        }
        let x: Vec<T> = r.v[1..].iter().map(|&c| c / t).collect();
        let scale = x.iter().fold(T::one(), |acc, &c| acc.max(c.abs()));
        let dup = verts.iter().any(|w| {
            w.iter().zip(&x).all(|(&a, &b)| (a - b).abs() <= dedup_tol * scale)
        });
        if !dup {
            verts.push(x);
        }
    }
    if recession && !verts.is_empty() {
        return DdOutcome::Unbounded;
    }
    DdOutcome::Vertices(verts)
}
