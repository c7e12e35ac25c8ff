//! H-representation polytopes and the set algebra used for constraint
//! tightening and invariant-set synthesis.
//!
//! A [`Polytope`] is `{x : H x ≤ h}` with every row of `H` scaled to unit
//! Euclidean norm, so `h` offsets and all tolerances are distances.
//! Polytopes are immutable values; every operation returns a new one.
//!
//! Minkowski sums and non-invertible linear images go through the vertex
//! representation ([`VPolytope`]); Pontryagin differences, containment and
//! redundancy checks are row-wise support-function LPs.

mod dd;
mod text;
mod vrep;

use thiserror::Error;

use crate::linalg::{dot, norm2, Lu, Mat};
use crate::lp::{self, MaxResult};
use crate::scalar::{tolerance, Real};

pub use vrep::VPolytope;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolytopeError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("improper polytope: the set is unbounded")]
    Improper,
    #[error("empty polytope")]
    Empty,
    #[error("invalid polytope: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Convex polyhedron `{x : H x ≤ h}`.
#[derive(Clone, PartialEq)]
pub struct Polytope<T> {
    normals: Mat<T>,
    offsets: Vec<T>,
    dim: usize,
}

impl<T: Real> Polytope<T> {
    /// Validates shapes and finiteness, then normalizes rows.
    pub fn new(normals: Mat<T>, offsets: Vec<T>) -> Result<Self, PolytopeError> {
        if normals.rows() != offsets.len() {
            return Err(PolytopeError::DimensionMismatch { expected: normals.rows(), found: offsets.len() });
        }
        if normals.cols() == 0 {
            return Err(PolytopeError::Invalid("dimension must be positive".into()));
        }
        if !normals.is_finite() || offsets.iter().any(|x| !x.is_finite()) {
            return Err(PolytopeError::Invalid("non-finite entry".into()));
        }
        Ok(Self::from_raw(normals, offsets))
    }

    /// Normalizes rows to unit length. Zero rows are dropped when trivially
    /// satisfied and kept as a canonical infeasible row otherwise.
    pub(crate) fn from_raw(normals: Mat<T>, offsets: Vec<T>) -> Self {
        let dim = normals.cols();
        let mut hm = Mat::zeros(0, dim);
        let mut hv = Vec::with_capacity(offsets.len());
        let zero_tol = T::tol(1e-13);
        let mut infeasible = false;
        for (r, &b) in normals.row_iter().zip(&offsets) {
            let n = norm2(r);
            if n <= zero_tol {
                if b < -T::tol(tolerance::FEASIBILITY) {
                    infeasible = true;
                }
                continue;
            }
            let row: Vec<T> = r.iter().map(|&x| x / n).collect();
            hm.push_row(&row);
            hv.push(b / n);
        }
        if infeasible {
            hm.push_row(&vec![T::zero(); dim]);
            hv.push(-T::one());
        }
        if hm.rows() == 0 {
            hm = Mat::zeros(0, dim);
        }
        Self { normals: hm, offsets: hv, dim }
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`.
    pub fn from_box(lo: &[T], hi: &[T]) -> Result<Self, PolytopeError> {
        if lo.len() != hi.len() {
            return Err(PolytopeError::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        let dim = lo.len();
        let mut hm = Mat::zeros(2 * dim, dim);
        let mut hv = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            hm[(2 * i, i)] = T::one();
            hm[(2 * i + 1, i)] = -T::one();
            hv.push(hi[i]);
            hv.push(-lo[i]);
        }
        Self::new(hm, hv)
    }

    /// Box symmetric about the origin with the given half-widths.
    pub fn symmetric_box(half_widths: &[T]) -> Result<Self, PolytopeError> {
        let lo: Vec<T> = half_widths.iter().map(|&x| -x).collect();
        Self::from_box(&lo, half_widths)
    }

    pub fn interval(lo: T, hi: T) -> Result<Self, PolytopeError> {
        Self::from_box(&[lo], &[hi])
    }

    pub fn singleton(p: &[T]) -> Result<Self, PolytopeError> {
        Self::from_box(p, p)
    }

    /// Convex hull of points.
    pub fn from_vertices(points: &[Vec<T>]) -> Result<Self, PolytopeError> {
        VPolytope::new(points.to_vec())?.to_hrep()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.offsets.len()
    }

    /// Facet normals `H` (unit rows).
    pub fn normals(&self) -> &Mat<T> {
        &self.normals
    }

    /// Facet offsets `h`.
    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    fn check_dim(&self, other: usize) -> Result<(), PolytopeError> {
        if self.dim != other {
            Err(PolytopeError::DimensionMismatch { expected: self.dim, found: other })
        } else {
            Ok(())
        }
    }

    /// `max{dᵀx : x ∈ P}`.
    pub fn support(&self, d: &[T]) -> Result<T, PolytopeError> {
        self.support_with_argmax(d).map(|(v, _)| v)
    }

    pub fn support_with_argmax(&self, d: &[T]) -> Result<(T, Vec<T>), PolytopeError> {
        self.check_dim(d.len())?;
        match lp::maximize(&self.normals, &self.offsets, d) {
            MaxResult::Optimal { value, argmax } => Ok((value, argmax)),
            MaxResult::Infeasible => Err(PolytopeError::Empty),
            MaxResult::Unbounded => Err(PolytopeError::Improper),
            MaxResult::Failed => Err(PolytopeError::Numerical("support LP iteration cap".into())),
        }
    }

    /// `(x, t)` maximizing the uniform slack; `t` is the Chebyshev radius.
    pub fn chebyshev_center(&self) -> Result<(Vec<T>, T), PolytopeError> {
        match lp::deepest_point(&self.normals, &self.offsets) {
            Some((x, t)) if t >= -T::tol(tolerance::FEASIBILITY) => Ok((x, t)),
            Some(_) => Err(PolytopeError::Empty),
            None => Err(PolytopeError::Improper),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(lp::deepest_point_capped(&self.normals, &self.offsets, T::one()), Some((_, t)) if t < -T::tol(tolerance::FEASIBILITY))
    }

    /// Bounded and nonempty.
    pub fn is_proper(&self) -> bool {
        !self.is_empty() && self.vertices().is_ok()
    }

    pub fn contains_point(&self, x: &[T], tol: T) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        self.normals.row_iter().zip(&self.offsets).all(|(r, &b)| dot(r, x) <= b + tol)
    }

    /// Largest violation `max_i (Hᵢx − hᵢ)`; nonpositive iff `x ∈ P`.
    pub fn max_violation(&self, x: &[T]) -> T {
        self.normals
            .row_iter()
            .zip(&self.offsets)
            .map(|(r, &b)| dot(r, x) - b)
            .fold(T::neg_infinity(), T::max)
    }

    /// Vertex enumeration by double description.
    ///
    /// Full-dimensional sets are centred on their deepest point and scaled to
    /// unit inradius first, so the enumeration tolerances are relative to
    /// the size of the set.
    pub fn vertices(&self) -> Result<VPolytope<T>, PolytopeError> {
        let outcome = match lp::deepest_point(&self.normals, &self.offsets) {
            Some((c, r)) if r > T::tol(tolerance::FEASIBILITY) && r.is_finite() => {
                let h: Vec<T> = self.normals.row_iter().zip(&self.offsets).map(|(row, &b)| (b - dot(row, &c)) / r).collect();
                match dd::enumerate_vertices(&self.normals, &h) {
                    dd::DdOutcome::Vertices(v) => {
                        dd::DdOutcome::Vertices(v.into_iter().map(|y| y.iter().zip(&c).map(|(&yi, &ci)| ci + r * yi).collect()).collect())
                    }
                    other => other,
                }
            }
            _ => dd::enumerate_vertices(&self.normals, &self.offsets),
        };
        match outcome {
            dd::DdOutcome::Vertices(v) if v.is_empty() => Err(PolytopeError::Empty),
            dd::DdOutcome::Vertices(v) => VPolytope::new(v),
            dd::DdOutcome::Unbounded => Err(PolytopeError::Improper),
        }
    }

    /// `{x + t : x ∈ P}`.
    pub fn translate(&self, t: &[T]) -> Result<Self, PolytopeError> {
        self.check_dim(t.len())?;
        let offsets = self.normals.row_iter().zip(&self.offsets).map(|(r, &b)| b + dot(r, t)).collect();
        Ok(Self { normals: self.normals.clone(), offsets, dim: self.dim })
    }

    /// `{αx : x ∈ P}` for `α ≥ 0` (exact for bounded nonempty `P`).
    pub fn scale(&self, alpha: T) -> Result<Self, PolytopeError> {
        if !(alpha >= T::zero()) {
            return Err(PolytopeError::Invalid("negative scale factor".into()));
        }
        Ok(Self {
            normals: self.normals.clone(),
            offsets: self.offsets.iter().map(|&b| b * alpha).collect(),
            dim: self.dim,
        })
    }

    pub fn intersect(&self, other: &Self) -> Result<Self, PolytopeError> {
        self.check_dim(other.dim)?;
        let mut offsets = self.offsets.clone();
        offsets.extend_from_slice(&other.offsets);
        Ok(Self { normals: self.normals.vstack(&other.normals), offsets, dim: self.dim })
    }

    /// Adds the halfspace `aᵀx ≤ b`.
    pub fn with_halfspace(&self, a: &[T], b: T) -> Result<Self, PolytopeError> {
        self.check_dim(a.len())?;
        let extra = Self::from_raw(Mat::row_vector(a), vec![b]);
        self.intersect(&extra)
    }

    /// `P ⊕ Q` via vertex sums and a convex hull; result is irredundant.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self, PolytopeError> {
        self.check_dim(other.dim)?;
        let vp = self.vertices()?;
        let vq = other.vertices()?;
        if vq.vertices().len() == 1 {
            return self.translate(&vq.vertices()[0]);
        }
        if vp.vertices().len() == 1 {
            return other.translate(&vp.vertices()[0]);
        }
        if self.dim == 1 {
            let lo = -vp.support(&[-T::one()]) - vq.support(&[-T::one()]);
            let hi = vp.support(&[T::one()]) + vq.support(&[T::one()]);
            return Self::interval(lo, hi);
        }
        let mut pts = Vec::with_capacity(vp.vertices().len() * vq.vertices().len());
        for a in vp.vertices() {
            for b in vq.vertices() {
                pts.push(a.iter().zip(b).map(|(&x, &y)| x + y).collect::<Vec<T>>());
            }
        }
        vrep::hull(&pts)?.remove_redundancy()
    }

    /// `P ⊖ Q = {x : x ⊕ Q ⊆ P}`, computed row-wise. `None` when empty.
    pub fn pontryagin_diff(&self, other: &Self) -> Result<Option<Self>, PolytopeError> {
        self.check_dim(other.dim)?;
        let mut offsets = Vec::with_capacity(self.offsets.len());
        for (r, &b) in self.normals.row_iter().zip(&self.offsets) {
            offsets.push(b - other.support(r)?);
        }
        let out = Self { normals: self.normals.clone(), offsets, dim: self.dim };
        Ok(if out.is_empty() { None } else { Some(out) })
    }

    /// `{M x : x ∈ P}`.
    pub fn linear_map(&self, m: &Mat<T>) -> Result<Self, PolytopeError> {
        if m.cols() != self.dim {
            return Err(PolytopeError::DimensionMismatch { expected: self.dim, found: m.cols() });
        }
        if m.rows() == m.cols() {
            // {y : H M⁻¹ y ≤ h}; row i of H M⁻¹ solves Mᵀ z = Hᵢᵀ.
            if let Some(lut) = Lu::factor(&m.transpose(), T::tol(1e-10)) {
                let mut hm = Mat::zeros(self.normals.rows(), self.dim);
                for i in 0..self.normals.rows() {
                    let row = lut.solve(self.normals.row(i));
                    hm.row_mut(i).copy_from_slice(&row);
                }
                return Ok(Self::from_raw(hm, self.offsets.clone()));
            }
        }
        let v = self.vertices()?;
        let pts: Vec<Vec<T>> = v.vertices().iter().map(|x| m.mul_vec(x)).collect();
        if m.rows() == 1 {
            let (lo, hi) = pts.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
            return Self::interval(lo, hi);
        }
        vrep::hull(&pts)?.remove_redundancy()
    }

    /// `Q ⊆ P` up to `tol` on every facet of `P`. An empty `Q` is contained.
    pub fn contains_set(&self, other: &Self, tol: T) -> Result<bool, PolytopeError> {
        self.check_dim(other.dim)?;
        for (r, &b) in self.normals.row_iter().zip(&self.offsets) {
            match other.support(r) {
                Ok(s) if s <= b + tol => {}
                Ok(_) => return Ok(false),
                Err(PolytopeError::Empty) => return Ok(true),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Minimum over facets of `hᵢ − support(Q, Hᵢ)`; negative means `Q ⊄ P`.
    pub fn containment_slack(&self, other: &Self) -> Result<T, PolytopeError> {
        self.check_dim(other.dim)?;
        let mut worst = T::infinity();
        for (r, &b) in self.normals.row_iter().zip(&self.offsets) {
            worst = worst.min(b - other.support(r)?);
        }
        Ok(worst)
    }

    /// Removes exact and near-duplicate rows, keeping the tightest offset.
    pub(crate) fn dedup_rows(&self) -> Self {
        let tol = T::tol(1e-12);
        let mut keep: Vec<(Vec<T>, T)> = Vec::new();
        for (r, &b) in self.normals.row_iter().zip(&self.offsets) {
            if let Some(k) = keep.iter_mut().find(|(n, _)| n.iter().zip(r).all(|(&x, &y)| (x - y).abs() <= tol)) {
                if b < k.1 {
                    k.1 = b;
                }
            } else {
                keep.push((r.to_vec(), b));
            }
        }
        let mut hm = Mat::zeros(0, self.dim);
        let mut hv = Vec::with_capacity(keep.len());
        for (n, b) in keep {
            hm.push_row(&n);
            hv.push(b);
        }
        Self { normals: hm, offsets: hv, dim: self.dim }
    }

    /// Drops every row whose removal does not enlarge the set (beyond the
    /// redundancy tolerance).
    pub fn remove_redundancy(&self) -> Result<Self, PolytopeError> {
        let base = self.dedup_rows();
        if base.is_empty() {
            return Err(PolytopeError::Empty);
        }
        let tol = T::tol(tolerance::REDUNDANCY);
        let m = base.num_rows();
        let mut alive = vec![true; m];
        for i in 0..m {
            let idx: Vec<usize> = (0..m).filter(|&k| k != i && alive[k]).collect();
            if idx.is_empty() {
                continue;
            }
            let hm = base.normals.select_rows(&idx);
            let hv: Vec<T> = idx.iter().map(|&k| base.offsets[k]).collect();
            match lp::maximize(&hm, &hv, base.normals.row(i)) {
                MaxResult::Optimal { value, .. } if value <= base.offsets[i] + tol => alive[i] = false,
                MaxResult::Optimal { .. } | MaxResult::Unbounded => {}
                MaxResult::Infeasible => return Err(PolytopeError::Empty),
                MaxResult::Failed => return Err(PolytopeError::Numerical("redundancy LP iteration cap".into())),
            }
        }
        let idx: Vec<usize> = (0..m).filter(|&k| alive[k]).collect();
        Ok(Self {
            normals: base.normals.select_rows(&idx),
            offsets: idx.iter().map(|&k| base.offsets[k]).collect(),
            dim: self.dim,
        })
    }

    /// Per-axis `(lo, hi)` extents.
    pub fn bounding_box(&self) -> Result<(Vec<T>, Vec<T>), PolytopeError> {
        let mut lo = Vec::with_capacity(self.dim);
        let mut hi = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut e = vec![T::zero(); self.dim];
            e[i] = T::one();
            hi.push(self.support(&e)?);
            e[i] = -T::one();
            lo.push(-self.support(&e)?);
        }
        Ok((lo, hi))
    }

    /// Interval bounds of a one-dimensional polytope.
    pub fn as_interval(&self) -> Result<(T, T), PolytopeError> {
        self.check_dim(1)?;
        Ok((-self.support(&[-T::one()])?, self.support(&[T::one()])?))
    }

    pub fn cast<U: Real>(&self) -> Polytope<U> {
        Polytope { normals: self.normals.cast(), offsets: self.offsets.iter().map(|&b| U::lit(b.as_f64())).collect(), dim: self.dim }
    }
}

impl<T: Real> std::fmt::Debug for Polytope<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_text())
    }
}
