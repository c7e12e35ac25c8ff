//! Vertex representation and the V→H conversion.

use super::dd::{enumerate_vertices, DdOutcome};
use super::{Polytope, PolytopeError};
use crate::linalg::{dot, Mat};
use crate::scalar::Real;

/// Convex hull of a finite, nonempty point set.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope<T> {
    vertices: Vec<Vec<T>>,
}

impl<T: Real> VPolytope<T> {
    pub fn new(vertices: Vec<Vec<T>>) -> Result<Self, PolytopeError> {
        let Some(first) = vertices.first() else {
            return Err(PolytopeError::Empty);
        };
        let dim = first.len();
        if dim == 0 {
            return Err(PolytopeError::Invalid("zero-dimensional points".into()));
        }
        if let Some(bad) = vertices.iter().find(|v| v.len() != dim) {
            return Err(PolytopeError::DimensionMismatch { expected: dim, found: bad.len() });
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(PolytopeError::Invalid("non-finite vertex coordinate".into()));
        }
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[Vec<T>] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Vec<T>> {
        self.vertices
    }

    pub fn support(&self, d: &[T]) -> T {
        self.vertices.iter().map(|v| dot(v, d)).fold(T::neg_infinity(), T::max)
    }

    /// Image under `x ↦ M x`. The point list may contain non-extreme points.
    pub fn linear_map(&self, m: &Mat<T>) -> Result<Self, PolytopeError> {
        if m.cols() != self.dim() {
            return Err(PolytopeError::DimensionMismatch { expected: self.dim(), found: m.cols() });
        }
        Self::new(self.vertices.iter().map(|v| m.mul_vec(v)).collect())
    }

    /// `P ⊕ Q` as all pairwise sums, so supports add exactly.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self, PolytopeError> {
        if other.dim() != self.dim() {
            return Err(PolytopeError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let mut pts = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                let p: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x + y).collect();
                if !pts.contains(&p) {
                    pts.push(p);
                }
            }
        }
        Self::new(pts)
    }

    pub fn translate(&self, t: &[T]) -> Result<Self, PolytopeError> {
        if t.len() != self.dim() {
            return Err(PolytopeError::DimensionMismatch { expected: self.dim(), found: t.len() });
        }
        Self::new(self.vertices.iter().map(|v| v.iter().zip(t).map(|(&x, &y)| x + y).collect()).collect())
    }

    /// H-representation of the hull. Handles lower-dimensional hulls by
    /// adding equality pairs for the orthogonal complement of the affine hull.
    pub fn to_hrep(&self) -> Result<Polytope<T>, PolytopeError> {
        hull(&self.vertices)
    }
}

/// Orthonormal basis of span{points - center} (modified Gram-Schmidt with
/// reorthogonalization), followed by its orthogonal complement.
fn affine_frame<T: Real>(pts: &[Vec<T>], center: &[T]) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let dim = center.len();
    let scale = pts
        .iter()
        .flat_map(|p| p.iter().zip(center).map(|(&a, &c)| (a - c).abs()))
        .fold(T::zero(), T::max);
    let tol = T::tol(1e-9) * scale.max(T::min_positive_value());
    let mut span: Vec<Vec<T>> = Vec::new();
    let orth = |v: &mut Vec<T>, basis: &[Vec<T>]| {
        for _ in 0..2 {
            for b in basis {
                let c = dot(v, b);
                for (x, &y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
    };
    // Pick the farthest residual each round to keep the basis well conditioned.
    loop {
        if span.len() == dim {
            break;
        }
        let mut best: Option<(Vec<T>, T)> = None;
        for p in pts {
            let mut v: Vec<T> = p.iter().zip(center).map(|(&a, &c)| a - c).collect();
            orth(&mut v, &span);
            let n = dot(&v, &v).sqrt();
            if best.as_ref().is_none_or(|(_, bn)| n > *bn) {
                best = Some((v, n));
            }
        }
        match best {
            Some((v, n)) if n > tol => span.push(v.iter().map(|&x| x / n).collect()),
            _ => break,
        }
    }
    let mut comp: Vec<Vec<T>> = Vec::new();
    for k in 0..dim {
        if span.len() + comp.len() == dim {
            break;
        }
        let mut e = vec![T::zero(); dim];
        e[k] = T::one();
        let mut all = span.clone();
        all.extend(comp.iter().cloned());
        orth(&mut e, &all);
        let n = dot(&e, &e).sqrt();
        if n > T::lit(1e-6) {
            comp.push(e.iter().map(|&x| x / n).collect());
        }
    }
    (span, comp)
}

pub(crate) fn hull<T: Real>(points: &[Vec<T>]) -> Result<Polytope<T>, PolytopeError> {
    let Some(first) = points.first() else {
        return Err(PolytopeError::Empty);
    };
    let dim = first.len();
    let npts = T::lit(points.len() as f64);
    let mut center = vec![T::zero(); dim];
    for p in points {
        for (c, &x) in center.iter_mut().zip(p) {
            *c += x / npts;
        }
    }
    let (span, comp) = affine_frame(points, &center);
    let r = span.len();
    let mut hm = Mat::zeros(0, dim);
    let mut hv: Vec<T> = Vec::new();
    for w in &comp {
        let off = dot(w, &center);
        hm.push_row(w);
        hv.push(off);
        let neg: Vec<T> = w.iter().map(|&x| -x).collect();
        hm.push_row(&neg);
        hv.push(-off);
    }
    if r > 0 {
        // Coordinates in the affine frame; the centroid is a relative interior point.
        let ys: Vec<Vec<T>> = points
            .iter()
            .map(|p| {
                let d: Vec<T> = p.iter().zip(&center).map(|(&a, &c)| a - c).collect();
                span.iter().map(|u| dot(u, &d)).collect()
            })
            .collect();
        // Polar {z : yᵀz ≤ 1}; its vertices are the facet normals of the hull.
        let polar = Mat::from_rows(&ys);
        let ones = vec![T::one(); ys.len()];
        let facets = match enumerate_vertices(&polar, &ones) {
            DdOutcome::Vertices(v) => v,
            DdOutcome::Unbounded => {
                return Err(PolytopeError::Numerical("degenerate point set in hull".into()))
            }
        };
        for z in facets {
            // zᵀ U ᵀ(x - c) ≤ 1
            let mut normal = vec![T::zero(); dim];
            for (u, &zk) in span.iter().zip(&z) {
                for (nk, &uk) in normal.iter_mut().zip(u) {
                    *nk += zk * uk;
                }
            }
            let off = T::one() + dot(&normal, &center);
            hm.push_row(&normal);
            hv.push(off);
        }
    }
    Ok(Polytope::from_raw(hm, hv).dedup_rows())
}
