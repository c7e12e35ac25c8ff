//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the geometry, LP and QP code is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances are specified in `f64` and
/// converted through [`Real::tol`], which never goes below a small multiple
/// of the type's machine epsilon so that `f32` instantiations stay usable.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion of a literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// A tolerance of magnitude `base`, floored at `64 * epsilon`.
    #[inline]
    fn tol(base: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(base).max(floor)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Centralized tolerances for chained set operations.
pub mod tolerance {
    /// Feasibility and containment.
    pub const FEASIBILITY: f64 = 1e-7;
    /// Redundant-row elimination.
    pub const REDUNDANCY: f64 = 1e-9;
    /// Rank decisions in vertex/facet enumeration.
    pub const RANK: f64 = 1e-10;
    /// Point membership in halfspaces.
    pub const MEMBERSHIP: f64 = 1e-9;
}
