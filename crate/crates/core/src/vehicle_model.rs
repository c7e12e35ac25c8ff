//! Lateral error dynamics of a single-track vehicle at constant speed.
//!
//! States are `(e_y, ė_y, e_ψ, ė_ψ)`: lateral offset of the centre of
//! gravity from the road centreline, its rate, heading error and its rate.
//! The input is the front steering angle and the exogenous signal is the
//! desired yaw rate `ψ̇_des` induced by road curvature.

use thiserror::Error;

use crate::linalg::{expm, Mat};
use crate::polytope::{Polytope, PolytopeError};
use crate::scalar::Real;

pub const NX: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("vehicle parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("sampling time must be strictly positive")]
    SamplingTime,
    #[error("curvature profile: {0}")]
    Profile(String),
    #[error("curvature profile line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams<T> {
    /// Front cornering stiffness, N/rad.
    pub c_alpha_f: T,
    /// Rear cornering stiffness, N/rad.
    pub c_alpha_r: T,
    pub l_f: T,
    pub l_r: T,
    /// Yaw inertia, kg·m².
    pub i_z: T,
    /// Longitudinal speed, m/s.
    pub v_x: T,
    pub mass: T,
    pub width: T,
}

impl<T: Real> VehicleParams<T> {
    /// Mid-size passenger car at 10 m/s.
    pub fn reference() -> Self {
        Self {
            c_alpha_f: T::lit(153_000.0),
            c_alpha_r: T::lit(191_000.0),
            l_f: T::lit(1.3),
            l_r: T::lit(1.7),
            i_z: T::lit(5250.0),
            v_x: T::lit(10.0),
            mass: T::lit(2500.0),
            width: T::lit(1.8),
        }
    }

    pub fn with_speed(mut self, v_x: T) -> Self {
        self.v_x = v_x;
        self
    }

    pub fn wheelbase(&self) -> T {
        self.l_f + self.l_r
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("c_alpha_f", self.c_alpha_f),
            ("c_alpha_r", self.c_alpha_r),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("i_z", self.i_z),
            ("v_x", self.v_x),
            ("mass", self.mass),
            ("width", self.width),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ModelError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Scalar entries `a … h` of the continuous model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
    pub f: T,
    pub g: T,
    pub h: T,
}

impl<T: Real> Coefficients<T> {
    pub fn from_params(p: &VehicleParams<T>) -> Self {
        let two = T::lit(2.0);
        let (cf, cr) = (p.c_alpha_f, p.c_alpha_r);
        let (m, v, iz) = (p.mass, p.v_x, p.i_z);
        let moment = two * cf * p.l_f - two * cr * p.l_r;
        let inertia = two * cf * p.l_f * p.l_f + two * cr * p.l_r * p.l_r;
        Self {
            a: -(two * cf + two * cr) / (m * v),
            b: (two * cf + two * cr) / m,
            c: -moment / (m * v),
            d: -moment / (iz * v),
            e: moment / iz,
            f: -inertia / (iz * v),
            g: -moment / (m * v) - v,
            h: -inertia / (iz * v),
        }
    }
}

/// `ẋ = a_c x + b_c δ + e_c ψ̇_des`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel<T> {
    pub a_c: Mat<T>,
    pub b_c: Vec<T>,
    pub e_c: Vec<T>,
}

pub fn build_continuous<T: Real>(p: &VehicleParams<T>) -> Result<ContinuousModel<T>, ModelError> {
    p.validate()?;
    let k = Coefficients::from_params(p);
    let z = T::zero();
    let o = T::one();
    let a_c = Mat::from_rows(&[[z, o, z, z], [z, k.a, k.b, k.c], [z, z, z, o], [z, k.d, k.e, k.f]]);
    let two = T::lit(2.0);
    let b_c = vec![z, two * p.c_alpha_f / p.mass, z, two * p.c_alpha_f * p.l_f / p.i_z];
    let e_c = vec![z, k.g, z, k.h];
    Ok(ContinuousModel { a_c, b_c, e_c })
}

/// `x⁺ = A x + B u + E ψ̇_des` sampled with period `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel<T> {
    pub a: Mat<T>,
    pub b: Vec<T>,
    pub e: Vec<T>,
    pub ts: T,
}

/// Zero-order-hold discretization of `ẋ = A x + G w` for any number of
/// held input columns: the top-right block of `exp([[A, G], [0, 0]]·ts)`.
pub fn zoh<T: Real>(a_c: &Mat<T>, g: &Mat<T>, ts: T) -> (Mat<T>, Mat<T>) {
    let n = a_c.rows();
    let p = g.cols();
    let mut aug = Mat::zeros(n + p, n + p);
    aug.set_block(0, 0, &a_c.scaled(ts));
    aug.set_block(0, n, &g.scaled(ts));
    let phi = expm(&aug);
    (phi.block(0, 0, n, n), phi.block(0, n, n, p))
}

pub fn discretize_exact<T: Real>(c: &ContinuousModel<T>, ts: T) -> Result<DiscreteModel<T>, ModelError> {
    if !(ts > T::zero()) || !ts.is_finite() {
        return Err(ModelError::SamplingTime);
    }
    let mut g = Mat::zeros(NX, 2);
    g.set_col(0, &c.b_c);
    g.set_col(1, &c.e_c);
    let (a, gd) = zoh(&c.a_c, &g, ts);
    Ok(DiscreteModel { a, b: gd.col(0), e: gd.col(1), ts })
}

impl<T: Real> DiscreteModel<T> {
    /// Table-parameter vehicle at `v_x`, sampled at `ts`.
    pub fn for_speed(v_x: T, ts: T) -> Result<Self, ModelError> {
        discretize_exact(&build_continuous(&VehicleParams::reference().with_speed(v_x))?, ts)
    }

    pub fn b_mat(&self) -> Mat<T> {
        Mat::column(&self.b)
    }

    pub fn e_mat(&self) -> Mat<T> {
        Mat::column(&self.e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State<T> {
    pub e_y: T,
    pub de_y: T,
    pub e_psi: T,
    pub de_psi: T,
}

impl<T: Real> State<T> {
    pub fn new(e_y: T, de_y: T, e_psi: T, de_psi: T) -> Self {
        Self { e_y, de_y, e_psi, de_psi }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn to_array(self) -> [T; NX] {
        [self.e_y, self.de_y, self.e_psi, self.de_psi]
    }

    pub fn to_vec(self) -> Vec<T> {
        self.to_array().to_vec()
    }

    pub fn from_slice(v: &[T]) -> Self {
        assert_eq!(v.len(), NX, "state vector must have 4 entries");
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

pub fn step_nominal<T: Real>(m: &DiscreteModel<T>, x: &State<T>, u: T, psi_dot: T) -> State<T> {
    let xv = x.to_array();
    let mut next = m.a.mul_vec(&xv);
    for i in 0..NX {
        next[i] += m.b[i] * u + m.e[i] * psi_dot;
    }
    State::from_slice(&next)
}

pub fn step_true<T: Real>(m: &DiscreteModel<T>, x: &State<T>, u: T, psi_dot: T, d: &[T; NX]) -> State<T> {
    let n = step_nominal(m, x, u, psi_dot).to_array();
    State::new(n[0] + d[0], n[1] + d[1], n[2] + d[2], n[3] + d[3])
}

/// Piecewise-constant `ψ̇_des` as a function of travelled distance.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile<T> {
    breakpoints: Vec<(T, T)>,
    bounds: (T, T),
}

impl<T: Real> CurvatureProfile<T> {
    /// Breakpoints `(s, value)` with strictly increasing `s`, the first at
    /// `s = 0`. Every value must lie inside `bounds`.
    pub fn new(breakpoints: Vec<(T, T)>, bounds: (T, T)) -> Result<Self, ModelError> {
        if breakpoints.is_empty() {
            return Err(ModelError::Profile("no breakpoints".into()));
        }
        if bounds.0 > bounds.1 {
            return Err(ModelError::Profile("empty bound interval".into()));
        }
        if breakpoints[0].0 != T::zero() {
            return Err(ModelError::Profile("first breakpoint must be at s = 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ModelError::Profile("breakpoints must be strictly increasing in s".into()));
        }
        if let Some((s, v)) = breakpoints.iter().find(|(_, v)| *v < bounds.0 || *v > bounds.1 || !v.is_finite()) {
            return Err(ModelError::Profile(format!("value {v} at s = {s} outside [{}, {}]", bounds.0, bounds.1)));
        }
        Ok(Self { breakpoints, bounds })
    }

    pub fn straight(bounds: (T, T)) -> Self {
        Self { breakpoints: vec![(T::zero(), T::zero())], bounds }
    }

    pub fn bounds(&self) -> (T, T) {
        self.bounds
    }

    pub fn breakpoints(&self) -> &[(T, T)] {
        &self.breakpoints
    }

    pub fn is_straight(&self) -> bool {
        self.breakpoints.iter().all(|(_, v)| *v == T::zero())
    }

    pub fn curvature_at(&self, s: T) -> T {
        let idx = self.breakpoints.partition_point(|(b, _)| *b <= s);
        self.breakpoints[idx.saturating_sub(1)].1
    }

    /// Two whitespace-separated columns `s psi_dot_des`; `#` starts a comment.
    pub fn from_text(text: &str, bounds: (T, T)) -> Result<Self, ModelError> {
        let mut pts = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let cols: Vec<&str> = body.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(ModelError::Parse { line: no + 1, msg: format!("expected 2 columns, got {}", cols.len()) });
            }
            let parse = |t: &str| t.parse::<f64>().map_err(|e| ModelError::Parse { line: no + 1, msg: e.to_string() });
            pts.push((T::lit(parse(cols[0])?), T::lit(parse(cols[1])?)));
        }
        Self::new(pts, bounds)
    }
}

/// Steering limit, rad.
pub fn max_steer<T: Real>() -> T {
    T::lit(34.0 * std::f64::consts::PI / 180.0)
}

/// `{x : ey_lo ≤ e_y ≤ ey_hi, |ė_y| ≤ 10, |e_ψ| ≤ π/2, |ė_ψ| ≤ π/(3 ts)}`.
pub fn state_constraints<T: Real>(ey_lo: T, ey_hi: T, ts: T) -> Result<Polytope<T>, PolytopeError> {
    let (dey, epsi, depsi) = rate_bounds(ts);
    Polytope::from_box(&[ey_lo, -dey, -epsi, -depsi], &[ey_hi, dey, epsi, depsi])
}

/// Bounds on `ė_y`, `e_ψ`, `ė_ψ`.
pub fn rate_bounds<T: Real>(ts: T) -> (T, T, T) {
    let pi = T::lit(std::f64::consts::PI);
    (T::lit(10.0), pi / T::lit(2.0), pi / (T::lit(3.0) * ts))
}

/// `|u| ≤ 34π/180`.
pub fn input_constraints<T: Real>() -> Polytope<T> {
    let m = max_steer::<T>();
    Polytope::interval(-m, m).expect("nonempty interval")
}
