//! Robust safe control architecture: polytope arithmetic, vehicle lateral
//! error model, invariant-set synthesis, dense QP and the supervisor /
//! controller tube MPC pair.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the simulator uses.

pub mod invariant_sets;
pub mod linalg;
pub mod lp;
pub mod polytope;
pub mod qp;
pub mod rsca;
pub mod scalar;
pub mod vehicle_model;

pub use scalar::Real;

pub type Mat = linalg::Mat<f64>;
pub type Polytope = polytope::Polytope<f64>;
pub type VPolytope = polytope::VPolytope<f64>;

pub type Mat32 = linalg::Mat<f32>;
pub type Polytope32 = polytope::Polytope<f32>;

pub type DiscreteModel = vehicle_model::DiscreteModel<f64>;
pub type State = vehicle_model::State<f64>;
pub type VehicleParams = vehicle_model::VehicleParams<f64>;
pub type CurvatureProfile = vehicle_model::CurvatureProfile<f64>;
pub type QuadraticProgram = qp::QuadraticProgram<f64>;
pub type QpOutcome = qp::QpOutcome<f64>;
pub type Synthesis = invariant_sets::Synthesis<f64>;
pub type SynthesisConfig = invariant_sets::SynthesisConfig<f64>;
pub type TubeSets = invariant_sets::TubeSets<f64>;
pub type ConstraintSchedule = rsca::ConstraintSchedule<f64>;
pub type Rsca<'s> = rsca::Rsca<'s, f64>;
pub type Sca = rsca::Sca<f64>;
