//! The robust supervisor architecture and the nominal baseline.
//!
//! Per step `k` in monitoring mode the operating input `u_op` is pushed
//! through the nominal model to `x̂_{k+1}`; it is accepted only if
//! `x̂_{k+1} ∈ 𝒳_{k+1} ⊖ 𝒟` and the supervisor tube MPC from `x̂_{k+1}` is
//! feasible. On the first rejection the backup input built from the
//! previous supervisor solution is applied once, after which the controller
//! tube MPC (one stage shorter) stays in charge.

use std::ops::Range;

use thiserror::Error;

use crate::invariant_sets::{Side, Synthesis};
use crate::linalg::{dot, Mat};
use crate::polytope::{Polytope, PolytopeError};
use crate::qp::{self, QpStatus, QuadraticProgram};
use crate::scalar::Real;
use crate::vehicle_model::{max_steer, rate_bounds, step_nominal, CurvatureProfile, DiscreteModel, State, NX};

pub const HORIZON: usize = 30;
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchError {
    #[error("detection at step {0} without a stored supervisor solution")]
    MissingBackup(usize),
    #[error("controller MPC infeasible at step {0}")]
    ControllerInfeasible(usize),
    #[error("controller MPC numerical failure at step {0}")]
    ControllerNumerical(usize),
    #[error("called in the wrong mode: {0}")]
    Mode(&'static str),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// Per-step state constraints. Every step is the road box with its own
/// `e_y` interval; steps past the stored list use the default band.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSchedule<T> {
    bands: Vec<(T, T)>,
    default_band: (T, T),
    rates: (T, T, T),
}

impl<T: Real> ConstraintSchedule<T> {
    pub fn new(default_band: (T, T), ts: T) -> Self {
        Self { bands: Vec::new(), default_band, rates: rate_bounds(ts) }
    }

    pub fn from_bands(bands: Vec<(T, T)>, default_band: (T, T), ts: T) -> Self {
        Self { bands, default_band, rates: rate_bounds(ts) }
    }

    pub fn push(&mut self, band: (T, T)) {
        self.bands.push(band);
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn default_band(&self) -> (T, T) {
        self.default_band
    }

    pub fn band(&self, k: usize) -> (T, T) {
        self.bands.get(k).copied().unwrap_or(self.default_band)
    }

    /// Lower and upper bounds of the box `𝒳_k`.
    pub fn bounds(&self, k: usize) -> ([T; NX], [T; NX]) {
        let (lo, hi) = self.band(k);
        let (a, b, c) = self.rates;
        ([lo, -a, -b, -c], [hi, a, b, c])
    }

    pub fn polytope(&self, k: usize) -> Result<Polytope<T>, PolytopeError> {
        let (lo, hi) = self.bounds(k);
        Polytope::from_box(&lo, &hi)
    }

    pub fn contains(&self, k: usize, x: &[T], tol: T) -> bool {
        let (lo, hi) = self.bounds(k);
        x.iter().zip(lo.iter().zip(&hi)).all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }

    /// Signed distance of `e_y` to the nearer edge of the step's band.
    pub fn clearance(&self, k: usize, e_y: T) -> T {
        let (lo, hi) = self.band(k);
        (e_y - lo).min(hi - e_y)
    }
}

/// Support of a set along `±eⱼ`; Pontryagin difference of a box by the
/// set shrinks each bound by these amounts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMargins<T> {
    pub lo: [T; NX],
    pub hi: [T; NX],
}

impl<T: Real> BoxMargins<T> {
    pub fn zero() -> Self {
        Self { lo: [T::zero(); NX], hi: [T::zero(); NX] }
    }

    pub fn of(set: &Polytope<T>) -> Result<Self, PolytopeError> {
        let mut out = Self::zero();
        for j in 0..NX {
            let mut e = [T::zero(); NX];
            e[j] = T::one();
            out.hi[j] = set.support(&e)?;
            e[j] = -T::one();
            out.lo[j] = set.support(&e)?;
        }
        Ok(out)
    }

    pub fn tighten(&self, (lo, hi): ([T; NX], [T; NX])) -> ([T; NX], [T; NX]) {
        let mut l = lo;
        let mut h = hi;
        for j in 0..NX {
            l[j] += self.lo[j];
            h[j] -= self.hi[j];
        }
        (l, h)
    }
}

/// `x̂_{k+1} = A x_k + B u_op + E ψ̇_k`.
pub fn predict_nominal<T: Real>(m: &DiscreteModel<T>, x_k: &State<T>, u_op: T, psi_dot: T) -> State<T> {
    step_nominal(m, x_k, u_op, psi_dot)
}

/// `x̂ ∈ 𝒳_{k+1} ⊖ 𝒟`. An empty difference rejects everything.
pub fn precheck<T: Real>(x_hat: &State<T>, x_next_cons: &Polytope<T>, d_set: &Polytope<T>) -> Result<bool, PolytopeError> {
    Ok(match x_next_cons.pontryagin_diff(d_set)? {
        Some(t) => t.contains_point(&x_hat.to_vec(), T::tol(MEMBERSHIP_TOL)),
        None => false,
    })
}

fn in_box<T: Real>(x: &[T], (lo, hi): &([T; NX], [T; NX]), tol: T) -> bool {
    lo.iter().zip(hi).all(|(l, h)| l <= h) && x.iter().zip(lo.iter().zip(hi)).all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
}

/// Initial condition of a condensed MPC.
#[derive(Debug, Clone, Copy)]
pub enum Initial<'a, T: Real> {
    /// `x₀` is data.
    Fixed(&'a [T]),
    /// `x₀` is a decision with `measured − x₀ ∈ 𝒵`.
    Tube { measured: &'a [T], z: &'a Polytope<T> },
}

/// Everything but the dynamics that defines one MPC instance.
#[derive(Debug, Clone)]
pub struct StageSpec<'a, T: Real> {
    /// Absolute step index that stage 0 is constrained with.
    pub first_step: usize,
    /// Stages whose states carry the schedule constraint.
    pub stages: Range<usize>,
    pub margins: BoxMargins<T>,
    pub input: (T, T),
    pub terminal: Option<&'a Polytope<T>>,
    pub initial: Initial<'a, T>,
    /// `ψ̇` driving stage `i → i+1`, one per input.
    pub psi: Vec<T>,
}

/// Horizon-dependent prediction matrices shared by every MPC instance of a
/// given model and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Condensed<T: Real> {
    horizon: usize,
    a: Mat<T>,
    e: Vec<T>,
    q: Mat<T>,
    p: Mat<T>,
    /// `x_i = Φᵢ (x₀, u) + cᵢ`.
    phi: Vec<Mat<T>>,
    hess_free: Mat<T>,
    hess_fixed: Mat<T>,
}

impl<T: Real> Condensed<T> {
    pub fn new(m: &DiscreteModel<T>, horizon: usize, q: &Mat<T>, r: T, p: &Mat<T>) -> Self {
        assert!(horizon >= 1);
        let nz = NX + horizon;
        let mut phi = Vec::with_capacity(horizon + 1);
        let mut cur = Mat::zeros(NX, nz);
        cur.set_block(0, 0, &Mat::identity(NX));
        phi.push(cur.clone());
        for i in 0..horizon {
            let mut next = m.a.matmul(&cur);
            for (row, &b) in m.b.iter().enumerate() {
                next[(row, NX + i)] += b;
            }
            phi.push(next.clone());
            cur = next;
        }
        let two = T::lit(2.0);
        let mut h = Mat::zeros(nz, nz);
        for (i, f) in phi.iter().enumerate() {
            let w = if i == horizon { p } else { q };
            h = &h + &f.transpose().matmul(&w.matmul(f));
        }
        for i in 0..horizon {
            h[(NX + i, NX + i)] += r;
        }
        let h = h.scaled(two).symmetrized();
        let hess_fixed = h.block(NX, NX, horizon, horizon);
        Self { horizon, a: m.a.clone(), e: m.e.clone(), q: q.clone(), p: p.clone(), phi, hess_free: h, hess_fixed }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn phi(&self, stage: usize) -> &Mat<T> {
        &self.phi[stage]
    }

    pub fn build(&self, spec: &StageSpec<'_, T>, schedule: &ConstraintSchedule<T>) -> CondensedQp<T> {
        let n = self.horizon;
        assert_eq!(spec.psi.len(), n, "one curvature sample per stage");
        let (free, x0) = match spec.initial {
            Initial::Fixed(x) => (false, x.to_vec()),
            Initial::Tube { .. } => (true, vec![T::zero(); NX]),
        };
        let col0 = if free { 0 } else { NX };
        let nz = NX + n - col0;
        // Affine part of every stage state.
        let mut c = Vec::with_capacity(n + 1);
        c.push(x0.clone());
        for i in 0..n {
            let mut next = self.a.mul_vec(&c[i]);
            for (v, &e) in next.iter_mut().zip(&self.e) {
                *v += e * spec.psi[i];
            }
            c.push(next);
        }
        let cols = |f: &Mat<T>, r: usize| -> Vec<T> { f.row(r)[col0..].to_vec() };

        let two = T::lit(2.0);
        let mut grad = vec![T::zero(); nz];
        let mut constant = T::zero();
        for i in 0..=n {
            let w = if i == n { &self.p } else { &self.q };
            let wc = w.mul_vec(&c[i]);
            constant += dot(&c[i], &wc);
            let t = self.phi[i].tr_mul_vec(&wc);
            for (g, &v) in grad.iter_mut().zip(&t[col0..]) {
                *g += two * v;
            }
        }

        let mut a_in = Mat::zeros(0, nz);
        let mut b_in = Vec::new();
        let mut structurally_empty = false;
        for i in spec.stages.clone() {
            let (lo, hi) = spec.margins.tighten(schedule.bounds(spec.first_step + i));
            for j in 0..NX {
                if lo[j] > hi[j] {
                    structurally_empty = true;
                }
                let row = cols(&self.phi[i], j);
                let neg: Vec<T> = row.iter().map(|&v| -v).collect();
                a_in.push_row(&row);
                b_in.push(hi[j] - c[i][j]);
                a_in.push_row(&neg);
                b_in.push(c[i][j] - lo[j]);
            }
        }
        for i in 0..n {
            let mut row = vec![T::zero(); nz];
            row[NX + i - col0] = T::one();
            a_in.push_row(&row);
            b_in.push(spec.input.1);
            row[NX + i - col0] = -T::one();
            a_in.push_row(&row);
            b_in.push(-spec.input.0);
        }
        if let Some(term) = spec.terminal {
            let fm = &self.phi[n];
            for (h, &b) in term.normals().row_iter().zip(term.offsets()) {
                let row = fm.tr_mul_vec(h);
                a_in.push_row(&row[col0..]);
                b_in.push(b - dot(h, &c[n]));
            }
        }
        if let Initial::Tube { measured, z } = spec.initial {
            // measured − x₀ ∈ 𝒵  ⇔  −H x₀ ≤ h − H·measured
            for (h, &b) in z.normals().row_iter().zip(z.offsets()) {
                let mut row = vec![T::zero(); nz];
                for j in 0..NX {
                    row[j] = -h[j];
                }
                a_in.push_row(&row);
                b_in.push(b - dot(h, measured));
            }
        }
        let hess = if free { self.hess_free.clone() } else { self.hess_fixed.clone() };
        CondensedQp {
            qp: QuadraticProgram::inequality_only(hess, grad, a_in, b_in),
            constant,
            free_x0: free,
            fixed_x0: x0,
            affine: c,
            structurally_empty,
        }
    }

    /// Nominal states `x₀ … x_N` for a decision vector of `cq`.
    pub fn trajectory(&self, cq: &CondensedQp<T>, z: &[T]) -> Vec<Vec<T>> {
        let col0 = if cq.free_x0 { 0 } else { NX };
        (0..=self.horizon)
            .map(|i| {
                let mut x = cq.affine[i].clone();
                for (r, xr) in x.iter_mut().enumerate() {
                    *xr += dot(&self.phi[i].row(r)[col0..], z);
                }
                x
            })
            .collect()
    }
}

/// A built MPC together with what is needed to read its solution back.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp<T: Real> {
    pub qp: QuadraticProgram<T>,
    /// Cost of the affine part; true objective = QP objective + constant.
    pub constant: T,
    pub free_x0: bool,
    fixed_x0: Vec<T>,
    affine: Vec<Vec<T>>,
    /// Some stage box is empty after tightening.
    pub structurally_empty: bool,
}

impl<T: Real> CondensedQp<T> {
    pub fn num_vars(&self) -> usize {
        self.qp.num_vars()
    }

    pub fn x0(&self, z: &[T]) -> Vec<T> {
        if self.free_x0 {
            z[..NX].to_vec()
        } else {
            self.fixed_x0.clone()
        }
    }

    pub fn inputs<'z>(&self, z: &'z [T]) -> &'z [T] {
        if self.free_x0 {
            &z[NX..]
        } else {
            z
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Monitoring,
    BackupPending,
    TakenOver,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Monitoring => "monitoring",
            Mode::BackupPending => "backup_pending",
            Mode::TakenOver => "taken_over",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Safe,
    Detection,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Safe => "safe",
            Decision::Detection => "detection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    None,
    StatePrecheck,
    QpInfeasible,
    NumericalFailure,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::None => "none",
            Reason::StatePrecheck => "state_precheck",
            Reason::QpInfeasible => "qp_infeasible",
            Reason::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorOutcome<T> {
    pub decision: Decision,
    pub reason: Reason,
    /// `ū*₀` and `x̄*₀` of a safe solve.
    pub stored_u0: Option<T>,
    pub stored_x0: Option<Vec<T>>,
    pub objective: Option<T>,
    /// Nominal plan `x̄₀ … x̄_N` of a safe solve.
    pub plan: Vec<Vec<T>>,
}

impl<T: Real> SupervisorOutcome<T> {
    fn detection(reason: Reason) -> Self {
        Self { decision: Decision::Detection, reason, stored_u0: None, stored_x0: None, objective: None, plan: Vec::new() }
    }
}

/// Road context of one scenario.
#[derive(Debug, Clone)]
pub struct RoadContext<'a, T> {
    pub schedule: &'a ConstraintSchedule<T>,
    pub curvature: &'a CurvatureProfile<T>,
    pub side: Side,
    pub v_x: T,
    /// Longitudinal position at step 0.
    pub s0: T,
}

impl<T: Real> RoadContext<'_, T> {
    pub fn position(&self, k: usize, ts: T) -> T {
        self.s0 + T::lit(k as f64) * ts * self.v_x
    }

    pub fn psi_dot(&self, k: usize, ts: T) -> T {
        self.curvature.curvature_at(self.position(k, ts))
    }

    fn preview(&self, from: usize, count: usize, ts: T) -> Vec<T> {
        (from..from + count).map(|j| self.psi_dot(j, ts)).collect()
    }
}

/// `ū*₀|k−1 + K (x_k − x̄*₀|k−1)`.
pub fn backup_input<T: Real>(prev: &SupervisorOutcome<T>, x_k: &State<T>, k_gain: &[T]) -> Option<T> {
    let (u0, x0) = (prev.stored_u0?, prev.stored_x0.as_ref()?);
    let err: Vec<T> = x_k.to_vec().iter().zip(x0).map(|(&a, &b)| a - b).collect();
    Some(u0 + dot(k_gain, &err))
}

/// Result of one controller solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutcome<T> {
    pub u: T,
    pub u_nominal: T,
    pub x_center: Vec<T>,
    pub objective: T,
    pub plan: Vec<Vec<T>>,
}

/// What the architecture did in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    pub mode: Mode,
    pub decision: Option<Decision>,
    pub reason: Reason,
    pub u_op: T,
    pub u_applied: T,
    pub objective: Option<T>,
}

/// Supervisor/controller pair of the robust architecture for one scenario.
#[derive(Debug, Clone)]
pub struct Rsca<'s, T: Real> {
    syn: &'s Synthesis<T>,
    supervisor: Condensed<T>,
    controller: Condensed<T>,
    z_margins: BoxMargins<T>,
    d_margins: BoxMargins<T>,
    pub mode: Mode,
    pub prev: Option<SupervisorOutcome<T>>,
    pub last_controller: Option<ControllerOutcome<T>>,
    pub qp_solves: usize,
}

impl<'s, T: Real> Rsca<'s, T> {
    pub fn new(syn: &'s Synthesis<T>, horizon: usize) -> Result<Self, PolytopeError> {
        assert!(horizon >= 2);
        let q = Mat::identity(NX).scaled(syn.config.q_weight);
        let r = syn.config.r_weight;
        let p = &syn.gain.p_weight;
        Ok(Self {
            syn,
            supervisor: Condensed::new(&syn.model, horizon, &q, r, p),
            controller: Condensed::new(&syn.model, horizon - 1, &q, r, p),
            z_margins: BoxMargins::of(&syn.tubes.z)?,
            d_margins: BoxMargins::of(&syn.d_set)?,
            mode: Mode::Monitoring,
            prev: None,
            last_controller: None,
            qp_solves: 0,
        })
    }

    pub fn synthesis(&self) -> &Synthesis<T> {
        self.syn
    }

    pub fn supervisor_structure(&self) -> &Condensed<T> {
        &self.supervisor
    }

    pub fn controller_structure(&self) -> &Condensed<T> {
        &self.controller
    }

    /// Supervisor QP from `x̂_{k+1}` at step `k`.
    pub fn build_supervisor_qp(&self, x_hat: &[T], k: usize, road: &RoadContext<'_, T>) -> CondensedQp<T> {
        let n = self.supervisor.horizon();
        let ts = self.syn.model.ts;
        let spec = StageSpec {
            first_step: k + 1,
            stages: 0..n,
            margins: self.z_margins,
            input: self.syn.tubes.u_tight_supervisor.as_interval().expect("interval"),
            terminal: Some(self.syn.tubes.terminal(road.side)),
            initial: Initial::Tube { measured: x_hat, z: &self.syn.tubes.z },
            psi: road.preview(k + 1, n, ts),
        };
        self.supervisor.build(&spec, road.schedule)
    }

    /// Controller QP from the measured `x_k`.
    pub fn build_controller_qp(&self, x_k: &[T], k: usize, road: &RoadContext<'_, T>) -> CondensedQp<T> {
        let n = self.controller.horizon();
        let ts = self.syn.model.ts;
        let spec = StageSpec {
            first_step: k,
            stages: 0..n,
            margins: self.z_margins,
            input: self.syn.tubes.u_tight_controller.as_interval().expect("interval"),
            terminal: Some(self.syn.tubes.terminal(road.side)),
            initial: Initial::Tube { measured: x_k, z: &self.syn.tubes.z },
            psi: road.preview(k, n, ts),
        };
        self.controller.build(&spec, road.schedule)
    }

    /// Fast form of [`precheck`] for box schedules.
    pub fn precheck_step(&self, x_hat: &State<T>, k_next: usize, road: &RoadContext<'_, T>) -> bool {
        let b = self.d_margins.tighten(road.schedule.bounds(k_next));
        in_box(&x_hat.to_vec(), &b, T::tol(MEMBERSHIP_TOL))
    }

    pub fn supervise(&mut self, x_k: &State<T>, u_op: T, k: usize, road: &RoadContext<'_, T>) -> SupervisorOutcome<T> {
        let ts = self.syn.model.ts;
        let x_hat = predict_nominal(&self.syn.model, x_k, u_op, road.psi_dot(k, ts));
        if !self.precheck_step(&x_hat, k + 1, road) {
            return SupervisorOutcome::detection(Reason::StatePrecheck);
        }
        let cq = self.build_supervisor_qp(&x_hat.to_vec(), k, road);
        self.qp_solves += 1;
        let out = qp::solve(&cq.qp);
        match out.status {
            QpStatus::Optimal => SupervisorOutcome {
                decision: Decision::Safe,
                reason: Reason::None,
                stored_u0: Some(cq.inputs(&out.x)[0]),
                stored_x0: Some(cq.x0(&out.x)),
                objective: Some(out.objective + cq.constant),
                plan: self.supervisor.trajectory(&cq, &out.x),
            },
            QpStatus::Infeasible => SupervisorOutcome::detection(Reason::QpInfeasible),
            QpStatus::NumericalFailure => SupervisorOutcome::detection(Reason::NumericalFailure),
        }
    }

    pub fn controller_step(&mut self, x_k: &State<T>, k: usize, road: &RoadContext<'_, T>) -> Result<ControllerOutcome<T>, ArchError> {
        let xv = x_k.to_vec();
        let cq = self.build_controller_qp(&xv, k, road);
        self.qp_solves += 1;
        let out = qp::solve(&cq.qp);
        match out.status {
            QpStatus::Optimal => {
                let x0 = cq.x0(&out.x);
                let u0 = cq.inputs(&out.x)[0];
                let err: Vec<T> = xv.iter().zip(&x0).map(|(&a, &b)| a - b).collect();
                Ok(ControllerOutcome {
                    u: u0 + self.syn.gain.feedback(&err),
                    u_nominal: u0,
                    x_center: x0,
                    objective: out.objective + cq.constant,
                    plan: self.controller.trajectory(&cq, &out.x),
                })
            }
            QpStatus::Infeasible => Err(ArchError::ControllerInfeasible(k)),
            QpStatus::NumericalFailure => Err(ArchError::ControllerNumerical(k)),
        }
    }

    /// One pass through the decision loop; returns the input to apply.
    pub fn step(&mut self, x_k: &State<T>, u_op: T, k: usize, road: &RoadContext<'_, T>) -> Result<StepRecord<T>, ArchError> {
        if self.mode == Mode::BackupPending {
            self.mode = Mode::TakenOver;
        }
        match self.mode {
            Mode::Monitoring => {
                let out = self.supervise(x_k, u_op, k, road);
                match out.decision {
                    Decision::Safe => {
                        let rec = StepRecord { step: k, mode: Mode::Monitoring, decision: Some(Decision::Safe), reason: Reason::None, u_op, u_applied: u_op, objective: out.objective };
                        self.prev = Some(out);
                        Ok(rec)
                    }
                    Decision::Detection => {
                        let prev = self.prev.as_ref().ok_or(ArchError::MissingBackup(k))?;
                        let u = backup_input(prev, x_k, &self.syn.gain.k_gain).ok_or(ArchError::MissingBackup(k))?;
                        self.mode = Mode::BackupPending;
                        Ok(StepRecord { step: k, mode: Mode::BackupPending, decision: Some(Decision::Detection), reason: out.reason, u_op, u_applied: u, objective: None })
                    }
                }
            }
            Mode::TakenOver => {
                let c = self.controller_step(x_k, k, road)?;
                let rec = StepRecord { step: k, mode: Mode::TakenOver, decision: None, reason: Reason::None, u_op, u_applied: c.u, objective: Some(c.objective) };
                self.last_controller = Some(c);
                Ok(rec)
            }
            Mode::BackupPending => unreachable!("promoted above"),
        }
    }
}

/// Nominal safety-check architecture: no tightening, no terminal set,
/// `x₀ = x̂_{k+1}` fixed; after a detection a nominal MPC of horizon `N − 1`
/// drives from the measured state.
#[derive(Debug, Clone)]
pub struct Sca<T: Real> {
    model: DiscreteModel<T>,
    supervisor: Condensed<T>,
    controller: Condensed<T>,
    input: (T, T),
    pub mode: Mode,
    pub qp_solves: usize,
    pub prechecks: usize,
}

impl<T: Real> Sca<T> {
    pub fn new(syn: &Synthesis<T>, horizon: usize) -> Self {
        assert!(horizon >= 2);
        let q = Mat::identity(NX).scaled(syn.config.q_weight);
        let r = syn.config.r_weight;
        let p = &syn.gain.p_weight;
        let m = max_steer::<T>();
        Self {
            model: syn.model.clone(),
            supervisor: Condensed::new(&syn.model, horizon, &q, r, p),
            controller: Condensed::new(&syn.model, horizon - 1, &q, r, p),
            input: (-m, m),
            mode: Mode::Monitoring,
            qp_solves: 0,
            prechecks: 0,
        }
    }

    pub fn build_supervisor_qp(&self, x_hat: &[T], k: usize, road: &RoadContext<'_, T>) -> CondensedQp<T> {
        let n = self.supervisor.horizon();
        let spec = StageSpec {
            first_step: k + 1,
            stages: 0..n + 1,
            margins: BoxMargins::zero(),
            input: self.input,
            terminal: None,
            initial: Initial::Fixed(x_hat),
            psi: road.preview(k + 1, n, self.model.ts),
        };
        self.supervisor.build(&spec, road.schedule)
    }

    pub fn build_controller_qp(&self, x_k: &[T], k: usize, road: &RoadContext<'_, T>) -> CondensedQp<T> {
        let n = self.controller.horizon();
        let spec = StageSpec {
            first_step: k,
            stages: 1..n + 1,
            margins: BoxMargins::zero(),
            input: self.input,
            terminal: None,
            initial: Initial::Fixed(x_k),
            psi: road.preview(k, n, self.model.ts),
        };
        self.controller.build(&spec, road.schedule)
    }

    pub fn supervise(&mut self, x_k: &State<T>, u_op: T, k: usize, road: &RoadContext<'_, T>) -> SupervisorOutcome<T> {
        let x_hat = predict_nominal(&self.model, x_k, u_op, road.psi_dot(k, self.model.ts));
        let cq = self.build_supervisor_qp(&x_hat.to_vec(), k, road);
        self.qp_solves += 1;
        let out = qp::solve(&cq.qp);
        match out.status {
            QpStatus::Optimal => SupervisorOutcome {
                decision: Decision::Safe,
                reason: Reason::None,
                stored_u0: Some(cq.inputs(&out.x)[0]),
                stored_x0: Some(x_hat.to_vec()),
                objective: Some(out.objective + cq.constant),
                plan: self.supervisor.trajectory(&cq, &out.x),
            },
            QpStatus::Infeasible => SupervisorOutcome::detection(Reason::QpInfeasible),
            QpStatus::NumericalFailure => SupervisorOutcome::detection(Reason::NumericalFailure),
        }
    }

    pub fn controller_step(&mut self, x_k: &State<T>, k: usize, road: &RoadContext<'_, T>) -> Result<ControllerOutcome<T>, ArchError> {
        let xv = x_k.to_vec();
        let cq = self.build_controller_qp(&xv, k, road);
        self.qp_solves += 1;
        let out = qp::solve(&cq.qp);
        match out.status {
            QpStatus::Optimal => {
                let u = cq.inputs(&out.x)[0];
                Ok(ControllerOutcome { u, u_nominal: u, x_center: xv, objective: out.objective + cq.constant, plan: self.controller.trajectory(&cq, &out.x) })
            }
            QpStatus::Infeasible => Err(ArchError::ControllerInfeasible(k)),
            QpStatus::NumericalFailure => Err(ArchError::ControllerNumerical(k)),
        }
    }

    pub fn step(&mut self, x_k: &State<T>, u_op: T, k: usize, road: &RoadContext<'_, T>) -> Result<StepRecord<T>, ArchError> {
        match self.mode {
            Mode::Monitoring => {
                let out = self.supervise(x_k, u_op, k, road);
                if out.decision == Decision::Safe {
                    return Ok(StepRecord { step: k, mode: Mode::Monitoring, decision: Some(Decision::Safe), reason: Reason::None, u_op, u_applied: u_op, objective: out.objective });
                }
                self.mode = Mode::TakenOver;
                let c = self.controller_step(x_k, k, road)?;
                Ok(StepRecord { step: k, mode: Mode::TakenOver, decision: Some(Decision::Detection), reason: out.reason, u_op, u_applied: c.u, objective: Some(c.objective) })
            }
            _ => {
                let c = self.controller_step(x_k, k, road)?;
                Ok(StepRecord { step: k, mode: Mode::TakenOver, decision: None, reason: Reason::None, u_op, u_applied: c.u, objective: Some(c.objective) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant_sets::{synthesize, SynthesisConfig};

    fn synth(d: f64) -> Synthesis<f64> {
        synthesize(&SynthesisConfig::new(10.0, d)).unwrap()
    }

    fn road<'a>(sched: &'a ConstraintSchedule<f64>, curv: &'a CurvatureProfile<f64>) -> RoadContext<'a, f64> {
        RoadContext { schedule: sched, curvature: curv, side: Side::Top, v_x: 10.0, s0: 0.0 }
    }

    #[test]
    fn schedule_defaults_and_tags() {
        let mut s = ConstraintSchedule::<f64>::new((-7.1, 7.1), 0.1);
        s.push((-7.1, 7.1));
        s.push((2.0, 7.1));
        assert_eq!(s.band(1), (2.0, 7.1));
        assert_eq!(s.band(50), (-7.1, 7.1));
        let p = s.polytope(1).unwrap();
        assert!(p.contains_point(&[2.0, 0.0, 0.0, 0.0], 0.0));
        assert!(!p.contains_point(&[1.99, 0.0, 0.0, 0.0], 1e-9));
        assert!((s.clearance(1, 3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_matches_model_step() {
        let m = DiscreteModel::<f64>::for_speed(8.0, 0.1).unwrap();
        assert_eq!(predict_nominal(&m, &State::zero(), 0.0, 0.0), State::zero());
        let x = State::new(0.3, -0.1, 0.05, 0.2);
        assert_eq!(predict_nominal(&m, &x, 0.1, 0.01), step_nominal(&m, &x, 0.1, 0.01));
    }

    #[test]
    fn precheck_boundary() {
        let cons = Polytope::from_box(&[-1.0; 4], &[1.0; 4]).unwrap();
        let d = Polytope::symmetric_box(&[0.1; 4]).unwrap();
        assert!(precheck(&State::zero(), &cons, &d).unwrap());
        assert!(precheck(&State::new(0.9, 0.0, 0.0, 0.0), &cons, &d).unwrap());
        assert!(!precheck(&State::new(0.9 + 1e-6, 0.0, 0.0, 0.0), &cons, &d).unwrap());
        let big = Polytope::symmetric_box(&[2.0; 4]).unwrap();
        assert!(!precheck(&State::zero(), &cons, &big).unwrap());
    }

    #[test]
    fn backup_input_cases() {
        let prev = SupervisorOutcome { decision: Decision::Safe, reason: Reason::None, stored_u0: Some(0.2), stored_x0: Some(vec![1.0, 0.0, 0.0, 0.0]), objective: Some(0.0), plan: vec![] };
        let k = [0.5, 0.1, -0.2, 0.3];
        assert_eq!(backup_input(&prev, &State::new(1.0, 0.0, 0.0, 0.0), &k), Some(0.2));
        assert_eq!(backup_input(&prev, &State::new(3.0, 1.0, 2.0, 1.0), &[0.0; 4]), Some(0.2));
        let got: f64 = backup_input(&prev, &State::new(2.0, 0.0, 0.0, 0.0), &k).unwrap();
        assert!((got - 0.7).abs() < 1e-15);
        assert_eq!(backup_input(&SupervisorOutcome::detection(Reason::QpInfeasible), &State::zero(), &k), None);
    }

    #[test]
    fn supervisor_dimensions_and_safe_straight() {
        let syn = synth(1e-3);
        let arch = Rsca::new(&syn, HORIZON).unwrap();
        let sched = ConstraintSchedule::new((-7.1, 7.1), 0.1);
        let curv = CurvatureProfile::straight((-0.02, 0.02));
        let cq = arch.build_supervisor_qp(&[0.0; 4], 0, &road(&sched, &curv));
        assert_eq!(cq.num_vars(), 4 + HORIZON);
        let cc = arch.build_controller_qp(&[0.0; 4], 0, &road(&sched, &curv));
        assert_eq!(cc.num_vars() - 4, HORIZON - 1);
        let mut arch = arch;
        let out = arch.supervise(&State::zero(), 0.0, 0, &road(&sched, &curv));
        assert_eq!(out.decision, Decision::Safe);
        let plan_end = out.plan.last().unwrap();
        assert!(syn.tubes.x_terminal_top.contains_point(plan_end, 1e-7));
    }

    #[test]
    fn precheck_short_circuits_qp() {
        let syn = synth(1e-3);
        let mut arch = Rsca::new(&syn, HORIZON).unwrap();
        let sched = ConstraintSchedule::new((-7.1, 7.1), 0.1);
        let curv = CurvatureProfile::straight((-0.02, 0.02));
        let x = State::new(7.1, 10.0, 0.0, 0.0);
        let out = arch.supervise(&x, max_steer(), 0, &road(&sched, &curv));
        assert_eq!(out.reason, Reason::StatePrecheck);
        assert_eq!(arch.qp_solves, 0);
    }

    #[test]
    fn controller_tube_center_feedback() {
        let syn = synth(1e-3);
        let mut arch = Rsca::new(&syn, HORIZON).unwrap();
        let sched = ConstraintSchedule::new((-7.1, 7.1), 0.1);
        let curv = CurvatureProfile::straight((-0.02, 0.02));
        let c = arch.controller_step(&State::new(1.0, 0.0, 0.0, 0.0), 0, &road(&sched, &curv)).unwrap();
        let err: Vec<f64> = [1.0, 0.0, 0.0, 0.0].iter().zip(&c.x_center).map(|(a, b)| a - b).collect();
        assert!(syn.tubes.z.contains_point(&err, 1e-7));
        assert!((c.u - c.u_nominal - syn.gain.feedback(&err)).abs() < 1e-15);
        assert_eq!(c.plan.len(), HORIZON);
    }
}
