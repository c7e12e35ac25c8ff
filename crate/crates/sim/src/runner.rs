//! Closed-loop simulation of one scenario under either architecture.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsca_core::invariant_sets::Synthesis;
use rsca_core::rsca::{ArchError, ConstraintSchedule, Decision, Mode, Reason, RoadContext, Rsca, Sca, StepRecord, MEMBERSHIP_TOL};
use rsca_core::vehicle_model::{step_true, CurvatureProfile, State, VehicleParams, NX};

use crate::config::SimConfig;
use crate::pure_pursuit::pure_pursuit;
use crate::scenario::{build_constraint_schedule, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Rsca,
    Sca,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Rsca => "rsca",
            Arch::Sca => "sca",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rsca" => Ok(Arch::Rsca),
            "sca" => Ok(Arch::Sca),
            other => Err(format!("unknown architecture `{other}` (expected rsca or sca)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    ControllerInfeasible,
    ConstraintViolation,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::ControllerInfeasible => "controller_infeasible",
            FailureKind::ConstraintViolation => "constraint_violation",
        }
    }
}

/// One executed step: the state at the start of the step and what was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub s: f64,
    pub x: State<f64>,
    pub u_op: f64,
    pub u_applied: f64,
    pub mode: Mode,
    pub decision: Option<Decision>,
    pub reason: Reason,
    pub objective: Option<f64>,
}

/// Everything needed to re-sample the detection step offline.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub scenario: usize,
    pub step: usize,
    pub x_k: State<f64>,
    pub stored_u0: f64,
    pub stored_x0: Vec<f64>,
    pub psi_dot: f64,
    /// Box bounds of `𝒳_{k+1}`.
    pub next_bounds: ([f64; NX], [f64; NX]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub arch: Arch,
    pub success: bool,
    pub detection_step: Option<usize>,
    /// `s_start − s_k` at the detection step.
    pub detection_distance: Option<f64>,
    pub min_clearance: f64,
    pub failure_kind: Option<FailureKind>,
    pub failure_step: Option<usize>,
    pub trace: Vec<TraceRow>,
    /// Nominal plan of the last safe supervisor solve.
    pub final_plan: Vec<Vec<f64>>,
    /// Step index of the first plan entry `x̄₀`.
    pub final_plan_step: usize,
    pub detection: Option<DetectionEvent>,
    /// Controller feasibility at the step after detection.
    pub controller_after_detection: Option<bool>,
    /// Steps in takeover mode where `x_k ∉ x̃*₀ ⊕ 𝒵`.
    pub tube_violations: usize,
    pub qp_solves: usize,
}

impl RunResult {
    pub fn failure_str(&self) -> &'static str {
        self.failure_kind.map_or("none", FailureKind::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// End the run right after the detection step.
    pub stop_at_detection: bool,
    /// Record the first constraint violation but keep simulating, so that
    /// only controller infeasibility ends the run.
    pub continue_after_violation: bool,
}

/// Uniform i.i.d. draws on the tier box, reproducible from the scenario seed.
pub fn disturbances(seed: u64, bound: f64, steps: usize) -> Vec<[f64; NX]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| {
            let mut d = [0.0; NX];
            if bound > 0.0 {
                for v in d.iter_mut() {
                    *v = rng.gen_range(-bound..=bound);
                }
            }
            d
        })
        .collect()
}

enum Engine<'s> {
    Rsca(Box<Rsca<'s, f64>>),
    Sca(Box<Sca<f64>>),
}

impl Engine<'_> {
    fn step(&mut self, x: &State<f64>, u_op: f64, k: usize, road: &RoadContext<'_, f64>) -> Result<StepRecord<f64>, ArchError> {
        match self {
            Engine::Rsca(a) => a.step(x, u_op, k, road),
            Engine::Sca(a) => a.step(x, u_op, k, road),
        }
    }

    fn qp_solves(&self) -> usize {
        match self {
            Engine::Rsca(a) => a.qp_solves,
            Engine::Sca(a) => a.qp_solves,
        }
    }
}

pub struct Prepared {
    pub schedule: ConstraintSchedule<f64>,
    pub curvature: CurvatureProfile<f64>,
    pub params: VehicleParams<f64>,
}

pub fn prepare(sc: &Scenario, cfg: &SimConfig) -> Prepared {
    Prepared {
        schedule: build_constraint_schedule(sc, cfg, 0, sc.last_step(cfg) + cfg.horizon + 2),
        curvature: CurvatureProfile::straight((-cfg.psi_bound, cfg.psi_bound)),
        params: VehicleParams::reference().with_speed(sc.v_x),
    }
}

pub fn road<'a>(sc: &Scenario, cfg: &SimConfig, p: &'a Prepared) -> RoadContext<'a, f64> {
    RoadContext { schedule: &p.schedule, curvature: &p.curvature, side: sc.side(cfg), v_x: sc.v_x, s0: 0.0 }
}

/// Supervisor verdict on the pure-pursuit input at `k = 0`.
pub fn initially_feasible(sc: &Scenario, cfg: &SimConfig, syn: &Synthesis<f64>) -> bool {
    let p = prepare(sc, cfg);
    let rd = road(sc, cfg, &p);
    if !p.schedule.contains(0, &sc.x0.to_vec(), 0.0) {
        return false;
    }
    let u_op = pure_pursuit(&sc.x0, sc.v_x, cfg.lookahead_time, &p.params);
    let Ok(mut arch) = Rsca::new(syn, cfg.horizon) else { return false };
    arch.supervise(&sc.x0, u_op, 0, &rd).decision == Decision::Safe
        && Sca::new(syn, cfg.horizon).supervise(&sc.x0, u_op, 0, &rd).decision == Decision::Safe
}

pub fn run_scenario(sc: &Scenario, cfg: &SimConfig, syn: &Synthesis<f64>, arch: Arch) -> RunResult {
    run_scenario_with(sc, cfg, syn, arch, RunOptions::default())
}

pub fn run_scenario_with(sc: &Scenario, cfg: &SimConfig, syn: &Synthesis<f64>, arch: Arch, opts: RunOptions) -> RunResult {
    let prep = prepare(sc, cfg);
    let rd = road(sc, cfg, &prep);
    let last = sc.last_step(cfg);
    let ds = disturbances(sc.seed, cfg.tier_bound(sc.tier), last + 1);
    let mut engine = match arch {
        Arch::Rsca => Engine::Rsca(Box::new(Rsca::new(syn, cfg.horizon).expect("synthesized sets are bounded"))),
        Arch::Sca => Engine::Sca(Box::new(Sca::new(syn, cfg.horizon))),
    };
    let tol = MEMBERSHIP_TOL;
    let mut res = RunResult {
        arch,
        success: true,
        detection_step: None,
        detection_distance: None,
        min_clearance: f64::INFINITY,
        failure_kind: None,
        failure_step: None,
        trace: Vec::with_capacity(last + 1),
        final_plan: Vec::new(),
        final_plan_step: 0,
        detection: None,
        controller_after_detection: None,
        tube_violations: 0,
        qp_solves: 0,
    };
    let mut x = sc.x0;
    for k in 0..=last {
        let xv = x.to_vec();
        res.min_clearance = res.min_clearance.min(prep.schedule.clearance(k, x.e_y));
        if !x.is_finite() {
            res.fail(FailureKind::ConstraintViolation, k);
            break;
        }
        if !prep.schedule.contains(k, &xv, tol) && res.success {
            res.fail(FailureKind::ConstraintViolation, k);
            if !opts.continue_after_violation {
                break;
            }
        }
        let u_op = pure_pursuit(&x, sc.v_x, cfg.lookahead_time, &prep.params);
        // Snapshot of the stored solution before this step can overwrite it.
        let stored = match &engine {
            Engine::Rsca(a) => a.prev.clone(),
            Engine::Sca(_) => None,
        };
        let rec = match engine.step(&x, u_op, k, &rd) {
            Ok(r) => r,
            Err(_) => {
                if res.detection_step.is_some_and(|d| d + 1 == k) {
                    res.controller_after_detection = Some(false);
                }
                res.success = false;
                res.failure_kind = Some(FailureKind::ControllerInfeasible);
                res.failure_step.get_or_insert(k);
                break;
            }
        };
        if res.detection_step.is_some_and(|d| d + 1 == k) {
            res.controller_after_detection = Some(true);
        }
        if let Engine::Rsca(a) = &engine {
            match rec.mode {
                Mode::Monitoring => {
                    if let Some(p) = &a.prev {
                        res.final_plan = p.plan.clone();
                        res.final_plan_step = k + 1;
                    }
                }
                Mode::TakenOver => {
                    if let Some(c) = &a.last_controller {
                        let err: Vec<f64> = xv.iter().zip(&c.x_center).map(|(a, b)| a - b).collect();
                        if !syn.tubes.z.contains_point(&err, 1e-7) {
                            res.tube_violations += 1;
                        }
                    }
                }
                Mode::BackupPending => {}
            }
        }
        if rec.decision == Some(Decision::Detection) {
            res.detection_step = Some(k);
            res.detection_distance = Some(sc.obstacle.s_start - sc.position(k, cfg));
            if let Some(prev) = stored.as_ref() {
                if let (Some(u0), Some(x0)) = (prev.stored_u0, prev.stored_x0.clone()) {
                    res.detection = Some(DetectionEvent {
                        scenario: sc.id,
                        step: k,
                        x_k: x,
                        stored_u0: u0,
                        stored_x0: x0,
                        psi_dot: rd.psi_dot(k, cfg.ts),
                        next_bounds: prep.schedule.bounds(k + 1),
                    });
                }
            }
        }
        res.trace.push(TraceRow {
            step: k,
            s: sc.position(k, cfg),
            x,
            u_op,
            u_applied: rec.u_applied,
            mode: rec.mode,
            decision: rec.decision,
            reason: rec.reason,
            objective: rec.objective,
        });
        x = step_true(&syn.model, &x, rec.u_applied, rd.psi_dot(k, cfg.ts), &ds[k]);
        if opts.stop_at_detection && rec.decision == Some(Decision::Detection) {
            break;
        }
    }
    res.qp_solves = engine.qp_solves();
    res
}

impl RunResult {
    fn fail(&mut self, kind: FailureKind, k: usize) {
        self.success = false;
        self.failure_kind = Some(kind);
        self.failure_step = Some(k);
    }
}

/// First step after `from` at which passing the operating input straight
/// through would leave the constraint set, replaying the same disturbances.
pub fn pass_through_violation(sc: &Scenario, cfg: &SimConfig, syn: &Synthesis<f64>, from: usize, x_from: State<f64>) -> Option<usize> {
    let prep = prepare(sc, cfg);
    let last = sc.last_step(cfg);
    let ds = disturbances(sc.seed, cfg.tier_bound(sc.tier), last + 1);
    let mut x = x_from;
    for k in from..=last {
        if !x.is_finite() || !prep.schedule.contains(k, &x.to_vec(), MEMBERSHIP_TOL) {
            return Some(k);
        }
        let u = pure_pursuit(&x, sc.v_x, cfg.lookahead_time, &prep.params);
        x = step_true(&syn.model, &x, u, prep.curvature.curvature_at(sc.position(k, cfg)), &ds[k]);
    }
    None
}
