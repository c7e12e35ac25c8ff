//! Randomized batch of paired RSCA/SCA runs.

use std::sync::Arc;

use anyhow::{anyhow, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rsca_core::invariant_sets::Synthesis;
use rsca_core::rsca::{backup_input, Decision, Reason, SupervisorOutcome, MEMBERSHIP_TOL};
use rsca_core::vehicle_model::{max_steer, step_true, NX};

use crate::cache::SynthesisCache;
use crate::config::SimConfig;
use crate::runner::{initially_feasible, run_scenario, run_scenario_with, Arch, FailureKind, RunOptions, RunResult};
use crate::scenario::{sample_geometry, sample_x0, Scenario, Tier};

pub const MAX_ATTEMPTS: usize = 100;

/// Per-slot generator: stream `slot` of the ChaCha stream family `seed`.
pub fn slot_rng(seed: u64, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot as u64);
    rng
}

/// Tier of each slot for a split such as `[40, 40, 40]`.
pub fn tier_plan(split: [usize; 3]) -> Vec<Tier> {
    Tier::ALL.iter().zip(split).flat_map(|(&t, n)| std::iter::repeat_n(t, n)).collect()
}

/// Rejection-samples a passable scenario whose initial state the
/// supervisor accepts at `k = 0`.
pub fn generate_scenario(cfg: &SimConfig, cache: &SynthesisCache, slot: usize, tier: Tier, seed: u64) -> anyhow::Result<(Scenario, Arc<Synthesis<f64>>)> {
    let mut rng = slot_rng(seed, slot);
    let mut current: Option<(f64, crate::scenario::Obstacle, Arc<Synthesis<f64>>)> = None;
    for _ in 0..MAX_ATTEMPTS {
        if current.is_none() {
            let (v_x, obstacle) = sample_geometry(&mut rng, cfg);
            match cache.get_or_synthesize(&cfg.synthesis_config(v_x, tier)) {
                Ok(syn) => current = Some((v_x, obstacle, syn)),
                Err(_) => continue,
            }
        }
        let (v_x, obstacle, syn) = current.clone().expect("set above");
        let sc = Scenario { id: slot, tier, v_x, obstacle, x0: sample_x0(&mut rng, cfg), seed: rng.gen() };
        if !sc.is_passable(cfg) {
            current = None;
            continue;
        }
        if initially_feasible(&sc, cfg, &syn) {
            return Ok((sc, syn));
        }
    }
    Err(anyhow!("slot {slot}: no admissible scenario in {MAX_ATTEMPTS} attempts"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSummary {
    pub success: bool,
    pub detection_step: Option<usize>,
    pub detection_distance: Option<f64>,
    pub min_clearance: f64,
    pub failure: &'static str,
    pub controller_after_detection: Option<bool>,
    pub tube_violations: usize,
    pub qp_solves: usize,
    pub steps: usize,
}

impl From<&RunResult> for ArchSummary {
    fn from(r: &RunResult) -> Self {
        Self {
            success: r.success,
            detection_step: r.detection_step,
            detection_distance: r.detection_distance,
            min_clearance: r.min_clearance,
            failure: r.failure_str(),
            controller_after_detection: r.controller_after_detection,
            tube_violations: r.tube_violations,
            qp_solves: r.qp_solves,
            steps: r.trace.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub scenario: Scenario,
    pub side: &'static str,
    pub rsca: ArchSummary,
    pub sca: ArchSummary,
    /// SCA run continued past constraint violations ended with an
    /// infeasible controller.
    pub sca_controller_failed: bool,
    /// SCA detection step minus RSCA detection step on the paired run.
    pub earlier_by: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub rows: Vec<ScenarioRow>,
    pub rsca_success_rate: f64,
    pub sca_success_rate: f64,
    /// SCA failure rate counting controller infeasibility only.
    pub sca_controller_failure_rate: f64,
    pub earlier_interventions: usize,
    pub earlier_by_tier: [usize; 3],
    /// Detections after which the controller at `k + 1` was infeasible.
    pub infeasible_after_detection: usize,
    pub rsca_detections: usize,
}

impl BatchReport {
    pub fn from_rows(rows: Vec<ScenarioRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let rate = |f: &dyn Fn(&ScenarioRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
        let rsca_success_rate = rate(&|r| r.rsca.success);
        let sca_success_rate = rate(&|r| r.sca.success);
        let sca_controller_failure_rate = rate(&|r| r.sca_controller_failed);
        let mut earlier_by_tier = [0; 3];
        for r in &rows {
            if r.earlier_by.is_some_and(|e| e > 0) {
                earlier_by_tier[r.scenario.tier.index()] += 1;
            }
        }
        Self {
            rsca_success_rate,
            sca_success_rate,
            sca_controller_failure_rate,
            earlier_interventions: earlier_by_tier.iter().sum(),
            earlier_by_tier,
            infeasible_after_detection: rows.iter().filter(|r| r.rsca.controller_after_detection == Some(false)).count(),
            rsca_detections: rows.iter().filter(|r| r.rsca.detection_step.is_some()).count(),
            rows,
        }
    }

    pub fn summary(&self) -> String {
        let n = self.rows.len();
        let share = |i: usize| if self.earlier_interventions == 0 { 0.0 } else { self.earlier_by_tier[i] as f64 / self.earlier_interventions as f64 };
        format!(
            "scenarios: {n}\nrsca success: {:.1}% ({}/{n})\nsca success: {:.1}% ({}/{n})\nsca controller infeasible (violations ignored): {:.1}%\nrsca detections: {}\ncontroller infeasible right after detection: {}\nearlier rsca interventions: {} ({:.1}% of scenarios)\n  share d1/d2/d3: {:.0}% / {:.0}% / {:.0}%\n",
            100.0 * self.rsca_success_rate,
            self.rows.iter().filter(|r| r.rsca.success).count(),
            100.0 * self.sca_success_rate,
            self.rows.iter().filter(|r| r.sca.success).count(),
            100.0 * self.sca_controller_failure_rate,
            self.rsca_detections,
            self.infeasible_after_detection,
            self.earlier_interventions,
            100.0 * self.earlier_interventions as f64 / n.max(1) as f64,
            100.0 * share(0),
            100.0 * share(1),
            100.0 * share(2),
        )
    }
}

pub struct BatchOutput {
    pub report: BatchReport,
    pub rsca_runs: Vec<RunResult>,
    pub sca_runs: Vec<RunResult>,
}

fn run_slot(cfg: &SimConfig, cache: &SynthesisCache, slot: usize, tier: Tier) -> anyhow::Result<(ScenarioRow, RunResult, RunResult)> {
    let (sc, syn) = generate_scenario(cfg, cache, slot, tier, cfg.batch.seed)?;
    let r = run_scenario(&sc, cfg, &syn, Arch::Rsca);
    let s = run_scenario(&sc, cfg, &syn, Arch::Sca);
    let sca_controller_failed = if s.success {
        false
    } else {
        let c = run_scenario_with(&sc, cfg, &syn, Arch::Sca, RunOptions { continue_after_violation: true, ..Default::default() });
        c.failure_kind == Some(FailureKind::ControllerInfeasible)
    };
    let earlier_by = match (r.detection_step, s.detection_step) {
        (Some(a), Some(b)) => Some(b as i64 - a as i64),
        _ => None,
    };
    let row = ScenarioRow { side: sc.side(cfg).as_str(), rsca: (&r).into(), sca: (&s).into(), sca_controller_failed, earlier_by, scenario: sc };
    Ok((row, r, s))
}

fn pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build().context("building worker pool")
}

/// Runs the configured batch. The report depends only on the configuration
/// (including the base seed), never on the worker count.
pub fn run_batch(cfg: &SimConfig, cache: &SynthesisCache) -> anyhow::Result<BatchOutput> {
    cfg.validate()?;
    let plan = tier_plan(cfg.batch.tiers);
    let results: Vec<_> = pool(cfg.batch.workers)?.install(|| plan.par_iter().enumerate().map(|(slot, &tier)| run_slot(cfg, cache, slot, tier)).collect());
    let mut rows = Vec::with_capacity(plan.len());
    let mut rsca_runs = Vec::with_capacity(plan.len());
    let mut sca_runs = Vec::with_capacity(plan.len());
    for res in results {
        let (row, r, s) = res?;
        rows.push(row);
        rsca_runs.push(r);
        sca_runs.push(s);
    }
    Ok(BatchOutput { report: BatchReport::from_rows(rows), rsca_runs, sca_runs })
}

/// Detection events of RSCA runs cut short at the detection step, with the
/// synthesis each one was produced under.
pub fn harvest_detections(cfg: &SimConfig, cache: &SynthesisCache, slots: usize, seed: u64) -> anyhow::Result<Vec<(Scenario, Arc<Synthesis<f64>>, RunResult)>> {
    let plan: Vec<Tier> = (0..slots).map(|i| Tier::ALL[i % 3]).collect();
    let out: Vec<anyhow::Result<_>> = pool(cfg.batch.workers)?.install(|| {
        plan.par_iter()
            .enumerate()
            .map(|(slot, &tier)| {
                let (sc, syn) = generate_scenario(cfg, cache, slot, tier, seed)?;
                let r = run_scenario_with(&sc, cfg, &syn, Arch::Rsca, RunOptions { stop_at_detection: true, ..Default::default() });
                Ok((sc, syn, r))
            })
            .collect()
    });
    out.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BackupCheck {
    pub events: usize,
    pub samples: usize,
    pub input_violations: usize,
    pub state_violations: usize,
    /// Largest box-constraint excess of `x_{k+1}` seen (negative when inside).
    pub worst_excess: f64,
}

/// Resamples `draws` disturbances at every harvested detection step and
/// checks the backup input against `𝒰` and the successor state against
/// `𝒳_{k+1}`.
pub fn backup_monte_carlo(events: &[(Scenario, Arc<Synthesis<f64>>, RunResult)], cfg: &SimConfig, draws: usize, seed: u64) -> BackupCheck {
    let mut out = BackupCheck { worst_excess: f64::NEG_INFINITY, ..Default::default() };
    let umax = max_steer::<f64>();
    for (i, (sc, syn, run)) in events.iter().enumerate() {
        let Some(ev) = &run.detection else { continue };
        let prev = SupervisorOutcome {
            decision: Decision::Safe,
            reason: Reason::None,
            stored_u0: Some(ev.stored_u0),
            stored_x0: Some(ev.stored_x0.clone()),
            objective: None,
            plan: Vec::new(),
        };
        let u = backup_input(&prev, &ev.x_k, &syn.gain.k_gain).expect("stored values present");
        out.events += 1;
        if u.abs() > umax + MEMBERSHIP_TOL {
            out.input_violations += 1;
        }
        let bound = cfg.tier_bound(sc.tier);
        let mut rng = slot_rng(seed, i);
        let (lo, hi) = ev.next_bounds;
        for _ in 0..draws {
            let d: [f64; NX] = std::array::from_fn(|_| if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 });
            let x = step_true(&syn.model, &ev.x_k, u, ev.psi_dot, &d).to_array();
            let excess = (0..NX).map(|j| (lo[j] - x[j]).max(x[j] - hi[j])).fold(f64::NEG_INFINITY, f64::max);
            out.worst_excess = out.worst_excess.max(excess);
            if excess > MEMBERSHIP_TOL {
                out.state_violations += 1;
            }
            out.samples += 1;
        }
    }
    out
}
