//! Certificate checks on synthesized sets, shared by the `verify-sets`
//! subcommand and the test suite.

use std::time::{Duration, Instant};

use rand::Rng;
use rsca_core::invariant_sets::{augmented_disturbance, inclusion_slack, rpi_slack, SafeReference, Side, Synthesis};
use rsca_core::polytope::PolytopeError;
use rsca_core::rsca::MEMBERSHIP_TOL;
use rsca_core::vehicle_model::{max_steer, step_true, State, NX};

use crate::batch::slot_rng;
use crate::cache::SynthesisCache;
use crate::config::SimConfig;
use crate::scenario::Tier;

pub const SLACK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCheck {
    pub side: Side,
    pub rows: usize,
    pub vertices: usize,
    pub rpi_slack: f64,
    pub samples: usize,
    pub input_violations: usize,
    pub state_violations: usize,
}

impl TerminalCheck {
    pub fn passed(&self) -> bool {
        self.rpi_slack >= -SLACK_TOL && self.input_violations == 0 && self.state_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetCheck {
    pub tier: Tier,
    pub v_x: f64,
    pub mrpi_s: usize,
    pub mrpi_alpha: f64,
    pub z_rows: usize,
    pub inclusion_slack: f64,
    pub terminal: Vec<TerminalCheck>,
    pub synthesis_time: Duration,
}

impl SetCheck {
    pub fn passed(&self) -> bool {
        self.inclusion_slack >= -SLACK_TOL && self.terminal.iter().all(TerminalCheck::passed)
    }

    pub fn line(&self) -> String {
        let term: Vec<String> = self
            .terminal
            .iter()
            .map(|t| format!("{} rows {} slack {:.3e} mc {}/{}", t.side.as_str(), t.rows, t.rpi_slack, t.input_violations + t.state_violations, t.samples))
            .collect();
        format!(
            "{} v_x {:.2}: s {} alpha {:.4} Z rows {} inclusion slack {:.3e}; {}; {:.0} ms [{}]",
            self.tier,
            self.v_x,
            self.mrpi_s,
            self.mrpi_alpha,
            self.z_rows,
            self.inclusion_slack,
            term.join("; "),
            self.synthesis_time.as_secs_f64() * 1e3,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// Terminal-set robustness: `check_rpi` slack against `D̃` plus `samples`
/// one-step simulations from random vertices under `u = K(x − x_sr)` with
/// random `d ∈ 𝒟` and `ψ̇ ∈ Ψ`.
pub fn check_terminal(syn: &Synthesis<f64>, side: Side, samples: usize, seed: u64) -> Result<TerminalCheck, PolytopeError> {
    let c = &syn.config;
    let sr = SafeReference::new(side, c.road_half_width, c.car_width, c.epsilon);
    let set = syn.tubes.terminal(side);
    let neg: Vec<f64> = sr.x_sr.iter().map(|v| -v).collect();
    let shifted = set.translate(&neg)?;
    let d_tilde = augmented_disturbance(&syn.model, &syn.d_set, c.psi_bounds(), &sr.x_sr)?;
    let slack = rpi_slack(&shifted, &syn.gain.a_k, &d_tilde)?;
    let verts = set.vertices()?.into_vertices();
    let mut rng = slot_rng(seed, side as usize);
    let (psi_lo, psi_hi) = c.psi_bounds();
    let d = c.disturbance_bound;
    let mut out = TerminalCheck { side, rows: set.num_rows(), vertices: verts.len(), rpi_slack: slack, samples, input_violations: 0, state_violations: 0 };
    for _ in 0..samples {
        let v = &verts[rng.gen_range(0..verts.len())];
        let q: Vec<f64> = v.iter().zip(&sr.x_sr).map(|(a, b)| a - b).collect();
        let u = syn.gain.feedback(&q);
        if u.abs() > max_steer::<f64>() + MEMBERSHIP_TOL {
            out.input_violations += 1;
        }
        let dk: [f64; NX] = std::array::from_fn(|_| if d > 0.0 { rng.gen_range(-d..=d) } else { 0.0 });
        let psi = if psi_hi > psi_lo { rng.gen_range(psi_lo..=psi_hi) } else { psi_lo };
        let next = step_true(&syn.model, &State::from_slice(v), u, psi, &dk);
        if !set.contains_point(&next.to_vec(), SLACK_TOL) {
            out.state_violations += 1;
        }
    }
    Ok(out)
}

/// Synthesizes (or fetches) the sets for every tier at each speed and runs
/// all certificates.
pub fn verify_sets(cfg: &SimConfig, cache: &SynthesisCache, speeds: &[f64], samples: usize, seed: u64) -> anyhow::Result<Vec<SetCheck>> {
    let mut out = Vec::new();
    for &tier in &Tier::ALL {
        for &v in speeds {
            let t = Instant::now();
            let syn = cache.get_or_synthesize(&cfg.synthesis_config(v, tier))?;
            let synthesis_time = t.elapsed();
            let terminal = [Side::Top, Side::Bottom].into_iter().map(|s| check_terminal(&syn, s, samples / 2, seed)).collect::<Result<Vec<_>, _>>()?;
            out.push(SetCheck {
                tier,
                v_x: v,
                mrpi_s: syn.mrpi_s,
                mrpi_alpha: syn.mrpi_alpha,
                z_rows: syn.tubes.z.num_rows(),
                inclusion_slack: inclusion_slack(&syn.tubes.z, &syn.gain.a_k, &syn.d_set)?,
                terminal,
                synthesis_time,
            });
        }
    }
    Ok(out)
}
