//! Experiment configuration. Loaded from TOML; every field has a default
//! and command-line flags override what the file says.

use std::path::Path;

use anyhow::Context;
use rsca_core::invariant_sets::SynthesisConfig;
use serde::{Deserialize, Serialize};

use crate::scenario::Tier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub ts: f64,
    pub horizon: usize,
    /// `R/2`.
    pub road_half_width: f64,
    pub car_width: f64,
    pub epsilon: f64,
    pub psi_bound: f64,
    pub q_weight: f64,
    pub r_weight: f64,
    pub lookahead_time: f64,
    /// Added in front of and behind the obstacle.
    pub longitudinal_margin: f64,
    pub obstacle_lateral_center: f64,
    pub speed_range: (f64, f64),
    pub width_range: (f64, f64),
    pub length_range: (f64, f64),
    /// Obstacle start distance beyond the initial horizon reach `N·ts·v_x`.
    pub approach_range: (f64, f64),
    pub tier_bounds: [f64; 3],
    pub batch: BatchConfig,
    pub simulate: SingleRunConfig,
}

/// The single scenario of the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleRunConfig {
    pub obstacle_pos: f64,
    pub obstacle_width: f64,
    pub obstacle_length: f64,
    pub speed: f64,
    pub tier: Tier,
    pub seed: u64,
    /// `rsca`, `sca` or `both`.
    pub arch: String,
}

impl Default for SingleRunConfig {
    fn default() -> Self {
        Self { obstacle_pos: 50.0, obstacle_width: 2.0, obstacle_length: 5.0, speed: 12.0, tier: Tier::D3, seed: 1, arch: "both".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub n: usize,
    pub tiers: [usize; 3],
    pub seed: u64,
    /// 0 uses every available core.
    pub workers: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { n: 120, tiers: [40, 40, 40], seed: 2024, workers: 0 }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ts: 0.1,
            horizon: 30,
            road_half_width: 8.0,
            car_width: 1.8,
            epsilon: 0.5,
            psi_bound: 0.02,
            q_weight: 1.0,
            r_weight: 0.1,
            lookahead_time: 0.5,
            longitudinal_margin: 1.5,
            obstacle_lateral_center: 0.0,
            speed_range: (5.0, 20.0),
            width_range: (0.1, 2.5),
            length_range: (1.0, 10.0),
            approach_range: (10.0, 30.0),
            tier_bounds: [1e-2, 1e-3, 1e-4],
            batch: BatchConfig::default(),
            simulate: SingleRunConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.ts > 0.0, "ts must be positive");
        anyhow::ensure!(self.horizon >= 2, "horizon must be at least 2");
        anyhow::ensure!(self.road_half_width > self.car_width / 2.0, "car wider than the road");
        anyhow::ensure!(self.epsilon > 0.0, "epsilon must be positive");
        anyhow::ensure!(self.psi_bound >= 0.0, "psi_bound must be nonnegative");
        anyhow::ensure!(self.lookahead_time > 0.0, "lookahead time must be positive");
        for (name, (lo, hi)) in [("speed", self.speed_range), ("width", self.width_range), ("length", self.length_range), ("approach", self.approach_range)] {
            anyhow::ensure!(lo <= hi && lo >= 0.0, "{name} range [{lo}, {hi}] is invalid");
        }
        anyhow::ensure!(self.speed_range.0 > 0.0, "speeds must be positive");
        anyhow::ensure!(self.tier_bounds.iter().all(|&d| d >= 0.0), "tier bounds must be nonnegative");
        anyhow::ensure!(self.batch.tiers.iter().sum::<usize>() == self.batch.n, "tier split {:?} does not add up to n = {}", self.batch.tiers, self.batch.n);
        let sim = &self.simulate;
        anyhow::ensure!(sim.speed > 0.0 && sim.obstacle_length >= 0.0 && sim.obstacle_width >= 0.0, "simulate: speed must be positive and obstacle sizes nonnegative");
        anyhow::ensure!(["rsca", "sca", "both"].contains(&sim.arch.as_str()), "simulate: arch must be rsca, sca or both");
        Ok(())
    }

    pub fn tier_bound(&self, tier: Tier) -> f64 {
        self.tier_bounds[tier.index()]
    }

    /// `R/2 − w/2`.
    pub fn ey_limit(&self) -> f64 {
        self.road_half_width - self.car_width / 2.0
    }

    pub fn synthesis_config(&self, v_x: f64, tier: Tier) -> SynthesisConfig<f64> {
        SynthesisConfig {
            v_x,
            ts: self.ts,
            disturbance_bound: self.tier_bound(tier),
            epsilon: self.epsilon,
            psi_bound: self.psi_bound,
            road_half_width: self.road_half_width,
            car_width: self.car_width,
            q_weight: self.q_weight,
            r_weight: self.r_weight,
        }
    }
}
