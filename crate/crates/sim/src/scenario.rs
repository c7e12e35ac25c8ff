//! Single-obstacle scenarios and their constraint schedules.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rsca_core::invariant_sets::Side;
use rsca_core::rsca::ConstraintSchedule;
use rsca_core::vehicle_model::State;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    D1,
    D2,
    D3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::D1, Tier::D2, Tier::D3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::D1 => "d1",
            Tier::D2 => "d2",
            Tier::D3 => "d3",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d1" | "1" => Ok(Tier::D1),
            "d2" | "2" => Ok(Tier::D2),
            "d3" | "3" => Ok(Tier::D3),
            other => Err(format!("unknown tier `{other}` (expected d1, d2 or d3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub s_start: f64,
    pub length: f64,
    pub width: f64,
    pub lateral_center: f64,
}

impl Obstacle {
    pub fn s_end(&self) -> f64 {
        self.s_start + self.length
    }

    /// Side with the larger free lateral gap; ties go to the top.
    pub fn overtake_side(&self, road_half_width: f64) -> Side {
        let top = road_half_width - (self.lateral_center + self.width / 2.0);
        let bottom = (self.lateral_center - self.width / 2.0) + road_half_width;
        if bottom > top {
            Side::Bottom
        } else {
            Side::Top
        }
    }

    /// `e_y` interval beside the obstacle on `side`.
    pub fn band(&self, side: Side, road_half_width: f64, car_width: f64) -> (f64, f64) {
        let edge = road_half_width - car_width / 2.0;
        match side {
            Side::Top => (self.lateral_center + self.width / 2.0 + car_width / 2.0, edge),
            Side::Bottom => (-edge, self.lateral_center - self.width / 2.0 - car_width / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub tier: Tier,
    pub v_x: f64,
    pub obstacle: Obstacle,
    pub x0: State<f64>,
    /// Seeds the disturbance sequence.
    pub seed: u64,
}

impl Scenario {
    /// Hand-specified scenario starting on the centerline.
    pub fn single(tier: Tier, v_x: f64, obstacle: Obstacle, seed: u64) -> Self {
        Self { id: 0, tier, v_x, obstacle, x0: State::zero(), seed }
    }

    pub fn side(&self, cfg: &SimConfig) -> Side {
        self.obstacle.overtake_side(cfg.road_half_width)
    }

    pub fn position(&self, k: usize, cfg: &SimConfig) -> f64 {
        k as f64 * cfg.ts * self.v_x
    }

    /// Travel distance after which the run ends: `2·N·ts·v_x` past the obstacle.
    pub fn end_position(&self, cfg: &SimConfig) -> f64 {
        self.obstacle.s_end() + 2.0 * cfg.horizon as f64 * cfg.ts * self.v_x
    }

    pub fn last_step(&self, cfg: &SimConfig) -> usize {
        (self.end_position(cfg) / (cfg.ts * self.v_x)).ceil() as usize
    }

    pub fn is_passable(&self, cfg: &SimConfig) -> bool {
        let (lo, hi) = self.obstacle.band(self.side(cfg), cfg.road_half_width, cfg.car_width);
        lo < hi
    }
}

/// Steps `k0 .. k0 + count`; the obstacle band applies while
/// `s_k ∈ [s_start − margin, s_end + margin]`.
pub fn build_constraint_schedule(sc: &Scenario, cfg: &SimConfig, k0: usize, count: usize) -> ConstraintSchedule<f64> {
    let road = (-cfg.ey_limit(), cfg.ey_limit());
    let (lo_o, hi_o) = sc.obstacle.band(sc.side(cfg), cfg.road_half_width, cfg.car_width);
    let band = (lo_o.max(road.0), hi_o.min(road.1));
    let lo = sc.obstacle.s_start - cfg.longitudinal_margin;
    let hi = sc.obstacle.s_end() + cfg.longitudinal_margin;
    let bands = (k0..k0 + count)
        .map(|k| {
            let s = sc.position(k, cfg);
            if s >= lo && s <= hi {
                band
            } else {
                road
            }
        })
        .collect();
    ConstraintSchedule::from_bands(bands, road, cfg.ts)
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Random speed and obstacle geometry.
pub fn sample_geometry<R: Rng>(rng: &mut R, cfg: &SimConfig) -> (f64, Obstacle) {
    let v_x = uniform(rng, cfg.speed_range);
    let width = uniform(rng, cfg.width_range);
    let length = uniform(rng, cfg.length_range);
    let reach = cfg.horizon as f64 * cfg.ts * v_x;
    let s_start = reach + uniform(rng, cfg.approach_range);
    (v_x, Obstacle { s_start, length, width, lateral_center: cfg.obstacle_lateral_center })
}

/// `e_y` uniform in `±(R/2 − w/2 − 1)`, small rate and heading offsets.
pub fn sample_x0<R: Rng>(rng: &mut R, cfg: &SimConfig) -> State<f64> {
    let ey = (cfg.ey_limit() - 1.0).max(0.0);
    State::new(uniform(rng, (-ey, ey)), uniform(rng, (-0.1, 0.1)), uniform(rng, (-0.02, 0.02)), uniform(rng, (-0.02, 0.02)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(width: f64, lateral: f64) -> Scenario {
        Scenario {
            id: 0,
            tier: Tier::D3,
            v_x: 10.0,
            obstacle: Obstacle { s_start: 50.0, length: 5.0, width, lateral_center: lateral },
            x0: State::zero(),
            seed: 1,
        }
    }

    #[test]
    fn centered_wide_obstacle_band() {
        let cfg = SimConfig::default();
        let s = sc(2.5, 0.0);
        assert_eq!(s.side(&cfg), Side::Top);
        let (lo, hi) = s.obstacle.band(Side::Top, 8.0, 1.8);
        assert!((lo - 2.15).abs() < 1e-12 && (hi - 7.1).abs() < 1e-12);
        assert_eq!(sc(1.0, 1.0).side(&cfg), Side::Bottom);
    }

    #[test]
    fn schedule_transition_index() {
        let mut cfg = SimConfig::default();
        cfg.longitudinal_margin = 0.0;
        let s = sc(1.0, 0.0);
        let sched = build_constraint_schedule(&s, &cfg, 0, 80);
        // s_k = k metres; the band starts exactly at k = 50 and ends at 55.
        assert_eq!(sched.band(49), (-7.1, 7.1));
        assert!(sched.band(50).0 > 0.0);
        assert!(sched.band(55).0 > 0.0);
        assert_eq!(sched.band(56), (-7.1, 7.1));
    }

    #[test]
    fn no_obstacle_schedule_is_road_box() {
        let cfg = SimConfig::default();
        let mut s = sc(1.0, 0.0);
        s.obstacle.s_start = 1e9;
        let sched = build_constraint_schedule(&s, &cfg, 0, 40);
        for k in 0..40 {
            assert_eq!(sched.band(k), (-7.1, 7.1));
        }
    }

    #[test]
    fn tier_parsing() {
        assert_eq!("d2".parse::<Tier>().unwrap(), Tier::D2);
        assert_eq!("3".parse::<Tier>().unwrap(), Tier::D3);
        assert!("d4".parse::<Tier>().is_err());
    }
}
