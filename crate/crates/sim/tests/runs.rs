//! End-to-end runs, batch reproducibility, exports and the CLI.

use std::process::Command;

use rsca_core::invariant_sets::synthesize;
use rsca_sim::batch::{generate_scenario, run_batch};
use rsca_sim::cache::SynthesisCache;
use rsca_sim::config::SimConfig;
use rsca_sim::export::{plot_series, read_batch_csv, read_trace_csv, write_batch_csv, write_trace_csv, TraceRecord};
use rsca_sim::runner::{pass_through_violation, run_scenario, Arch};
use rsca_sim::scenario::{Obstacle, Scenario, Tier};

fn single_obstacle() -> (SimConfig, Scenario) {
    let cfg = SimConfig::default();
    let obstacle = Obstacle { s_start: 50.0, length: 5.0, width: 2.0, lateral_center: 0.0 };
    (cfg, Scenario::single(Tier::D3, 12.0, obstacle, 1))
}

#[test]
fn same_seed_gives_identical_runs() {
    let (cfg, sc) = single_obstacle();
    let syn = synthesize(&cfg.synthesis_config(sc.v_x, sc.tier)).unwrap();
    for arch in [Arch::Rsca, Arch::Sca] {
        assert_eq!(run_scenario(&sc, &cfg, &syn, arch), run_scenario(&sc, &cfg, &syn, arch));
    }
}

#[test]
fn no_obstacle_and_no_disturbance_means_no_detection() {
    let (mut cfg, mut sc) = single_obstacle();
    let syn = synthesize(&cfg.synthesis_config(sc.v_x, Tier::D1)).unwrap();
    sc.tier = Tier::D1;
    sc.obstacle.lateral_center = -100.0;
    cfg.tier_bounds = [0.0; 3];
    for arch in [Arch::Rsca, Arch::Sca] {
        let r = run_scenario(&sc, &cfg, &syn, arch);
        assert!(r.success);
        assert_eq!(r.detection_step, None, "{arch}");
        assert!(r.trace.iter().all(|t| t.u_applied.to_bits() == t.u_op.to_bits()));
        assert!(r.trace.iter().all(|t| t.x.e_y == 0.0));
    }
}

#[test]
fn detection_precedes_pass_through_violation() {
    let cfg = SimConfig::default();
    let cache = SynthesisCache::new();
    let mut checked = 0;
    for slot in 0..12 {
        let (sc, syn) = generate_scenario(&cfg, &cache, slot, Tier::ALL[slot % 3], 99).unwrap();
        let r = run_scenario(&sc, &cfg, &syn, Arch::Rsca);
        assert!(r.success, "slot {slot}");
        let Some(d) = r.detection_step else { continue };
        if let Some(v) = pass_through_violation(&sc, &cfg, &syn, d, r.trace[d].x) {
            assert!(d < v, "slot {slot}: detection {d}, pass-through violation {v}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn batch_is_independent_of_worker_count() {
    let mut cfg = SimConfig::default();
    cfg.batch.n = 6;
    cfg.batch.tiers = [2, 2, 2];
    cfg.batch.workers = 1;
    let a = run_batch(&cfg, &SynthesisCache::new()).unwrap().report;
    cfg.batch.workers = 3;
    let b = run_batch(&cfg, &SynthesisCache::new()).unwrap().report;
    assert_eq!(a, b);
    let sum: usize = a.earlier_by_tier.iter().sum();
    assert_eq!(sum, a.earlier_interventions);
    assert!((0.0..=1.0).contains(&a.rsca_success_rate) && (0.0..=1.0).contains(&a.sca_success_rate));
}

#[test]
fn exports_round_trip() {
    let (cfg, sc) = single_obstacle();
    let syn = synthesize(&cfg.synthesis_config(sc.v_x, sc.tier)).unwrap();
    let r = run_scenario(&sc, &cfg, &syn, Arch::Rsca);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("trace.csv");
    write_trace_csv(&p, &r.trace).unwrap();
    let back = read_trace_csv(&p).unwrap();
    assert_eq!(back, r.trace.iter().map(TraceRecord::from).collect::<Vec<_>>());

    let pts = plot_series(&sc, &cfg, &[&r], 6.85);
    let obs: Vec<_> = pts.iter().filter(|p| p.series == "obstacle").collect();
    assert_eq!(obs.len(), 5);
    assert!(obs.iter().all(|p| p.s == 50.0 || p.s == 55.0));
    assert!(obs.iter().any(|p| p.s == 50.0) && obs.iter().any(|p| p.s == 55.0));

    let mut small = cfg.clone();
    small.batch.n = 3;
    small.batch.tiers = [1, 1, 1];
    let report = run_batch(&small, &SynthesisCache::new()).unwrap().report;
    let p = dir.path().join("batch.csv");
    write_batch_csv(&p, &report).unwrap();
    assert_eq!(read_batch_csv(&p).unwrap(), rsca_sim::export::batch_records(&report));
}

fn rsca(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rsca")).args(args).output().unwrap();
    (out.status.success(), format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn cli_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let (ok, out) = rsca(&["synthesize", "--tier", "d3", "--speed", "12", "--cache", &d("sets.txt")]);
    assert!(ok, "{out}");
    let (ok, out) = rsca(&["simulate", "--cache", &d("sets.txt"), "--arch", "rsca", "--out", &d("single_obstacle")]);
    assert!(ok, "{out}");
    assert!(out.contains("success: true"), "{out}");
    for f in ["trace_rsca.csv", "plot.csv", "summary_rsca.txt"] {
        assert!(dir.path().join("single_obstacle").join(f).exists(), "{f}");
    }

    std::fs::write(d("cfg.toml"), "[batch]\nn = 3\ntiers = [1, 1, 1]\nseed = 5\n").unwrap();
    let (ok, out) = rsca(&["--config", &d("cfg.toml"), "batch", "--seed", "6", "--out", &d("b")]);
    assert!(ok, "{out}");
    assert!(out.contains("scenarios: 3"), "{out}");
    assert_eq!(read_batch_csv(&dir.path().join("b").join("batch.csv")).unwrap().len(), 3);

    let (ok, out) = rsca(&["--config", &d("cfg.toml"), "print-config"]);
    assert!(ok && out.contains("seed = 5"), "{out}");
    let (ok, _) = rsca(&["simulate", "--arch", "nope"]);
    assert!(!ok);
    std::fs::write(d("bad.toml"), "speed = 3\n").unwrap();
    let (ok, out) = rsca(&["--config", &d("bad.toml"), "print-config"]);
    assert!(!ok && out.contains("bad.toml"), "{out}");
}
