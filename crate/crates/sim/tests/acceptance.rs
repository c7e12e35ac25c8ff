//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the lines always show up in the test log; exits nonzero when a gating
//! criterion fails. Indicative criteria are reported but never gate.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsca_core::invariant_sets::{synthesize, SafeReference};
use rsca_core::linalg::{dot, solve, Mat};
use rsca_core::polytope::Polytope;
use rsca_core::qp::{solve as solve_qp, QuadraticProgram};
use rsca_core::vehicle_model::{build_continuous, DiscreteModel, VehicleParams};
use rsca_sim::batch::{backup_monte_carlo, harvest_detections, run_batch, BatchOutput};
use rsca_sim::cache::SynthesisCache;
use rsca_sim::config::SimConfig;
use rsca_sim::runner::{pass_through_violation, run_scenario, Arch};
use rsca_sim::scenario::{Obstacle, Scenario, Tier};
use rsca_sim::verify::verify_sets;

struct Ledger {
    gating_failures: usize,
}

impl Ledger {
    fn report(&mut self, id: &str, gating: bool, pass: bool, detail: String) {
        let verdict = match (gating, pass) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "PASS (indicative)",
            (false, false) => "MISS (indicative)",
        };
        if gating && !pass {
            self.gating_failures += 1;
        }
        println!("[{verdict}] {id}: {detail}");
    }
}

fn criterion_1_2(l: &mut Ledger, cfg: &SimConfig) {
    let t = Instant::now();
    let checks = verify_sets(cfg, &SynthesisCache::new(), &[5.0, 12.0, 20.0], 20_000, 1).expect("synthesis");
    for tier in Tier::ALL {
        let mine: Vec<_> = checks.iter().filter(|c| c.tier == tier).collect();
        let worst = mine.iter().map(|c| c.inclusion_slack).fold(f64::INFINITY, f64::min);
        let slowest = mine.iter().map(|c| c.synthesis_time.as_secs_f64()).fold(0.0, f64::max);
        l.report("1 tube inclusion certificate", true, worst >= -1e-7 && slowest < 10.0, format!("tier {tier}: min facet slack {worst:.3e} (>= -1e-7), slowest synthesis {slowest:.3} s (< 10 s)"));
    }
    let mut worst = f64::INFINITY;
    let (mut samples, mut bad) = (0, 0);
    for c in &checks {
        for t in &c.terminal {
            worst = worst.min(t.rpi_slack);
            samples += t.samples;
            bad += t.input_violations + t.state_violations;
        }
    }
    l.report(
        "2 terminal-set robustness",
        true,
        worst >= -1e-7 && bad == 0,
        format!("{} sets, min rpi slack {worst:.3e}, {bad} violations in {samples} one-step simulations ({:.1} s)", checks.len() * 2, t.elapsed().as_secs_f64()),
    );
}

fn criterion_3(l: &mut Ledger, cfg: &SimConfig) {
    let t = Instant::now();
    let events = harvest_detections(cfg, &SynthesisCache::new(), 510, 7_331).expect("harvest");
    let mc = backup_monte_carlo(&events, cfg, 20, 11);
    l.report(
        "3 backup input Monte Carlo",
        true,
        mc.events >= 500 && mc.input_violations == 0 && mc.state_violations == 0,
        format!(
            "{} detection events x 20 draws = {} samples: {} input, {} state violations, worst box excess {:.3e} ({:.1} s)",
            mc.events,
            mc.samples,
            mc.input_violations,
            mc.state_violations,
            mc.worst_excess,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn criterion_4_5_6(l: &mut Ledger, cfg: &SimConfig) -> BatchOutput {
    let t = Instant::now();
    let out = run_batch(cfg, &SynthesisCache::new()).expect("batch");
    let secs = t.elapsed().as_secs_f64();
    let r = &out.report;
    let n = r.rows.len();

    let tube: usize = out.rsca_runs.iter().map(|x| x.tube_violations).sum();
    l.report(
        "4 controller feasible after detection",
        true,
        r.infeasible_after_detection == 0 && r.rsca_detections > 0,
        format!("{} detections, {} infeasible controller solves at k+1, {tube} tube-containment misses", r.rsca_detections, r.infeasible_after_detection),
    );

    let ok = out.rsca_runs.iter().filter(|x| x.success).count();
    l.report("5 rsca success", true, ok == n && n == 120 && secs <= 900.0, format!("{ok}/{n} succeeded, batch with {} worker(s) took {secs:.1} s (<= 900 s)", cfg.batch.workers));

    let min_clear = out.rsca_runs.iter().map(|x| x.min_clearance).fold(f64::INFINITY, f64::min);
    let mut precede_bad = 0;
    let mut precede_checked = 0;
    for (row, run) in r.rows.iter().zip(&out.rsca_runs) {
        if let Some(d) = run.detection_step {
            let syn = synthesize(&cfg.synthesis_config(row.scenario.v_x, row.scenario.tier)).expect("synthesis");
            if let Some(v) = pass_through_violation(&row.scenario, cfg, &syn, d, run.trace[d].x) {
                precede_checked += 1;
                if v <= d {
                    precede_bad += 1;
                }
            }
        }
    }
    l.report(
        "5 rsca never violates, detection precedes violation",
        true,
        min_clear >= 0.0 && precede_bad == 0,
        format!("min clearance over the batch {min_clear:.4} m; pass-through would violate in {precede_checked} runs, detection came later in {precede_bad}"),
    );

    let sca_fail = 1.0 - r.sca_success_rate;
    l.report(
        "6 sca failure rate",
        false,
        (0.15..=0.50).contains(&sca_fail),
        format!(
            "{:.1}% failed (band 15-50%); counting controller infeasibility alone {:.1}%",
            100.0 * sca_fail,
            100.0 * r.sca_controller_failure_rate
        ),
    );
    let [a, b, c] = r.earlier_by_tier;
    l.report(
        "6 earlier interventions by tier",
        false,
        a >= b && b >= c && r.earlier_interventions > 0,
        format!("{} earlier interventions ({:.1}% of scenarios), d1/d2/d3 = {a}/{b}/{c}", r.earlier_interventions, 100.0 * r.earlier_interventions as f64 / n as f64),
    );
    out
}

fn criterion_7(l: &mut Ledger, cfg: &SimConfig) {
    let sc = Scenario::single(Tier::D3, 12.0, Obstacle { s_start: 50.0, length: 5.0, width: 2.0, lateral_center: 0.0 }, 1);
    let syn = synthesize(&cfg.synthesis_config(sc.v_x, sc.tier)).expect("synthesis");
    let r = run_scenario(&sc, cfg, &syn, Arch::Rsca);
    let dist = r.detection_distance.unwrap_or(f64::NAN);
    let sr = SafeReference::new(sc.side(cfg), cfg.road_half_width, cfg.car_width, cfg.epsilon);
    let (lo, hi) = sr.band(cfg.road_half_width, cfg.car_width);
    let end = r.final_plan.last().map_or(f64::NAN, |x| x[0]);
    let in_band = end >= lo - 1e-7 && end <= hi + 1e-7;
    l.report(
        "7 single-obstacle replication",
        false,
        r.success && (5.0..=20.0).contains(&dist) && r.min_clearance > 0.0 && in_band,
        format!("detection {dist:.2} m before the obstacle, min clearance {:.4} m, plan ends at e_y = {end:.3} in [{lo:.2}, {hi:.2}]", r.min_clearance),
    );
}

fn rk4_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for v in [5.0, 12.0, 20.0] {
        let c = build_continuous(&VehicleParams::reference().with_speed(v)).unwrap();
        let m = DiscreteModel::for_speed(v, 0.1).unwrap();
        for _ in 0..10 {
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (u, psi) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.02..0.02));
            let f = |x: &[f64]| -> Vec<f64> { c.a_c.mul_vec(x).iter().enumerate().map(|(i, a)| a + c.b_c[i] * u + c.e_c[i] * psi).collect() };
            let h = 0.1 / 1000.0;
            let mut x = x0.clone();
            for _ in 0..1000 {
                let k1 = f(&x);
                let k2 = f(&x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect::<Vec<_>>());
                let k3 = f(&x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect::<Vec<_>>());
                let k4 = f(&x.iter().zip(&k3).map(|(a, k)| a + h * k).collect::<Vec<_>>());
                for i in 0..4 {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            let ax = m.a.mul_vec(&x0);
            for i in 0..4 {
                worst = worst.max((ax[i] + m.b[i] * u + m.e[i] * psi - x[i]).abs());
            }
        }
    }
    worst
}

fn qp_enumeration_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, m) = (rng.gen_range(2..=3), rng.gen_range(2..=6));
        let l = Mat::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut h = l.transpose().matmul(&l);
        for i in 0..n {
            h[(i, i)] += 0.5;
        }
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = Mat::from_vec(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let xf: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.mul_vec(&xf).iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
        let qp = QuadraticProgram::inequality_only(h.clone(), g.clone(), a.clone(), b.clone());
        let got = solve_qp(&qp);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if act.len() > n {
                continue;
            }
            let k = act.len();
            let mut kkt = Mat::zeros(n + k, n + k);
            kkt.set_block(0, 0, &h);
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            for (j, &i) in act.iter().enumerate() {
                for c in 0..n {
                    kkt[(n + j, c)] = a[(i, c)];
                    kkt[(c, n + j)] = a[(i, c)];
                }
                rhs.push(b[i]);
            }
            let Some(sol) = solve(&kkt, &rhs) else { continue };
            let (x, lam) = sol.split_at(n);
            if (0..m).all(|i| dot(a.row(i), x) <= b[i] + 1e-9) && lam.iter().all(|&v| v >= -1e-9) {
                let f = qp.objective(x);
                if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                    best = Some((x.to_vec(), f));
                }
            }
        }
        let (x, _) = best.expect("feasible by construction");
        if !got.is_optimal() {
            return f64::INFINITY;
        }
        for (p, q) in got.x.iter().zip(&x) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

fn support_identity_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let poly = |rng: &mut ChaCha8Rng| {
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let off: Vec<f64> = (0..6).map(|_| rng.gen_range(0.2..1.0)).collect();
        Polytope::new(Mat::from_rows(&rows), off).unwrap().intersect(&Polytope::symmetric_box(&[1.5; 3]).unwrap()).unwrap()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (p, q) = (poly(&mut rng), poly(&mut rng));
        let sum = p.minkowski_sum(&q).unwrap();
        let m = Mat::from_vec(3, 3, (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let mp = p.linear_map(&m).unwrap();
        let alpha = rng.gen_range(0.1..3.0);
        let sp = p.scale(alpha).unwrap();
        for _ in 0..20 {
            let d: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hp = p.support(&d).unwrap();
            worst = worst.max((sum.support(&d).unwrap() - hp - q.support(&d).unwrap()).abs());
            worst = worst.max((mp.support(&d).unwrap() - p.support(&m.tr_mul_vec(&d)).unwrap()).abs());
            worst = worst.max((sp.support(&d).unwrap() - alpha * hp).abs());
        }
    }
    worst
}

fn criterion_8(l: &mut Ledger) {
    let t = Instant::now();
    let (rk, qp, sup) = (rk4_error(), qp_enumeration_error(), support_identity_error());
    let secs = t.elapsed().as_secs_f64();
    l.report(
        "8 numerical oracles",
        true,
        rk <= 1e-8 && qp <= 1e-7 && sup <= 1e-9 && secs < 60.0,
        format!("discretization vs RK4 {rk:.2e} (<= 1e-8), QP vs active-set enumeration {qp:.2e} (<= 1e-7), support identities {sup:.2e} (<= 1e-9), {secs:.1} s"),
    );
}

fn criterion_9(l: &mut Ledger, cfg: &SimConfig, first: &BatchOutput) {
    let again = run_batch(cfg, &SynthesisCache::new()).expect("batch");
    let same = again.report == first.report && again.rsca_runs == first.rsca_runs && again.sca_runs == first.sca_runs;
    l.report("9 determinism", true, same, format!("repeat of the seed-{} batch {} the first", cfg.batch.seed, if same { "reproduces" } else { "differs from" }));
}

fn main() {
    let mut cfg = SimConfig::default();
    cfg.batch.workers = 1;
    let mut l = Ledger { gating_failures: 0 };
    let t = Instant::now();
    criterion_1_2(&mut l, &cfg);
    criterion_3(&mut l, &cfg);
    let batch = criterion_4_5_6(&mut l, &cfg);
    criterion_7(&mut l, &cfg);
    criterion_8(&mut l);
    criterion_9(&mut l, &cfg, &batch);
    println!("acceptance: {} gating failure(s), {:.1} s", l.gating_failures, t.elapsed().as_secs_f64());
    if l.gating_failures > 0 {
        std::process::exit(1);
    }
}
