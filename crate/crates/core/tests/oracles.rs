//! Independent numerical oracles for the discretization, the QP solver and
//! the phase-1 feasibility LP.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsca_core::linalg::{dot, solve, Mat};
use rsca_core::qp::{check_feasible, solve as solve_qp, QpStatus, QuadraticProgram};
use rsca_core::vehicle_model::{build_continuous, DiscreteModel, VehicleParams};

fn rk4(a: &Mat<f64>, forcing: &[f64], x0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let f = |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(forcing).map(|(p, q)| p + q).collect() };
    let h = t / steps as f64;
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let k1 = f(&x);
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
        let k2 = f(&x2);
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
        let k3 = f(&x3);
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
        let k4 = f(&x4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

#[test]
fn discretization_matches_rk4() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ts = 0.1;
    for v in [5.0, 8.0, 12.0, 16.0, 20.0] {
        let c = build_continuous(&VehicleParams::reference().with_speed(v)).unwrap();
        let d = DiscreteModel::for_speed(v, ts).unwrap();
        for _ in 0..20 {
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = rng.gen_range(-0.5..0.5);
            let psi = rng.gen_range(-0.05..0.05);
            let forcing: Vec<f64> = c.b_c.iter().zip(&c.e_c).map(|(b, e)| b * u + e * psi).collect();
            let want = rk4(&c.a_c, &forcing, &x0, ts, 1000);
            let got: Vec<f64> = d.a.mul_vec(&x0).iter().zip(d.b.iter().zip(&d.e)).map(|(ax, (b, e))| ax + b * u + e * psi).collect();
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-8, "v = {v}: {g} vs {w}");
            }
        }
    }
}

/// Minimum over every KKT point of the active sets of size ≤ n.
fn enumerate_active_sets(qp: &QuadraticProgram<f64>) -> Option<(Vec<f64>, f64)> {
    let n = qp.num_vars();
    let m = qp.b_ineq.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if act.len() > n {
            continue;
        }
        let k = act.len();
        let mut kkt = Mat::zeros(n + k, n + k);
        kkt.set_block(0, 0, &qp.hess);
        let mut rhs: Vec<f64> = qp.grad.iter().map(|g| -g).collect();
        for (j, &i) in act.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = qp.a_ineq[(i, c)];
                kkt[(c, n + j)] = qp.a_ineq[(i, c)];
            }
            rhs.push(qp.b_ineq[i]);
        }
        let Some(sol) = solve(&kkt, &rhs) else { continue };
        let (x, lam) = sol.split_at(n);
        let primal = (0..m).all(|i| dot(qp.a_ineq.row(i), x) <= qp.b_ineq[i] + 1e-9);
        if primal && lam.iter().all(|&l| l >= -1e-9) {
            let f = qp.objective(x);
            if best.as_ref().is_none_or(|(_, b)| f < *b) {
                best = Some((x.to_vec(), f));
            }
        }
    }
    best
}

fn random_qp(seed: u64, n: usize, m: usize) -> QuadraticProgram<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = Mat::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut h = l.transpose().matmul(&l);
    for i in 0..n {
        h[(i, i)] += 0.5;
    }
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let a = Mat::from_vec(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let xf: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = a.mul_vec(&xf).iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
    QuadraticProgram::inequality_only(h, g, a, b)
}

/// Largest deviation of the solver from the equality KKT solution.
fn equality_qp_error(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.gen_range(1..n);
    let base = random_qp(seed, n, 1);
    // [I | R] keeps the constraint rows well conditioned.
    let c = Mat::from_vec(p, n, (0..p * n).map(|i| if i % n == i / n { 1.0 } else if i % n < p { 0.0 } else { rng.gen_range(-0.5..0.5) }).collect());
    let d: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let qp = QuadraticProgram::new(base.hess.clone(), base.grad.clone(), Mat::zeros(0, n), vec![], c.clone(), d.clone());
    let mut kkt = Mat::zeros(n + p, n + p);
    kkt.set_block(0, 0, &base.hess);
    kkt.set_block(n, 0, &c);
    kkt.set_block(0, n, &c.transpose());
    let mut rhs: Vec<f64> = base.grad.iter().map(|g| -g).collect();
    rhs.extend(&d);
    let want = solve(&kkt, &rhs).expect("full-rank constraints");
    let out = solve_qp(&qp);
    assert_eq!(out.status, QpStatus::Optimal);
    out.x.iter().zip(&want[..n]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn equality_qp_is_not_biased_by_regularization() {
    // Large |x| here exposed a polish step that kept the Hessian shift.
    assert!(equality_qp_error(16_971_123_332_421_722_127, 3) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn qp_matches_active_set_enumeration(seed in any::<u64>(), n in 2usize..=3, m in 2usize..=6) {
        let qp = random_qp(seed, n, m);
        let out = solve_qp(&qp);
        prop_assert_eq!(out.status, QpStatus::Optimal);
        let (x, f) = enumerate_active_sets(&qp).expect("feasible by construction");
        for (a, b) in out.x.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-7, "x {:?} vs {:?}", out.x, x);
        }
        prop_assert!((out.objective - f).abs() <= 1e-7 * (1.0 + f.abs()));
    }

    #[test]
    fn equality_qp_matches_closed_form(seed in any::<u64>(), n in 2usize..=5) {
        prop_assert!(equality_qp_error(seed, n) <= 1e-8);
    }
}

#[test]
fn phase1_on_random_feasible_and_infeasible_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=12);
        let mut a = Mat::from_vec(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let xf: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut b: Vec<f64> = a.mul_vec(&xf).iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
        let cert = check_feasible(&a, &b, &Mat::zeros(0, n), &[]);
        assert!(cert.feasible, "trial {trial}: feasible system rejected");
        for (r, bi) in a.row_iter().zip(&b) {
            assert!(dot(r, &cert.witness) <= bi + 1e-7);
        }
        // Append a contradictory pair c·x ≤ t, −c·x ≤ −t − gap.
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = rng.gen_range(-1.0..1.0);
        let gap = rng.gen_range(0.1..1.0);
        a.push_row(&row);
        b.push(t);
        a.push_row(&row.iter().map(|v| -v).collect::<Vec<_>>());
        b.push(-t - gap);
        let cert = check_feasible(&a, &b, &Mat::zeros(0, n), &[]);
        assert!(!cert.feasible, "trial {trial}: infeasible system accepted");
        let (lam, _) = cert.farkas.expect("certificate");
        assert!(lam.iter().all(|&l| l >= -1e-9));
        let at = a.tr_mul_vec(&lam);
        assert!(at.iter().all(|v| v.abs() <= 1e-7), "Aᵀλ = {at:?}");
        assert!(dot(&b, &lam) < 0.0);
    }
}
