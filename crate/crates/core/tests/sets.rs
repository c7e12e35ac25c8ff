//! Certificates on the synthesized tube and terminal sets.

use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsca_core::invariant_sets::{augmented_disturbance, check_rpi, inclusion_slack, synthesize, SafeReference, Side, Synthesis, SynthesisConfig};
use rsca_core::vehicle_model::{max_steer, step_true, State, NX};

const TIERS: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn syn(v: f64, d: f64) -> Synthesis<f64> {
    synthesize(&SynthesisConfig::new(v, d)).unwrap()
}

#[test]
fn tube_inclusion_holds_for_every_tier() {
    for d in TIERS {
        let t = Instant::now();
        for v in [5.0, 12.0, 20.0] {
            let s = syn(v, d);
            let slack = inclusion_slack(&s.tubes.z, &s.gain.a_k, &s.d_set).unwrap();
            assert!(slack >= -1e-7, "d = {d}, v = {v}: slack {slack}");
            assert!(s.mrpi_alpha <= 0.05 && s.mrpi_s <= 200);
        }
        assert!(t.elapsed().as_secs_f64() < 10.0);
    }
}

#[test]
fn tubes_are_nested_across_tiers() {
    let z: Vec<_> = TIERS.iter().map(|&d| syn(12.0, d).tubes.z).collect();
    assert!(z[0].contains_set(&z[1], 1e-12).unwrap());
    assert!(z[1].contains_set(&z[2], 1e-12).unwrap());
    assert!(!z[2].contains_set(&z[1], 1e-12).unwrap());
}

#[test]
fn input_tightening_is_ordered() {
    let s = syn(12.0, 1e-2);
    let (sl, sh) = s.tubes.u_tight_supervisor.as_interval().unwrap();
    let (cl, ch) = s.tubes.u_tight_controller.as_interval().unwrap();
    let m = max_steer::<f64>();
    assert!(-m <= cl && cl <= sl && sh <= ch && ch <= m);
    assert!(sl < 0.0 && sh > 0.0);
}

fn terminal_mc(s: &Synthesis<f64>, side: Side, samples: usize, seed: u64) -> usize {
    let c = &s.config;
    let sr = SafeReference::new(side, c.road_half_width, c.car_width, c.epsilon);
    let set = s.tubes.terminal(side);
    let verts = set.vertices().unwrap().into_vertices();
    let (plo, phi) = c.psi_bounds();
    let d = c.disturbance_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let v = &verts[rng.gen_range(0..verts.len())];
        let q: Vec<f64> = v.iter().zip(&sr.x_sr).map(|(a, b)| a - b).collect();
        let u = s.gain.feedback(&q);
        let dk: [f64; NX] = std::array::from_fn(|_| rng.gen_range(-d..=d));
        let psi = rng.gen_range(plo..=phi);
        let next = step_true(&s.model, &State::from_slice(v), u, psi, &dk);
        // Vertices on the input facet give |u| = u_max up to rounding.
        if u.abs() > max_steer::<f64>() + 1e-9 || !set.contains_point(&next.to_vec(), 1e-7) {
            bad += 1;
        }
    }
    bad
}

#[test]
fn terminal_sets_are_robustly_invariant() {
    for (i, d) in TIERS.into_iter().enumerate() {
        let s = syn(12.0, d);
        for side in [Side::Top, Side::Bottom] {
            let c = &s.config;
            let sr = SafeReference::new(side, c.road_half_width, c.car_width, c.epsilon);
            let neg: Vec<f64> = sr.x_sr.iter().map(|v| -v).collect();
            let shifted = s.tubes.terminal(side).translate(&neg).unwrap();
            let dt = augmented_disturbance(&s.model, &s.d_set, c.psi_bounds(), &sr.x_sr).unwrap();
            assert!(check_rpi(&shifted, &s.gain.a_k, &dt).unwrap(), "d = {d} {side:?}");
            assert_eq!(terminal_mc(&s, side, 10_000, i as u64), 0, "d = {d} {side:?}");
        }
    }
}

#[test]
fn terminal_sets_lie_in_the_safe_band_and_mirror() {
    let s = syn(12.0, 1e-3);
    let c = &s.config;
    for side in [Side::Top, Side::Bottom] {
        let sr = SafeReference::new(side, c.road_half_width, c.car_width, c.epsilon);
        let (lo, hi) = sr.band(c.road_half_width, c.car_width);
        let (blo, bhi) = s.tubes.terminal(side).bounding_box().unwrap();
        assert!(blo[0] >= lo - 1e-9 && bhi[0] <= hi + 1e-9);
        assert!(s.tubes.terminal(side).contains_point(&sr.x_sr, 0.0));
    }
    let top = s.tubes.terminal(Side::Top);
    let bottom = s.tubes.terminal(Side::Bottom);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let dir: Vec<f64> = (0..NX).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let neg: Vec<f64> = dir.iter().map(|v| -v).collect();
        let (a, b) = (top.support(&dir).unwrap(), bottom.support(&neg).unwrap());
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "point symmetry: {a} vs {b}");
    }
}

#[test]
fn tube_certificate_survives_degenerate_disturbance_sums() {
    // Here vertex enumeration of D ⊕ A_K D drops vertices; the tube must
    // still be built from exact supports.
    let s = syn(5.893046401829604, 10f64.powf(-4.055767918607218));
    assert!(inclusion_slack(&s.tubes.z, &s.gain.a_k, &s.d_set).unwrap() >= -1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthesis_certifies_random_configurations(v in 5.0f64..20.0, log_d in -4.5f64..-2.0) {
        let s = syn(v, 10f64.powf(log_d));
        prop_assert!(inclusion_slack(&s.tubes.z, &s.gain.a_k, &s.d_set).unwrap() >= -1e-7);
        prop_assert!(s.tubes.z.contains_point(&[0.0; NX], 0.0));
        for side in [Side::Top, Side::Bottom] {
            prop_assert!(!s.tubes.terminal(side).is_empty());
        }
    }
}
