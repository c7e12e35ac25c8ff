//! Geometric pure pursuit on the road centerline.

use rsca_core::vehicle_model::{max_steer, State, VehicleParams};

/// Steering toward the centerline point `l_d = v_x · lookahead_time` ahead.
///
/// The target sits at `(l_d, −e_y)` in the vehicle's road-aligned frame, so
/// its bearing relative to the vehicle heading is
/// `α = atan2(−e_y, l_d) − e_ψ` and `δ = atan(2 L sin α / l_d)`.
pub fn pure_pursuit(x: &State<f64>, v_x: f64, lookahead_time: f64, params: &VehicleParams<f64>) -> f64 {
    let l_d = v_x * lookahead_time;
    assert!(l_d > 0.0, "lookahead distance must be positive");
    let alpha = (-x.e_y).atan2(l_d) - x.e_psi;
    let delta = (2.0 * params.wheelbase() * alpha.sin() / l_d).atan();
    let m = max_steer::<f64>();
    delta.clamp(-m, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rsca_core::vehicle_model::{step_nominal, DiscreteModel};

    #[test]
    fn aligned_is_zero() {
        let p = VehicleParams::reference();
        assert_eq!(pure_pursuit(&State::zero(), 10.0, 0.5, &p), 0.0);
    }

    #[test]
    fn steers_back_and_clamps() {
        let p = VehicleParams::reference();
        assert!(pure_pursuit(&State::new(1.0, 0.0, 0.0, 0.0), 10.0, 0.5, &p) < 0.0);
        assert!(pure_pursuit(&State::new(-1.0, 0.0, 0.0, 0.0), 10.0, 0.5, &p) > 0.0);
        let m = max_steer::<f64>();
        assert_eq!(pure_pursuit(&State::new(7.0, 0.0, 0.0, 0.0), 5.0, 0.5, &p), -m);
        assert_eq!(pure_pursuit(&State::new(-7.0, 0.0, 0.0, 0.0), 5.0, 0.5, &p), m);
    }

    #[test]
    fn closed_loop_converges() {
        let p = VehicleParams::reference();
        for v in [5.0, 12.0, 20.0] {
            let m = DiscreteModel::for_speed(v, 0.1).unwrap();
            let mut x = State::new(2.0, 0.0, 0.0, 0.0);
            for _ in 0..50 {
                x = step_nominal(&m, &x, pure_pursuit(&x, v, 0.5, &p), 0.0);
            }
            assert!(x.e_y.abs() < 0.2, "v = {v}: e_y = {}", x.e_y);
        }
    }
}
