//! Feedback gain, tube cross-section and terminal-set synthesis.
//!
//! * [`synthesize_gain`]: discrete LQR gain `K` (with `u = K x`) and the
//!   Riccati matrix `P` used as terminal weight.
//! * [`compute_z`]: a set `Z` with `A_K Z ⊕ 𝒟 ⊕ A_K 𝒟 ⊆ Z`, i.e. robust
//!   invariance of the closed loop against the two-step disturbance
//!   `W = 𝒟 ⊕ A_K 𝒟`.
//! * [`compute_terminal_set`]: maximal RPI set around a safe reference,
//!   robust to every road curvature in `Ψ`.

use thiserror::Error;

use crate::linalg::{dot, spectral_radius, Mat};
use crate::polytope::{Polytope, PolytopeError, VPolytope};
use crate::scalar::{tolerance, Real};
use crate::vehicle_model::{input_constraints, state_constraints, DiscreteModel, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("(A, B) is not stabilizable")]
    NotStabilizable,
    #[error("Riccati iteration did not converge in {0} iterations")]
    RiccatiNonConvergence(usize),
    #[error("disturbance too large or A_K too slow: no s ≤ {0} with A_K^s W ⊆ αW")]
    NoContraction(usize),
    #[error("terminal set iteration did not converge in {0} sweeps")]
    TerminalNonConvergence(usize),
    #[error("invariance certificate failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSynthesis<T> {
    /// Row gain, `u = K x`.
    pub k_gain: Vec<T>,
    pub p_weight: Mat<T>,
    /// `A + B K`.
    pub a_k: Mat<T>,
    pub iterations: usize,
}

impl<T: Real> GainSynthesis<T> {
    pub fn k_mat(&self) -> Mat<T> {
        Mat::row_vector(&self.k_gain)
    }

    pub fn feedback(&self, x: &[T]) -> T {
        dot(&self.k_gain, x)
    }
}

pub const RICCATI_MAX_ITER: usize = 100_000;

/// Discrete LQR for a single-input system by fixed-point Riccati iteration.
pub fn synthesize_gain<T: Real>(a: &Mat<T>, b: &[T], q: &Mat<T>, r: T) -> Result<GainSynthesis<T>, SynthesisError> {
    let n = a.rows();
    assert_eq!(b.len(), n);
    assert!(r > T::zero(), "input weight must be positive");
    let rho_a = spectral_radius(a);
    let b_zero = b.iter().all(|&v| v == T::zero());
    if b_zero && rho_a >= T::one() {
        return Err(SynthesisError::NotStabilizable);
    }
    let bm = Mat::column(b);
    let mut p = q.clone();
    let tol = T::tol(1e-13);
    let blowup = T::lit(1e14);
    for it in 1..=RICCATI_MAX_ITER {
        let pb = p.mul_vec(b);
        let s = r + dot(b, &pb);
        // AᵀPB and BᵀPA
        let atpb = a.tr_mul_vec(&pb);
        let pa = p.matmul(a);
        let mut next = &q.clone() + &a.transpose().matmul(&pa);
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] -= atpb[i] * atpb[j] / s;
            }
        }
        let next = next.symmetrized();
        let diff = (&next - &p).max_abs();
        let scale = next.max_abs().max(T::one());
        p = next;
        if !p.is_finite() || p.max_abs() > blowup {
            return Err(SynthesisError::NotStabilizable);
        }
        if diff <= tol * scale {
            let pb = p.mul_vec(b);
            let s = r + dot(b, &pb);
            let k: Vec<T> = a.tr_mul_vec(&pb).iter().map(|&v| -v / s).collect();
            let a_k = &a.clone() + &bm.matmul(&Mat::row_vector(&k));
            if spectral_radius(&a_k) >= T::one() {
                return Err(SynthesisError::NotStabilizable);
            }
            return Ok(GainSynthesis { k_gain: k, p_weight: p, a_k, iterations: it });
        }
    }
    Err(SynthesisError::RiccatiNonConvergence(RICCATI_MAX_ITER))
}

/// Tube cross-section together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSynthesis<T: Real> {
    pub z: Polytope<T>,
    /// `W = 𝒟 ⊕ A_K 𝒟`.
    pub w: Polytope<T>,
    /// Raković truncation length and contraction factor.
    pub s: usize,
    pub alpha: T,
    /// Smallest facet slack of `A_K Z ⊕ 𝒟 ⊕ A_K 𝒟 ⊆ Z`.
    pub slack: T,
}

pub const MRPI_ALPHA: f64 = 0.05;
pub const MRPI_MAX_S: usize = 200;

/// `min_i hᵢ − σ_{A_K Z}(Hᵢ) − σ_𝒟(Hᵢ) − σ_{A_K 𝒟}(Hᵢ)` over the facets of `Z`.
/// Nonnegative iff the two-step invariance condition holds.
pub fn inclusion_slack<T: Real>(z: &Polytope<T>, a_k: &Mat<T>, d_set: &Polytope<T>) -> Result<T, PolytopeError> {
    let dv = d_set.vertices()?;
    let mut worst = T::infinity();
    for (h, &b) in z.normals().row_iter().zip(z.offsets()) {
        let ath = a_k.tr_mul_vec(h);
        let s = z.support(&ath)? + dv.support(h) + dv.support(&ath);
        worst = worst.min(b - s);
    }
    Ok(worst)
}

/// Facet slack of `A Ω ⊕ W ⊆ Ω` computed through support functions,
/// `σ_{AΩ⊕W}(h) = σ_Ω(Aᵀh) + σ_W(h)`.
pub fn rpi_slack<T: Real>(omega: &Polytope<T>, a: &Mat<T>, w: &VPolytope<T>) -> Result<T, PolytopeError> {
    let mut worst = T::infinity();
    for (h, &b) in omega.normals().row_iter().zip(omega.offsets()) {
        worst = worst.min(b - omega.support(&a.tr_mul_vec(h))? - w.support(h));
    }
    Ok(worst)
}

/// `A Ω ⊕ W ⊆ Ω` up to the containment tolerance.
pub fn check_rpi<T: Real>(omega: &Polytope<T>, a: &Mat<T>, w: &VPolytope<T>) -> Result<bool, PolytopeError> {
    Ok(rpi_slack(omega, a, w)? >= -T::tol(tolerance::FEASIBILITY))
}

/// Raković criterion: smallest `s` with `A^s W ⊆ α W`, `α ≤ target`.
/// `W` must contain the origin in its interior.
fn rakovic_s<T: Real>(a_k: &Mat<T>, w: &Polytope<T>, wv: &VPolytope<T>) -> Result<(usize, T), SynthesisError> {
    let target = T::lit(MRPI_ALPHA);
    let mut ap = a_k.clone();
    for s in 1..=MRPI_MAX_S {
        let mut alpha = T::zero();
        for (f, &g) in w.normals().row_iter().zip(w.offsets()) {
            if g <= T::zero() {
                return Err(SynthesisError::Verification("W does not contain the origin in its interior".into()));
            }
            alpha = alpha.max(wv.support(&ap.tr_mul_vec(f)) / g);
        }
        if alpha <= target {
            return Ok((s, alpha));
        }
        ap = ap.matmul(a_k);
    }
    Err(SynthesisError::NoContraction(MRPI_MAX_S))
}

/// Support of `F(α, s) = (1 − α)⁻¹ ⊕_{i<s} A^i W` along `d`.
fn rakovic_support<T: Real>(a_k: &Mat<T>, wv: &VPolytope<T>, s: usize, alpha: T, d: &[T]) -> T {
    let mut v = d.to_vec();
    let mut total = T::zero();
    for _ in 0..s {
        total += wv.support(&v);
        v = a_k.tr_mul_vec(&v);
    }
    total / (T::one() - alpha)
}

/// Sign patterns `{−1, 0, 1}ⁿ \ {0}` for `n ≤ 4`, otherwise `±eᵢ` and `±eᵢ ± eⱼ`.
fn sign_patterns<T: Real>(n: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    if n <= 4 {
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let v: Vec<T> = (0..n)
                .map(|_| {
                    let digit = c % 3;
                    c /= 3;
                    T::lit(digit as f64 - 1.0)
                })
                .collect();
            if v.iter().any(|&x| x != T::zero()) {
                out.push(v);
            }
        }
    } else {
        for i in 0..n {
            for si in [-1.0, 1.0] {
                let mut e = vec![T::zero(); n];
                e[i] = T::lit(si);
                out.push(e.clone());
                for j in (i + 1)..n {
                    for sj in [-1.0, 1.0] {
                        let mut f = e.clone();
                        f[j] = T::lit(sj);
                        out.push(f);
                    }
                }
            }
        }
    }
    out
}

/// Invariant tube cross-section for `x⁺ = A_K x + w`, `w ∈ 𝒟 ⊕ A_K 𝒟`.
///
/// `s` and `α` follow the Raković criterion. In one dimension, or when
/// `s = 1`, the outer approximation `F(α, s)` is formed exactly. Otherwise
/// `F(α, s)` has far too many facets, so its support function seeds a
/// template polyhedron (shape-scaled sign directions plus `±K`) that is
/// grown by the monotone template RPI iteration and finally scaled to make
/// the invariance condition hold exactly. The result is certified with
/// [`inclusion_slack`] before returning.
pub fn compute_z<T: Real>(a_k: &Mat<T>, d_set: &Polytope<T>, k_gain: Option<&[T]>) -> Result<ZSynthesis<T>, SynthesisError> {
    let n = a_k.rows();
    if spectral_radius(a_k) >= T::one() {
        return Err(SynthesisError::NoContraction(0));
    }
    let w = d_set.minkowski_sum(&d_set.linear_map(a_k)?)?;
    let dv = d_set.vertices()?;
    let wv = dv.minkowski_sum(&dv.linear_map(a_k)?)?;
    let (s, alpha) = rakovic_s(a_k, &w, &wv)?;

    let z = if n == 1 || s == 1 {
        let mut acc = w.clone();
        let mut ap = a_k.clone();
        for _ in 1..s {
            acc = acc.minkowski_sum(&w.linear_map(&ap)?)?;
            ap = ap.matmul(a_k);
        }
        acc.scale(T::one() / (T::one() - alpha))?
    } else {
        template_rpi(a_k, &wv, s, alpha, k_gain)?
    };

    let slack = inclusion_slack(&z, a_k, d_set)?;
    if slack < -T::tol(tolerance::FEASIBILITY) {
        return Err(SynthesisError::Verification(format!("Z facet slack {slack}")));
    }
    Ok(ZSynthesis { z, w, s, alpha, slack })
}

fn template_rpi<T: Real>(a_k: &Mat<T>, wv: &VPolytope<T>, s: usize, alpha: T, k_gain: Option<&[T]>) -> Result<Polytope<T>, SynthesisError> {
    let n = a_k.rows();
    // Axis extents of F shape the sign patterns.
    let ext: Vec<T> = (0..n)
        .map(|i| {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            let hi = rakovic_support(a_k, wv, s, alpha, &e);
            e[i] = -T::one();
            hi.max(rakovic_support(a_k, wv, s, alpha, &e)).max(T::min_positive_value())
        })
        .collect();
    let mut dirs: Vec<Vec<T>> = sign_patterns::<T>(n)
        .into_iter()
        .map(|p| p.iter().zip(&ext).map(|(&si, &e)| si / e).collect())
        .collect();
    if let Some(k) = k_gain {
        dirs.push(k.to_vec());
        dirs.push(k.iter().map(|&v| -v).collect());
    }
    let mut hm = Mat::zeros(0, n);
    for d in &dirs {
        let nrm = crate::linalg::norm2(d);
        hm.push_row(&d.iter().map(|&v| v / nrm).collect::<Vec<_>>());
    }
    let m = hm.rows();
    let sw: Vec<T> = (0..m).map(|i| wv.support(hm.row(i))).collect();
    let mut c: Vec<T> = (0..m).map(|i| rakovic_support(a_k, wv, s, alpha, hm.row(i))).collect();
    let ath: Vec<Vec<T>> = (0..m).map(|i| a_k.tr_mul_vec(hm.row(i))).collect();

    let eta_tol = T::lit(1e-4) * sw.iter().fold(T::infinity(), |a, &b| a.min(b));
    let mut eta = vec![T::zero(); m];
    let mut converged = false;
    for _ in 0..2000 {
        let zc = Polytope::new(hm.clone(), c.clone())?;
        let mut worst = T::zero();
        for i in 0..m {
            let need = zc.support(&ath[i])? + sw[i];
            eta[i] = (need - c[i]).max(T::zero());
            worst = worst.max(eta[i]);
        }
        if worst <= eta_tol {
            converged = true;
            break;
        }
        for i in 0..m {
            c[i] += eta[i];
        }
    }
    if !converged {
        return Err(SynthesisError::Verification("template RPI iteration did not settle".into()));
    }
    // γZ with γ ≥ σ_W/(σ_W − η) absorbs the residual growth.
    let mut gamma = T::one();
    for i in 0..m {
        if eta[i] > T::zero() {
            gamma = gamma.max(sw[i] / (sw[i] - eta[i]));
        }
    }
    gamma *= T::one() + T::lit(1e-9);
    let z = Polytope::new(hm, c.iter().map(|&v| v * gamma).collect())?;
    Ok(z.remove_redundancy()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Top,
    Bottom,
}

impl Side {
    pub fn sign<T: Real>(self) -> T {
        match self {
            Side::Top => T::one(),
            Side::Bottom => -T::one(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Top => "top",
            Side::Bottom => "bottom",
        }
    }
}

/// Lane parallel to one road boundary at which the horizon may end.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeReference<T> {
    pub side: Side,
    pub x_sr: Vec<T>,
    pub epsilon: T,
}

impl<T: Real> SafeReference<T> {
    /// `x_sr = (±(R/2 − w/2 − ε/2), 0, 0, 0)`.
    pub fn new(side: Side, road_half_width: T, car_width: T, epsilon: T) -> Self {
        let two = T::lit(2.0);
        let ey = side.sign::<T>() * (road_half_width - car_width / two - epsilon / two);
        Self { side, x_sr: vec![ey, T::zero(), T::zero(), T::zero()], epsilon }
    }

    /// `e_y` interval of the terminal band: `[R/2 − w/2 − ε, R/2 − w/2]`
    /// (mirrored for the bottom side).
    pub fn band(&self, road_half_width: T, car_width: T) -> (T, T) {
        let edge = road_half_width - car_width / T::lit(2.0);
        match self.side {
            Side::Top => (edge - self.epsilon, edge),
            Side::Bottom => (-edge, -edge + self.epsilon),
        }
    }
}

/// Robust terminal set around `sr.x_sr`; `Ok(None)` when the maximal RPI
/// set is empty.
pub fn compute_terminal_set<T: Real>(
    m: &DiscreteModel<T>,
    gain: &GainSynthesis<T>,
    d_set: &Polytope<T>,
    psi_bounds: (T, T),
    sr: &SafeReference<T>,
    x_cons: &Polytope<T>,
    u_cons: &Polytope<T>,
) -> Result<Option<Polytope<T>>, SynthesisError> {
    let neg_sr: Vec<T> = sr.x_sr.iter().map(|&v| -v).collect();
    let q_set = x_cons.translate(&neg_sr)?;
    let d_tilde = augmented_disturbance(m, d_set, psi_bounds, &sr.x_sr)?;
    // Ω₀ = 𝒬 ∩ {q : K q ∈ 𝒰}
    let kq = gain.k_mat();
    let mut hm = q_set.normals().clone();
    let mut hv = q_set.offsets().to_vec();
    for (hu, &bu) in u_cons.normals().row_iter().zip(u_cons.offsets()) {
        hm.push_row(&kq.tr_mul_vec(hu));
        hv.push(bu);
    }
    let omega0 = Polytope::new(hm, hv)?;
    if omega0.is_empty() {
        return Ok(None);
    }
    match max_rpi(&gain.a_k, &omega0, &d_tilde, MAX_RPI_SWEEPS)? {
        Some(omega) => Ok(Some(omega.translate(&sr.x_sr)?)),
        None => Ok(None),
    }
}

pub const MAX_RPI_SWEEPS: usize = 500;

/// `D̃ = 𝒟 ⊕ EΨ ⊕ {(A − I) x_sr}` as a point set.
pub fn augmented_disturbance<T: Real>(m: &DiscreteModel<T>, d_set: &Polytope<T>, psi_bounds: (T, T), x_sr: &[T]) -> Result<VPolytope<T>, PolytopeError> {
    let psi = VPolytope::new(vec![vec![psi_bounds.0], vec![psi_bounds.1]])?;
    let e_psi = psi.linear_map(&m.e_mat())?;
    let mut shift = m.a.mul_vec(x_sr);
    for (s, &x) in shift.iter_mut().zip(x_sr) {
        *s -= x;
    }
    d_set.vertices()?.minkowski_sum(&e_psi)?.translate(&shift)
}

/// Maximal RPI subset of `omega0` for `q⁺ = A q + w`, `w ∈ W`, by
/// pre-image iteration with redundancy removal each sweep.
pub fn max_rpi<T: Real>(a: &Mat<T>, omega0: &Polytope<T>, wv: &VPolytope<T>, max_sweeps: usize) -> Result<Option<Polytope<T>>, SynthesisError> {
    let tol = T::tol(tolerance::REDUNDANCY);
    let mut omega = match omega0.remove_redundancy() {
        Ok(o) => o,
        Err(PolytopeError::Empty) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    for _ in 0..max_sweeps {
        let mut pre = Mat::zeros(0, a.cols());
        let mut pv = Vec::new();
        let mut changed = false;
        for (h, &b) in omega.normals().row_iter().zip(omega.offsets()) {
            let row = a.tr_mul_vec(h);
            let off = b - wv.support(h);
            match omega.support(&row) {
                Ok(s) if s <= off + tol => {}
                Ok(_) => changed = true,
                Err(PolytopeError::Empty) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
            pre.push_row(&row);
            pv.push(off);
        }
        if !changed {
            return Ok(Some(omega));
        }
        let next = omega.intersect(&Polytope::new(pre, pv)?)?;
        if next.is_empty() {
            return Ok(None);
        }
        omega = match next.remove_redundancy() {
            Ok(o) => o,
            Err(PolytopeError::Empty) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
    }
    Err(SynthesisError::TerminalNonConvergence(max_sweeps))
}

/// Everything the tube MPCs tighten with.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSets<T: Real> {
    pub z: Polytope<T>,
    pub x_terminal_top: Polytope<T>,
    pub x_terminal_bottom: Polytope<T>,
    /// `(𝒰 ⊖ K𝒵) ⊖ K𝒟`.
    pub u_tight_supervisor: Polytope<T>,
    /// `𝒰 ⊖ K𝒵`.
    pub u_tight_controller: Polytope<T>,
}

impl<T: Real> TubeSets<T> {
    pub fn terminal(&self, side: Side) -> &Polytope<T> {
        match side {
            Side::Top => &self.x_terminal_top,
            Side::Bottom => &self.x_terminal_bottom,
        }
    }
}

/// Inputs of a full synthesis run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig<T> {
    pub v_x: T,
    pub ts: T,
    /// Per-component bound of the disturbance box `𝒟`.
    pub disturbance_bound: T,
    pub epsilon: T,
    /// `Ψ = [−psi_bound, psi_bound]`.
    pub psi_bound: T,
    /// `R/2`.
    pub road_half_width: T,
    pub car_width: T,
    pub q_weight: T,
    pub r_weight: T,
}

impl<T: Real> SynthesisConfig<T> {
    pub fn new(v_x: T, disturbance_bound: T) -> Self {
        Self {
            v_x,
            ts: T::lit(0.1),
            disturbance_bound,
            epsilon: T::lit(0.5),
            psi_bound: T::lit(0.02),
            road_half_width: T::lit(8.0),
            car_width: T::lit(1.8),
            q_weight: T::one(),
            r_weight: T::lit(0.1),
        }
    }

    pub fn psi_bounds(&self) -> (T, T) {
        (-self.psi_bound, self.psi_bound)
    }

    pub fn d_set(&self) -> Polytope<T> {
        Polytope::symmetric_box(&[self.disturbance_bound; 4]).expect("nonnegative bound")
    }

    /// `R/2 − w/2`.
    pub fn ey_limit(&self) -> T {
        self.road_half_width - self.car_width / T::lit(2.0)
    }
}

/// Model, gain and all tube sets for one speed and disturbance tier.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis<T: Real> {
    pub config: SynthesisConfig<T>,
    pub model: DiscreteModel<T>,
    pub gain: GainSynthesis<T>,
    pub d_set: Polytope<T>,
    pub w: Polytope<T>,
    pub tubes: TubeSets<T>,
    pub mrpi_s: usize,
    pub mrpi_alpha: T,
    pub z_slack: T,
}

pub fn synthesize<T: Real>(cfg: &SynthesisConfig<T>) -> Result<Synthesis<T>, SynthesisError> {
    let model = DiscreteModel::for_speed(cfg.v_x, cfg.ts)?;
    let q = Mat::identity(4).scaled(cfg.q_weight);
    let gain = synthesize_gain(&model.a, &model.b, &q, cfg.r_weight)?;
    let d_set = cfg.d_set();
    let zs = compute_z(&gain.a_k, &d_set, Some(&gain.k_gain))?;
    let k = gain.k_mat();
    let u = input_constraints::<T>();
    let kz = zs.z.linear_map(&k)?;
    let kd = d_set.linear_map(&k)?;
    let empty = || SynthesisError::Verification("input set emptied by tightening".into());
    let u_ctrl = u.pontryagin_diff(&kz)?.ok_or_else(empty)?;
    let u_sup = u_ctrl.pontryagin_diff(&kd)?.ok_or_else(empty)?;

    let mut terminal = Vec::with_capacity(2);
    for side in [Side::Top, Side::Bottom] {
        let sr = SafeReference::new(side, cfg.road_half_width, cfg.car_width, cfg.epsilon);
        let (lo, hi) = sr.band(cfg.road_half_width, cfg.car_width);
        let x_cons = state_constraints(lo, hi, cfg.ts)?;
        let set = compute_terminal_set(&model, &gain, &d_set, cfg.psi_bounds(), &sr, &x_cons, &u)?
            .ok_or_else(|| SynthesisError::Verification(format!("no robust terminal set on the {} side", side.as_str())))?;
        terminal.push(set);
    }
    let bottom = terminal.pop().expect("two sides");
    let top = terminal.pop().expect("two sides");
    Ok(Synthesis {
        config: *cfg,
        model,
        gain,
        d_set,
        w: zs.w,
        tubes: TubeSets { z: zs.z, x_terminal_top: top, x_terminal_bottom: bottom, u_tight_supervisor: u_sup, u_tight_controller: u_ctrl },
        mrpi_s: zs.s,
        mrpi_alpha: zs.alpha,
        z_slack: zs.slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_riccati() {
        let g = synthesize_gain(&Mat::<f64>::from_f64_rows(&[[0.5]]), &[1.0], &Mat::identity(1), 1.0).unwrap();
        // p² − (a² + (q−1)·…) : for a=½, b=q=r=1 the fixed point solves p² − ¼p − 1 = 0.
        let p = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let oracle_residual = |p: f64| 1.0 + 0.25 * p - (0.5 * p).powi(2) / (1.0 + p) - p;
        assert!(oracle_residual(p).abs() < 1e-14);
        assert!((g.p_weight[(0, 0)] - p).abs() < 1e-10);
        assert!(g.a_k[(0, 0)].abs() < 0.5);
        assert!((g.k_gain[0] + 0.5 * p / (1.0 + p)).abs() < 1e-10);
    }

    #[test]
    fn stabilizability_edge_cases() {
        let z = [0.0];
        assert_eq!(synthesize_gain(&Mat::<f64>::from_f64_rows(&[[1.5]]), &z, &Mat::identity(1), 1.0), Err(SynthesisError::NotStabilizable));
        let g = synthesize_gain(&Mat::<f64>::from_f64_rows(&[[0.5]]), &z, &Mat::identity(1), 1.0).unwrap();
        assert_eq!(g.k_gain, vec![0.0]);
        // Unstable mode the input cannot reach.
        let a = Mat::<f64>::from_f64_rows(&[[1.2, 0.0], [0.0, 0.5]]);
        assert!(synthesize_gain(&a, &[0.0, 1.0], &Mat::identity(2), 1.0).is_err());
    }

    #[test]
    fn vehicle_gain_is_stabilizing() {
        let m = DiscreteModel::<f64>::for_speed(10.0, 0.1).unwrap();
        let g = synthesize_gain(&m.a, &m.b, &Mat::identity(4), 0.1).unwrap();
        assert!(spectral_radius(&g.a_k) < 1.0);
        assert!(crate::linalg::cholesky(&g.p_weight).is_some());
    }

    #[test]
    fn z_for_deadbeat_loop() {
        let a_k = Mat::<f64>::zeros(2, 2);
        let d = Polytope::symmetric_box(&[0.1, 0.2]).unwrap();
        let zs = compute_z(&a_k, &d, None).unwrap();
        assert_eq!(zs.s, 1);
        // W = D here, so Z = W / (1 − α) with α = 0.
        for dir in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            let expect = d.support(&dir).unwrap() / (1.0 - zs.alpha);
            assert!((zs.z.support(&dir).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn z_scalar_closed_form() {
        let a_k = Mat::<f64>::from_f64_rows(&[[0.5]]);
        let d = Polytope::interval(-1.0, 1.0).unwrap();
        let zs = compute_z(&a_k, &d, None).unwrap();
        let (lo, hi) = zs.z.as_interval().unwrap();
        // Σ 0.5^i · 1.5 = 3
        let mrpi = 3.0;
        let margin = zs.alpha / (1.0 - zs.alpha) * mrpi;
        assert!(hi >= mrpi - 1e-12 && hi <= mrpi + margin + 1e-12);
        assert!(lo <= -mrpi + 1e-12 && lo >= -mrpi - margin - 1e-12);
        assert!(zs.slack >= -1e-7);
    }

    fn seg(r: f64) -> VPolytope<f64> {
        VPolytope::new(vec![vec![-r], vec![r]]).unwrap()
    }

    #[test]
    fn check_rpi_examples() {
        let zero = Polytope::<f64>::singleton(&[0.0]).unwrap();
        assert!(check_rpi(&zero, &Mat::from_f64_rows(&[[3.0]]), &zero.vertices().unwrap()).unwrap());
        let unit = Polytope::interval(-1.0, 1.0).unwrap();
        let w = seg(0.6);
        assert!(!check_rpi(&unit, &Mat::from_f64_rows(&[[0.5]]), &w).unwrap());
        let w = seg(0.5);
        assert!(check_rpi(&unit, &Mat::from_f64_rows(&[[0.5]]), &w).unwrap());
    }

    #[test]
    fn max_rpi_scalar_fixed_point() {
        let a = Mat::<f64>::from_f64_rows(&[[0.5]]);
        let q = Polytope::interval(-1.0, 1.0).unwrap();
        let w = seg(0.2);
        let omega = max_rpi(&a, &q, &w, 10).unwrap().unwrap();
        let (lo, hi) = omega.as_interval().unwrap();
        assert_eq!((lo, hi), (-1.0, 1.0));
        // Disturbance too large to be absorbed anywhere.
        let big = seg(0.6);
        let a1 = Mat::from_f64_rows(&[[1.0]]);
        assert!(max_rpi(&a1, &q, &big, 50).unwrap().is_none());
    }

    #[test]
    fn deadbeat_terminal_set_is_admissible_set() {
        // A = 0 after feedback, no disturbance, no curvature: Ω = Ω₀.
        let m = DiscreteModel { a: Mat::<f64>::zeros(2, 2), b: vec![0.0, 1.0], e: vec![0.0, 0.0], ts: 0.1 };
        let gain = GainSynthesis { k_gain: vec![0.0, 0.0], p_weight: Mat::identity(2), a_k: Mat::zeros(2, 2), iterations: 0 };
        let d = Polytope::singleton(&[0.0, 0.0]).unwrap();
        let sr = SafeReference { side: Side::Top, x_sr: vec![0.0, 0.0], epsilon: 0.0 };
        let x_cons = Polytope::symmetric_box(&[1.0, 2.0]).unwrap();
        let u = Polytope::interval(-1.0, 1.0).unwrap();
        let xn = compute_terminal_set(&m, &gain, &d, (0.0, 0.0), &sr, &x_cons, &u).unwrap().unwrap();
        assert!(xn.contains_set(&x_cons, 1e-12).unwrap() && x_cons.contains_set(&xn, 1e-12).unwrap());
    }

    #[test]
    fn safe_reference_geometry() {
        let top = SafeReference::<f64>::new(Side::Top, 8.0, 1.8, 0.5);
        assert!((top.x_sr[0] - 6.85).abs() < 1e-12);
        assert_eq!(top.band(8.0, 1.8), (6.6, 7.1));
        let bottom = SafeReference::<f64>::new(Side::Bottom, 8.0, 1.8, 0.5);
        assert!((bottom.x_sr[0] + 6.85).abs() < 1e-12);
        let (lo, hi) = bottom.band(8.0, 1.8);
        assert!((lo + 7.1).abs() < 1e-12 && (hi + 6.6).abs() < 1e-12);
    }
}
