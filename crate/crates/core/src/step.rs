//! Step-size control: geometric-tail truncation-error estimation, the basic
//! integral controller, the PI controller, the acceptance policy and the
//! discrete stability analyzer used to justify the gain choice.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::series::CoefficientBlock;

/// Floor applied to error values before logarithms/powers so that exactly
/// converged steps do not produce infinities.
pub const ERROR_FLOOR: f64 = 1e-300;

/// Step-controller parameters (tolerance, safety limits and PI gains).
#[derive(Debug, Clone, PartialEq)]
pub struct StepControllerConfig {
    /// Per-step error tolerance.
    pub tol: f64,
    /// Safety factor, typically in [0.85, 1].
    pub gamma: f64,
    /// Maximum step-size growth per step, typically in [1.25, 2].
    pub theta_max: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Per-variable scaling constants for the error index. A single entry is
    /// broadcast over all state variables. The value balances absolute and
    /// normalized error: a purely normalized index (eta near zero) rejects
    /// forever when a state sits at zero with a nonzero derivative, while a
    /// large floor loses scale invariance on states that oscillate around
    /// zero (per-unit machine slips), letting absolute errors ride the floor
    /// instead of contracting with the decaying amplitude. The default sits
    /// below typical slip amplitudes but above their zero-crossing noise.
    pub eta: Vec<f64>,
    /// K_I = ki_coeff / K.
    pub ki_coeff: f64,
    /// K_P = kp_coeff / K.
    pub kp_coeff: f64,
    /// A step is accepted iff e_n <= reject_factor * tol.
    pub reject_factor: f64,
}

impl Default for StepControllerConfig {
    fn default() -> Self {
        StepControllerConfig {
            tol: 1e-5,
            gamma: 1.0,
            theta_max: 2.0,
            h_min: 1e-4,
            h_max: 0.2,
            eta: vec![2e-4],
            ki_coeff: 0.3,
            kp_coeff: 0.4,
            reject_factor: 2.0,
        }
    }
}

impl StepControllerConfig {
    /// Scaling constant for state variable `i` (broadcasting a scalar eta).
    pub fn eta_for(&self, i: usize) -> f64 {
        if self.eta.len() == 1 {
            self.eta[0]
        } else {
            self.eta[i]
        }
    }
}

/// Per-trajectory controller memory: current step, current and previous
/// per-time errors.
#[derive(Debug, Clone, PartialEq)]
pub struct StepControllerState {
    pub h_n: f64,
    pub e_n: f64,
    pub e_prev: f64,
    pub step_index: usize,
    pub has_history: bool,
}

impl StepControllerState {
    pub fn new(h0: f64) -> Self {
        StepControllerState {
            h_n: h0,
            e_n: 0.0,
            e_prev: 0.0,
            step_index: 0,
            has_history: false,
        }
    }

    /// Shifts the error history after an accepted step.
    pub fn record(&mut self, e_n: f64) {
        self.e_prev = self.e_n;
        self.e_n = e_n;
        self.has_history = self.step_index >= 1;
        self.step_index += 1;
    }

    /// Forgets the error history (used after a network discontinuity).
    pub fn reset_history(&mut self, h0: f64) {
        self.h_n = h0;
        self.e_n = 0.0;
        self.e_prev = 0.0;
        self.has_history = false;
        self.step_index = 0;
    }
}

/// Convergence-radius estimate of a filled block:
/// `r = (max_i |X_i(K) h^K / (s_i + eta_i)|)^(1/K)` over the state rows,
/// where the scale `s_i` is the larger magnitude of the variable at the two
/// step endpoints. Using the larger endpoint keeps the index well defined
/// when a variable crosses zero inside the step (the start value alone would
/// make the scale collapse to `eta_i` exactly when the coefficients peak).
pub fn error_radius(block: &CoefficientBlock, x: &[f64], order: usize, h: f64, eta: &[f64]) -> f64 {
    debug_assert!(h > 0.0 && order >= 1 && order <= block.order);
    let eta_for = |i: usize| if eta.len() == 1 { eta[0] } else { eta[i] };
    let h_pow = h.powi(order as i32);
    let mut worst: f64 = 0.0;
    for i in 0..block.n_state {
        let num = (block.coeffs[i][order] * h_pow).abs();
        let end: f64 = block.coeffs[i][..=order]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * h + c);
        let den = x[i].abs().max(end.abs()) + eta_for(i);
        worst = worst.max(num / den);
    }
    if worst == 0.0 {
        0.0 // every top coefficient vanished: perfectly converged step
    } else {
        worst.powf(1.0 / order as f64)
    }
}

/// Geometric-tail truncation error `E = r^(K+1) / (1 - r)` and the per-time
/// error `e = E / h`. Fails when the tail does not converge (`r >= 1`).
pub fn truncation_error(r: f64, order: usize, h: f64) -> Result<(f64, f64)> {
    debug_assert!(h > 0.0);
    if r >= 1.0 {
        return Err(Error::ErrorSeriesDiverged { r });
    }
    let e_abs = r.powi(order as i32 + 1) / (1.0 - r);
    Ok((e_abs, e_abs / h))
}

/// Deadbeat step-growth factor from a known convergence radius: solves
/// `(theta r)^(K+1) / ((1 - theta r) theta h) = Tol` for `theta` (uncapped,
/// scaled by `gamma`). Unlike the plain `(Tol / e)^(1/K)` solve this keeps
/// the `1/(1 - theta r)` tail growth in the model; near `r ~ 0.5` the plain
/// solve under-predicts the landing error by ~1.5x, which consumes most of
/// the rejection margin.
pub fn deadbeat_theta(r: f64, order: usize, h: f64, cfg: &StepControllerConfig) -> f64 {
    debug_assert!(h > 0.0 && order >= 1);
    if r <= 0.0 {
        // Perfectly converged tail: any growth keeps the error at zero. The
        // caller's clamp turns this into the largest admissible step.
        return f64::INFINITY;
    }
    let k = order as f64;
    // Fixed point of theta = (Tol h (1 - theta r) / r^(K+1))^(1/K), seeded by
    // the plain geometric solve; theta enters only through the slowly varying
    // (1 - theta r) factor, so a few sweeps converge. The iterate is kept
    // inside the convergence disc.
    let base = cfg.tol * h / r.powi(order as i32 + 1);
    let mut theta = (base * (1.0 - r)).powf(1.0 / k).min(0.99 / r);
    for _ in 0..8 {
        theta = (base * (1.0 - theta * r)).powf(1.0 / k).min(0.99 / r);
    }
    cfg.gamma * theta
}

/// Inverse of [`truncation_error`]: the radius whose geometric tail at the
/// given order produces the absolute error `e_abs`. Solves
/// `r^(K+1) / (1 - r) = e_abs` by fixed point, clamped inside `[0, 1)`.
pub fn radius_from_error(e_abs: f64, order: usize) -> f64 {
    if e_abs <= 0.0 {
        return 0.0;
    }
    let p = 1.0 / (order as f64 + 1.0);
    let mut r = e_abs.powf(p).min(0.99);
    for _ in 0..8 {
        r = (e_abs * (1.0 - r)).powf(p).min(0.99);
    }
    r
}

/// Basic (integral) controller:
/// `theta = min(gamma (Tol / e)^(1/K), theta_max)`, clamped to `[h_min, h_max]`.
pub fn basic_step(e_n: f64, order: usize, h_n: f64, cfg: &StepControllerConfig) -> f64 {
    let e = e_n.max(ERROR_FLOOR);
    let theta = (cfg.gamma * (cfg.tol / e).powf(1.0 / order as f64)).min(cfg.theta_max);
    (theta * h_n).clamp(cfg.h_min, cfg.h_max)
}

/// PI controller:
/// `h_next = h (gamma^K Tol / e_n)^(K_I) (e_prev / e_n)^(K_P)`, growth capped
/// at `theta_max` and the result clamped to `[h_min, h_max]`.
///
/// Falls back to [`basic_step`] when no error history exists yet.
pub fn pi_step(
    e_n: f64,
    e_prev: f64,
    has_history: bool,
    order: usize,
    h_n: f64,
    cfg: &StepControllerConfig,
) -> f64 {
    if !has_history {
        return basic_step(e_n, order, h_n, cfg);
    }
    let e = e_n.max(ERROR_FLOOR);
    let ep = e_prev.max(ERROR_FLOOR);
    let k = order as f64;
    let ki = cfg.ki_coeff / k;
    let kp = cfg.kp_coeff / k;
    let ratio = (cfg.gamma.powf(k) * cfg.tol / e).powf(ki) * (ep / e).powf(kp);
    let ratio = ratio.min(cfg.theta_max);
    (ratio * h_n).clamp(cfg.h_min, cfg.h_max)
}

/// Whether a step with per-time error `e_n` is accepted (`e_n <= kappa Tol`,
/// boundary inclusive).
pub fn accept_step(e_n: f64, cfg: &StepControllerConfig) -> bool {
    e_n <= cfg.reject_factor * cfg.tol
}

/// Which characteristic equation of the closed step-control loop to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharVariant {
    /// Full-series error estimate: `l^2 - (K a - 1) l - K b = 0`.
    FullSeries,
    /// Last-term error estimate: `l^2 - (K a - 1 - a) l - (K - 1) b = 0`.
    LastTerm,
}

/// Roots of the controller characteristic equation for given gains.
/// `alpha = K_I + K_P`, `beta = K_P`; the loop contracts iff both moduli < 1.
pub fn char_roots(order: usize, ki: f64, kp: f64, variant: CharVariant) -> (Complex64, Complex64) {
    let k = order as f64;
    let alpha = ki + kp;
    let beta = kp;
    let (b, c) = match variant {
        CharVariant::FullSeries => (-(k * alpha - 1.0), -k * beta),
        CharVariant::LastTerm => (-(k * alpha - 1.0 - alpha), -(k - 1.0) * beta),
    };
    // l^2 + b l + c = 0
    let disc = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
    let l1 = (Complex64::new(-b, 0.0) + disc) / 2.0;
    let l2 = (Complex64::new(-b, 0.0) - disc) / 2.0;
    (l1, l2)
}

/// One evaluation point of the discrete closed-loop stability analysis on the
/// Dahlquist test equation: the stability polynomial `D`, the error monomial
/// `E`, their logarithmic derivatives `u`, `v` and the 4x4 loop Jacobian.
#[derive(Debug, Clone)]
pub struct StabilityProbe {
    pub order: usize,
    pub alpha: f64,
    pub beta: f64,
    pub z: Complex64,
    pub d_of_z: Complex64,
    pub e_of_z: Complex64,
    pub u: f64,
    pub v: f64,
}

impl StabilityProbe {
    pub fn new(z: Complex64, order: usize, alpha: f64, beta: f64) -> Result<Self> {
        // D(z) = sum z^p / p!, D'(z) = sum_{p>=1} z^{p-1}/(p-1)!
        let mut d = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for p in 0..=order {
            d += term;
            if p < order {
                dp += term; // derivative term for power p+1 equals z^p/p!
                term *= z / (p as f64 + 1.0);
            }
        }
        if d.norm() == 0.0 {
            return Err(Error::ProbePole(z));
        }
        let mut fact = 1.0;
        for p in 1..=order {
            fact *= p as f64;
        }
        let e = z.powu(order as u32) / fact;
        let u = (dp * z / d).re;
        // E'(z) z / E(z) = K exactly for the monomial error model.
        let v = order as f64;
        Ok(StabilityProbe {
            order,
            alpha,
            beta,
            z,
            d_of_z: d,
            e_of_z: e,
            u,
            v,
        })
    }

    /// Spectral radius of the 4x4 closed-loop Jacobian.
    pub fn spectral_radius(&self) -> f64 {
        let (a, b, u, v) = (self.alpha, self.beta, self.u, self.v);
        let m = nalgebra::Matrix4::new(
            1.0, u, 0.0, 0.0, //
            -a, 1.0 - a * v, b, b * v, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        );
        m.complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }
}

/// Spectral radius of the closed-loop Jacobian at one `z = lambda h` point.
pub fn pi_jacobian_radius(z: Complex64, order: usize, alpha: f64, beta: f64) -> Result<f64> {
    Ok(StabilityProbe::new(z, order, alpha, beta)?.spectral_radius())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn block_with_top(coeffs_top: &[f64], order: usize) -> CoefficientBlock {
        let mut block = CoefficientBlock::zeros(order, coeffs_top.len(), coeffs_top.len());
        for (i, &c) in coeffs_top.iter().enumerate() {
            block.coeffs[i][order] = c;
        }
        block
    }

    #[test]
    fn error_radius_single_variable() {
        // X(4) = 2, h = 0.1, x = 1, eta = 0: r = (2e-4)^{1/4}.
        let block = block_with_top(&[2.0], 4);
        let r = error_radius(&block, &[1.0], 4, 0.1, &[0.0]);
        assert_relative_eq!(r, (2e-4f64).powf(0.25), max_relative = 1e-14);
        assert_relative_eq!(r, 0.118920711, max_relative = 1e-8);
    }

    #[test]
    fn error_radius_zero_coefficients() {
        let block = block_with_top(&[0.0, 0.0], 3);
        assert_eq!(error_radius(&block, &[1.0, 1.0], 3, 0.1, &[0.0]), 0.0);
    }

    #[test]
    fn error_radius_takes_worst_row() {
        // X(3) = {1, -10}, h = 0.1, x = {1, 1}: r = (10 * 1e-3)^{1/3}.
        let block = block_with_top(&[1.0, -10.0], 3);
        let r = error_radius(&block, &[1.0, 1.0], 3, 0.1, &[0.0]);
        assert_relative_eq!(r, 0.01f64.powf(1.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(r, 0.215443469, max_relative = 1e-8);
    }

    #[test]
    fn truncation_error_geometric_sum() {
        let (e_abs, e) = truncation_error(0.5, 3, 0.1).unwrap();
        assert_relative_eq!(e_abs, 0.125, max_relative = 1e-15);
        assert_relative_eq!(e, 1.25, max_relative = 1e-15);
    }

    #[test]
    fn truncation_error_converged() {
        let (e_abs, e) = truncation_error(0.0, 7, 0.05).unwrap();
        assert_eq!((e_abs, e), (0.0, 0.0));
    }

    #[test]
    fn truncation_error_diverges_at_unit_radius() {
        assert!(matches!(
            truncation_error(1.0, 4, 0.1),
            Err(Error::ErrorSeriesDiverged { .. })
        ));
    }

    fn cfg() -> StepControllerConfig {
        StepControllerConfig {
            tol: 1e-5,
            gamma: 1.0,
            theta_max: 2.0,
            h_min: 1e-6,
            h_max: 10.0,
            ..Default::default()
        }
    }

    #[test]
    fn basic_step_fixed_point() {
        let c = cfg();
        assert_relative_eq!(basic_step(c.tol, 6, 0.1, &c), 0.1, max_relative = 1e-14);
    }

    #[test]
    fn basic_step_growth_hits_gain_cap() {
        let c = cfg();
        let k = 5;
        let e = c.tol / 2f64.powi(k as i32);
        assert_relative_eq!(basic_step(e, k, 0.1, &c), 0.2, max_relative = 1e-13);
    }

    #[test]
    fn basic_step_halves_on_large_error() {
        let c = cfg();
        let k = 5;
        let e = c.tol * 2f64.powi(k as i32);
        assert_relative_eq!(basic_step(e, k, 0.1, &c), 0.05, max_relative = 1e-13);
    }

    #[test]
    fn pi_step_fixed_point() {
        let mut c = cfg();
        c.gamma = 0.95;
        let e_star = c.gamma.powi(10) * c.tol;
        let h = pi_step(e_star, e_star, true, 10, 0.1, &c);
        assert_relative_eq!(h, 0.1, max_relative = 1e-13);
    }

    #[test]
    fn pi_step_direct_evaluation() {
        // K=10, gamma=1, e_n = Tol/2, e_prev = Tol: factor 2^{0.03} * 2^{0.04}.
        let c = cfg();
        let h = pi_step(c.tol / 2.0, c.tol, true, 10, 1.0, &c);
        assert_relative_eq!(h, 2f64.powf(0.07), max_relative = 1e-13);
        assert_relative_eq!(h, 1.0497167, max_relative = 1e-6);
    }

    #[test]
    fn pi_step_without_history_delegates_to_basic() {
        let c = cfg();
        let e = 3.7e-4;
        assert_eq!(pi_step(e, 0.0, false, 7, 0.02, &c), basic_step(e, 7, 0.02, &c));
    }

    #[test]
    fn acceptance_boundary_is_inclusive() {
        let c = cfg();
        assert!(accept_step(c.tol, &c));
        assert!(accept_step(2.0 * c.tol, &c));
        assert!(!accept_step(3.0 * c.tol, &c));
    }

    #[test]
    fn char_roots_paper_gains_full_series() {
        for k in 4..=45 {
            let (r1, r2) = char_roots(k, 0.3 / k as f64, 0.4 / k as f64, CharVariant::FullSeries);
            let mut roots = [r1, r2];
            roots.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
            assert_abs_diff_eq!(roots[0].re, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(roots[0].im, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(roots[1].re, -0.8, epsilon = 1e-12);
        }
    }

    #[test]
    fn char_roots_integral_controller_is_deadbeat() {
        let (r1, r2) = char_roots(12, 1.0 / 12.0, 0.0, CharVariant::FullSeries);
        assert_abs_diff_eq!(r1.norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r2.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn char_roots_last_term_variant() {
        let (r1, r2) = char_roots(10, 0.03, 0.04, CharVariant::LastTerm);
        let mut roots = [r1, r2];
        roots.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
        // quadratic l^2 + 0.37 l - 0.36
        assert_abs_diff_eq!(roots[0].re, 0.4428734, epsilon = 1e-6);
        assert_abs_diff_eq!(roots[1].re, -0.8128734, epsilon = 1e-6);
    }

    #[test]
    fn probe_v_equals_order() {
        let p = StabilityProbe::new(Complex64::new(-0.7, 1.3), 9, 0.05, 0.03).unwrap();
        assert_eq!(p.v, 9.0);
    }

    #[test]
    fn probe_u_at_origin_is_zero() {
        let p = StabilityProbe::new(Complex64::new(0.0, 0.0), 6, 0.05, 0.03).unwrap();
        assert_abs_diff_eq!(p.u, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn probe_u_hand_value() {
        // z = -1, K = 4: D = 0.375, D' = 1/3, u = (1/3)(-1)/0.375 = -8/9.
        let p = StabilityProbe::new(Complex64::new(-1.0, 0.0), 4, 0.05, 0.03).unwrap();
        assert_relative_eq!(p.d_of_z.re, 0.375, max_relative = 1e-14);
        assert_relative_eq!(p.u, -8.0 / 9.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn controller_is_scale_invariant(scale in 1e-6f64..1e6,
                                         e_n in 1e-12f64..1e-2,
                                         e_prev in 1e-12f64..1e-2,
                                         k in 4usize..45) {
            let base = cfg();
            let mut scaled = base.clone();
            scaled.tol *= scale;
            let h0 = 0.05;
            let hb1 = basic_step(e_n, k, h0, &base);
            let hb2 = basic_step(e_n * scale, k, h0, &scaled);
            prop_assert!((hb1 / hb2 - 1.0).abs() < 1e-12);
            let hp1 = pi_step(e_n, e_prev, true, k, h0, &base);
            let hp2 = pi_step(e_n * scale, e_prev * scale, true, k, h0, &scaled);
            prop_assert!((hp1 / hp2 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn basic_step_respects_bounds(e_n in 1e-30f64..1.0, k in 1usize..46, h in 1e-6f64..10.0) {
            let c = cfg();
            let out = basic_step(e_n, k, h, &c);
            prop_assert!(out <= (c.theta_max * h).max(c.h_min));
            prop_assert!(out >= c.h_min && out <= c.h_max);
        }

        #[test]
        fn truncation_error_monotone_in_radius(r1 in 0.0f64..0.99, dr in 1e-6f64..0.009, k in 1usize..46) {
            let r2 = (r1 + dr).min(0.999);
            let (e1, _) = truncation_error(r1, k, 0.1).unwrap();
            let (e2, _) = truncation_error(r2, k, 0.1).unwrap();
            prop_assert!(e2 > e1 || (e1 == 0.0 && r1 == 0.0 && e2 > 0.0));
        }

        #[test]
        fn pi_with_integral_gains_reduces_to_basic(e_n in 1e-12f64..1e-2, h in 1e-4f64..1.0, k in 4usize..45) {
            let mut c = cfg();
            c.ki_coeff = 1.0;
            c.kp_coeff = 0.0;
            c.gamma = 0.9;
            let hb = basic_step(e_n, k, h, &c);
            let hp = pi_step(e_n, 123.0 * e_n, true, k, h, &c);
            prop_assert!((hb - hp).abs() <= 1e-12 * hb.abs().max(1.0));
        }
    }
}
