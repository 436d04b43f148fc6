//! Power-series coefficient containers and the arithmetic rules shared by
//! every model lifting: Cauchy products, the coupled sine/cosine pair, the
//! square-root recursion and Horner evaluation.
//!
//! A series is a slice of Taylor coefficients `[a(0), a(1), ..]` of some
//! scalar trajectory about the current step start, so `a(t) = sum a(k) t^k`.

use crate::error::{Error, Result};

/// Per-step coefficient arrays for every variable of an augmented system.
///
/// Rows are variables, state rows first (`0..n_state`), intermediate rows
/// after them. Each row holds the coefficients of orders `0..=order`,
/// contiguously, so convolutions over one variable never touch another row.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock {
    /// Truncation order K of the step.
    pub order: usize,
    /// Number of state variables (N_x).
    pub n_state: usize,
    /// Total number of augmented variables (N_z = N_x + number of intermediates).
    pub n_aug: usize,
    /// `coeffs[row][k]` is the order-k coefficient of variable `row`.
    pub coeffs: Vec<Vec<f64>>,
}

impl CoefficientBlock {
    pub fn zeros(order: usize, n_state: usize, n_aug: usize) -> Self {
        CoefficientBlock {
            order,
            n_state,
            n_aug,
            coeffs: vec![vec![0.0; order + 1]; n_aug],
        }
    }

    /// Coefficient row of one variable through the block order.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.coeffs[row]
    }

    /// True when every entry (state and intermediate) is finite.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| c.is_finite())
    }
}

/// Order-k coefficient of the product series `U * V` (Cauchy product).
pub fn conv_product(u: &[f64], v: &[f64], k: usize) -> f64 {
    debug_assert!(u.len() > k && v.len() > k);
    (0..=k).map(|m| u[m] * v[k - m]).sum()
}

/// Order-k coefficients of the coupled sine/cosine pair of an angle series.
///
/// With `S = sin(delta(t))` and `C = cos(delta(t))`:
///   S(k) =  (1/k) sum_{m=1..k} m delta(m) C(k-m)
///   C(k) = -(1/k) sum_{m=1..k} m delta(m) S(k-m)
/// seeded at order zero by `S(0) = sin delta(0)`, `C(0) = cos delta(0)`.
/// Requires `k >= 1`; `s` and `c` must be filled through order `k - 1`.
pub fn dt_sincos(delta: &[f64], s: &[f64], c: &[f64], k: usize) -> (f64, f64) {
    debug_assert!(k >= 1);
    debug_assert!(delta.len() > k && s.len() >= k && c.len() >= k);
    let mut sk = 0.0;
    let mut ck = 0.0;
    for m in 1..=k {
        let md = m as f64 * delta[m];
        sk += md * c[k - m];
        ck -= md * s[k - m];
    }
    (sk / k as f64, ck / k as f64)
}

/// Order-k coefficient of `V = sqrt(W)`, solved from `V * V = W`:
///   V(0) = sqrt(W(0))
///   V(k) = (W(k) - sum_{m=1..k-1} V(m) V(k-m)) / (2 V(0))
/// Requires `k >= 1` and `v` filled through order `k - 1` with `v[0] != 0`.
pub fn dt_sqrt(w: &[f64], v: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1);
    let mut acc = w[k];
    for m in 1..k {
        acc -= v[m] * v[k - m];
    }
    acc / (2.0 * v[0])
}

/// Evaluates the state rows of a block at step length `h` by Horner's scheme.
///
/// Returns `x_i(h) = sum_k X_i(k) h^k` for each state row. Intermediate rows
/// are not evaluated. A non-finite coefficient signals a diverged step.
pub fn series_eval(block: &CoefficientBlock, h: f64) -> Result<Vec<f64>> {
    debug_assert!(h >= 0.0);
    let mut out = Vec::with_capacity(block.n_state);
    for (row, coeffs) in block.coeffs[..block.n_state].iter().enumerate() {
        out.push(eval_row(coeffs, h).map_err(|order| Error::StepDiverged { row, order })?);
    }
    Ok(out)
}

/// Evaluates one row of a block (state or intermediate) at step length `h`.
pub fn eval_row_at(block: &CoefficientBlock, row: usize, h: f64) -> Result<f64> {
    eval_row(&block.coeffs[row], h).map_err(|order| Error::StepDiverged { row, order })
}

/// Horner evaluation of a single coefficient row at `h`.
pub(crate) fn eval_row(coeffs: &[f64], h: f64) -> std::result::Result<f64, usize> {
    let mut acc = 0.0;
    for (k, &c) in coeffs.iter().enumerate().rev() {
        if !c.is_finite() {
            return Err(k);
        }
        acc = acc * h + c;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn eval_at_zero_returns_leading_coefficient() {
        let mut block = CoefficientBlock::zeros(3, 1, 1);
        block.coeffs[0] = vec![1.0, 2.0, 2.0, 4.0 / 3.0];
        assert_eq!(series_eval(&block, 0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn eval_dahlquist_truncated_exponential() {
        // Dahlquist lambda = 2, x0 = 1, K = 3: x(h) = truncated Taylor of e^{2h}.
        let mut block = CoefficientBlock::zeros(3, 1, 1);
        block.coeffs[0] = vec![1.0, 2.0, 2.0, 4.0 / 3.0];
        let x = series_eval(&block, 0.1).unwrap();
        // Hand sum: 1 + 0.2 + 0.02 + 4/3 * 1e-3.
        assert_relative_eq!(x[0], 1.2213333333333333, max_relative = 1e-15);
    }

    #[test]
    fn eval_constant_series() {
        let mut block = CoefficientBlock::zeros(2, 1, 1);
        block.coeffs[0] = vec![5.0, 0.0, 0.0];
        for h in [0.0, 0.3, 2.0] {
            assert_eq!(series_eval(&block, h).unwrap(), vec![5.0]);
        }
    }

    #[test]
    fn eval_rejects_non_finite_coefficient() {
        let mut block = CoefficientBlock::zeros(2, 1, 1);
        block.coeffs[0] = vec![1.0, f64::NAN, 0.0];
        assert!(matches!(
            series_eval(&block, 0.1),
            Err(Error::StepDiverged { row: 0, order: 1 })
        ));
    }

    #[test]
    fn conv_polynomial_product() {
        // (1 + t)(1 + 2t) = 1 + 3t + 2t^2.
        let u = [1.0, 1.0, 0.0];
        let v = [1.0, 2.0, 0.0];
        assert_eq!(conv_product(&u, &v, 1), 3.0);
        assert_eq!(conv_product(&u, &v, 2), 2.0);
    }

    #[test]
    fn conv_sin_cos_product() {
        // sin(t) * cos(t) = sin(2t)/2, whose t^3 coefficient is -(2)^3/(2*3!) = -2/3.
        let s = [0.0, 1.0, 0.0, -1.0 / 6.0];
        let c = [1.0, 0.0, -0.5, 0.0];
        assert_relative_eq!(conv_product(&s, &c, 3), -2.0 / 3.0, max_relative = 1e-15);
    }

    fn sincos_series(delta: &[f64], orders: usize) -> (Vec<f64>, Vec<f64>) {
        let mut s = vec![delta[0].sin()];
        let mut c = vec![delta[0].cos()];
        for k in 1..=orders {
            let (sk, ck) = dt_sincos(delta, &s, &c, k);
            s.push(sk);
            c.push(ck);
        }
        (s, c)
    }

    #[test]
    fn sincos_identity_angle() {
        // delta(t) = t: plain Taylor series of sin and cos.
        let delta = [0.0, 1.0, 0.0, 0.0];
        let (s, c) = sincos_series(&delta, 3);
        assert_eq!(s[1], 1.0);
        assert_eq!(c[1], 0.0);
        assert_relative_eq!(s[3], -1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(c[2], -0.5, max_relative = 1e-15);
    }

    #[test]
    fn sincos_shifted_angle() {
        // delta(t) = pi/2 + t: sin'(pi/2) = cos(pi/2) = 0, cos'(pi/2) = -1.
        let delta = [std::f64::consts::FRAC_PI_2, 1.0];
        let (s, c) = sincos_series(&delta, 1);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(c[1], -1.0, epsilon = 1e-16);
    }

    #[test]
    fn sqrt_recovers_known_series() {
        // W(t) = (1 + t)^2 = 1 + 2t + t^2, so sqrt is exactly 1 + t.
        let w = [1.0, 2.0, 1.0, 0.0, 0.0];
        let mut v = vec![1.0];
        for k in 1..=4 {
            v.push(dt_sqrt(&w, &v, k));
        }
        assert_relative_eq!(v[1], 1.0, max_relative = 1e-15);
        for &vk in &v[2..] {
            assert_abs_diff_eq!(vk, 0.0, epsilon = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn conv_is_symmetric(u in prop::collection::vec(-10.0f64..10.0, 13),
                             v in prop::collection::vec(-10.0f64..10.0, 13),
                             k in 0usize..13) {
            // The two sums run over the same terms in opposite order, so they
            // agree up to floating-point reassociation.
            let a = conv_product(&u, &v, k);
            let b = conv_product(&v, &u, k);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn pythagorean_identity_holds_per_order(delta in prop::collection::vec(-2.0f64..2.0, 13)) {
            let (s, c) = sincos_series(&delta, 12);
            for k in 0..=12 {
                let lhs = conv_product(&s, &s, k) + conv_product(&c, &c, k);
                let expect = if k == 0 { 1.0 } else { 0.0 };
                prop_assert!((lhs - expect).abs() < 1e-12, "k={} lhs={}", k, lhs);
            }
        }

        #[test]
        fn horner_matches_naive_powers(coeffs in prop::collection::vec(-1.0f64..1.0, 46),
                                       h in -1.0f64..1.0) {
            let horner = {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() { acc = acc * h + c; }
                acc
            };
            let naive: f64 = coeffs.iter().enumerate()
                .map(|(k, &c)| c * h.powi(k as i32))
                .sum();
            let scale = naive.abs().max(1.0);
            prop_assert!((horner - naive).abs() <= 1e-13 * scale);
        }

        #[test]
        fn eval_at_zero_is_exact(x0 in -1e6f64..1e6) {
            let mut block = CoefficientBlock::zeros(5, 1, 1);
            block.coeffs[0][0] = x0;
            block.coeffs[0][3] = 42.0;
            prop_assert_eq!(series_eval(&block, 0.0).unwrap()[0], x0);
        }
    }
}
