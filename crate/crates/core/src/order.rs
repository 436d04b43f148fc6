//! Order control: per-step multiplication-count models, candidate generation
//! for decreasing/increasing the series order and the three-way operating
//! point selection that maximizes step length per multiplication.

use crate::engine::{AugmentedSystemSpec, RuleKind};
use crate::series::CoefficientBlock;
use crate::step::{StepControllerConfig, ERROR_FLOOR};

/// Quadratic-in-order multiplication count `C(K) = N1 K^2 + N2 K + N3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityModel {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

impl ComplexityModel {
    /// Closed-form count for the classical (swing-only) multi-machine model.
    pub fn classical(n_gen: usize, n_x: usize, n_z: usize) -> Self {
        let (g, x, z) = (n_gen as f64, n_x as f64, n_z as f64);
        ComplexityModel {
            n1: 2.0 * g,
            n2: 2.0 * g + 4.0 * g * g + x * z + x,
            n3: x,
        }
    }

    /// Closed-form count for the detailed machine + controller model.
    pub fn detailed(n_gen: usize, n_x: usize, n_z: usize) -> Self {
        let (g, x, z) = (n_gen as f64, n_x as f64, n_z as f64);
        ComplexityModel {
            n1: 17.0 * g / 2.0,
            n2: 4.0 * g * g + 27.0 * g / 2.0 + x * z + x,
            n3: x,
        }
    }

    /// Counts the multiplications actually performed by the registered rules
    /// of a spec, for model types that match neither closed form.
    ///
    /// Each rule contributes an affine per-order cost `a k + b`; summing over
    /// orders 0..=K plus the `J Z(k)` products and the Horner evaluation gives
    /// a quadratic in K.
    pub fn measured(spec: &AugmentedSystemSpec) -> Self {
        let mut a_sum = 0.0;
        let mut b_sum = 0.0;
        for rule in &spec.rules {
            let (a, b): (f64, f64) = match &rule.kind {
                RuleKind::Constant(_) => (0.0, 0.0),
                // m * delta(m) * partner(k - m): two products per term
                RuleKind::SinOf { .. } | RuleKind::CosOf { .. } => (2.0, 0.0),
                // k + 1 products per order
                RuleKind::Product(_, _) => (1.0, 1.0),
                RuleKind::Linear(terms) => (0.0, terms.len() as f64),
                // k - 1 interior products plus the division by 2 V(0)
                RuleKind::SqrtOf(_) => (1.0, 1.0),
            };
            a_sum += a;
            b_sum += b;
        }
        let nnz = spec.j_nnz() as f64;
        let n_x = spec.n_state as f64;
        // sum over k of (a k + b) = a K(K+1)/2 + b(K+1); J costs nnz per
        // recursion order (K of them); Horner costs K per state row.
        ComplexityModel {
            n1: a_sum / 2.0,
            n2: a_sum / 2.0 + b_sum + nnz + n_x,
            n3: b_sum,
        }
    }

    /// Multiplication count at order `k`.
    pub fn complexity(&self, k: usize) -> f64 {
        let k = k as f64;
        self.n1 * k * k + self.n2 * k + self.n3
    }
}

/// Order-selection parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderControllerConfig {
    pub k0: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Switching threshold for decreasing the order (>= 1).
    pub mu_de: f64,
    /// Switching threshold for increasing the order (>= mu_de).
    pub mu_in: f64,
    /// Order decrement candidate distance.
    pub dk_dec: usize,
    /// Order increment candidate distance.
    pub dk_inc: usize,
}

impl Default for OrderControllerConfig {
    fn default() -> Self {
        OrderControllerConfig {
            k0: 4,
            k_min: 4,
            k_max: 45,
            mu_de: 1.0,
            mu_in: 1.02,
            dk_dec: 1,
            dk_inc: 1,
        }
    }
}

/// Which branch produced the selected (h, K) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Decreased,
    Held,
    Increased,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Decreased => "decreased",
            Provenance::Held => "held",
            Provenance::Increased => "increased",
        })
    }
}

/// A step-size/order pair proposed for the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub h: f64,
    pub order: usize,
    pub provenance: Provenance,
}

/// Lower-order candidate `(h_de, K_de, e_de)` built from the exactly known
/// coefficient `X(K_de)` of the current block. `None` when `K_de < K_min`.
pub fn decrease_candidate(
    block: &CoefficientBlock,
    x: &[f64],
    h_n: f64,
    k_n: usize,
    cfg: &OrderControllerConfig,
    step_cfg: &StepControllerConfig,
) -> Option<(f64, usize, f64)> {
    let k_de = k_n.checked_sub(cfg.dk_dec)?;
    if k_de < cfg.k_min || k_de == 0 {
        return None;
    }
    // Worst radius over the last two retained orders: a single top
    // coefficient can sit near a zero of an oscillatory coefficient pattern
    // and make the lower order look spuriously cheap.
    let mut r_de = crate::step::error_radius(block, x, k_de, h_n, &step_cfg.eta);
    if k_de >= 2 {
        r_de = r_de.max(crate::step::error_radius(block, x, k_de - 1, h_n, &step_cfg.eta));
    }
    let e_de = if r_de >= 1.0 {
        f64::INFINITY // non-competitive candidate
    } else {
        r_de.powi(k_de as i32 + 1) / ((1.0 - r_de) * h_n)
    };
    // The growth factor is deliberately left uncapped here: the candidates
    // are compared on their merit and the per-step growth limiter is applied
    // to whichever pair the selection picks, so artificial ties between
    // saturated candidates cannot bias the choice toward a lower order.
    let theta_de = crate::step::deadbeat_theta(r_de, k_de, h_n, step_cfg);
    let h_de = (theta_de * h_n).clamp(step_cfg.h_min, step_cfg.h_max);
    Some((h_de, k_de, e_de))
}

/// Higher-order candidate `(h_in, K_in)` estimated through the convergence
/// rate factor of the last few coefficients. `None` when `K_in > K_max` or
/// the block is too short for the ratios.
pub fn increase_candidate(
    block: &CoefficientBlock,
    e_n: f64,
    h_n: f64,
    k_n: usize,
    cfg: &OrderControllerConfig,
    step_cfg: &StepControllerConfig,
) -> Option<(f64, usize)> {
    let k_in = k_n + cfg.dk_inc;
    if k_in > cfg.k_max || k_n < 3 {
        return None;
    }
    // Convergence-rate factor from ratios of step-scaled coefficients
    // X(k) h^k: the per-order decay of the series tail contribution, so the
    // error candidate at order K + dK is e_n / rho^dK.
    let ratio_at = |num_order: usize, den_order: usize| -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..block.n_state {
            let den = block.coeffs[i][den_order].abs().max(1e-300);
            worst = worst.max(block.coeffs[i][num_order].abs() / den);
        }
        worst * h_n.powi(num_order as i32 - den_order as i32)
    };
    let term1 = ratio_at(k_n - 1, k_n);
    let term2 = ratio_at(k_n - 2, k_n).sqrt().max(ratio_at(k_n - 3, k_n - 1).sqrt());
    let rho_in = term1.min(term2).max(ERROR_FLOOR);
    let e_in = (e_n / rho_in.powi(cfg.dk_inc as i32)).max(ERROR_FLOOR);
    // Uncapped growth factor, same rationale as in `decrease_candidate`.
    let r_in = crate::step::radius_from_error(e_in * h_n, k_in);
    let theta_in = crate::step::deadbeat_theta(r_in, k_in, h_n, step_cfg);
    let h_in = (theta_in * h_n).clamp(step_cfg.h_min, step_cfg.h_max);
    Some((h_in, k_in))
}

/// Previous-step history used to evaluate the switching conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderHistory {
    pub h_prev: f64,
    pub k_prev: usize,
}

/// Three-way operating-point selection.
///
/// With both switching conditions satisfied and both candidates in bounds,
/// picks the argmax of `h / C(K)` over the candidate set (ties broken toward
/// the lower order); otherwise applies the one-sided threshold tests with
/// `mu_de` / `mu_in`.
#[allow(clippy::too_many_arguments)]
pub fn select_operating_point(
    cand_de: Option<(f64, usize, f64)>,
    h_es: f64,
    k_n: usize,
    cand_in: Option<(f64, usize)>,
    history: Option<OrderHistory>,
    h_n: f64,
    model: &ComplexityModel,
    cfg: &OrderControllerConfig,
) -> OperatingPoint {
    let held = OperatingPoint {
        h: h_es,
        order: k_n,
        provenance: Provenance::Held,
    };
    let Some(hist) = history else {
        return held;
    };
    let cond_decrease = hist.h_prev <= h_n || k_n <= hist.k_prev;
    let cond_increase = h_n <= hist.h_prev || hist.k_prev <= k_n;
    let objective = |h: f64, k: usize| h / model.complexity(k);

    if cond_decrease && cond_increase {
        if let (Some((h_de, k_de, _)), Some((h_in, k_in))) = (cand_de, cand_in) {
            // Situation 3: unconstrained argmax with mu's treated as 1.
            let mut best = OperatingPoint {
                h: h_de,
                order: k_de,
                provenance: Provenance::Decreased,
            };
            for cand in [
                held,
                OperatingPoint {
                    h: h_in,
                    order: k_in,
                    provenance: Provenance::Increased,
                },
            ] {
                let better = objective(cand.h, cand.order) > objective(best.h, best.order);
                let tie_lower = objective(cand.h, cand.order) == objective(best.h, best.order)
                    && cand.order < best.order;
                if better || tie_lower {
                    best = cand;
                }
            }
            return best;
        }
    }
    if cond_decrease {
        if let Some((h_de, k_de, _)) = cand_de {
            if objective(h_de, k_de) > cfg.mu_de * objective(h_es, k_n) {
                return OperatingPoint {
                    h: h_de,
                    order: k_de,
                    provenance: Provenance::Decreased,
                };
            }
        }
    }
    if cond_increase {
        if let Some((h_in, k_in)) = cand_in {
            if objective(h_in, k_in) > cfg.mu_in * objective(h_es, k_n) {
                return OperatingPoint {
                    h: h_in,
                    order: k_in,
                    provenance: Provenance::Increased,
                };
            }
        }
    }
    held
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn classical_complexity_example() {
        // N_g = 3, N_x = 6, N_z = 12, K = 10:
        // 2*3*100 + (6 + 36 + 72 + 6)*10 + 6 = 1806.
        let m = ComplexityModel::classical(3, 6, 12);
        assert_eq!(m.complexity(10), 1806.0);
    }

    #[test]
    fn detailed_complexity_example() {
        // N_g = 1, N_x = 13, N_z = 20, K = 10:
        // 8.5*100 + (4 + 13.5 + 260 + 13)*10 + 13 = 3768.
        let m = ComplexityModel::detailed(1, 13, 20);
        assert_eq!(m.complexity(10), 3768.0);
    }

    #[test]
    fn complexity_constant_term() {
        let m = ComplexityModel::classical(3, 6, 12);
        assert_eq!(m.complexity(0), 6.0);
        let m = ComplexityModel::detailed(2, 26, 40);
        assert_eq!(m.complexity(0), 26.0);
    }

    fn step_cfg() -> StepControllerConfig {
        StepControllerConfig {
            tol: 1e-5,
            gamma: 1.0,
            theta_max: 2.0,
            h_min: 1e-4,
            h_max: 0.2,
            eta: vec![0.0],
            ..Default::default()
        }
    }

    fn order_cfg() -> OrderControllerConfig {
        OrderControllerConfig::default()
    }

    #[test]
    fn decrease_candidate_chained_example() {
        // K_n = 10, dK = 1, |X(9)| h^9 / |x| = 1e-9, h = 0.1, Tol = 1e-5:
        // r_de = 0.1, e_de = 1e-10 / (0.9 * 0.1), theta capped at 2, h_de = 0.2.
        let k_n = 10;
        let h: f64 = 0.1;
        let mut block = CoefficientBlock::zeros(k_n, 1, 1);
        block.coeffs[0][9] = 1e-9 / h.powi(9);
        let (h_de, k_de, e_de) =
            decrease_candidate(&block, &[1.0], h, k_n, &order_cfg(), &step_cfg()).unwrap();
        assert_eq!(k_de, 9);
        assert_relative_eq!(e_de, 1e-10 / 0.09, max_relative = 1e-12);
        assert_relative_eq!(h_de, 0.2, max_relative = 1e-14);
    }

    #[test]
    fn decrease_candidate_converged_block() {
        let block = CoefficientBlock::zeros(10, 1, 1);
        let (h_de, _, e_de) =
            decrease_candidate(&block, &[1.0], 0.05, 10, &order_cfg(), &step_cfg()).unwrap();
        assert_eq!(e_de, 0.0);
        // theta is uncapped, so the candidate saturates at h_max
        assert_relative_eq!(h_de, 0.2, max_relative = 1e-14);
    }

    #[test]
    fn decrease_candidate_unavailable_at_k_min() {
        let block = CoefficientBlock::zeros(4, 1, 1);
        assert!(decrease_candidate(&block, &[1.0], 0.05, 4, &order_cfg(), &step_cfg()).is_none());
    }

    #[test]
    fn increase_candidate_rho_example() {
        // Scaled coefficients X(k) h^k = [_, 1, 0.5, 0.25, 0.125] at K_n = 4:
        // both ratio families give rho = 2.
        let h = 0.05f64;
        let mut block = CoefficientBlock::zeros(4, 1, 1);
        block.coeffs[0] = vec![0.0, 1.0, 0.5, 0.25, 0.125];
        for (k, c) in block.coeffs[0].iter_mut().enumerate() {
            *c /= h.powi(k as i32);
        }
        let cfg = order_cfg();
        let scfg = step_cfg();
        // rho = 2, dK = 1, e_n = 2 Tol -> e_in = Tol -> theta = 1 -> h_in = h_n.
        let (h_in, k_in) =
            increase_candidate(&block, 2.0 * scfg.tol, h, 4, &cfg, &scfg).unwrap();
        assert_eq!(k_in, 5);
        assert_relative_eq!(h_in, h, max_relative = 1e-12);
    }

    #[test]
    fn increase_candidate_unavailable_at_k_max() {
        let block = CoefficientBlock::zeros(45, 1, 1);
        assert!(increase_candidate(&block, 1e-6, 0.05, 45, &order_cfg(), &step_cfg()).is_none());
    }

    #[test]
    fn situation3_argmax_picks_best_ratio() {
        // Candidates {(0.2, 9), (0.18, 10), (0.25, 11)} under the classical
        // model N_g=3, N_x=6, N_z=12: C = {1572, 1806, 2052}, so the ratios
        // are {1.2723e-4, 9.967e-5, 1.2183e-4} and (0.2, 9) wins.
        let model = ComplexityModel::classical(3, 6, 12);
        assert_eq!(model.complexity(9), 1572.0);
        assert_eq!(model.complexity(11), 2052.0);
        let pick = select_operating_point(
            Some((0.2, 9, 1e-7)),
            0.18,
            10,
            Some((0.25, 11)),
            Some(OrderHistory { h_prev: 0.18, k_prev: 10 }),
            0.18,
            &model,
            &order_cfg(),
        );
        assert_eq!(pick.order, 9);
        assert_eq!(pick.h, 0.2);
        assert_eq!(pick.provenance, Provenance::Decreased);
    }

    #[test]
    fn one_sided_increase_threshold() {
        // Only the increase condition holds; h_in = 2 h_es and the complexity
        // ratio is small enough to clear mu_in.
        let model = ComplexityModel::classical(3, 6, 12);
        let pick = select_operating_point(
            None,
            0.1,
            10,
            Some((0.2, 11)),
            Some(OrderHistory { h_prev: 0.15, k_prev: 9 }),
            0.1,
            &model,
            &order_cfg(),
        );
        assert_eq!(pick.provenance, Provenance::Increased);
        assert_eq!(pick.order, 11);
    }

    #[test]
    fn fall_through_holds() {
        let model = ComplexityModel::classical(3, 6, 12);
        // h shrank and the order grew: only the increase condition holds,
        // and there is no increase candidate, so the held pair wins.
        let pick = select_operating_point(
            Some((0.1, 9, 1e-6)),
            0.1,
            10,
            None,
            Some(OrderHistory { h_prev: 0.2, k_prev: 9 }),
            0.1,
            &model,
            &order_cfg(),
        );
        assert_eq!(pick.provenance, Provenance::Held);
        assert_eq!(pick.h, 0.1);
        assert_eq!(pick.order, 10);
    }

    #[test]
    fn no_history_forces_held() {
        let model = ComplexityModel::classical(3, 6, 12);
        let pick = select_operating_point(
            Some((0.5, 9, 0.0)),
            0.1,
            10,
            Some((0.5, 11)),
            None,
            0.1,
            &model,
            &order_cfg(),
        );
        assert_eq!(pick.provenance, Provenance::Held);
    }

    proptest! {
        #[test]
        fn complexity_strictly_increasing(g in 1usize..50, k in 1usize..45) {
            let n_x = 2 * g;
            let n_z = 4 * g + 1;
            for m in [ComplexityModel::classical(g, n_x, n_z),
                      ComplexityModel::detailed(g, 13 * g, 20 * g)] {
                prop_assert!(m.complexity(k + 1) > m.complexity(k));
                prop_assert!(m.complexity(k) > 0.0);
            }
        }

        #[test]
        fn argmax_invariant_under_model_scaling(scale in 1e-3f64..1e3) {
            let base = ComplexityModel::classical(3, 6, 12);
            let scaled = ComplexityModel {
                n1: base.n1 * scale,
                n2: base.n2 * scale,
                n3: base.n3 * scale,
            };
            let hist = Some(OrderHistory { h_prev: 0.18, k_prev: 10 });
            let pick_a = select_operating_point(
                Some((0.2, 9, 1e-7)), 0.18, 10, Some((0.25, 11)),
                hist, 0.18, &base, &order_cfg());
            let pick_b = select_operating_point(
                Some((0.2, 9, 1e-7)), 0.18, 10, Some((0.25, 11)),
                hist, 0.18, &scaled, &order_cfg());
            prop_assert_eq!(pick_a.order, pick_b.order);
            prop_assert_eq!(pick_a.h, pick_b.h);
        }

        #[test]
        fn situation3_never_below_held_objective(h_de in 0.01f64..0.3,
                                                 h_es in 0.01f64..0.3,
                                                 h_in in 0.01f64..0.3,
                                                 k_n in 5usize..44) {
            let model = ComplexityModel::classical(3, 6, 12);
            let cfg = OrderControllerConfig { mu_de: 1.0, mu_in: 1.0, ..order_cfg() };
            let pick = select_operating_point(
                Some((h_de, k_n - 1, 1e-7)), h_es, k_n, Some((h_in, k_n + 1)),
                Some(OrderHistory { h_prev: h_es, k_prev: k_n }),
                h_es, &model, &cfg);
            let obj = |h: f64, k: usize| h / model.complexity(k);
            prop_assert!(obj(pick.h, pick.order) >= obj(h_es, k_n));
        }
    }
}
