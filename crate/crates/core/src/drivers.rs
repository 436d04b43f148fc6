//! Time-marching drivers: fixed-step series integration, variable step size
//! with a fixed order, and combined variable step size / variable order.
//!
//! All drivers share the same event handling: scheduled discontinuities clip
//! the step so they are hit exactly, the model is then given a chance to
//! rebuild its spec, and the controller history is forgotten because error
//! extrapolation across a discontinuity is meaningless.

use crate::engine::dt_step;
use crate::error::{Error, Result};
use crate::model::DynamicModel;
use crate::order::{
    decrease_candidate, increase_candidate, select_operating_point, OrderControllerConfig,
    OrderHistory, Provenance,
};
use crate::series::series_eval;
use crate::step::{
    accept_step, error_radius, pi_step, truncation_error, StepControllerConfig,
    StepControllerState,
};
use crate::trace::{StepRecord, Trace};

/// Time clipping tolerance: two times closer than this are the same instant.
const T_EPS: f64 = 1e-12;

/// Driver-level options shared by all integration modes.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t_end: f64,
    /// Relative rotor-angle spread (degrees) above which the run is declared
    /// unstable and terminated early. `INFINITY` disables the cutoff.
    pub instability_threshold_deg: f64,
}

impl SimOptions {
    pub fn new(t_end: f64) -> Self {
        SimOptions {
            t_end,
            instability_threshold_deg: f64::INFINITY,
        }
    }
}

/// Outcome of one integration run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Trace,
    pub steps: Vec<StepRecord>,
    /// Estimated multiplication count, summed over every series expansion
    /// performed, including rejected attempts.
    pub multiplies: f64,
    pub rejected_total: usize,
    /// Time at which the instability cutoff fired, if it did.
    pub unstable_at: Option<f64>,
    pub warnings: Vec<String>,
}

/// Locates a sign change of `f` inside `[lo, hi]` by bisection to an interval
/// of width `tol_t`. Requires `f(lo)` and `f(hi)` to have opposite signs.
pub fn bisect_crossing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol_t: f64) -> f64 {
    let f_lo = f(lo);
    debug_assert!(f_lo * f(hi) <= 0.0);
    while hi - lo > tol_t {
        let mid = 0.5 * (lo + hi);
        if f(mid) * f_lo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sorted_events(model: &dyn DynamicModel, t_end: f64) -> Vec<f64> {
    let mut ev: Vec<f64> = model
        .event_times()
        .into_iter()
        .filter(|&t| t > T_EPS && t <= t_end + T_EPS)
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev.dedup_by(|a, b| (*a - *b).abs() < T_EPS);
    ev
}

/// Fixed step size, fixed order. No error control: a diverged expansion is a
/// hard failure.
pub fn fixed_integrate(
    model: &mut dyn DynamicModel,
    x0: &[f64],
    order: usize,
    h: f64,
    opts: &SimOptions,
) -> Result<SimResult> {
    let events = sorted_events(model, opts.t_end);
    let mut ev_idx = 0;
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut trace = Trace::new(model.var_names());
    trace.push(t, x.clone());
    let mut steps = Vec::new();
    let mut multiplies = 0.0;
    let mut unstable_at = None;

    while t < opts.t_end - T_EPS {
        let mut h_step = h.min(opts.t_end - t);
        if ev_idx < events.len() {
            h_step = h_step.min(events[ev_idx] - t);
        }
        multiplies += model.complexity().complexity(order);
        let (block, mut x_next) = dt_step(model.spec(), &x, order, h_step)?;
        let mut h_acc = h_step;
        if let Some(h_cross) = model.crossing_within(&block, h_acc) {
            if h_cross < h_acc - T_EPS {
                x_next = series_eval(&block, h_cross)?;
                h_acc = h_cross;
            }
        }
        t += h_acc;
        x = x_next;
        model.finalize_step(t, &mut x);
        trace.push(t, x.clone());
        steps.push(StepRecord {
            t,
            h: h_acc,
            order,
            e_n: 0.0,
            r: 0.0,
            provenance: Provenance::Held,
            rejected: 0,
        });
        while ev_idx < events.len() && events[ev_idx] <= t + T_EPS {
            model.apply_events_at(events[ev_idx], &mut x)?;
            *trace.states.last_mut().unwrap() = x.clone();
            ev_idx += 1;
        }
        if model.angle_spread_deg(&x) >= opts.instability_threshold_deg {
            unstable_at = Some(t);
            break;
        }
    }
    Ok(SimResult {
        trace,
        steps,
        multiplies,
        rejected_total: 0,
        unstable_at,
        warnings: Vec::new(),
    })
}

/// Variable step size at a fixed order, PI-controlled.
pub fn vs_integrate(
    model: &mut dyn DynamicModel,
    x0: &[f64],
    order: usize,
    h0: f64,
    step_cfg: &StepControllerConfig,
    opts: &SimOptions,
) -> Result<SimResult> {
    adaptive_integrate(model, x0, order, h0, step_cfg, None, opts)
}

/// Variable step size and variable order: the PI step proposal is combined
/// with lower/higher-order candidates and the cheapest pair per unit of
/// simulated time is selected each step.
pub fn vsoo_integrate(
    model: &mut dyn DynamicModel,
    x0: &[f64],
    h0: f64,
    step_cfg: &StepControllerConfig,
    order_cfg: &OrderControllerConfig,
    opts: &SimOptions,
) -> Result<SimResult> {
    adaptive_integrate(model, x0, order_cfg.k0, h0, step_cfg, Some(order_cfg), opts)
}

fn adaptive_integrate(
    model: &mut dyn DynamicModel,
    x0: &[f64],
    order0: usize,
    h0: f64,
    step_cfg: &StepControllerConfig,
    order_cfg: Option<&OrderControllerConfig>,
    opts: &SimOptions,
) -> Result<SimResult> {
    let events = sorted_events(model, opts.t_end);
    let mut ev_idx = 0;
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut trace = Trace::new(model.var_names());
    trace.push(t, x.clone());
    let mut steps = Vec::new();
    let mut multiplies = 0.0;
    let mut rejected_total = 0;
    let mut unstable_at = None;
    let mut warnings = Vec::new();

    let mut ctrl = StepControllerState::new(h0.clamp(step_cfg.h_min, step_cfg.h_max));
    let mut order = order0;
    let mut provenance = Provenance::Held;
    let mut order_hist: Option<OrderHistory> = None;

    // Generous bound on total step attempts: everything past it is a stall.
    let max_attempts = ((opts.t_end / step_cfg.h_min).ceil() as usize)
        .saturating_mul(8)
        .saturating_add(10_000);
    let mut attempts = 0usize;

    while t < opts.t_end - T_EPS {
        let remaining = opts.t_end - t;
        let mut h_try = ctrl.h_n.min(remaining);
        if ev_idx < events.len() {
            h_try = h_try.min(events[ev_idx] - t);
        }
        // Clipping may push the step below h_min; the effective floor is then
        // the clipped length itself.
        let h_floor = step_cfg.h_min.min(h_try);

        let mut rejected = 0usize;
        let (block, x_next, h_acc, e_n, r) = loop {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::SolverDiverged(t));
            }
            multiplies += model.complexity().complexity(order);
            let expansion = dt_step(model.spec(), &x, order, h_try);
            let at_floor = h_try <= h_floor * (1.0 + 1e-9);
            match expansion {
                Ok((block, x_next)) => {
                    let r = error_radius(&block, &x, order, h_try, &step_cfg.eta);
                    match truncation_error(r, order, h_try) {
                        Ok((_, e_n)) if accept_step(e_n, step_cfg) => {
                            break (block, x_next, h_try, e_n, r);
                        }
                        Ok((_, e_n)) if at_floor => {
                            let msg = format!(
                                "step at t = {t:.6} accepted at the minimum step size with e_n = {e_n:.3e} > {:.3e}",
                                step_cfg.reject_factor * step_cfg.tol
                            );
                            log::warn!("{msg}");
                            warnings.push(msg);
                            break (block, x_next, h_try, e_n, r);
                        }
                        Ok((_, e_bad)) => {
                            if at_floor {
                                return Err(Error::SolverDiverged(t));
                            }
                            log::debug!(
                                "reject t={t:.4} h={h_try:.4} K={order} e={e_bad:.3e} r={r:.3}"
                            );
                            rejected += 1;
                            h_try = (h_try / 2.0).max(h_floor);
                        }
                        Err(Error::ErrorSeriesDiverged { r }) => {
                            if at_floor {
                                return Err(Error::SolverDiverged(t));
                            }
                            log::debug!("reject t={t:.4} h={h_try:.4} K={order} r={r:.3} diverged");
                            rejected += 1;
                            h_try = (h_try / 2.0).max(h_floor);
                        }
                        Err(e) => return Err(e),
                    }
                }
                Err(Error::StepDiverged { .. }) => {
                    if at_floor {
                        return Err(Error::SolverDiverged(t));
                    }
                    rejected += 1;
                    h_try = (h_try / 2.0).max(h_floor);
                }
                Err(e) => return Err(e),
            }
        };
        rejected_total += rejected;

        // A hard-limit crossing inside the step shortens it to the crossing;
        // the series is valid on the whole interval, so only re-evaluation is
        // needed, not a new expansion.
        let mut h_acc = h_acc;
        let mut x_next = x_next;
        if let Some(h_cross) = model.crossing_within(&block, h_acc) {
            if h_cross < h_acc - T_EPS {
                x_next = series_eval(&block, h_cross)?;
                h_acc = h_cross;
            }
        }

        let x_start = std::mem::replace(&mut x, x_next);
        t += h_acc;
        let spec_changed = model.finalize_step(t, &mut x);
        trace.push(t, x.clone());
        steps.push(StepRecord {
            t,
            h: h_acc,
            order,
            e_n,
            r,
            provenance,
            rejected,
        });

        // Next-step proposal from the PI controller, refined by the order
        // selection when enabled.
        let has_history = ctrl.step_index >= 1;
        let h_es = pi_step(e_n, ctrl.e_n, has_history, order, h_acc, step_cfg);
        ctrl.record(e_n);
        ctrl.h_n = h_es;
        provenance = Provenance::Held;
        // Skip order switching on steps that needed rejections: the accepted
        // error is then far below tolerance by construction, which makes the
        // candidate extrapolations meaningless and produces churn (spurious
        // increase/decrease picks that trigger the next rejection).
        if rejected > 0 {
            order_hist = Some(OrderHistory {
                h_prev: h_acc,
                k_prev: order,
            });
        } else if let Some(ocfg) = order_cfg {
            let cand_de = decrease_candidate(&block, &x_start, h_acc, order, ocfg, step_cfg);
            let cand_in = increase_candidate(&block, e_n, h_acc, order, ocfg, step_cfg);
            let pick = select_operating_point(
                cand_de,
                h_es,
                order,
                cand_in,
                order_hist,
                h_acc,
                &model.complexity(),
                ocfg,
            );
            order_hist = Some(OrderHistory {
                h_prev: h_acc,
                k_prev: order,
            });
            // The selection compares uncapped deadbeat candidates (their h is
            // the steady-state payoff of each order); the per-step growth
            // limiter is applied here to whichever pair won.
            order = pick.order;
            ctrl.h_n = pick
                .h
                .min(step_cfg.theta_max * h_acc)
                .clamp(step_cfg.h_min, step_cfg.h_max);
            provenance = pick.provenance;
        }

        if spec_changed {
            // Limiter mode flip: keep the step size but drop the error
            // history, which belongs to the previous spec.
            let h_keep = ctrl.h_n;
            ctrl.reset_history(h_keep);
            order_hist = None;
        }
        while ev_idx < events.len() && events[ev_idx] <= t + T_EPS {
            model.apply_events_at(events[ev_idx], &mut x)?;
            *trace.states.last_mut().unwrap() = x.clone();
            ev_idx += 1;
            // A network event invalidates everything the controllers learned.
            ctrl.reset_history(h0.clamp(step_cfg.h_min, step_cfg.h_max));
            if let Some(ocfg) = order_cfg {
                order = ocfg.k0;
            }
            order_hist = None;
            provenance = Provenance::Held;
        }

        if model.angle_spread_deg(&x) >= opts.instability_threshold_deg {
            unstable_at = Some(t);
            break;
        }
    }

    Ok(SimResult {
        trace,
        steps,
        multiplies,
        rejected_total,
        unstable_at,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AugmentedSystemSpec, SpecBuilder};
    use crate::model::PlainModel;
    use crate::series::eval_row_at;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn dahlquist(lambda: f64) -> PlainModel {
        let mut b = SpecBuilder::new(1);
        b.add_j(0, 0, lambda);
        PlainModel::new(b.build().unwrap(), vec!["x".into()])
    }

    #[test]
    fn fixed_step_dahlquist_matches_exponential() {
        let mut model = dahlquist(-1.0);
        let opts = SimOptions::new(1.0);
        let res = fixed_integrate(&mut model, &[1.0], 20, 0.1, &opts).unwrap();
        let x_end = res.trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, (-1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(res.steps.len(), 10);
        assert_relative_eq!(
            res.multiplies,
            10.0 * model.complexity().complexity(20),
            max_relative = 1e-15
        );
    }

    #[test]
    fn variable_step_meets_tolerance_and_grows() {
        let mut model = dahlquist(-1.0);
        let cfg = StepControllerConfig {
            tol: 1e-8,
            h_max: 0.5,
            ..Default::default()
        };
        let opts = SimOptions::new(5.0);
        let res = vs_integrate(&mut model, &[1.0], 8, 1e-3, &cfg, &opts).unwrap();
        let x_end = res.trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, (-5.0f64).exp(), max_relative = 1e-6);
        // Every accepted step honored the acceptance bound (no floor warnings).
        assert!(res.warnings.is_empty());
        for s in &res.steps {
            assert!(s.e_n <= cfg.reject_factor * cfg.tol * (1.0 + 1e-12));
        }
        // The step size must have grown well past its initial value.
        let h_last = res.steps.last().unwrap().h;
        assert!(h_last > 20.0 * 1e-3, "h stayed at {h_last}");
    }

    #[test]
    fn variable_order_run_completes_and_is_accurate() {
        let mut model = dahlquist(-1.0);
        let cfg = StepControllerConfig {
            tol: 1e-7,
            h_max: 0.5,
            ..Default::default()
        };
        let ocfg = OrderControllerConfig::default();
        let opts = SimOptions::new(4.0);
        let res = vsoo_integrate(&mut model, &[1.0], 1e-3, &cfg, &ocfg, &opts).unwrap();
        let x_end = res.trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, (-4.0f64).exp(), max_relative = 1e-5);
        // Orders must stay inside the configured window.
        for s in &res.steps {
            assert!(s.order >= ocfg.k_min && s.order <= ocfg.k_max);
        }
        // The order selector must have moved off the initial order at least once.
        assert!(res
            .steps
            .iter()
            .any(|s| s.provenance != Provenance::Held));
    }

    /// Piecewise model for event tests: x' = a x, with `a` flipped at t = 1.
    struct Switching {
        spec: AugmentedSystemSpec,
    }

    impl Switching {
        fn with_rate(a: f64) -> AugmentedSystemSpec {
            let mut b = SpecBuilder::new(1);
            b.add_j(0, 0, a);
            b.build().unwrap()
        }
    }

    impl DynamicModel for Switching {
        fn n_state(&self) -> usize {
            1
        }
        fn var_names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn spec(&self) -> &AugmentedSystemSpec {
            &self.spec
        }
        fn event_times(&self) -> Vec<f64> {
            vec![1.0]
        }
        fn apply_events_at(&mut self, _t: f64, _x: &mut [f64]) -> Result<()> {
            self.spec = Switching::with_rate(1.0);
            Ok(())
        }
    }

    #[test]
    fn events_are_hit_exactly_and_spec_is_swapped() {
        let mut model = Switching {
            spec: Switching::with_rate(-1.0),
        };
        let cfg = StepControllerConfig {
            tol: 1e-9,
            h_max: 0.5,
            ..Default::default()
        };
        let opts = SimOptions::new(2.0);
        let res = vs_integrate(&mut model, &[1.0], 10, 1e-3, &cfg, &opts).unwrap();
        // One sample must land exactly on the event time.
        assert!(res
            .trace
            .times
            .iter()
            .any(|&t| (t - 1.0).abs() < 1e-9));
        // Decay for one unit, growth for one unit: x(2) = e^{-1} e^{1} = 1.
        let x_end = res.trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, 1.0, max_relative = 1e-6);
    }

    /// Ramp model x' = 1 with a hard stop: the crossing of x = 0.5 must be
    /// located inside a step and the step shortened to it.
    struct Ramp {
        spec: AugmentedSystemSpec,
        crossed: bool,
    }

    impl Ramp {
        fn new() -> Self {
            let mut b = SpecBuilder::new(1);
            let one = b.constant(1.0);
            b.add_j(0, one, 1.0);
            Ramp {
                spec: b.build().unwrap(),
                crossed: false,
            }
        }
    }

    impl DynamicModel for Ramp {
        fn n_state(&self) -> usize {
            1
        }
        fn var_names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn spec(&self) -> &AugmentedSystemSpec {
            &self.spec
        }
        fn crossing_within(&self, block: &crate::series::CoefficientBlock, h: f64) -> Option<f64> {
            if self.crossed {
                return None;
            }
            let g = |tau: f64| eval_row_at(block, 0, tau).unwrap() - 0.5;
            if g(0.0) < 0.0 && g(h) > 0.0 {
                Some(bisect_crossing(g, 0.0, h, 1e-9))
            } else {
                None
            }
        }
        fn finalize_step(&mut self, _t: f64, x: &mut [f64]) -> bool {
            if !self.crossed && x[0] >= 0.5 - 1e-6 {
                self.crossed = true;
                return true;
            }
            false
        }
    }

    #[test]
    fn limit_crossing_shortens_the_step() {
        let mut model = Ramp::new();
        let opts = SimOptions::new(1.0);
        let res = fixed_integrate(&mut model, &[0.0], 4, 0.2, &opts).unwrap();
        // Some sample must sit at t = 0.5 (where x reaches 0.5) to 1e-9 s.
        assert!(res
            .trace
            .times
            .iter()
            .any(|&t| (t - 0.5).abs() < 1e-8));
        let x_end = res.trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, 1.0, max_relative = 1e-12);
    }

    /// Two-phase rotor pair used to exercise the instability cutoff:
    /// delta1' = 0, delta2' = rate.
    struct Drifting {
        spec: AugmentedSystemSpec,
    }

    impl DynamicModel for Drifting {
        fn n_state(&self) -> usize {
            2
        }
        fn var_names(&self) -> Vec<String> {
            vec!["d1".into(), "d2".into()]
        }
        fn spec(&self) -> &AugmentedSystemSpec {
            &self.spec
        }
        fn angle_spread_deg(&self, x: &[f64]) -> f64 {
            (x[1] - x[0]).abs().to_degrees()
        }
    }

    #[test]
    fn instability_cutoff_terminates_early() {
        let mut b = SpecBuilder::new(2);
        let one = b.constant(1.0);
        b.add_j(1, one, 10.0); // delta2 grows 10 rad/s
        let mut model = Drifting {
            spec: b.build().unwrap(),
        };
        let mut opts = SimOptions::new(10.0);
        opts.instability_threshold_deg = 1000.0;
        let res = fixed_integrate(&mut model, &[0.0, 0.0], 4, 0.1, &opts).unwrap();
        let t_stop = res.unstable_at.expect("cutoff must fire");
        // 1000 degrees at 10 rad/s is reached near t = 1.745.
        assert!(t_stop < 2.0, "stopped at {t_stop}");
        assert_abs_diff_eq!(t_stop, 1000f64.to_radians() / 10.0, epsilon = 0.11);
    }

    #[test]
    fn rejection_counter_reflects_forced_halving() {
        // lambda = -40 with a large initial step forces at least one reject.
        let mut model = dahlquist(-40.0);
        let cfg = StepControllerConfig {
            tol: 1e-10,
            h_min: 1e-6,
            h_max: 0.5,
            ..Default::default()
        };
        let opts = SimOptions::new(0.5);
        let res = vs_integrate(&mut model, &[1.0], 5, 0.4, &cfg, &opts).unwrap();
        assert!(res.rejected_total >= 1);
        let x_end = res.trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, (-20.0f64).exp(), max_relative = 1e-5);
    }

    #[test]
    fn bisect_locates_known_root() {
        let root = bisect_crossing(|t| t * t - 2.0, 0.0, 2.0, 1e-12);
        assert_abs_diff_eq!(root, std::f64::consts::SQRT_2, epsilon = 1e-11);
    }
}
