//! Classical fixed-step integrators used as accuracy and cost references:
//! fourth-order Runge-Kutta and the modified Euler (Heun) method.
//!
//! Both integrate the same right-hand side the series drivers expand, hit
//! scheduled discontinuities exactly, and run the model's limiter hook after
//! every step so that mode logic matches the series run.

use crate::error::Result;
use crate::model::DynamicModel;
use crate::trace::Trace;

/// Time clipping tolerance, matching the series drivers.
const T_EPS: f64 = 1e-12;

/// One method step: maps `(x, h)` to `x + h * increment`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    /// Classical fourth-order Runge-Kutta.
    Rk4,
    /// Modified Euler (Heun's trapezoidal predictor-corrector).
    ModifiedEuler,
}

impl BaselineMethod {
    /// Right-hand-side evaluations per step.
    pub fn stages(&self) -> usize {
        match self {
            BaselineMethod::Rk4 => 4,
            BaselineMethod::ModifiedEuler => 2,
        }
    }
}

fn rk4_step(model: &dyn DynamicModel, x: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    model.rhs(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    model.rhs(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    model.rhs(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    model.rhs(&tmp, &mut k4);
    out.clear();
    for i in 0..n {
        out.push(x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
}

fn me_step(model: &dyn DynamicModel, x: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    model.rhs(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + h * k1[i];
    }
    model.rhs(&tmp, &mut k2);
    out.clear();
    for i in 0..n {
        out.push(x[i] + 0.5 * h * (k1[i] + k2[i]));
    }
}

/// Integrates the model with a fixed-step one-step method from `t = 0` to
/// `t_end`, clipping steps so every scheduled event is hit exactly.
pub fn baseline_integrate(
    model: &mut dyn DynamicModel,
    x0: &[f64],
    method: BaselineMethod,
    h: f64,
    t_end: f64,
) -> Result<Trace> {
    debug_assert!(h > 0.0 && t_end > 0.0);
    let mut events: Vec<f64> = model
        .event_times()
        .into_iter()
        .filter(|&t| t > T_EPS && t <= t_end + T_EPS)
        .collect();
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    events.dedup_by(|a, b| (*a - *b).abs() < T_EPS);

    let mut ev_idx = 0;
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut next = Vec::with_capacity(x.len());
    let mut trace = Trace::new(model.var_names());
    trace.push(t, x.clone());

    while t < t_end - T_EPS {
        let mut h_step = h.min(t_end - t);
        if ev_idx < events.len() {
            h_step = h_step.min(events[ev_idx] - t);
        }
        match method {
            BaselineMethod::Rk4 => rk4_step(model, &x, h_step, &mut next),
            BaselineMethod::ModifiedEuler => me_step(model, &x, h_step, &mut next),
        }
        std::mem::swap(&mut x, &mut next);
        t += h_step;
        model.finalize_step(t, &mut x);
        trace.push(t, x.clone());
        while ev_idx < events.len() && events[ev_idx] <= t + T_EPS {
            model.apply_events_at(events[ev_idx], &mut x)?;
            *trace.states.last_mut().unwrap() = x.clone();
            ev_idx += 1;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SpecBuilder;
    use crate::model::PlainModel;
    use approx::assert_relative_eq;

    fn dahlquist(lambda: f64) -> PlainModel {
        let mut b = SpecBuilder::new(1);
        b.add_j(0, 0, lambda);
        PlainModel::new(b.build().unwrap(), vec!["x".into()])
    }

    #[test]
    fn rk4_matches_exponential() {
        let mut model = dahlquist(-1.0);
        let trace =
            baseline_integrate(&mut model, &[1.0], BaselineMethod::Rk4, 1e-3, 1.0).unwrap();
        let x_end = trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn modified_euler_matches_exponential_coarsely() {
        let mut model = dahlquist(-1.0);
        let trace =
            baseline_integrate(&mut model, &[1.0], BaselineMethod::ModifiedEuler, 1e-3, 1.0)
                .unwrap();
        let x_end = trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, (-1.0f64).exp(), max_relative = 1e-6);
    }

    #[test]
    fn rk4_shows_fourth_order_convergence() {
        // Error at h and h/2 on the exponential must shrink by about 2^4.
        let exact = (-1.0f64).exp();
        let mut err = Vec::new();
        for h in [0.1, 0.05] {
            let mut model = dahlquist(-1.0);
            let trace =
                baseline_integrate(&mut model, &[1.0], BaselineMethod::Rk4, h, 1.0).unwrap();
            err.push((trace.states.last().unwrap()[0] - exact).abs());
        }
        let ratio = err[0] / err[1];
        assert!((13.0..20.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn me_shows_second_order_convergence() {
        let exact = (-1.0f64).exp();
        let mut err = Vec::new();
        for h in [0.1, 0.05] {
            let mut model = dahlquist(-1.0);
            let trace =
                baseline_integrate(&mut model, &[1.0], BaselineMethod::ModifiedEuler, h, 1.0)
                    .unwrap();
            err.push((trace.states.last().unwrap()[0] - exact).abs());
        }
        let ratio = err[0] / err[1];
        assert!((3.4..4.6).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn event_times_fall_on_grid_samples() {
        // Uniform h dividing the event time: the event sample is on the grid.
        struct Switching {
            spec: crate::engine::AugmentedSystemSpec,
        }
        impl DynamicModel for Switching {
            fn n_state(&self) -> usize {
                1
            }
            fn var_names(&self) -> Vec<String> {
                vec!["x".into()]
            }
            fn spec(&self) -> &crate::engine::AugmentedSystemSpec {
                &self.spec
            }
            fn event_times(&self) -> Vec<f64> {
                vec![0.5]
            }
            fn apply_events_at(&mut self, _t: f64, _x: &mut [f64]) -> crate::error::Result<()> {
                let mut b = SpecBuilder::new(1);
                b.add_j(0, 0, 1.0);
                self.spec = b.build().unwrap();
                Ok(())
            }
        }
        let mut b = SpecBuilder::new(1);
        b.add_j(0, 0, -1.0);
        let mut model = Switching {
            spec: b.build().unwrap(),
        };
        let trace =
            baseline_integrate(&mut model, &[1.0], BaselineMethod::Rk4, 1e-3, 1.0).unwrap();
        assert!(trace.times.iter().any(|&t| (t - 0.5).abs() < 1e-12));
        // Decay then growth over equal spans returns to the start value.
        let x_end = trace.states.last().unwrap()[0];
        assert_relative_eq!(x_end, 1.0, max_relative = 1e-10);
    }
}
