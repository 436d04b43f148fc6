//! Model abstraction shared by the series drivers and the classical
//! integrator baselines.

use crate::engine::{eval_rhs, AugmentedSystemSpec};
use crate::error::Result;
use crate::order::ComplexityModel;
use crate::series::CoefficientBlock;

/// A dynamic model the drivers can integrate.
///
/// A model owns the current augmented-system spec (rebuilt across network
/// events and limiter mode changes) and exposes the matching point-wise
/// right-hand side so that Runge-Kutta baselines integrate exactly the same
/// dynamics.
pub trait DynamicModel {
    fn n_state(&self) -> usize;

    /// Column labels for traces, one per state variable.
    fn var_names(&self) -> Vec<String>;

    /// The augmented-system spec of the current continuous segment.
    fn spec(&self) -> &AugmentedSystemSpec;

    /// Point-wise state derivative consistent with [`DynamicModel::spec`].
    fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        eval_rhs(self.spec(), x, dx);
    }

    /// Scheduled discontinuity times, sorted ascending.
    fn event_times(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Applies the event(s) scheduled at time `t` (rebuild the spec, adjust
    /// the state if needed).
    fn apply_events_at(&mut self, _t: f64, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }

    /// Earliest hard-limit crossing strictly inside `(0, h)` of the step the
    /// block describes, located to high precision, or `None`.
    fn crossing_within(&self, _block: &CoefficientBlock, _h: f64) -> Option<f64> {
        None
    }

    /// Commits limiter mode changes at an accepted step end. Returns `true`
    /// when the spec changed (the controller history is then stale).
    fn finalize_step(&mut self, _t: f64, _x: &mut [f64]) -> bool {
        false
    }

    /// Largest relative rotor-angle spread in degrees; non-power models
    /// return zero so the instability cutoff never triggers.
    fn angle_spread_deg(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// Self-consistent starting state (power-flow-derived for the power
    /// models). Models without a preferred start begin at the origin.
    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.n_state()]
    }

    /// Multiplication-count model of the current spec, queried every step so
    /// rebuilds (events, limiter flips) are reflected in the cost bookkeeping.
    fn complexity(&self) -> ComplexityModel {
        ComplexityModel::measured(self.spec())
    }
}

/// A plain model: a fixed spec with no events, limits or rotor angles.
pub struct PlainModel {
    pub spec: AugmentedSystemSpec,
    pub names: Vec<String>,
}

impl PlainModel {
    pub fn new(spec: AugmentedSystemSpec, names: Vec<String>) -> Self {
        debug_assert_eq!(spec.n_state, names.len());
        PlainModel { spec, names }
    }
}

impl DynamicModel for PlainModel {
    fn n_state(&self) -> usize {
        self.spec.n_state
    }

    fn var_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn spec(&self) -> &AugmentedSystemSpec {
        &self.spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SpecBuilder;
    use approx::assert_relative_eq;

    #[test]
    fn spec_rhs_matches_hand_derivative() {
        // Pendulum with forcing: x1' = x2, x2' = 0.8 - 1.5 sin(x1) - 0.3 x2.
        let mut b = SpecBuilder::new(2);
        let one = b.constant(1.0);
        let (sin_row, _) = b.sin_cos(0);
        b.add_j(0, 1, 1.0);
        b.add_j(1, one, 0.8);
        b.add_j(1, sin_row, -1.5);
        b.add_j(1, 1, -0.3);
        let model = PlainModel::new(b.build().unwrap(), vec!["d".into(), "s".into()]);

        let x = [0.7, -0.2];
        let mut dx = [0.0; 2];
        model.rhs(&x, &mut dx);
        assert_relative_eq!(dx[0], -0.2, max_relative = 1e-15);
        assert_relative_eq!(dx[1], 0.8 - 1.5 * 0.7f64.sin() + 0.06, max_relative = 1e-14);
    }
}
