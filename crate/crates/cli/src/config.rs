//! Run configuration: JSON ingestion, parameter-envelope validation and
//! conversion into the core controller configurations.

use std::path::PathBuf;

use dtsim_core::{OrderControllerConfig, StepControllerConfig};
use serde::{Deserialize, Serialize};

/// Integration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Fixed step size, fixed series order.
    DtFixed,
    /// Adaptive step size at a fixed series order.
    VsDt,
    /// Adaptive step size and cost-optimal adaptive order.
    VsooDt,
    /// Fourth-order Runge-Kutta at a fixed step.
    Rk4,
    /// Modified Euler (Heun) at a fixed step.
    Me,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::DtFixed => "dt-fixed",
            Solver::VsDt => "vs-dt",
            Solver::VsooDt => "vsoo-dt",
            Solver::Rk4 => "rk4",
            Solver::Me => "me",
        })
    }
}

fn d_t_end() -> f64 {
    20.0
}
fn d_h0() -> f64 {
    1e-3
}
fn d_k0() -> usize {
    4
}
fn d_tol() -> f64 {
    1e-5
}
fn d_h_min() -> f64 {
    1e-4
}
fn d_h_max() -> f64 {
    0.2
}
fn d_gamma() -> f64 {
    1.0
}
fn d_theta_max() -> f64 {
    2.0
}
fn d_eta() -> Vec<f64> {
    StepControllerConfig::default().eta
}
fn d_reject_factor() -> f64 {
    2.0
}
fn d_k_min() -> usize {
    4
}
fn d_k_max() -> usize {
    45
}
fn d_mu_de() -> f64 {
    1.0
}
fn d_mu_in() -> f64 {
    1.02
}
fn d_dk() -> usize {
    1
}
fn d_instability() -> f64 {
    1000.0
}

/// Full description of one simulation run: solver choice, controller
/// parameters, horizon, and output plumbing. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub solver: Solver,
    #[serde(default = "d_t_end")]
    pub t_end: f64,
    /// Initial step size for the adaptive drivers.
    #[serde(default = "d_h0")]
    pub h0: f64,
    /// Initial order for the adaptive-order driver.
    #[serde(default = "d_k0")]
    pub k0: usize,
    /// Step size for `dt-fixed`, `rk4` and `me`; required for those solvers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_h: Option<f64>,
    /// Series order for `dt-fixed` and `vs-dt` (falls back to `k0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_order: Option<usize>,

    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_h_min")]
    pub h_min: f64,
    #[serde(default = "d_h_max")]
    pub h_max: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_theta_max")]
    pub theta_max: f64,
    /// Per-variable error-index scaling constants (single entry broadcasts).
    #[serde(default = "d_eta")]
    pub eta: Vec<f64>,
    #[serde(default = "d_reject_factor")]
    pub reject_factor: f64,

    #[serde(default = "d_k_min")]
    pub k_min: usize,
    #[serde(default = "d_k_max")]
    pub k_max: usize,
    #[serde(default = "d_mu_de")]
    pub mu_de: f64,
    #[serde(default = "d_mu_in")]
    pub mu_in: f64,
    #[serde(default = "d_dk")]
    pub dk_dec: usize,
    #[serde(default = "d_dk")]
    pub dk_inc: usize,

    /// Relative rotor-angle spread (degrees) that terminates a run as
    /// unstable.
    #[serde(default = "d_instability")]
    pub instability_threshold_deg: f64,
    /// Compare against an RK4 reference at h = 1e-4 and report the error.
    #[serde(default)]
    pub benchmark: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_log_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// Structural checks plus the documented parameter envelope. With
    /// `allow_unsafe` the envelope is skipped and only structural
    /// impossibilities are rejected.
    pub fn validate(&self, allow_unsafe: bool) -> Result<(), String> {
        if !(self.t_end > 0.0) {
            return Err("t_end must be positive".into());
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_max) {
            return Err("need 0 < h_min < h_max".into());
        }
        if !(self.tol > 0.0) {
            return Err("tol must be positive".into());
        }
        if !(self.reject_factor > 1.0) {
            return Err("reject_factor must exceed 1".into());
        }
        if self.k_min == 0 || self.k_max < self.k_min {
            return Err("need 0 < k_min <= k_max".into());
        }
        if self.k0 < self.k_min || self.k0 > self.k_max {
            return Err("k0 must lie in [k_min, k_max]".into());
        }
        if self.dk_dec == 0 || self.dk_inc == 0 {
            return Err("order increments must be at least 1".into());
        }
        if self.eta.is_empty() || self.eta.iter().any(|e| !(*e >= 0.0)) {
            return Err("eta must be a non-empty list of non-negative values".into());
        }
        if matches!(self.solver, Solver::DtFixed | Solver::Rk4 | Solver::Me)
            && self.fixed_h.is_none()
        {
            return Err(format!("solver {} requires fixed_h", self.solver));
        }
        if let Some(h) = self.fixed_h {
            if !(h > 0.0 && h <= self.t_end) {
                return Err("fixed_h must be in (0, t_end]".into());
            }
        }
        if !(self.instability_threshold_deg > 0.0) {
            return Err("instability_threshold_deg must be positive".into());
        }
        if allow_unsafe {
            return Ok(());
        }
        let envelope = |ok: bool, what: &str| -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(format!(
                    "{what} is outside the supported envelope (pass --unsafe to override)"
                ))
            }
        };
        envelope((1e-25..=1e-2).contains(&self.tol), "tol")?;
        envelope((0.85..=1.0).contains(&self.gamma), "gamma")?;
        envelope((1.25..=2.0).contains(&self.theta_max), "theta_max")?;
        envelope((1.0..=2.5).contains(&self.mu_de), "mu_de")?;
        envelope((1.0..=2.5).contains(&self.mu_in), "mu_in")?;
        envelope(self.k_min >= 4, "k_min")?;
        envelope(self.k_max <= 45, "k_max")?;
        envelope(
            self.eta.iter().all(|e| (1e-19..=0.1).contains(e)),
            "eta",
        )?;
        envelope(
            self.h0 >= self.h_min && self.h0 <= self.h_max,
            "h0",
        )?;
        Ok(())
    }

    pub fn step_config(&self) -> StepControllerConfig {
        StepControllerConfig {
            tol: self.tol,
            gamma: self.gamma,
            theta_max: self.theta_max,
            h_min: self.h_min,
            h_max: self.h_max,
            eta: self.eta.clone(),
            reject_factor: self.reject_factor,
            ..Default::default()
        }
    }

    pub fn order_config(&self) -> OrderControllerConfig {
        OrderControllerConfig {
            k0: self.k0,
            k_min: self.k_min,
            k_max: self.k_max,
            mu_de: self.mu_de,
            mu_in: self.mu_in,
            dk_dec: self.dk_dec,
            dk_inc: self.dk_inc,
        }
    }

    /// A ready-to-edit configuration for the adaptive-order solver.
    pub fn default_vsoo() -> Self {
        RunConfig {
            solver: Solver::VsooDt,
            t_end: d_t_end(),
            h0: d_h0(),
            k0: d_k0(),
            fixed_h: None,
            fixed_order: None,
            tol: d_tol(),
            h_min: d_h_min(),
            h_max: d_h_max(),
            gamma: d_gamma(),
            theta_max: d_theta_max(),
            eta: d_eta(),
            reject_factor: d_reject_factor(),
            k_min: d_k_min(),
            k_max: d_k_max(),
            mu_de: d_mu_de(),
            mu_in: d_mu_in(),
            dk_dec: d_dk(),
            dk_inc: d_dk(),
            instability_threshold_deg: d_instability(),
            benchmark: false,
            trace_out: None,
            step_log_out: None,
        }
    }
}
