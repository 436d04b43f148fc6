//! Study-case schema: buses, branches, generators, machine parameter sets and
//! the event schedule, with JSON (de)serialization and validation.
//!
//! Conventions: impedances and powers in per-unit on the system base, angles
//! in radians, times in seconds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default shunt admittance representing a bolted three-phase fault. Finite
/// so the eliminated network block stays invertible during reduction.
pub const FAULT_ADMITTANCE: f64 = 1e7;

fn one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_f_hz() -> f64 {
    60.0
}

fn default_fault_admittance() -> f64 {
    FAULT_ADMITTANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub kind: BusKind,
    /// Voltage magnitude setpoint (slack/PV) or initial guess (PQ), p.u.
    #[serde(default = "one")]
    pub vm: f64,
    /// Voltage angle, rad; fixed for the slack bus only.
    #[serde(default)]
    pub va: f64,
    /// Scheduled generation at PV buses, p.u.
    #[serde(default)]
    pub p_gen: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    /// Fixed bus shunt admittance, p.u.
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineKind {
    Classical,
    Detailed,
}

/// A generating unit: the bus it sits at and the machine parameter set it
/// uses (an index into the matching list in [`MachineSets`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub model: MachineKind,
    pub params: usize,
}

/// Constant-EMF swing-model machine constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalMachineParams {
    /// Inertia constant, s.
    pub h: f64,
    /// Damping, p.u.
    #[serde(default)]
    pub d: f64,
    /// Transient reactance, p.u.
    pub xd_prime: f64,
    /// Internal EMF magnitude, p.u.; computed from the power flow if absent.
    #[serde(default)]
    pub e: Option<f64>,
    /// Mechanical power, p.u.; computed from the power flow if absent.
    #[serde(default)]
    pub p_m: Option<f64>,
}

/// Machine, governor/turbine, voltage-transducer-feedback stabilizer and
/// exciter constants of the detailed model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetailedMachineParams {
    // Machine
    pub h: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub r_a: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub xd_prime: f64,
    pub xq_prime: f64,
    pub xd_2prime: f64,
    pub xq_2prime: f64,
    pub td0_prime: f64,
    pub tq0_prime: f64,
    pub td0_2prime: f64,
    pub tq0_2prime: f64,
    // Governor + turbine
    pub t_sv: f64,
    pub t_ch: f64,
    pub r_droop: f64,
    // Stabilizer
    pub t_w: f64,
    pub k_w: f64,
    pub k_p: f64,
    pub k_v: f64,
    // Exciter
    pub t_e: f64,
    pub k_e: f64,
    pub t_f: f64,
    pub k_f: f64,
    pub t_r: f64,
    pub t_a: f64,
    pub k_a: f64,
    pub v_rmin: f64,
    pub v_rmax: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSets {
    #[serde(default)]
    pub classical: Vec<ClassicalMachineParams>,
    #[serde(default)]
    pub detailed: Vec<DetailedMachineParams>,
}

/// One scheduled network discontinuity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Event {
    FaultApply {
        t: f64,
        bus: usize,
        #[serde(default = "default_fault_admittance")]
        admittance: f64,
    },
    FaultClear {
        t: f64,
    },
    BranchTrip {
        t: f64,
        from: usize,
        to: usize,
    },
    GeneratorTrip {
        t: f64,
        /// Index into the generators list.
        id: usize,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::FaultApply { t, .. }
            | Event::FaultClear { t }
            | Event::BranchTrip { t, .. }
            | Event::GeneratorTrip { t, .. } => *t,
        }
    }
}

/// A complete study case.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: Option<String>,
    pub base_mva: f64,
    #[serde(default = "default_f_hz")]
    pub f_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub machines: MachineSets,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl NetworkCase {
    pub fn from_json(text: &str) -> Result<Self> {
        let case: NetworkCase =
            serde_json::from_str(text).map_err(|e| Error::Case(format!("JSON parse: {e}")))?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }

    /// Synchronous angular speed, rad/s.
    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_hz
    }

    /// Position of a bus id in the bus list.
    pub fn bus_index(&self, id: usize) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| Error::Case(format!("unknown bus id {id}")))
    }

    /// Position of the in-service branch between two bus ids (either
    /// orientation).
    pub fn branch_index(&self, from: usize, to: usize) -> Result<usize> {
        self.branches
            .iter()
            .position(|br| (br.from == from && br.to == to) || (br.from == to && br.to == from))
            .ok_or_else(|| Error::Case(format!("no branch between buses {from} and {to}")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                return Err(Error::Case(format!("duplicate bus id {}", bus.id)));
            }
        }
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slack_count != 1 {
            return Err(Error::Case(format!(
                "expected exactly one slack bus, found {slack_count}"
            )));
        }
        for br in &self.branches {
            self.bus_index(br.from)?;
            self.bus_index(br.to)?;
            if br.from == br.to {
                return Err(Error::Case(format!("branch from bus {} to itself", br.from)));
            }
            if br.x == 0.0 && br.r == 0.0 {
                return Err(Error::Case(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
        }
        let mut gen_buses = std::collections::HashSet::new();
        for g in &self.generators {
            self.bus_index(g.bus)?;
            if !gen_buses.insert(g.bus) {
                return Err(Error::Case(format!("more than one generator at bus {}", g.bus)));
            }
            let in_range = match g.model {
                MachineKind::Classical => g.params < self.machines.classical.len(),
                MachineKind::Detailed => g.params < self.machines.detailed.len(),
            };
            if !in_range {
                return Err(Error::Case(format!(
                    "generator at bus {} references missing parameter set {}",
                    g.bus, g.params
                )));
            }
        }
        if self.generators.is_empty() {
            return Err(Error::Case("case has no generators".into()));
        }
        for p in &self.machines.classical {
            if p.h <= 0.0 || p.xd_prime <= 0.0 {
                return Err(Error::Case("classical machine needs H > 0 and x'_d > 0".into()));
            }
        }
        for p in &self.machines.detailed {
            for (name, t) in [
                ("td0_prime", p.td0_prime),
                ("tq0_prime", p.tq0_prime),
                ("td0_2prime", p.td0_2prime),
                ("tq0_2prime", p.tq0_2prime),
                ("t_sv", p.t_sv),
                ("t_ch", p.t_ch),
                ("t_w", p.t_w),
                ("t_e", p.t_e),
                ("t_f", p.t_f),
                ("t_r", p.t_r),
                ("t_a", p.t_a),
            ] {
                if t <= 0.0 {
                    return Err(Error::Case(format!("time constant {name} must be positive")));
                }
            }
            if p.v_rmin >= p.v_rmax {
                return Err(Error::Case("v_rmin must be below v_rmax".into()));
            }
            if !(p.xd_2prime <= p.xd_prime && p.xd_prime <= p.x_d) {
                return Err(Error::Case("need x''_d <= x'_d <= x_d".into()));
            }
            if !(p.xq_2prime <= p.xq_prime && p.xq_prime <= p.x_q) {
                return Err(Error::Case("need x''_q <= x'_q <= x_q".into()));
            }
        }
        // Event schedule: strictly increasing times; a clear only after an
        // unanswered apply.
        let mut last_t = f64::NEG_INFINITY;
        let mut fault_pending = false;
        for ev in &self.events {
            let t = ev.time();
            if t <= last_t {
                return Err(Error::Event(format!("event times must strictly increase at t = {t}")));
            }
            last_t = t;
            match ev {
                Event::FaultApply { bus, .. } => {
                    self.bus_index(*bus)?;
                    if fault_pending {
                        return Err(Error::Event("overlapping faults are not supported".into()));
                    }
                    fault_pending = true;
                }
                Event::FaultClear { .. } => {
                    if !fault_pending {
                        return Err(Error::Event("fault-clear without a preceding fault-apply".into()));
                    }
                    fault_pending = false;
                }
                Event::BranchTrip { from, to, .. } => {
                    self.branch_index(*from, *to)?;
                }
                Event::GeneratorTrip { id, .. } => {
                    if *id >= self.generators.len() {
                        return Err(Error::Event(format!("generator-trip references missing generator {id}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus_json() -> String {
        r#"{
            "name": "two-bus",
            "base_mva": 100.0,
            "buses": [
                {"id": 1, "type": "slack", "vm": 1.0},
                {"id": 2, "type": "pq", "p_load": 0.5}
            ],
            "branches": [
                {"from": 1, "to": 2, "r": 0.0, "x": 0.1}
            ],
            "generators": [
                {"bus": 1, "model": "classical", "params": 0}
            ],
            "machines": {
                "classical": [
                    {"h": 3.0, "d": 0.0, "xd_prime": 0.1}
                ]
            }
        }"#
        .to_string()
    }

    #[test]
    fn round_trip_preserves_case() {
        let case = NetworkCase::from_json(&two_bus_json()).unwrap();
        let back = NetworkCase::from_json(&case.to_json()).unwrap();
        assert_eq!(case.to_json(), back.to_json());
        assert_eq!(back.buses.len(), 2);
        assert_eq!(back.f_hz, 60.0);
    }

    #[test]
    fn duplicate_bus_id_is_rejected() {
        let bad = two_bus_json().replace(r#""id": 2"#, r#""id": 1"#);
        assert!(matches!(NetworkCase::from_json(&bad), Err(Error::Case(_))));
    }

    #[test]
    fn missing_machine_params_are_rejected() {
        let bad = two_bus_json().replace(r#""params": 0"#, r#""params": 3"#);
        assert!(matches!(NetworkCase::from_json(&bad), Err(Error::Case(_))));
    }

    #[test]
    fn fault_clear_requires_fault_apply() {
        let mut case = NetworkCase::from_json(&two_bus_json()).unwrap();
        case.events = vec![Event::FaultClear { t: 1.0 }];
        assert!(matches!(case.validate(), Err(Error::Event(_))));
    }

    #[test]
    fn event_times_must_increase() {
        let mut case = NetworkCase::from_json(&two_bus_json()).unwrap();
        case.events = vec![
            Event::FaultApply {
                t: 1.0,
                bus: 2,
                admittance: FAULT_ADMITTANCE,
            },
            Event::FaultClear { t: 1.0 },
        ];
        assert!(matches!(case.validate(), Err(Error::Event(_))));
    }

    #[test]
    fn two_slack_buses_are_rejected() {
        let bad = two_bus_json().replace(r#""type": "pq""#, r#""type": "slack""#);
        assert!(matches!(NetworkCase::from_json(&bad), Err(Error::Case(_))));
    }
}
