//! Semi-analytical transient simulation built on truncated power-series
//! expansions with PI step-size control and cost-optimal order selection,
//! plus the power-system models and classical integrator baselines used to
//! validate it.

pub mod baselines;
pub mod case;
pub mod classical;
pub mod detailed;
pub mod drivers;
pub mod engine;
pub mod error;
pub mod model;
pub mod network;
pub mod order;
pub mod series;
pub mod step;
pub mod trace;

pub use baselines::{baseline_integrate, BaselineMethod};
pub use case::{Event, MachineKind, NetworkCase};
pub use classical::ClassicalSystem;
pub use detailed::{DetailedSystem, LimiterMode};
pub use drivers::{fixed_integrate, vs_integrate, vsoo_integrate, SimOptions, SimResult};
pub use engine::{dt_step, validate_spec, AugmentedSystemSpec, RuleKind, SpecBuilder};
pub use error::{Error, Result};
pub use model::{DynamicModel, PlainModel};
pub use network::{build_admittance, kron_reduce, power_flow_nr, NetworkState};
pub use order::{ComplexityModel, OperatingPoint, OrderControllerConfig, Provenance};
pub use series::{series_eval, CoefficientBlock};
pub use step::{CharVariant, StabilityProbe, StepControllerConfig};
pub use trace::{benchmark_error, ErrorSeries, StepRecord, Trace};
