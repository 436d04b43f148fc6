//! Scenario orchestration: model construction, single-run execution with
//! optional benchmarking, and the N-1 contingency batch.

use dtsim_core::{
    baseline_integrate, benchmark_error, fixed_integrate, vs_integrate, vsoo_integrate,
    BaselineMethod, ClassicalSystem, DetailedSystem, DynamicModel, Error, Event, MachineKind,
    NetworkCase, SimOptions, SimResult, Trace,
};

use crate::config::{RunConfig, Solver};
use crate::report::{ContingencyRow, ScreeningReport};

/// Reference integrator step used whenever a benchmark is requested.
pub const BENCHMARK_H: f64 = 1e-4;
/// Fault duration of an N-1 contingency, seconds.
pub const N1_FAULT_DURATION: f64 = 0.2;
/// Fault application time of an N-1 contingency, seconds.
pub const N1_FAULT_START: f64 = 0.1;
/// Offset between the branch trip and the fault-clear event; the schedule
/// requires strictly increasing event times, so the clearing action is split
/// into a trip followed immediately by the admittance restoration.
pub const N1_CLEAR_OFFSET: f64 = 1e-4;

/// Builds the dynamic model matching the machine kinds of the case.
pub fn build_model(case: &NetworkCase) -> dtsim_core::Result<Box<dyn DynamicModel>> {
    let mut kinds = case.generators.iter().map(|g| g.model);
    let Some(first) = kinds.next() else {
        return Err(Error::Case("case has no generators".into()));
    };
    if kinds.any(|k| k != first) {
        return Err(Error::Case(
            "mixed classical/detailed generator models are not supported".into(),
        ));
    }
    Ok(match first {
        MachineKind::Classical => Box::new(ClassicalSystem::from_case(case)?),
        MachineKind::Detailed => Box::new(DetailedSystem::from_case(case)?),
    })
}

/// Result of one orchestrated run plus derived reporting quantities.
pub struct RunOutcome {
    pub result: SimResult,
    /// Largest relative rotor-angle spread over the trace, degrees.
    pub max_angle_deg: f64,
    /// Infinity-norm error against the RK4 reference, when benchmarked.
    pub max_error: Option<f64>,
    pub mean_error: Option<f64>,
    /// The reference trace itself, when benchmarked.
    pub benchmark: Option<Trace>,
}

/// Runs `case` under `cfg` and, when requested, an RK4 reference alongside.
pub fn run_case(case: &NetworkCase, cfg: &RunConfig) -> dtsim_core::Result<RunOutcome> {
    let mut model = build_model(case)?;
    let x0 = model.initial_state();
    let opts = SimOptions {
        t_end: cfg.t_end,
        instability_threshold_deg: cfg.instability_threshold_deg,
    };
    let step_cfg = cfg.step_config();
    let order_cfg = cfg.order_config();
    let result = match cfg.solver {
        Solver::DtFixed => {
            let order = cfg.fixed_order.unwrap_or(cfg.k0);
            let h = cfg.fixed_h.expect("validated");
            fixed_integrate(model.as_mut(), &x0, order, h, &opts)?
        }
        Solver::VsDt => {
            let order = cfg.fixed_order.unwrap_or(cfg.k0);
            vs_integrate(model.as_mut(), &x0, order, cfg.h0, &step_cfg, &opts)?
        }
        Solver::VsooDt => vsoo_integrate(model.as_mut(), &x0, cfg.h0, &step_cfg, &order_cfg, &opts)?,
        Solver::Rk4 | Solver::Me => {
            let method = if cfg.solver == Solver::Rk4 {
                BaselineMethod::Rk4
            } else {
                BaselineMethod::ModifiedEuler
            };
            let h = cfg.fixed_h.expect("validated");
            let trace = baseline_integrate(model.as_mut(), &x0, method, h, cfg.t_end)?;
            baseline_result(model.as_ref(), trace, &opts)
        }
    };
    let max_angle_deg = result
        .trace
        .states
        .iter()
        .map(|row| model.angle_spread_deg(row))
        .fold(0.0, f64::max);

    let (mut max_error, mut mean_error, mut benchmark) = (None, None, None);
    if cfg.benchmark {
        let mut ref_model = build_model(case)?;
        let ref_x0 = ref_model.initial_state();
        let bench = baseline_integrate(
            ref_model.as_mut(),
            &ref_x0,
            BaselineMethod::Rk4,
            BENCHMARK_H,
            // Compare only over the simulated window when the run ended early.
            result.trace.times.last().copied().unwrap_or(cfg.t_end),
        )?;
        let err = benchmark_error(&result.trace, &bench)?;
        max_error = Some(err.max);
        mean_error = Some(err.mean);
        benchmark = Some(bench);
    }
    Ok(RunOutcome {
        result,
        max_angle_deg,
        max_error,
        mean_error,
        benchmark,
    })
}

/// Wraps a fixed-step baseline trace in the common result shape, applying the
/// instability cutoff after the fact.
fn baseline_result(model: &dyn DynamicModel, mut trace: Trace, opts: &SimOptions) -> SimResult {
    let mut unstable_at = None;
    if let Some(pos) = trace
        .states
        .iter()
        .position(|row| model.angle_spread_deg(row) >= opts.instability_threshold_deg)
    {
        unstable_at = Some(trace.times[pos]);
        trace.times.truncate(pos + 1);
        trace.states.truncate(pos + 1);
    }
    SimResult {
        trace,
        steps: Vec::new(),
        multiplies: 0.0,
        rejected_total: 0,
        unstable_at,
        warnings: Vec::new(),
    }
}

/// One contingency per in-service branch: a solid fault at the from-bus,
/// cleared after [`N1_FAULT_DURATION`] by tripping the faulted branch.
pub fn make_contingencies(case: &NetworkCase) -> Vec<(String, NetworkCase)> {
    let mut out = Vec::new();
    for (idx, br) in case.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let id = format!("br{:02}-{}-{}", idx, br.from, br.to);
        let mut variant = case.clone();
        let trip_t = N1_FAULT_START + N1_FAULT_DURATION;
        variant.events = vec![
            Event::FaultApply {
                t: N1_FAULT_START,
                bus: br.from,
                admittance: 1e7,
            },
            Event::BranchTrip {
                t: trip_t,
                from: br.from,
                to: br.to,
            },
            Event::FaultClear {
                t: trip_t + N1_CLEAR_OFFSET,
            },
        ];
        out.push((id, variant));
    }
    out
}

fn contingency_row(id: &str, case: &NetworkCase, cfg: &RunConfig) -> ContingencyRow {
    match case.validate().and_then(|_| run_case(case, cfg)) {
        Ok(outcome) => {
            let res = &outcome.result;
            ContingencyRow {
                id: id.to_string(),
                stable: res.unstable_at.is_none(),
                t_end: res.trace.times.last().copied().unwrap_or(0.0),
                max_angle_deg: outcome.max_angle_deg,
                multiplies: res.multiplies,
                steps: res.steps.len(),
                max_error: outcome.max_error,
                mean_error: outcome.mean_error,
                error: None,
            }
        }
        Err(e) => ContingencyRow {
            id: id.to_string(),
            stable: false,
            t_end: 0.0,
            max_angle_deg: 0.0,
            multiplies: 0.0,
            steps: 0,
            max_error: None,
            mean_error: None,
            error: Some(e.to_string().replace([',', '\n'], ";")),
        },
    }
}

/// Runs the whole N-1 batch on `jobs` worker threads. The report is sorted
/// by contingency id, so its bytes do not depend on `jobs`.
pub fn run_screening(
    case: &NetworkCase,
    cfg: &RunConfig,
    jobs: usize,
) -> dtsim_core::Result<ScreeningReport> {
    use rayon::prelude::*;
    let contingencies = make_contingencies(case);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Init(format!("cannot build worker pool: {e}")))?;
    let rows: Vec<ContingencyRow> = pool.install(|| {
        contingencies
            .par_iter()
            .map(|(id, variant)| contingency_row(id, variant, cfg))
            .collect()
    });
    let mut report = ScreeningReport { rows };
    report.sort();
    Ok(report)
}
