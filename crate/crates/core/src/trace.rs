//! Simulation output containers and their CSV formats.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::order::Provenance;

/// A simulated trajectory: strictly increasing times, one state row per
/// accepted step (plus the initial condition) and the variable names that
/// label the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(names: Vec<String>) -> Self {
        Trace {
            names,
            times: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: Vec<f64>) {
        debug_assert!(self.times.last().map_or(true, |&last| t > last));
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes the trace as CSV: header `t,<names..>`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for name in &self.names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses a trace written by [`Trace::write_csv`].
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Comparison("empty trace file".into()))??;
        let mut cols = header.split(',');
        if cols.next() != Some("t") {
            return Err(Error::Comparison("trace header must start with 't'".into()));
        }
        let names: Vec<String> = cols.map(str::to_owned).collect();
        let mut trace = Trace::new(names);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let t: f64 = it
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::Comparison(format!("bad time value: {e}")))?;
            let row: std::result::Result<Vec<f64>, _> = it.map(str::parse).collect();
            let row = row.map_err(|e| Error::Comparison(format!("bad state value: {e}")))?;
            if row.len() != trace.names.len() {
                return Err(Error::Comparison("row width does not match header".into()));
            }
            trace.push(t, row);
        }
        Ok(trace)
    }
}

/// Per-accepted-step solver log entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    pub h: f64,
    pub order: usize,
    /// Per-time error estimate of the accepted step.
    pub e_n: f64,
    /// Convergence-radius estimate of the accepted step.
    pub r: f64,
    pub provenance: Provenance,
    /// Rejected attempts before this step was accepted.
    pub rejected: usize,
}

/// Writes a step log as CSV with the schema
/// `t,h,K,e_n,r,provenance,rejected_count`.
pub fn write_step_log<W: Write>(mut w: W, steps: &[StepRecord]) -> Result<()> {
    writeln!(w, "t,h,K,e_n,r,provenance,rejected_count")?;
    for s in steps {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t, s.h, s.order, s.e_n, s.r, s.provenance, s.rejected
        )?;
    }
    Ok(())
}

/// Per-step comparison of a trace against a densely sampled benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    /// `(t, inf-norm error)` per trace sample.
    pub series: Vec<(f64, f64)>,
    pub max: f64,
    pub mean: f64,
}

/// Infinity-norm error of `trace` against `benchmark` at every trace time.
///
/// The benchmark is expected to be densely and uniformly sampled; each trace
/// time is compared against the linear interpolant between the two bracketing
/// benchmark samples, so adaptive step endpoints are not penalized for the
/// benchmark's sampling grid. The trace itself is never interpolated.
pub fn benchmark_error(trace: &Trace, benchmark: &Trace) -> Result<ErrorSeries> {
    if trace.names.len() != benchmark.names.len() {
        return Err(Error::Comparison(
            "trace and benchmark have different variable counts".into(),
        ));
    }
    if benchmark.len() < 2 {
        return Err(Error::Comparison("benchmark too short".into()));
    }
    let h_bench = benchmark.times[1] - benchmark.times[0];
    let t0 = benchmark.times[0];
    let t_last = *benchmark.times.last().unwrap();
    let mut series = Vec::with_capacity(trace.len());
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    for (t, row) in trace.times.iter().zip(&trace.states) {
        if *t < t0 - h_bench / 2.0 || *t > t_last + h_bench / 2.0 {
            return Err(Error::Comparison(format!(
                "trace time {t} outside benchmark range [{t0}, {t_last}]"
            )));
        }
        let pos = ((*t - t0) / h_bench).clamp(0.0, (benchmark.len() - 1) as f64);
        let lo = (pos.floor() as usize).min(benchmark.len() - 2);
        let frac = pos - lo as f64;
        if !(0.0..=1.0 + 1e-9).contains(&frac) {
            return Err(Error::Comparison(format!(
                "no benchmark interval bracketing t = {t}"
            )));
        }
        let (a_row, b_row) = (&benchmark.states[lo], &benchmark.states[lo + 1]);
        let err = row
            .iter()
            .zip(a_row.iter().zip(b_row))
            .map(|(x, (a, b))| (x - (a + frac * (b - a))).abs())
            .fold(0.0, f64::max);
        series.push((*t, err));
        max = max.max(err);
        sum += err;
    }
    let mean = if series.is_empty() { 0.0 } else { sum / series.len() as f64 };
    Ok(ErrorSeries { series, max, mean })
}
