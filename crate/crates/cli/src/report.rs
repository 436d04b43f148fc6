//! N-1 screening report: per-contingency rows, CSV export and a quantile
//! summary of the cost and accuracy distributions.

use std::io::Write;

/// Outcome of a single contingency run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyRow {
    /// Stable identifier, e.g. `br03-5-7` for the branch between buses 5
    /// and 7 at position 3 of the branch list.
    pub id: String,
    /// `false` when the angle-spread cutoff fired or the run errored.
    pub stable: bool,
    /// Simulated time reached (equals the horizon for completed runs).
    pub t_end: f64,
    /// Largest relative rotor-angle spread seen, in degrees.
    pub max_angle_deg: f64,
    /// Total multiplication count of the run, including rejected attempts.
    pub multiplies: f64,
    pub steps: usize,
    /// Largest infinity-norm error against the reference, when benchmarked.
    pub max_error: Option<f64>,
    /// Mean of the per-step infinity-norm errors, when benchmarked.
    pub mean_error: Option<f64>,
    /// Failure description for runs that could not complete.
    pub error: Option<String>,
}

/// Batch result over every contingency, sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreeningReport {
    pub rows: Vec<ContingencyRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ScreeningReport {
    /// Stable sort by contingency id; makes the emitted bytes independent of
    /// the execution order of the batch.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.id.cmp(&b.id));
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "id,stable,t_end,max_angle_deg,multiplies,steps,max_error,mean_error,error"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.id,
                r.stable,
                r.t_end,
                r.max_angle_deg,
                r.multiplies,
                r.steps,
                opt(r.max_error),
                opt(r.mean_error),
                r.error.as_deref().unwrap_or(""),
            )?;
        }
        Ok(())
    }

    /// Human-readable batch summary with quantiles of the multiply-count and
    /// error distributions.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let unstable = self.rows.iter().filter(|r| !r.stable).count();
        let errored = self.rows.iter().filter(|r| r.error.is_some()).count();
        writeln!(w, "contingencies: {}", self.rows.len())?;
        writeln!(w, "unstable: {unstable}")?;
        writeln!(w, "errored: {errored}")?;
        let mults: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| r.multiplies)
            .collect();
        write_quantiles(&mut w, "multiplies", &mults)?;
        let errs: Vec<f64> = self.rows.iter().filter_map(|r| r.max_error).collect();
        if !errs.is_empty() {
            write_quantiles(&mut w, "max_error", &errs)?;
        }
        Ok(())
    }
}

fn write_quantiles<W: Write>(w: &mut W, label: &str, values: &[f64]) -> std::io::Result<()> {
    if values.is_empty() {
        return writeln!(w, "{label}: no data");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    writeln!(
        w,
        "{label}: min={:e} p25={:e} median={:e} p75={:e} max={:e}",
        sorted[0],
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.75),
        sorted[sorted.len() - 1],
    )
}

/// Linear-interpolation quantile on an already sorted slice (the common
/// "type 7" convention): the median of {1..100} is 50.5.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, mult: f64) -> ContingencyRow {
        ContingencyRow {
            id: id.into(),
            stable: true,
            t_end: 20.0,
            max_angle_deg: 12.0,
            multiplies: mult,
            steps: 100,
            max_error: None,
            mean_error: None,
            error: None,
        }
    }

    #[test]
    fn median_of_one_to_hundred_is_fifty_point_five() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(quantile(&v, 0.5), 50.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
    }

    #[test]
    fn empty_report_is_header_only() {
        let rep = ScreeningReport::default();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("id,stable,"));
    }

    #[test]
    fn row_count_matches() {
        let rep = ScreeningReport {
            rows: (0..9).map(|i| row(&format!("br{i:02}"), 1e5)).collect(),
        };
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }

    #[test]
    fn sort_is_by_id_and_stable() {
        let mut rep = ScreeningReport {
            rows: vec![row("br02-4-5", 2.0), row("br00-1-4", 1.0), row("br01-2-7", 3.0)],
        };
        rep.sort();
        let ids: Vec<&str> = rep.rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["br00-1-4", "br01-2-7", "br02-4-5"]);
    }

    #[test]
    fn summary_reports_quantiles() {
        let rep = ScreeningReport {
            rows: (1..=100).map(|i| row(&format!("br{i:03}"), i as f64)).collect(),
        };
        let mut buf = Vec::new();
        rep.write_summary(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("contingencies: 100"));
        assert!(text.contains("median=5.05e1"), "{text}");
    }
}
