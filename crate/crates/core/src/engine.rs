//! Generic augmented-system recursion: given a constant matrix `J` and layered
//! intermediate-variable rules, one call fills a coefficient block through a
//! requested order and evaluates the resulting series at the step length.
//!
//! The recursion is `X(k+1) = J * Z(k) / (k+1)` with `Z(k) = (X(k), Y(k))`,
//! where every `Y(k)` is produced by an [`IntermediateRule`] from coefficients
//! of order at most `k`.

use crate::error::{Error, Result};
use crate::series::{conv_product, dt_sqrt, series_eval, CoefficientBlock};

/// Hard ceiling on the recursion order. Factorial scaling of coefficient
/// magnitudes risks double-precision overflow well before this point; the
/// practical envelope is K <= 45.
pub const MAX_ORDER: usize = 60;

/// How one intermediate row is computed from earlier rows.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    /// Constant series: `value` at order 0, zero above.
    Constant(f64),
    /// Sine of an angle row; `cos_row` is the partner cosine row (only its
    /// orders below k are read, so the partner may be registered after this
    /// rule).
    SinOf { angle: usize, cos_row: usize },
    /// Cosine of an angle row; `sin_row` is the partner sine row.
    CosOf { angle: usize, sin_row: usize },
    /// Cauchy product of two earlier rows.
    Product(usize, usize),
    /// Weighted sum of earlier rows with constant weights.
    Linear(Vec<(usize, f64)>),
    /// Square root of an earlier (non-negative at order 0) row.
    SqrtOf(usize),
}

/// One intermediate variable: the row it fills and the rule that fills it.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateRule {
    pub target: usize,
    pub kind: RuleKind,
}

/// Constant-matrix augmented system: dimensions, the sparse rows of `J`
/// (column index, weight) and the ordered intermediate rules.
///
/// Immutable per continuous segment; events and limiter mode changes require
/// building a fresh spec.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystemSpec {
    /// State dimension N_x.
    pub n_state: usize,
    /// Augmented dimension N_z = N_x + number of intermediates.
    pub n_aug: usize,
    /// Sparse rows of J, one per state variable.
    pub j_rows: Vec<Vec<(usize, f64)>>,
    pub rules: Vec<IntermediateRule>,
}

impl AugmentedSystemSpec {
    /// Number of nonzero entries of J.
    pub fn j_nnz(&self) -> usize {
        self.j_rows.iter().map(Vec::len).sum()
    }
}

/// Incremental construction of an [`AugmentedSystemSpec`].
///
/// Rows are handed out in registration order, which makes the layer ordering
/// invariant hold by construction as long as each rule only references rows
/// returned earlier (sin/cos partners being the one sanctioned exception).
#[derive(Debug, Clone)]
pub struct SpecBuilder {
    n_state: usize,
    rules: Vec<IntermediateRule>,
    j_rows: Vec<Vec<(usize, f64)>>,
}

impl SpecBuilder {
    pub fn new(n_state: usize) -> Self {
        SpecBuilder {
            n_state,
            rules: Vec::new(),
            j_rows: vec![Vec::new(); n_state],
        }
    }

    fn push(&mut self, kind: RuleKind) -> usize {
        let target = self.n_state + self.rules.len();
        self.rules.push(IntermediateRule { target, kind });
        target
    }

    /// Registers a constant row (series `[value, 0, 0, ..]`).
    pub fn constant(&mut self, value: f64) -> usize {
        self.push(RuleKind::Constant(value))
    }

    /// Registers the coupled (sin, cos) pair of an angle row.
    pub fn sin_cos(&mut self, angle: usize) -> (usize, usize) {
        let sin_row = self.n_state + self.rules.len();
        let cos_row = sin_row + 1;
        self.push(RuleKind::SinOf { angle, cos_row });
        self.push(RuleKind::CosOf { angle, sin_row });
        (sin_row, cos_row)
    }

    pub fn product(&mut self, a: usize, b: usize) -> usize {
        self.push(RuleKind::Product(a, b))
    }

    pub fn linear(&mut self, terms: Vec<(usize, f64)>) -> usize {
        self.push(RuleKind::Linear(terms))
    }

    pub fn sqrt(&mut self, square_row: usize) -> usize {
        self.push(RuleKind::SqrtOf(square_row))
    }

    /// Adds (accumulates) a J entry for one state derivative.
    pub fn add_j(&mut self, state_row: usize, col: usize, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let row = &mut self.j_rows[state_row];
        if let Some(entry) = row.iter_mut().find(|(c, _)| *c == col) {
            entry.1 += weight;
        } else {
            row.push((col, weight));
        }
    }

    /// Finalizes the spec, failing on hard diagnostics (ordering or
    /// dimension violations). Unreferenced-row notes do not fail the build.
    pub fn build(self) -> Result<AugmentedSystemSpec> {
        let spec = AugmentedSystemSpec {
            n_state: self.n_state,
            n_aug: self.n_state + self.rules.len(),
            j_rows: self.j_rows,
            rules: self.rules,
        };
        let diag = validate_spec(&spec);
        if diag.has_errors() {
            return Err(Error::InvalidSpec(diag.errors.join("; ")));
        }
        Ok(spec)
    }
}

/// Outcome of [`validate_spec`]: hard violations and informational notes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecDiagnostics {
    /// Ordering violations and dimension mismatches.
    pub errors: Vec<String>,
    /// Rows never read by J or by any other rule.
    pub notes: Vec<String>,
}

impl SpecDiagnostics {
    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.notes.is_empty()
    }
}

/// Checks layer ordering, J dimensions and row referencing of a spec.
pub fn validate_spec(spec: &AugmentedSystemSpec) -> SpecDiagnostics {
    let mut diag = SpecDiagnostics::default();
    let n_state = spec.n_state;
    let n_aug = spec.n_aug;

    if spec.j_rows.len() != n_state {
        diag.errors.push(format!(
            "J has {} rows, expected n_state = {}",
            spec.j_rows.len(),
            n_state
        ));
    }
    if n_aug != n_state + spec.rules.len() {
        diag.errors.push(format!(
            "n_aug = {} does not match n_state + rules = {}",
            n_aug,
            n_state + spec.rules.len()
        ));
    }
    for (i, row) in spec.j_rows.iter().enumerate() {
        for &(col, _) in row {
            if col >= n_aug {
                diag.errors
                    .push(format!("J row {i} references column {col} >= n_aug {n_aug}"));
            }
        }
    }

    let mut referenced = vec![false; n_aug];
    for row in &spec.j_rows {
        for &(col, _) in row {
            if col < n_aug {
                referenced[col] = true;
            }
        }
    }

    for (idx, rule) in spec.rules.iter().enumerate() {
        let expected = n_state + idx;
        if rule.target != expected {
            diag.errors.push(format!(
                "rule {idx} targets row {} but registration order implies {expected}",
                rule.target
            ));
        }
        let target = rule.target;
        let mut check_src = |src: usize, what: &str| {
            if src >= n_aug {
                diag.errors
                    .push(format!("rule for row {target} reads out-of-range {what} {src}"));
            } else {
                if src >= target {
                    diag.errors.push(format!(
                        "rule for row {target} reads later {what} row {src} (ordering violation)"
                    ));
                }
                referenced[src] = true;
            }
        };
        match &rule.kind {
            RuleKind::Constant(_) => {}
            RuleKind::SinOf { angle, cos_row } | RuleKind::CosOf { angle, sin_row: cos_row } => {
                check_src(*angle, "angle");
                // The partner is read only at strictly lower orders, so it may
                // legitimately sit after the target; only range and kind are
                // checked.
                if *cos_row >= n_aug || *cos_row < n_state {
                    diag.errors.push(format!(
                        "rule for row {target} has invalid sin/cos partner row {cos_row}"
                    ));
                } else {
                    let partner = &spec.rules[*cos_row - n_state].kind;
                    let matches = match (&rule.kind, partner) {
                        (RuleKind::SinOf { angle: a, .. }, RuleKind::CosOf { angle: b, .. }) => a == b,
                        (RuleKind::CosOf { angle: a, .. }, RuleKind::SinOf { angle: b, .. }) => a == b,
                        _ => false,
                    };
                    if !matches {
                        diag.errors.push(format!(
                            "rule for row {target}: partner row {cos_row} is not the matching sin/cos of the same angle"
                        ));
                    }
                    referenced[*cos_row] = true;
                }
            }
            RuleKind::Product(a, b) => {
                check_src(*a, "source");
                check_src(*b, "source");
            }
            RuleKind::Linear(terms) => {
                for &(src, _) in terms {
                    check_src(src, "source");
                }
            }
            RuleKind::SqrtOf(w) => check_src(*w, "source"),
        }
    }

    for row in n_state..n_aug {
        if !referenced[row] {
            diag.notes.push(format!("intermediate row {row} is never referenced"));
        }
    }
    diag
}

/// Runs the single-step recursion: fills a coefficient block through order `K`
/// starting from `x0` and evaluates the next state at step length `h`.
pub fn dt_step(
    spec: &AugmentedSystemSpec,
    x0: &[f64],
    order: usize,
    h: f64,
) -> Result<(CoefficientBlock, Vec<f64>)> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidSpec(format!(
            "order {order} outside supported range 1..={MAX_ORDER}"
        )));
    }
    if x0.len() != spec.n_state {
        return Err(Error::InvalidSpec(format!(
            "initial state has {} entries, spec expects {}",
            x0.len(),
            spec.n_state
        )));
    }
    let mut block = CoefficientBlock::zeros(order, spec.n_state, spec.n_aug);
    for (row, &v) in x0.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::StepDiverged { row, order: 0 });
        }
        block.coeffs[row][0] = v;
    }

    for k in 0..=order {
        for rule in &spec.rules {
            let value = eval_rule(&block, rule, k);
            if !value.is_finite() {
                return Err(Error::StepDiverged {
                    row: rule.target,
                    order: k,
                });
            }
            block.coeffs[rule.target][k] = value;
        }
        if k < order {
            for (row, j_row) in spec.j_rows.iter().enumerate() {
                let mut acc = 0.0;
                for &(col, w) in j_row {
                    acc += w * block.coeffs[col][k];
                }
                let value = acc / (k + 1) as f64;
                if !value.is_finite() {
                    return Err(Error::StepDiverged { row, order: k + 1 });
                }
                block.coeffs[row][k + 1] = value;
            }
        }
    }

    let x_next = series_eval(&block, h)?;
    Ok((block, x_next))
}

/// State derivative under the spec at one point: evaluates every intermediate
/// rule at order zero and applies `J` to the augmented vector.
///
/// This is the right-hand side the series expansion is consistent with, which
/// makes it directly usable by classical one-step integrators.
pub fn eval_rhs(spec: &AugmentedSystemSpec, x: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(x.len(), spec.n_state);
    debug_assert_eq!(dx.len(), spec.n_state);
    let mut block = CoefficientBlock::zeros(0, spec.n_state, spec.n_aug);
    for (row, &v) in x.iter().enumerate() {
        block.coeffs[row][0] = v;
    }
    for rule in &spec.rules {
        block.coeffs[rule.target][0] = eval_rule(&block, rule, 0);
    }
    for (row, j_row) in spec.j_rows.iter().enumerate() {
        let mut acc = 0.0;
        for &(col, w) in j_row {
            acc += w * block.coeffs[col][0];
        }
        dx[row] = acc;
    }
}

fn eval_rule(block: &CoefficientBlock, rule: &IntermediateRule, k: usize) -> f64 {
    let c = &block.coeffs;
    match &rule.kind {
        RuleKind::Constant(v) => {
            if k == 0 {
                *v
            } else {
                0.0
            }
        }
        RuleKind::SinOf { angle, cos_row } => {
            if k == 0 {
                c[*angle][0].sin()
            } else {
                let delta = &c[*angle];
                let cos = &c[*cos_row];
                let mut acc = 0.0;
                for m in 1..=k {
                    acc += m as f64 * delta[m] * cos[k - m];
                }
                acc / k as f64
            }
        }
        RuleKind::CosOf { angle, sin_row } => {
            if k == 0 {
                c[*angle][0].cos()
            } else {
                let delta = &c[*angle];
                let sin = &c[*sin_row];
                let mut acc = 0.0;
                for m in 1..=k {
                    acc -= m as f64 * delta[m] * sin[k - m];
                }
                acc / k as f64
            }
        }
        RuleKind::Product(a, b) => conv_product(&c[*a], &c[*b], k),
        RuleKind::Linear(terms) => terms.iter().map(|&(src, w)| w * c[src][k]).sum(),
        RuleKind::SqrtOf(w) => {
            if k == 0 {
                c[*w][0].sqrt()
            } else {
                dt_sqrt(&c[*w], &c[rule.target], k)
            }
        }
    }
}
