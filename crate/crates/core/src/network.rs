//! Bus admittance construction, fault/trip stamping, Schur-complement
//! network reduction and Newton-Raphson power flow.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::case::{BusKind, Event, NetworkCase};
use crate::error::{Error, Result};

/// Which discontinuities are currently in force on the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkState {
    /// Active fault: (bus index, shunt admittance p.u.).
    pub fault: Option<(usize, f64)>,
    /// Tripped branches, as indices into the case branch list.
    pub tripped_branches: Vec<usize>,
    /// Tripped generators, as indices into the case generator list.
    pub tripped_generators: Vec<usize>,
}

impl NetworkState {
    /// Applies one scheduled event to the state.
    pub fn apply(&mut self, case: &NetworkCase, event: &Event) -> Result<()> {
        match event {
            Event::FaultApply { bus, admittance, .. } => {
                self.fault = Some((case.bus_index(*bus)?, *admittance));
            }
            Event::FaultClear { .. } => {
                if self.fault.take().is_none() {
                    return Err(Error::Event("fault-clear with no active fault".into()));
                }
            }
            Event::BranchTrip { from, to, .. } => {
                let idx = case.branch_index(*from, *to)?;
                if !self.tripped_branches.contains(&idx) {
                    self.tripped_branches.push(idx);
                }
            }
            Event::GeneratorTrip { id, .. } => {
                if *id >= case.generators.len() {
                    return Err(Error::Event(format!("no generator {id}")));
                }
                if !self.tripped_generators.contains(id) {
                    self.tripped_generators.push(*id);
                }
            }
        }
        Ok(())
    }

    pub fn generator_active(&self, idx: usize) -> bool {
        !self.tripped_generators.contains(&idx)
    }
}

/// Builds the bus admittance matrix under the given network state: branch
/// pi-model stamps, fixed bus shunts and the fault shunt. Optional extra
/// shunts (e.g. constant-admittance loads) are added to the diagonal.
///
/// Fails when any connected island ends up without a generator.
pub fn build_admittance(
    case: &NetworkCase,
    state: &NetworkState,
    extra_shunts: &[Complex64],
) -> Result<DMatrix<Complex64>> {
    let n = case.buses.len();
    debug_assert!(extra_shunts.is_empty() || extra_shunts.len() == n);
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (b_idx, br) in case.branches.iter().enumerate() {
        if !br.in_service || state.tripped_branches.contains(&b_idx) {
            continue;
        }
        let f = case.bus_index(br.from)?;
        let t = case.bus_index(br.to)?;
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ysh = Complex64::new(0.0, br.b / 2.0);
        y[(f, f)] += ys + ysh;
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(bus.shunt_g, bus.shunt_b);
        if !extra_shunts.is_empty() {
            y[(i, i)] += extra_shunts[i];
        }
    }
    if let Some((bus_idx, g)) = state.fault {
        y[(bus_idx, bus_idx)] += Complex64::new(g, 0.0);
    }
    check_islands(case, state)?;
    Ok(y)
}

/// Every connected island of the in-service branch graph must contain at
/// least one active generator.
fn check_islands(case: &NetworkCase, state: &NetworkState) -> Result<()> {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for (b_idx, br) in case.branches.iter().enumerate() {
        if !br.in_service || state.tripped_branches.contains(&b_idx) {
            continue;
        }
        let f = case.bus_index(br.from)?;
        let t = case.bus_index(br.to)?;
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut gen_buses = vec![false; n];
    for (g_idx, g) in case.generators.iter().enumerate() {
        if state.generator_active(g_idx) {
            gen_buses[case.bus_index(g.bus)?] = true;
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut n_comp = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = n_comp;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = n_comp;
                    stack.push(v);
                }
            }
        }
        n_comp += 1;
    }
    let mut has_gen = vec![false; n_comp];
    for i in 0..n {
        if gen_buses[i] {
            has_gen[component[i]] = true;
        }
    }
    for (c, ok) in has_gen.iter().enumerate() {
        if !ok {
            let members: Vec<usize> = (0..n)
                .filter(|&i| component[i] == c)
                .map(|i| case.buses[i].id)
                .collect();
            return Err(Error::Topology(format!(
                "island without a generator: buses {members:?}"
            )));
        }
    }
    Ok(())
}

/// Schur-complement reduction: eliminates every node not in `retained` and
/// returns the reduced matrix over the retained nodes, in their given order.
pub fn kron_reduce(y: &DMatrix<Complex64>, retained: &[usize]) -> Result<DMatrix<Complex64>> {
    let n = y.nrows();
    let keep: Vec<usize> = retained.to_vec();
    let elim: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    if elim.is_empty() {
        return Ok(y.select_rows(keep.iter()).select_columns(keep.iter()));
    }
    let y_kk = y.select_rows(keep.iter()).select_columns(keep.iter());
    let y_ke = y.select_rows(keep.iter()).select_columns(elim.iter());
    let y_ek = y.select_rows(elim.iter()).select_columns(keep.iter());
    let y_ee = y.select_rows(elim.iter()).select_columns(elim.iter());
    let lu = y_ee.lu();
    let solved = lu
        .solve(&y_ek)
        .ok_or_else(|| Error::Singular("eliminating network nodes".into()))?;
    Ok(y_kk - y_ke * solved)
}

/// Complex power injected into the network at every bus: `S_i = V_i (Y V)_i*`.
pub fn bus_injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let vv = DVector::from_row_slice(v);
    let i = y * &vv;
    v.iter().zip(i.iter()).map(|(vi, ii)| vi * ii.conj()).collect()
}

/// Newton-Raphson power flow in polar form. Returns the bus voltage phasors
/// in case bus order. Loads are injections here (not shunts); the dynamic
/// models convert them to constant admittances afterwards.
pub fn power_flow_nr(case: &NetworkCase, tol: f64, max_iter: usize) -> Result<Vec<Complex64>> {
    let n = case.buses.len();
    let y = build_admittance(case, &NetworkState::default(), &[])?;
    let g = y.map(|c| c.re);
    let b = y.map(|c| c.im);

    let mut vm: Vec<f64> = case.buses.iter().map(|bus| bus.vm).collect();
    let mut va: Vec<f64> = case.buses.iter().map(|bus| bus.va).collect();
    let p_spec: Vec<f64> = case.buses.iter().map(|bus| bus.p_gen - bus.p_load).collect();
    let q_spec: Vec<f64> = case.buses.iter().map(|bus| -bus.q_load).collect();

    // Unknowns: angles at PV+PQ buses, magnitudes at PQ buses.
    let ang_idx: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind != BusKind::Slack)
        .collect();
    let mag_idx: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusKind::Pq)
        .collect();
    let n_unk = ang_idx.len() + mag_idx.len();
    if n_unk == 0 {
        return Ok(vm
            .iter()
            .zip(&va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect());
    }

    let calc_pq = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let th = va[i] - va[j];
                let (s, c) = th.sin_cos();
                p[i] += vm[i] * vm[j] * (g[(i, j)] * c + b[(i, j)] * s);
                q[i] += vm[i] * vm[j] * (g[(i, j)] * s - b[(i, j)] * c);
            }
        }
        (p, q)
    };

    for _ in 0..max_iter {
        let (p_calc, q_calc) = calc_pq(&vm, &va);
        let mut mismatch = DVector::zeros(n_unk);
        for (r, &i) in ang_idx.iter().enumerate() {
            mismatch[r] = p_spec[i] - p_calc[i];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            mismatch[ang_idx.len() + r] = q_spec[i] - q_calc[i];
        }
        if mismatch.amax() < tol {
            return Ok(vm
                .iter()
                .zip(&va)
                .map(|(&m, &a)| Complex64::from_polar(m, a))
                .collect());
        }

        let mut jac = DMatrix::zeros(n_unk, n_unk);
        // dP/d(angle), dP/d|V|
        for (r, &i) in ang_idx.iter().enumerate() {
            for (c, &j) in ang_idx.iter().enumerate() {
                jac[(r, c)] = if i == j {
                    -q_calc[i] - b[(i, i)] * vm[i] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * vm[j] * (g[(i, j)] * th.sin() - b[(i, j)] * th.cos())
                };
            }
            for (c, &j) in mag_idx.iter().enumerate() {
                jac[(r, ang_idx.len() + c)] = if i == j {
                    p_calc[i] / vm[i] + g[(i, i)] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * (g[(i, j)] * th.cos() + b[(i, j)] * th.sin())
                };
            }
        }
        // dQ/d(angle), dQ/d|V|
        for (r, &i) in mag_idx.iter().enumerate() {
            for (c, &j) in ang_idx.iter().enumerate() {
                jac[(ang_idx.len() + r, c)] = if i == j {
                    p_calc[i] - g[(i, i)] * vm[i] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    -vm[i] * vm[j] * (g[(i, j)] * th.cos() + b[(i, j)] * th.sin())
                };
            }
            for (c, &j) in mag_idx.iter().enumerate() {
                jac[(ang_idx.len() + r, ang_idx.len() + c)] = if i == j {
                    q_calc[i] / vm[i] - b[(i, i)] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * (g[(i, j)] * th.sin() - b[(i, j)] * th.cos())
                };
            }
        }

        let delta = jac
            .lu()
            .solve(&mismatch)
            .ok_or_else(|| Error::Singular("solving the power-flow update".into()))?;
        if !delta.iter().all(|d| d.is_finite()) {
            return Err(Error::PowerFlowDiverged(max_iter));
        }
        for (r, &i) in ang_idx.iter().enumerate() {
            va[i] += delta[r];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            vm[i] += delta[ang_idx.len() + r];
            if vm[i] <= 0.0 {
                return Err(Error::PowerFlowDiverged(max_iter));
            }
        }
    }
    Err(Error::PowerFlowDiverged(max_iter))
}

/// Constant-admittance equivalents of the bus loads at their power-flow
/// voltages: `y_L = (P - jQ) / |V|^2`.
pub fn load_admittances(case: &NetworkCase, v: &[Complex64]) -> Vec<Complex64> {
    case.buses
        .iter()
        .zip(v)
        .map(|(bus, vi)| Complex64::new(bus.p_load, -bus.q_load) / vi.norm_sqr())
        .collect()
}

/// Real 2x2-block expansion of a complex matrix: each entry `G + jB` becomes
/// `[[G, -B], [B, G]]`, acting on stacked `(x, y)` component pairs.
pub fn complex_to_real_blocks(y: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = y.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let Complex { re, im } = y[(i, j)];
            out[(2 * i, 2 * j)] = re;
            out[(2 * i, 2 * j + 1)] = -im;
            out[(2 * i + 1, 2 * j)] = im;
            out[(2 * i + 1, 2 * j + 1)] = re;
        }
    }
    out
}
