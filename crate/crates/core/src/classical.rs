//! Constant-EMF swing-equation multi-machine model: power-flow based
//! initialization, reduction to machine internal nodes and the series spec
//! of the resulting angle/slip dynamics.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::case::{MachineKind, NetworkCase};
use crate::engine::{AugmentedSystemSpec, SpecBuilder};
use crate::error::{Error, Result};
use crate::model::DynamicModel;
use crate::network::{
    build_admittance, bus_injections, kron_reduce, load_admittances, power_flow_nr, NetworkState,
};
use crate::order::ComplexityModel;

const EVENT_TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Machine {
    /// Bus index (position in the case bus list).
    bus: usize,
    h: f64,
    d: f64,
    xd_prime: f64,
    /// Internal EMF magnitude, held constant.
    e: f64,
    /// Initial rotor angle, rad.
    delta0: f64,
    /// Mechanical power, held constant.
    p_m: f64,
}

/// Multi-machine swing model over a reduced network.
///
/// States are `[delta_0 .. delta_{m-1}, s_0 .. s_{m-1}]` (rotor angles in
/// radians, then per-unit slips). A slack bus without a generator is kept as
/// an ideal constant-voltage source (infinite bus). Loads are converted to
/// constant shunt admittances at their power-flow voltages.
pub struct ClassicalSystem {
    case: NetworkCase,
    net_state: NetworkState,
    load_shunts: Vec<Complex64>,
    machines: Vec<Machine>,
    /// Constant-voltage sources kept in the reduction: (bus index, E, delta).
    fixed_sources: Vec<(usize, f64, f64)>,
    omega_s: f64,
    spec: AugmentedSystemSpec,
    /// Reduced admittance over [active machine internal nodes | fixed sources].
    y_red: DMatrix<Complex64>,
    /// Active machine indices, in reduced-node order.
    active: Vec<usize>,
    x0: Vec<f64>,
}

impl ClassicalSystem {
    pub fn from_case(case: &NetworkCase) -> Result<Self> {
        if case
            .generators
            .iter()
            .any(|g| g.model != MachineKind::Classical)
        {
            return Err(Error::Case(
                "classical system requires every generator to use the classical model".into(),
            ));
        }
        let v = power_flow_nr(case, 1e-8, 20)?;
        let y0 = build_admittance(case, &NetworkState::default(), &[])?;
        let s_inj = bus_injections(&y0, &v);

        let mut machines = Vec::with_capacity(case.generators.len());
        for g in &case.generators {
            let b = case.bus_index(g.bus)?;
            let p = &case.machines.classical[g.params];
            let bus = &case.buses[b];
            let s_gen = s_inj[b] + Complex64::new(bus.p_load, bus.q_load);
            let i = (s_gen / v[b]).conj();
            let e_ph = v[b] + Complex64::new(0.0, p.xd_prime) * i;
            machines.push(Machine {
                bus: b,
                h: p.h,
                d: p.d,
                xd_prime: p.xd_prime,
                e: p.e.unwrap_or(e_ph.norm()),
                delta0: e_ph.arg(),
                p_m: p.p_m.unwrap_or(s_gen.re),
            });
        }

        let gen_buses: Vec<usize> = machines.iter().map(|m| m.bus).collect();
        let fixed_sources: Vec<(usize, f64, f64)> = case
            .buses
            .iter()
            .enumerate()
            .filter(|(i, b)| b.kind == crate::case::BusKind::Slack && !gen_buses.contains(i))
            .map(|(i, _)| (i, v[i].norm(), v[i].arg()))
            .collect();

        let x0: Vec<f64> = machines
            .iter()
            .map(|m| m.delta0)
            .chain(std::iter::repeat(0.0).take(machines.len()))
            .collect();

        let mut sys = ClassicalSystem {
            case: case.clone(),
            net_state: NetworkState::default(),
            load_shunts: load_admittances(case, &v),
            machines,
            fixed_sources,
            omega_s: case.omega_s(),
            spec: SpecBuilder::new(0).build()?,
            y_red: DMatrix::zeros(0, 0),
            active: Vec::new(),
            x0,
        };
        sys.rebuild()?;
        Ok(sys)
    }

    /// Rebuilds the reduced network and the series spec for the current
    /// network state (called at construction and after every event).
    fn rebuild(&mut self) -> Result<()> {
        let n = self.case.buses.len();
        let base = build_admittance(&self.case, &self.net_state, &self.load_shunts)?;
        self.active = (0..self.machines.len())
            .filter(|&i| self.net_state.generator_active(i))
            .collect();

        // Augment with one internal node per active machine, behind x'_d.
        let na = n + self.active.len();
        let mut y = DMatrix::from_element(na, na, Complex64::new(0.0, 0.0));
        y.view_mut((0, 0), (n, n)).copy_from(&base);
        for (k, &mi) in self.active.iter().enumerate() {
            let m = &self.machines[mi];
            let yint = Complex64::new(1.0, 0.0) / Complex64::new(0.0, m.xd_prime);
            let int = n + k;
            y[(m.bus, m.bus)] += yint;
            y[(int, int)] += yint;
            y[(m.bus, int)] -= yint;
            y[(int, m.bus)] -= yint;
        }
        let retained: Vec<usize> = (n..na)
            .chain(self.fixed_sources.iter().map(|&(b, _, _)| b))
            .collect();
        self.y_red = kron_reduce(&y, &retained)?;
        self.spec = self.build_spec()?;
        Ok(())
    }

    fn build_spec(&self) -> Result<AugmentedSystemSpec> {
        let m = self.machines.len();
        let mut b = SpecBuilder::new(2 * m);
        let one = b.constant(1.0);

        // sin/cos rows per active machine, keyed by machine index.
        let mut trig = vec![None; m];
        for &mi in &self.active {
            trig[mi] = Some(b.sin_cos(mi));
        }

        for (a, &mi) in self.active.iter().enumerate() {
            let mach = &self.machines[mi];
            let two_h = 2.0 * mach.h;
            let (sin_i, cos_i) = trig[mi].unwrap();

            b.add_j(mi, m + mi, self.omega_s);
            let g_aa = self.y_red[(a, a)].re;
            b.add_j(m + mi, one, (mach.p_m - mach.e * mach.e * g_aa) / two_h);
            b.add_j(m + mi, m + mi, -mach.d / two_h);

            // Interaction with constant-voltage sources, folded onto the
            // machine's own sin/cos rows.
            for (fk, &(_, ef, df)) in self.fixed_sources.iter().enumerate() {
                let yif = self.y_red[(a, self.active.len() + fk)];
                let (sf, cf) = df.sin_cos();
                let w = mach.e * ef;
                let w_cos = w * (yif.re * cf - yif.im * sf);
                let w_sin = w * (yif.re * sf + yif.im * cf);
                b.add_j(m + mi, cos_i, -w_cos / two_h);
                b.add_j(m + mi, sin_i, -w_sin / two_h);
            }
        }

        // Pairwise machine interactions via trigonometric products.
        for a in 0..self.active.len() {
            for c in (a + 1)..self.active.len() {
                let (i, j) = (self.active[a], self.active[c]);
                let yij = self.y_red[(a, c)];
                let w = self.machines[i].e * self.machines[j].e;
                let (sin_i, cos_i) = trig[i].unwrap();
                let (sin_j, cos_j) = trig[j].unwrap();
                let cc = b.product(cos_i, cos_j);
                let ss = b.product(sin_i, sin_j);
                let sc_ij = b.product(sin_i, cos_j);
                let sc_ji = b.product(sin_j, cos_i);
                let two_hi = 2.0 * self.machines[i].h;
                let two_hj = 2.0 * self.machines[j].h;
                // P_e_i gains w[G(cc+ss) + B(sc_ij - sc_ji)], P_e_j the
                // mirror image; the swing row carries -P_e / 2H.
                b.add_j(m + i, cc, -w * yij.re / two_hi);
                b.add_j(m + i, ss, -w * yij.re / two_hi);
                b.add_j(m + i, sc_ij, -w * yij.im / two_hi);
                b.add_j(m + i, sc_ji, w * yij.im / two_hi);
                b.add_j(m + j, cc, -w * yij.re / two_hj);
                b.add_j(m + j, ss, -w * yij.re / two_hj);
                b.add_j(m + j, sc_ji, -w * yij.im / two_hj);
                b.add_j(m + j, sc_ij, w * yij.im / two_hj);
            }
        }
        b.build()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    /// Electrical power of each active machine at the given state, computed
    /// from the swing residuals of the point-wise right-hand side.
    pub fn electrical_power(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let m = self.machines.len();
        let mut dx = vec![0.0; 2 * m];
        self.rhs(x, &mut dx);
        self.active
            .iter()
            .map(|&i| {
                let mach = &self.machines[i];
                let p_e = mach.p_m - mach.d * x[m + i] - 2.0 * mach.h * dx[m + i];
                (i, p_e)
            })
            .collect()
    }

    /// Total energy (kinetic plus potential) of a lossless, undamped system.
    /// Meaningful only when every reduced conductance vanishes.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let m = self.machines.len();
        let mut node_e = Vec::new();
        let mut node_delta = Vec::new();
        for &mi in &self.active {
            node_e.push(self.machines[mi].e);
            node_delta.push(x[mi]);
        }
        for &(_, ef, df) in &self.fixed_sources {
            node_e.push(ef);
            node_delta.push(df);
        }
        let mut total = 0.0;
        for (k, &mi) in self.active.iter().enumerate() {
            let mach = &self.machines[mi];
            total += mach.h * self.omega_s * x[m + mi] * x[m + mi];
            total -= mach.p_m * node_delta[k];
        }
        for a in 0..node_e.len() {
            for c in (a + 1)..node_e.len() {
                total -= node_e[a]
                    * node_e[c]
                    * self.y_red[(a, c)].im
                    * (node_delta[a] - node_delta[c]).cos();
            }
        }
        total
    }

    pub fn reduced_admittance(&self) -> &DMatrix<Complex64> {
        &self.y_red
    }
}

impl DynamicModel for ClassicalSystem {
    fn n_state(&self) -> usize {
        2 * self.machines.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        ClassicalSystem::initial_state(self)
    }

    fn var_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .machines
            .iter()
            .map(|m| format!("delta_bus{}", self.case.buses[m.bus].id))
            .collect();
        names.extend(
            self.machines
                .iter()
                .map(|m| format!("slip_bus{}", self.case.buses[m.bus].id)),
        );
        names
    }

    fn spec(&self) -> &AugmentedSystemSpec {
        &self.spec
    }

    fn event_times(&self) -> Vec<f64> {
        self.case.events.iter().map(|e| e.time()).collect()
    }

    fn apply_events_at(&mut self, t: f64, _x: &mut [f64]) -> Result<()> {
        let events: Vec<_> = self
            .case
            .events
            .iter()
            .filter(|e| (e.time() - t).abs() < EVENT_TIME_EPS)
            .cloned()
            .collect();
        if events.is_empty() {
            return Ok(());
        }
        for ev in &events {
            let case = self.case.clone();
            self.net_state.apply(&case, ev)?;
        }
        self.rebuild()
    }

    fn angle_spread_deg(&self, x: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &mi in &self.active {
            lo = lo.min(x[mi]);
            hi = hi.max(x[mi]);
        }
        for &(_, _, df) in &self.fixed_sources {
            lo = lo.min(df);
            hi = hi.max(df);
        }
        if hi < lo {
            0.0
        } else {
            (hi - lo).to_degrees()
        }
    }

    fn complexity(&self) -> ComplexityModel {
        ComplexityModel::classical(self.active.len(), self.spec.n_state, self.spec.n_aug)
    }
}
