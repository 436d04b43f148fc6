//! Detailed machine model: sixth-order synchronous machine with governor,
//! turbine, stabilizer and a limited exciter, interfaced to the reduced
//! network through the subtransient stator impedance.
//!
//! Per machine the 13 states are, in order:
//! `[delta, s, e'_d, e'_q, e''_d, e''_q, p_m, p_sv, e_fd, v_r, v_f, v_ts, v_1]`.
//! The exciter output `v_r` carries an anti-windup limit: while pinned at a
//! bound the `v_r` row of `J` is empty, and mode changes are located by
//! bisection on the accepted series and committed between steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::case::{DetailedMachineParams, MachineKind, NetworkCase};
use crate::drivers::bisect_crossing;
use crate::engine::{AugmentedSystemSpec, SpecBuilder};
use crate::error::{Error, Result};
use crate::model::DynamicModel;
use crate::network::{
    build_admittance, bus_injections, kron_reduce, load_admittances, power_flow_nr, NetworkState,
};
use crate::order::ComplexityModel;
use crate::series::{eval_row_at, CoefficientBlock};

pub const N_MACHINE_STATES: usize = 13;

// State offsets within a machine block.
const DELTA: usize = 0;
const SLIP: usize = 1;
const ED_P: usize = 2;
const EQ_P: usize = 3;
const ED_PP: usize = 4;
const EQ_PP: usize = 5;
const P_M: usize = 6;
const P_SV: usize = 7;
const E_FD: usize = 8;
const V_R: usize = 9;
const V_F: usize = 10;
const V_TS: usize = 11;
const V_1: usize = 12;

const EVENT_TIME_EPS: f64 = 1e-9;
/// Bisection width for locating limiter crossings in time.
const CROSSING_TOL_T: f64 = 1e-9;
/// Absolute closeness to a bound at which a free exciter output is pinned.
const PIN_TOL: f64 = 1e-6;

/// Exciter output limiter mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimiterMode {
    Free,
    SatMax,
    SatMin,
}

#[derive(Debug, Clone)]
struct DMachine {
    /// Bus index (position in the case bus list).
    bus: usize,
    p: DetailedMachineParams,
    /// Governor reference, fixed at initialization.
    p_ref: f64,
    /// Exciter voltage reference, fixed at initialization.
    v_ref: f64,
}

/// Algebraic outputs of one machine at a state point.
#[derive(Debug, Clone, Copy)]
pub struct AlgebraicPoint {
    pub v_d: f64,
    pub v_q: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub p_e: f64,
    pub v_t: f64,
}

/// Intermediate row bookkeeping for one active machine.
#[derive(Debug, Clone, Copy)]
struct MachRows {
    pe: usize,
    vt: usize,
}

/// Detailed multi-machine system over a reduced network.
pub struct DetailedSystem {
    case: NetworkCase,
    net_state: NetworkState,
    load_shunts: Vec<Complex64>,
    machines: Vec<DMachine>,
    /// Constant-voltage sources kept in the reduction: (bus index, phasor).
    fixed_sources: Vec<(usize, Complex64)>,
    omega_s: f64,
    modes: Vec<LimiterMode>,
    spec: AugmentedSystemSpec,
    rows: Vec<Option<MachRows>>,
    /// Terminal voltage map: v_xy = W e''_xy + w0 (complex, over active machines).
    w: DMatrix<Complex64>,
    w0: DVector<Complex64>,
    /// Stator current map: i_xy = M e''_xy + m0.
    m: DMatrix<Complex64>,
    m0: DVector<Complex64>,
    /// Active machine indices, in reduced-node order.
    active: Vec<usize>,
    x0: Vec<f64>,
}

impl DetailedSystem {
    pub fn from_case(case: &NetworkCase) -> Result<Self> {
        if case
            .generators
            .iter()
            .any(|g| g.model != MachineKind::Detailed)
        {
            return Err(Error::Case(
                "detailed system requires every generator to use the detailed model".into(),
            ));
        }
        for g in &case.generators {
            let p = &case.machines.detailed[g.params];
            if (p.xd_2prime - p.xq_2prime).abs() > 1e-12 {
                return Err(Error::Case(format!(
                    "machine at bus {} needs x''_d = x''_q for the network interface",
                    g.bus
                )));
            }
        }
        let v = power_flow_nr(case, 1e-8, 20)?;
        let y0 = build_admittance(case, &NetworkState::default(), &[])?;
        let s_inj = bus_injections(&y0, &v);

        let mut machines = Vec::with_capacity(case.generators.len());
        let mut x0 = Vec::with_capacity(N_MACHINE_STATES * case.generators.len());
        for g in &case.generators {
            let b = case.bus_index(g.bus)?;
            let p = case.machines.detailed[g.params].clone();
            let bus = &case.buses[b];
            let s_gen = s_inj[b] + Complex64::new(bus.p_load, bus.q_load);
            let i_ph = (s_gen / v[b]).conj();
            let e_ph = v[b] + Complex64::new(p.r_a, p.x_q) * i_ph;
            let delta = e_ph.arg();
            // Rotate network-frame phasors into the machine dq frame.
            let rot = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2 - delta);
            let vdq = v[b] * rot;
            let idq = i_ph * rot;
            let (v_d, v_q) = (vdq.re, vdq.im);
            let (i_d, i_q) = (idq.re, idq.im);

            let ed_pp = (p.x_q - p.xq_2prime) * i_q;
            let ed_p = (p.x_q - p.xq_prime) * i_q;
            let eq_pp = v_q + p.r_a * i_q + p.xd_2prime * i_d;
            let eq_p = eq_pp + (p.xd_prime - p.xd_2prime) * i_d;
            let e_fd = v_q + p.r_a * i_q + p.x_d * i_d;
            let v_r = p.k_e * e_fd;
            if v_r <= p.v_rmin || v_r >= p.v_rmax {
                return Err(Error::Init(format!(
                    "machine at bus {}: equilibrium v_r = {v_r:.4} lies outside ({}, {})",
                    g.bus, p.v_rmin, p.v_rmax
                )));
            }
            let v_f = p.k_f * e_fd;
            let v_t = v[b].norm();
            let p_e = v_d * i_d + v_q * i_q;
            let v_1 = -(p.k_w + p.k_p * p_e + p.k_v * v_t);
            let v_ref = v_r / p.k_a + v_t + v_f;

            x0.extend_from_slice(&[
                delta, 0.0, ed_p, eq_p, ed_pp, eq_pp, p_e, p_e, e_fd, v_r, v_f, v_t, v_1,
            ]);
            machines.push(DMachine {
                bus: b,
                p_ref: p_e,
                v_ref,
                p,
            });
        }

        let gen_buses: Vec<usize> = machines.iter().map(|m| m.bus).collect();
        let fixed_sources: Vec<(usize, Complex64)> = case
            .buses
            .iter()
            .enumerate()
            .filter(|(i, b)| b.kind == crate::case::BusKind::Slack && !gen_buses.contains(i))
            .map(|(i, _)| (i, v[i]))
            .collect();

        let n_m = machines.len();
        let mut sys = DetailedSystem {
            case: case.clone(),
            net_state: NetworkState::default(),
            load_shunts: load_admittances(case, &v),
            machines,
            fixed_sources,
            omega_s: case.omega_s(),
            modes: vec![LimiterMode::Free; n_m],
            spec: SpecBuilder::new(0).build()?,
            rows: Vec::new(),
            w: DMatrix::zeros(0, 0),
            w0: DVector::zeros(0),
            m: DMatrix::zeros(0, 0),
            m0: DVector::zeros(0),
            active: Vec::new(),
            x0,
        };
        sys.rebuild()?;
        Ok(sys)
    }

    /// Rebuilds the reduced network maps and the series spec for the current
    /// network state and limiter modes.
    fn rebuild(&mut self) -> Result<()> {
        let base = build_admittance(&self.case, &self.net_state, &self.load_shunts)?;
        self.active = (0..self.machines.len())
            .filter(|&i| self.net_state.generator_active(i))
            .collect();
        let na = self.active.len();
        let nf = self.fixed_sources.len();
        let retained: Vec<usize> = self
            .active
            .iter()
            .map(|&i| self.machines[i].bus)
            .chain(self.fixed_sources.iter().map(|&(b, _)| b))
            .collect();
        let y_red = kron_reduce(&base, &retained)?;

        let zinv: Vec<Complex64> = self
            .active
            .iter()
            .map(|&i| {
                let p = &self.machines[i].p;
                Complex64::new(1.0, 0.0) / Complex64::new(p.r_a, p.xd_2prime)
            })
            .collect();
        let mut a = y_red.view((0, 0), (na, na)).clone_owned();
        for (k, z) in zinv.iter().enumerate() {
            a[(k, k)] += z;
        }
        let lu = a.lu();
        let mut zdiag = DMatrix::zeros(na, na);
        for (k, z) in zinv.iter().enumerate() {
            zdiag[(k, k)] = *z;
        }
        let w = lu
            .solve(&zdiag)
            .ok_or_else(|| Error::Singular("solving the terminal-voltage map".into()))?;
        let w0 = if nf > 0 {
            let y_mf = y_red.view((0, na), (na, nf)).clone_owned();
            let vf = DVector::from_iterator(nf, self.fixed_sources.iter().map(|&(_, v)| v));
            -lu.solve(&(y_mf * vf))
                .ok_or_else(|| Error::Singular("solving the terminal-voltage offset".into()))?
        } else {
            DVector::zeros(na)
        };
        // i = Zinv (e'' - v) = Zinv (I - W) e'' - Zinv w0.
        let mut m = -w.clone();
        for k in 0..na {
            m[(k, k)] += Complex64::new(1.0, 0.0);
        }
        for k in 0..na {
            for c in 0..na {
                m[(k, c)] *= zinv[k];
            }
        }
        let mut m0 = -w0.clone();
        for k in 0..na {
            m0[k] *= zinv[k];
        }
        self.w = w;
        self.w0 = w0;
        self.m = m;
        self.m0 = m0;
        self.spec = self.build_spec()?;
        Ok(())
    }

    fn build_spec(&mut self) -> Result<AugmentedSystemSpec> {
        let n_m = self.machines.len();
        let mut b = SpecBuilder::new(N_MACHINE_STATES * n_m);
        let one = b.constant(1.0);

        // Pass 1: trigonometric rows and rotated subtransient EMF per machine.
        struct Pass1 {
            sin: usize,
            cos: usize,
            ex: usize,
            ey: usize,
        }
        let mut p1 = Vec::with_capacity(self.active.len());
        for &mi in &self.active {
            let base = N_MACHINE_STATES * mi;
            let (sin, cos) = b.sin_cos(base + DELTA);
            let ed_s = b.product(base + ED_PP, sin);
            let ed_c = b.product(base + ED_PP, cos);
            let eq_s = b.product(base + EQ_PP, sin);
            let eq_c = b.product(base + EQ_PP, cos);
            // e''_x = e''_d sin(delta) + e''_q cos(delta),
            // e''_y = e''_q sin(delta) - e''_d cos(delta).
            let ex = b.linear(vec![(ed_s, 1.0), (eq_c, 1.0)]);
            let ey = b.linear(vec![(eq_s, 1.0), (ed_c, -1.0)]);
            p1.push(Pass1 { sin, cos, ex, ey });
        }

        // Pass 2: terminal voltages and stator currents (dense linear maps).
        let stamp_map = |b: &mut SpecBuilder,
                         mat: &DMatrix<Complex64>,
                         off: &DVector<Complex64>,
                         p1: &[Pass1],
                         k: usize|
         -> (usize, usize) {
            let mut terms_x = Vec::new();
            let mut terms_y = Vec::new();
            for (h, src) in p1.iter().enumerate() {
                let Complex64 { re, im } = mat[(k, h)];
                if re != 0.0 {
                    terms_x.push((src.ex, re));
                    terms_y.push((src.ey, re));
                }
                if im != 0.0 {
                    terms_x.push((src.ey, -im));
                    terms_y.push((src.ex, im));
                }
            }
            if off[k].re != 0.0 {
                terms_x.push((one, off[k].re));
            }
            if off[k].im != 0.0 {
                terms_y.push((one, off[k].im));
            }
            (b.linear(terms_x), b.linear(terms_y))
        };
        let mut vi = Vec::with_capacity(self.active.len());
        for k in 0..self.active.len() {
            let (vx, vy) = stamp_map(&mut b, &self.w, &self.w0, &p1, k);
            let (ix, iy) = stamp_map(&mut b, &self.m, &self.m0, &p1, k);
            vi.push((vx, vy, ix, iy));
        }

        // Pass 3: dq currents, electrical power, terminal voltage magnitude,
        // and the J rows of each machine.
        self.rows = vec![None; n_m];
        for (k, &mi) in self.active.iter().enumerate() {
            let mach = &self.machines[mi];
            let p = &mach.p;
            let base = N_MACHINE_STATES * mi;
            let Pass1 { sin, cos, .. } = p1[k];
            let (vx, vy, ix, iy) = vi[k];

            let s_ix = b.product(sin, ix);
            let c_iy = b.product(cos, iy);
            let c_ix = b.product(cos, ix);
            let s_iy = b.product(sin, iy);
            let id = b.linear(vec![(s_ix, 1.0), (c_iy, -1.0)]);
            let iq = b.linear(vec![(c_ix, 1.0), (s_iy, 1.0)]);
            let vx_ix = b.product(vx, ix);
            let vy_iy = b.product(vy, iy);
            let pe = b.linear(vec![(vx_ix, 1.0), (vy_iy, 1.0)]);
            let vx2 = b.product(vx, vx);
            let vy2 = b.product(vy, vy);
            let vsq = b.linear(vec![(vx2, 1.0), (vy2, 1.0)]);
            let vt = b.sqrt(vsq);
            self.rows[mi] = Some(MachRows { pe, vt });

            let two_h = 2.0 * p.h;
            b.add_j(base + DELTA, base + SLIP, self.omega_s);
            b.add_j(base + SLIP, base + P_M, 1.0 / two_h);
            b.add_j(base + SLIP, pe, -1.0 / two_h);
            b.add_j(base + SLIP, base + SLIP, -p.d / two_h);

            let dq_den = p.xq_prime - p.xq_2prime;
            b.add_j(base + ED_P, base + ED_P, -(p.x_q - p.xq_2prime) / (dq_den * p.tq0_prime));
            b.add_j(base + ED_P, base + ED_PP, (p.x_q - p.xq_prime) / (dq_den * p.tq0_prime));
            let dd_den = p.xd_prime - p.xd_2prime;
            b.add_j(base + EQ_P, base + EQ_P, -(p.x_d - p.xd_2prime) / (dd_den * p.td0_prime));
            b.add_j(base + EQ_P, base + EQ_PP, (p.x_d - p.xd_prime) / (dd_den * p.td0_prime));
            b.add_j(base + EQ_P, base + E_FD, 1.0 / p.td0_prime);

            b.add_j(base + ED_PP, base + ED_P, 1.0 / p.tq0_2prime);
            b.add_j(base + ED_PP, base + ED_PP, -1.0 / p.tq0_2prime);
            b.add_j(base + ED_PP, iq, (p.xq_prime - p.xq_2prime) / p.tq0_2prime);
            b.add_j(base + EQ_PP, base + EQ_P, 1.0 / p.td0_2prime);
            b.add_j(base + EQ_PP, base + EQ_PP, -1.0 / p.td0_2prime);
            b.add_j(base + EQ_PP, id, -(p.xd_prime - p.xd_2prime) / p.td0_2prime);

            b.add_j(base + P_M, base + P_M, -1.0 / p.t_ch);
            b.add_j(base + P_M, base + P_SV, 1.0 / p.t_ch);
            b.add_j(base + P_SV, base + P_SV, -1.0 / p.t_sv);
            b.add_j(base + P_SV, one, mach.p_ref / p.t_sv);
            b.add_j(base + P_SV, base + SLIP, -1.0 / (p.r_droop * p.t_sv));

            b.add_j(base + E_FD, base + V_R, 1.0 / p.t_e);
            b.add_j(base + E_FD, base + E_FD, -p.k_e / p.t_e);
            b.add_j(base + V_F, base + V_F, -1.0 / p.t_f);
            b.add_j(base + V_F, base + E_FD, p.k_f / p.t_f);
            b.add_j(base + V_TS, base + V_TS, -1.0 / p.t_r);
            b.add_j(base + V_TS, vt, 1.0 / p.t_r);

            b.add_j(base + V_1, one, -p.k_w / p.t_w);
            b.add_j(base + V_1, pe, -p.k_p / p.t_w);
            b.add_j(base + V_1, vt, -p.k_v / p.t_w);
            b.add_j(base + V_1, base + V_1, -1.0 / p.t_w);

            if self.modes[mi] == LimiterMode::Free {
                // v_r' = (-v_r + K_a (v_ref + v_s - v_ts - v_f)) / T_a with
                // v_s = K_w + K_p p_e + K_v v_t + v_1.
                b.add_j(base + V_R, base + V_R, -1.0 / p.t_a);
                b.add_j(base + V_R, one, p.k_a * (mach.v_ref + p.k_w) / p.t_a);
                b.add_j(base + V_R, pe, p.k_a * p.k_p / p.t_a);
                b.add_j(base + V_R, vt, p.k_a * p.k_v / p.t_a);
                b.add_j(base + V_R, base + V_1, p.k_a / p.t_a);
                b.add_j(base + V_R, base + V_TS, -p.k_a / p.t_a);
                b.add_j(base + V_R, base + V_F, -p.k_a / p.t_a);
            }
            // In a saturated mode the v_r row stays empty: dv_r = 0.
        }
        b.build()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    pub fn limiter_modes(&self) -> &[LimiterMode] {
        &self.modes
    }

    /// Forces one machine's limiter mode and rebuilds the spec (diagnostics
    /// and tests; during simulation modes are managed automatically).
    pub fn force_limiter_mode(&mut self, machine: usize, mode: LimiterMode) -> Result<()> {
        self.modes[machine] = mode;
        self.spec = self.build_spec()?;
        Ok(())
    }

    /// Solves the stator/network algebra at a state point. Tripped machines
    /// yield `None`.
    pub fn algebraics(&self, x: &[f64]) -> Vec<Option<AlgebraicPoint>> {
        let na = self.active.len();
        let mut e_xy = DVector::zeros(na);
        for (k, &mi) in self.active.iter().enumerate() {
            let base = N_MACHINE_STATES * mi;
            let (s, c) = x[base + DELTA].sin_cos();
            let e_dq = Complex64::new(x[base + ED_PP], x[base + EQ_PP]);
            e_xy[k] = e_dq * Complex64::new(s, -c);
        }
        let v = &self.w * &e_xy + &self.w0;
        let i = &self.m * &e_xy + &self.m0;
        let mut out = vec![None; self.machines.len()];
        for (k, &mi) in self.active.iter().enumerate() {
            let base = N_MACHINE_STATES * mi;
            let (s, c) = x[base + DELTA].sin_cos();
            let rot = Complex64::new(s, c);
            let vdq = v[k] * rot;
            let idq = i[k] * rot;
            out[mi] = Some(AlgebraicPoint {
                v_d: vdq.re,
                v_q: vdq.im,
                i_d: idq.re,
                i_q: idq.im,
                p_e: (v[k] * i[k].conj()).re,
                v_t: v[k].norm(),
            });
        }
        out
    }

    /// Unconstrained exciter output derivative of one machine at a state
    /// point (the first branch of the limited equation, regardless of mode).
    fn vr_dot_unconstrained(&self, mi: usize, x: &[f64], alg: &AlgebraicPoint) -> f64 {
        let mach = &self.machines[mi];
        let p = &mach.p;
        let base = N_MACHINE_STATES * mi;
        let v_s = p.k_w + p.k_p * alg.p_e + p.k_v * alg.v_t + x[base + V_1];
        (-x[base + V_R] + p.k_a * (mach.v_ref + v_s - x[base + V_TS] - x[base + V_F])) / p.t_a
    }

    /// Same quantity evaluated from the series block at offset `tau` in a step.
    fn vr_dot_from_block(&self, mi: usize, block: &CoefficientBlock, tau: f64) -> f64 {
        let mach = &self.machines[mi];
        let p = &mach.p;
        let base = N_MACHINE_STATES * mi;
        let rows = self.rows[mi].expect("active machine has algebra rows");
        let at = |row: usize| eval_row_at(block, row, tau).unwrap_or(f64::NAN);
        let v_s = p.k_w + p.k_p * at(rows.pe) + p.k_v * at(rows.vt) + at(base + V_1);
        (-at(base + V_R) + p.k_a * (mach.v_ref + v_s - at(base + V_TS) - at(base + V_F))) / p.t_a
    }
}

impl DynamicModel for DetailedSystem {
    fn n_state(&self) -> usize {
        N_MACHINE_STATES * self.machines.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        DetailedSystem::initial_state(self)
    }

    fn var_names(&self) -> Vec<String> {
        const NAMES: [&str; N_MACHINE_STATES] = [
            "delta", "slip", "ed_p", "eq_p", "ed_pp", "eq_pp", "pm", "psv", "efd", "vr", "vf",
            "vts", "v1",
        ];
        self.machines
            .iter()
            .flat_map(|m| {
                let id = self.case.buses[m.bus].id;
                NAMES.iter().map(move |n| format!("{n}_bus{id}"))
            })
            .collect()
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

    fn crossing_within(&self, block: &CoefficientBlock, h: f64) -> Option<f64> {
        let mut earliest: Option<f64> = None;
        let mut consider = |t: f64| {
            if earliest.map_or(true, |e| t < e) {
                earliest = Some(t);
            }
        };
        for &mi in &self.active {
            let base = N_MACHINE_STATES * mi;
            let p = &self.machines[mi].p;
            match self.modes[mi] {
                LimiterMode::Free => {
                    let vr = |tau: f64| eval_row_at(block, base + V_R, tau).unwrap_or(f64::NAN);
                    let up = |tau: f64| vr(tau) - p.v_rmax;
                    let dn = |tau: f64| vr(tau) - p.v_rmin;
                    if up(0.0) < -1e-12 && up(h) >= 0.0 {
                        consider(bisect_crossing(up, 0.0, h, CROSSING_TOL_T));
                    }
                    if dn(0.0) > 1e-12 && dn(h) <= 0.0 {
                        consider(bisect_crossing(dn, 0.0, h, CROSSING_TOL_T));
                    }
                }
                LimiterMode::SatMax => {
                    let g = |tau: f64| self.vr_dot_from_block(mi, block, tau);
                    if g(0.0) > 1e-12 && g(h) <= 0.0 {
                        consider(bisect_crossing(g, 0.0, h, CROSSING_TOL_T));
                    }
                }
                LimiterMode::SatMin => {
                    let g = |tau: f64| self.vr_dot_from_block(mi, block, tau);
                    if g(0.0) < -1e-12 && g(h) >= 0.0 {
                        consider(bisect_crossing(g, 0.0, h, CROSSING_TOL_T));
                    }
                }
            }
        }
        earliest
    }

    fn finalize_step(&mut self, _t: f64, x: &mut [f64]) -> bool {
        let algs = self.algebraics(x);
        let mut changed = false;
        for &mi in &self.active {
            let base = N_MACHINE_STATES * mi;
            let p = self.machines[mi].p.clone();
            let Some(alg) = algs[mi] else { continue };
            let vdot = self.vr_dot_unconstrained(mi, x, &alg);
            match self.modes[mi] {
                LimiterMode::Free => {
                    if x[base + V_R] >= p.v_rmax - PIN_TOL && vdot > 0.0
                        || x[base + V_R] > p.v_rmax
                    {
                        x[base + V_R] = p.v_rmax;
                        self.modes[mi] = LimiterMode::SatMax;
                        changed = true;
                    } else if x[base + V_R] <= p.v_rmin + PIN_TOL && vdot < 0.0
                        || x[base + V_R] < p.v_rmin
                    {
                        x[base + V_R] = p.v_rmin;
                        self.modes[mi] = LimiterMode::SatMin;
                        changed = true;
                    }
                }
                LimiterMode::SatMax => {
                    if vdot < 0.0 {
                        self.modes[mi] = LimiterMode::Free;
                        changed = true;
                    }
                }
                LimiterMode::SatMin => {
                    if vdot > 0.0 {
                        self.modes[mi] = LimiterMode::Free;
                        changed = true;
                    }
                }
            }
        }
        if changed {
            self.spec = self.build_spec().expect("limiter mode rebuild");
        }
        changed
    }

    fn angle_spread_deg(&self, x: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &mi in &self.active {
            let d = x[N_MACHINE_STATES * mi + DELTA];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        for &(_, v) in &self.fixed_sources {
            lo = lo.min(v.arg());
            hi = hi.max(v.arg());
        }
        if hi < lo {
            0.0
        } else {
            (hi - lo).to_degrees()
        }
    }

    fn complexity(&self) -> ComplexityModel {
        ComplexityModel::detailed(self.active.len(), self.spec.n_state, self.spec.n_aug)
    }
}
