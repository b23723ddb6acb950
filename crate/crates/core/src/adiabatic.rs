//! First-order Trotter circuits for `H(t) = H_0 + (t/T) H_1` and the
//! evolution driver.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{boundary_hop_sign, Boundary, SpinFilling, SshhParams};
use crate::simulator::{apply_gate, fidelity, Circuit, Gate, Statevector};
use crate::singleparticle::{build_hopping_matrix, eigensolve};
use crate::stateprep::{givens_decompose, ground_state_spec, run_preparation, slater_energy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub t_total: f64,
    pub steps: usize,
}

impl Schedule {
    pub fn new(t_total: f64, steps: usize) -> Result<Self> {
        let s = Schedule { t_total, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_total.is_finite() && self.t_total > 0.0) {
            return Err(Error::arg(format!("total time must be positive, got {}", self.t_total)));
        }
        if self.steps == 0 {
            return Err(Error::arg("at least one Trotter interval is required"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_total / self.steps as f64
    }

    /// Interaction fraction at the midpoint of interval `ell`.
    pub fn midpoint(&self, ell: usize) -> f64 {
        (2 * ell - 1) as f64 / (2 * self.steps) as f64
    }
}

/// Gate angles of one interval. Hopping angles carry the sign of the
/// Jordan-Wigner image `+Re(t)/2 (XX + YY)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAngles {
    pub theta_v: f64,
    pub vartheta_v: f64,
    pub theta_w: f64,
    pub vartheta_w: f64,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl StepAngles {
    pub fn new(params: &SshhParams, ell: usize, schedule: &Schedule) -> Result<Self> {
        schedule.validate()?;
        if ell == 0 || ell > schedule.steps {
            return Err(Error::arg(format!("interval {ell} outside 1..={}", schedule.steps)));
        }
        let dt = schedule.dt();
        let frac = schedule.midpoint(ell);
        Ok(StepAngles {
            theta_v: dt * params.v.re,
            vartheta_v: dt * params.v.im,
            theta_w: dt * params.w.re,
            vartheta_w: dt * params.w.im,
            phi_a: dt * params.u_a * frac,
            phi_b: dt * params.u_b * frac,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    /// Negates the periodic-boundary angles. Mutation hook for oracle tests.
    pub flip_boundary_sign: bool,
}

#[derive(Debug, Clone)]
pub struct TrotterStep {
    /// Gates after zero-angle pruning.
    pub circuit: Circuit,
    /// Two-qubit rotations before pruning.
    pub two_qubit_count: usize,
}

pub fn build_trotter_step(params: &SshhParams, filling: SpinFilling, ell: usize, schedule: &Schedule) -> Result<TrotterStep> {
    build_trotter_step_with(params, filling, ell, schedule, StepOptions::default())
}

/// Intracell, intercell, boundary, then Hubbard layer.
pub fn build_trotter_step_with(
    params: &SshhParams,
    filling: SpinFilling,
    ell: usize,
    schedule: &Schedule,
    opts: StepOptions,
) -> Result<TrotterStep> {
    params.validate()?;
    filling.validate(params.n_cells)?;
    let a = StepAngles::new(params, ell, schedule)?;
    let n = params.n_cells;
    let blocks = [(0, filling.n_up), (2 * n, filling.n_down)];
    let mut raw = Vec::with_capacity(10 * n);

    for &(off, _) in &blocks {
        for j in 0..n {
            raw.push(Gate::R(off + 2 * j, off + 2 * j + 1, a.theta_v));
            raw.push(Gate::G(off + 2 * j, off + 2 * j + 1, a.vartheta_v));
        }
    }
    for &(off, _) in &blocks {
        for j in 0..n - 1 {
            raw.push(Gate::R(off + 2 * j + 1, off + 2 * j + 2, a.theta_w));
            raw.push(Gate::G(off + 2 * j + 1, off + 2 * j + 2, a.vartheta_w));
        }
    }
    if params.boundary == Boundary::Pbc {
        for &(off, n_s) in &blocks {
            let mut sign = f64::from(boundary_hop_sign(n_s));
            if opts.flip_boundary_sign {
                sign = -sign;
            }
            raw.push(Gate::R(off + 2 * n - 1, off, sign * a.theta_w));
            raw.push(Gate::G(off + 2 * n - 1, off, sign * a.vartheta_w));
        }
    }
    for j in 0..n {
        raw.push(Gate::CP(2 * j, 2 * n + 2 * j, a.phi_a));
        raw.push(Gate::CP(2 * j + 1, 2 * n + 2 * j + 1, a.phi_b));
    }

    let mut circuit = Circuit::new(params.num_qubits());
    for g in &raw {
        if !g.is_negligible() {
            circuit.push(*g)?;
        }
    }
    Ok(TrotterStep { circuit, two_qubit_count: raw.len() })
}

#[derive(Debug, Clone)]
pub struct AdiabaticCircuit {
    pub circuit: Circuit,
    pub two_qubit_count: usize,
}

pub fn build_adiabatic_circuit(params: &SshhParams, filling: SpinFilling, schedule: &Schedule) -> Result<AdiabaticCircuit> {
    build_adiabatic_circuit_with(params, filling, schedule, StepOptions::default())
}

pub fn build_adiabatic_circuit_with(
    params: &SshhParams,
    filling: SpinFilling,
    schedule: &Schedule,
    opts: StepOptions,
) -> Result<AdiabaticCircuit> {
    let mut circuit = Circuit::new(params.num_qubits());
    let mut count = 0;
    for ell in 1..=schedule.steps {
        let step = build_trotter_step_with(params, filling, ell, schedule, opts)?;
        circuit.append(&step.circuit)?;
        count += step.two_qubit_count;
    }
    Ok(AdiabaticCircuit { circuit, two_qubit_count: count })
}

pub const NORM_TOL: f64 = 1e-9;

pub fn run_adiabatic(params: &SshhParams, filling: SpinFilling, schedule: &Schedule, initial: &Statevector) -> Result<Statevector> {
    run_adiabatic_with(params, filling, schedule, initial, StepOptions::default())
}

/// Evolves `initial` through all `L` intervals. The boundary parity sign is
/// only valid inside one spin sector, so the support is checked first.
pub fn run_adiabatic_with(
    params: &SshhParams,
    filling: SpinFilling,
    schedule: &Schedule,
    initial: &Statevector,
    opts: StepOptions,
) -> Result<Statevector> {
    params.validate()?;
    schedule.validate()?;
    if initial.num_qubits() != params.num_qubits() {
        return Err(Error::arg(format!(
            "state has {} qubits, model needs {}",
            initial.num_qubits(),
            params.num_qubits()
        )));
    }
    let norm = initial.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::pre(format!("initial state norm {norm} is not 1")));
    }
    let mut state = initial.clone();
    state.attach_sector(filling)?;
    for ell in 1..=schedule.steps {
        let step = build_trotter_step_with(params, filling, ell, schedule, opts)?;
        for g in step.circuit.gates() {
            apply_gate(&mut state, g)?;
        }
    }
    let drift = (state.norm() - 1.0).abs();
    if drift > NORM_TOL {
        return Err(Error::Numeric(format!("norm drifted by {drift:.3e} during evolution")));
    }
    Ok(state)
}

/// `e^{-i E0 T} |initial>`: the exact result when `H_1 = 0`.
pub fn reference_final_state_noninteracting(schedule: &Schedule, initial: &Statevector, e0: f64) -> Statevector {
    let mut s = initial.clone();
    s.scale(Complex64::from_polar(1.0, -e0 * schedule.t_total));
    s
}

/// Non-interacting ground state prepared by the Givens network, with its
/// energy.
pub fn prepare_initial_state(params: &SshhParams, filling: SpinFilling) -> Result<(Statevector, f64)> {
    let (spec, _warnings) = ground_state_spec(params, filling)?;
    let state = run_preparation(&givens_decompose(&spec)?)?;
    let e0 = slater_energy(&eigensolve(&build_hopping_matrix(params))?, filling);
    Ok((state, e0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityRow {
    pub t_total: f64,
    pub steps: usize,
    pub fidelity: f64,
}

/// Without interaction every row is compared with the analytic final state.
/// With interaction each row is compared with the previous `L` of the same
/// `T`, and the first `L` with the initial state.
pub fn fidelity_sweep(params: &SshhParams, t_list: &[f64], l_list: &[usize], filling: SpinFilling) -> Result<Vec<FidelityRow>> {
    if l_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("L list must be strictly ascending"));
    }
    let (initial, e0) = prepare_initial_state(params, filling)?;
    let noninteracting = params.u_a == 0.0 && params.u_b == 0.0;
    let per_t: Vec<Result<Vec<FidelityRow>>> = t_list
        .par_iter()
        .map(|&t| {
            let mut rows = Vec::with_capacity(l_list.len());
            let mut previous: Option<Statevector> = None;
            for &l in l_list {
                let schedule = Schedule::new(t, l)?;
                let fin = run_adiabatic(params, filling, &schedule, &initial)?;
                let f = if noninteracting {
                    fidelity(&fin, &reference_final_state_noninteracting(&schedule, &initial, e0))?
                } else {
                    fidelity(&fin, previous.as_ref().unwrap_or(&initial))?
                };
                rows.push(FidelityRow { t_total: t, steps: l, fidelity: f });
                previous = Some(fin);
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_t {
        out.extend(r?);
    }
    Ok(out)
}

pub const FIDELITY_T_GRID: [f64; 4] = [1.0, 5.0, 15.0, 80.0];
pub const FIDELITY_L_GRID: [usize; 11] = [1, 10, 20, 30, 40, 50, 60, 80, 100, 120, 150];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_terms, build_hamiltonian_terms};
    use crate::simulator::run_circuit;

    fn ring(n: usize, u: f64) -> SshhParams {
        SshhParams::real(n, 0.5, 1.5, u, u, Boundary::Pbc).unwrap()
    }

    #[test]
    fn gate_counts() {
        let s = Schedule::new(1.0, 40).unwrap();
        let f = SpinFilling::half(6);
        let pbc = build_trotter_step(&ring(6, 0.1), f, 1, &s).unwrap();
        assert_eq!(pbc.two_qubit_count, 60);
        let obc = SshhParams::real(6, 0.5, 1.5, 0.1, 0.1, Boundary::Obc).unwrap();
        assert_eq!(build_trotter_step(&obc, f, 1, &s).unwrap().two_qubit_count, 56);
        // real hopping: the G layer is pruned
        assert_eq!(pbc.circuit.len(), 36);
    }

    #[test]
    fn midpoint_fraction() {
        let s = Schedule::new(2.0, 40).unwrap();
        assert_eq!(s.midpoint(1), 1.0 / 80.0);
        let a = StepAngles::new(&ring(2, 0.4), 1, &s).unwrap();
        assert!((a.phi_a - 0.05 * 0.4 / 80.0).abs() < 1e-18);
    }

    #[test]
    fn hubbard_angles_increase() {
        let s = Schedule::new(1.0, 10).unwrap();
        let p = SshhParams::real(2, 0.5, 1.5, 0.3, 0.7, Boundary::Pbc).unwrap();
        let phis: Vec<(f64, f64)> = (1..=10).map(|l| StepAngles::new(&p, l, &s).map(|a| (a.phi_a, a.phi_b)).unwrap()).collect();
        assert!(phis.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
    }

    #[test]
    fn interval_range() {
        let s = Schedule::new(1.0, 4).unwrap();
        assert!(matches!(build_trotter_step(&ring(2, 0.0), SpinFilling::half(2), 0, &s), Err(Error::Argument(_))));
        assert!(matches!(build_trotter_step(&ring(2, 0.0), SpinFilling::half(2), 5, &s), Err(Error::Argument(_))));
        assert!(Schedule::new(0.0, 3).is_err());
        assert!(Schedule::new(1.0, 0).is_err());
    }

    #[test]
    fn full_circuit_counts() {
        let s = Schedule::new(1.0, 40).unwrap();
        let c = build_adiabatic_circuit(&ring(6, 0.1), SpinFilling::half(6), &s).unwrap();
        assert_eq!(c.two_qubit_count, 2400);
        let one = build_adiabatic_circuit(&ring(2, 0.1), SpinFilling::half(2), &Schedule::new(1.0, 1).unwrap()).unwrap();
        let step = build_trotter_step(&ring(2, 0.1), SpinFilling::half(2), 1, &Schedule::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(one.circuit, step.circuit);
    }

    #[test]
    fn free_steps_do_not_depend_on_interval() {
        let s = Schedule::new(1.0, 5).unwrap();
        let f = SpinFilling::half(3);
        let first = build_trotter_step(&ring(3, 0.0), f, 1, &s).unwrap();
        assert!(first.circuit.gates().iter().all(|g| !matches!(g, Gate::CP(..))));
        for l in 2..=5 {
            assert_eq!(build_trotter_step(&ring(3, 0.0), f, l, &s).unwrap().circuit, first.circuit);
        }
    }

    #[test]
    fn boundary_angles_follow_sector_parity() {
        let s = Schedule::new(1.0, 1).unwrap();
        let p = ring(2, 0.0);
        let find = |f: SpinFilling| {
            build_trotter_step(&p, f, 1, &s)
                .unwrap()
                .circuit
                .gates()
                .iter()
                .filter_map(|g| match *g {
                    Gate::R(3, 0, t) => Some(t),
                    _ => None,
                })
                .next()
                .unwrap()
        };
        assert_eq!(find(SpinFilling::new(2, 2)), -1.5);
        assert_eq!(find(SpinFilling::new(1, 2)), 1.5);
    }

    #[test]
    fn vanishing_time_leaves_state() {
        let p = ring(2, 0.5);
        let f = SpinFilling::half(2);
        let (init, _) = prepare_initial_state(&p, f).unwrap();
        let fin = run_adiabatic(&p, f, &Schedule::new(1e-12, 1).unwrap(), &init).unwrap();
        assert!(fidelity(&init, &fin).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn wrong_sector_rejected() {
        let p = ring(2, 0.5);
        let init = Statevector::basis(8, 0b0001_0011).unwrap();
        let r = run_adiabatic(&p, SpinFilling::half(2), &Schedule::new(1.0, 2).unwrap(), &init);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn free_evolution_is_a_phase() {
        let p = ring(2, 0.0);
        let f = SpinFilling::half(2);
        let (init, e0) = prepare_initial_state(&p, f).unwrap();
        let s = Schedule::new(1.0, 200).unwrap();
        let fin = run_adiabatic(&p, f, &s, &init).unwrap();
        let reference = reference_final_state_noninteracting(&s, &init, e0);
        assert!(fidelity(&fin, &reference).unwrap() >= 0.99);
        assert_eq!(reference_final_state_noninteracting(&s, &init, 0.0), init);
        // the global phase is e^{-i E0 T} up to Trotter error
        let overlap = reference.inner(&fin).unwrap();
        assert!(overlap.arg().abs() < 0.05, "phase {}", overlap.arg());
    }

    #[test]
    fn support_never_leaves_the_sector() {
        let p = SshhParams::real(2, 0.7, 1.1, 0.4, 0.9, Boundary::Pbc).unwrap();
        for x in [0b0101_0011u64, 0b1000_0110, 0b0001_1110] {
            let init = Statevector::basis(8, x).unwrap();
            let f = init.support_filling().unwrap();
            let s = Schedule::new(2.0, 7).unwrap();
            let c = build_adiabatic_circuit(&p, f, &s).unwrap();
            let mut fin = init.clone();
            run_circuit(&mut fin, &c.circuit).unwrap();
            assert_eq!(fin.support_filling(), Some(f));
            let mut hinted = init.clone();
            hinted = run_adiabatic(&p, f, &s, &hinted).unwrap();
            assert_eq!(hinted, fin);
        }
    }

    /// Tiny-step RK4 on the dense `H(t)` of the term list: a continuous-time
    /// reference for the Trotter circuit at two cells.
    fn continuous_reference(p: &SshhParams, f: SpinFilling, t_total: f64, init: &Statevector, substeps: usize) -> Vec<Complex64> {
        let h0 = build_hamiltonian_terms(p, 0.0, f).unwrap();
        let h1: Vec<_> = build_hamiltonian_terms(p, 1.0, f)
            .unwrap()
            .into_iter()
            .filter(|t| t.factors().iter().all(|x| x.1 == crate::model::PauliAxis::Z))
            .collect();
        let deriv = |t: f64, psi: &[Complex64]| -> Vec<Complex64> {
            let a = apply_terms(&h0, psi).unwrap();
            let b = apply_terms(&h1, psi).unwrap();
            a.iter().zip(&b).map(|(x, y)| (x + y * (t / t_total)) * Complex64::new(0.0, -1.0)).collect()
        };
        let h = t_total / substeps as f64;
        let mut psi = init.amplitudes().to_vec();
        let axpy = |x: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> { x.iter().zip(k).map(|(a, b)| a + b * s).collect() };
        for i in 0..substeps {
            let t = i as f64 * h;
            let k1 = deriv(t, &psi);
            let k2 = deriv(t + h / 2.0, &axpy(&psi, &k1, h / 2.0));
            let k3 = deriv(t + h / 2.0, &axpy(&psi, &k2, h / 2.0));
            let k4 = deriv(t + h, &axpy(&psi, &k3, h));
            for j in 0..psi.len() {
                psi[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
            }
        }
        psi
    }

    #[test]
    fn trotter_error_shrinks_with_more_intervals() {
        let p = SshhParams::real(2, 0.5, 1.5, 0.5, 0.8, Boundary::Pbc).unwrap();
        let f = SpinFilling::half(2);
        let (init, _) = prepare_initial_state(&p, f).unwrap();
        let exact = continuous_reference(&p, f, 1.0, &init, 4000);
        let mut last = f64::INFINITY;
        for l in [5, 10, 20, 40, 80] {
            let fin = run_adiabatic(&p, f, &Schedule::new(1.0, l).unwrap(), &init).unwrap();
            let err = fin.amplitudes().iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < last, "L={l}: {err} vs {last}");
            last = err;
        }
    }
}
