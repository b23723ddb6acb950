//! Slater-determinant preparation: a nearest-neighbor Givens network and a
//! direct amplitude construction used to validate it.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::model::{SpinFilling, SshhParams};
use crate::simulator::{run_circuit, Circuit, Gate, SectorLayout, Statevector, ZERO_ANGLE};
use crate::singleparticle::{build_hopping_matrix, eigensolve, fermi_level_check, FermiDegeneracy, Spectrum};

pub const ORTHONORMALITY_TOL: f64 = 1e-10;

const TINY: f64 = 1e-300;

/// Occupied orbitals per spin block. Row `r` holds the coefficients of
/// `c_m^dagger` for the `r`-th occupied orbital over the `2N` block modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterSpec {
    q_up: CMatrix,
    q_down: CMatrix,
    block_modes: usize,
}

impl SlaterSpec {
    pub fn new(q_up: CMatrix, q_down: CMatrix) -> Result<Self> {
        let m = q_up.cols();
        if q_down.cols() != m {
            return Err(Error::arg("spin blocks have different mode counts"));
        }
        if m == 0 || q_up.rows() > m || q_down.rows() > m {
            return Err(Error::arg("more occupied orbitals than modes"));
        }
        for (name, q) in [("up", &q_up), ("down", &q_down)] {
            let defect = gram_defect(q);
            if defect > ORTHONORMALITY_TOL {
                return Err(Error::pre(format!("{name} orbitals are not orthonormal (defect {defect:.3e})")));
            }
        }
        Ok(SlaterSpec { q_up, q_down, block_modes: m })
    }

    pub fn q_up(&self) -> &CMatrix {
        &self.q_up
    }

    pub fn q_down(&self) -> &CMatrix {
        &self.q_down
    }

    pub fn block_modes(&self) -> usize {
        self.block_modes
    }

    pub fn num_qubits(&self) -> usize {
        2 * self.block_modes
    }

    pub fn filling(&self) -> SpinFilling {
        SpinFilling::new(self.q_up.rows(), self.q_down.rows())
    }

    fn blocks(&self) -> [&CMatrix; 2] {
        [&self.q_up, &self.q_down]
    }
}

/// `max |Q Q^dagger - I|`.
fn gram_defect(q: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..q.rows() {
        for s in 0..q.rows() {
            let dot: Complex64 = q.row(r).iter().zip(q.row(s)).map(|(a, b)| a * b.conj()).sum();
            let target = if r == s { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).norm());
        }
    }
    worst
}

/// Rows are the `n_s` lowest eigenvectors, so that
/// `sum_m Q[r][m] c_m^dagger |0>` is the `r`-th eigenstate.
pub fn occupied_orbitals(spectrum: &Spectrum, n_s: usize) -> Result<(CMatrix, Option<FermiDegeneracy>)> {
    let m = spectrum.values.len();
    if n_s > m {
        return Err(Error::arg(format!("cannot occupy {n_s} of {m} orbitals")));
    }
    let q = CMatrix::from_fn(n_s, m, |r, site| spectrum.vectors[(site, r)]);
    Ok((q, fermi_level_check(spectrum, n_s)))
}

/// Non-interacting ground-state spec of the model, with any Fermi-level
/// degeneracy warnings (at most one per spin block).
pub fn ground_state_spec(params: &SshhParams, filling: SpinFilling) -> Result<(SlaterSpec, Vec<FermiDegeneracy>)> {
    params.validate()?;
    filling.validate(params.n_cells)?;
    let spectrum = eigensolve(&build_hopping_matrix(params))?;
    let (q_up, w_up) = occupied_orbitals(&spectrum, filling.n_up)?;
    let (q_down, w_down) = occupied_orbitals(&spectrum, filling.n_down)?;
    let warnings = w_up.into_iter().chain(w_down).collect();
    Ok((SlaterSpec::new(q_up, q_down)?, warnings))
}

/// Sum of occupied single-particle energies.
pub fn slater_energy(spectrum: &Spectrum, filling: SpinFilling) -> f64 {
    spectrum.values[..filling.n_up].iter().sum::<f64>() + spectrum.values[..filling.n_down].iter().sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct GivensCircuit {
    /// X layer followed by the pruned rotation network.
    pub circuit: Circuit,
    /// G rotations per spin block before zero-angle pruning.
    pub rotations: [usize; 2],
    pub phase_gates: usize,
}

impl GivensCircuit {
    pub fn x_layer_len(&self) -> usize {
        self.circuit.gates().iter().take_while(|g| matches!(g, Gate::X(_))).count()
    }
}

#[derive(Debug, Clone, Copy)]
enum ColumnOp {
    /// Column `q` times `e^{-i phi}`.
    Phase(usize, f64),
    /// Columns `(k, k+1)` by `[[c, s], [-s, c]]`.
    Rotate(usize, f64),
}

fn rows_of(q: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..q.rows()).map(|r| q.row(r).to_vec()).collect()
}

/// Unitary row mixing into staircase form: row `r` vanishes beyond column
/// `m - n + r`. Changes the determinant only by a phase.
fn staircase(rows: &mut [Vec<Complex64>], m: usize) {
    let n = rows.len();
    for t in (1..n).rev() {
        let col = m - n + t;
        for r in 0..t {
            let x = rows[t][col];
            let y = rows[r][col];
            let norm = x.norm().hypot(y.norm());
            if y.norm() < TINY || norm < TINY {
                continue;
            }
            let (row_t, row_r) = (rows[t].clone(), rows[r].clone());
            for k in 0..m {
                rows[t][k] = (x.conj() * row_t[k] + y.conj() * row_r[k]) / norm;
                rows[r][k] = (x * row_r[k] - y * row_t[k]) / norm;
            }
            rows[r][col] = Complex64::new(0.0, 0.0);
        }
    }
}

/// Relative phase folded into `(-pi/2, pi/2]`; a real pair gives zero.
fn fold_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(PI);
    if p > FRAC_PI_2 {
        p -= PI;
    }
    p
}

/// Column eliminations reducing one block to `[D | 0]` with `D` diagonal.
/// Returns the ops in elimination order and the rotation count.
fn eliminate(q: &CMatrix) -> Result<(Vec<ColumnOp>, usize)> {
    let n = q.rows();
    let m = q.cols();
    let mut rows = rows_of(q);
    staircase(&mut rows, m);
    let mut ops = Vec::new();
    let mut count = 0;
    for r in 0..n {
        for k in (r..m - n + r).rev() {
            count += 1;
            let a = rows[r][k];
            let b = rows[r][k + 1];
            let phi = if b.norm() < TINY {
                0.0
            } else if a.norm() < TINY {
                fold_phase(b.arg())
            } else {
                fold_phase(b.arg() - a.arg())
            };
            if phi.abs() >= ZERO_ANGLE {
                let f = Complex64::from_polar(1.0, -phi);
                rows.iter_mut().for_each(|row| row[k + 1] *= f);
                ops.push(ColumnOp::Phase(k + 1, phi));
            }
            let b = rows[r][k + 1];
            let (alpha, beta) = if a.norm() < TINY {
                (0.0, b.re)
            } else {
                let u = Complex64::from_polar(1.0, -a.arg());
                (a.norm(), (b * u).re)
            };
            let theta = (-beta).atan2(alpha);
            let (s, c) = theta.sin_cos();
            for row in rows.iter_mut() {
                let (x, y) = (row[k], row[k + 1]);
                row[k] = x * c - y * s;
                row[k + 1] = x * s + y * c;
            }
            rows[r][k + 1] = Complex64::new(0.0, 0.0);
            ops.push(ColumnOp::Rotate(k, theta));
        }
    }
    for (r, row) in rows.iter().enumerate() {
        if (row[r].norm() - 1.0).abs() > 1e-8 {
            return Err(Error::Numeric(format!("Givens elimination left row {r} with weight {}", row[r].norm())));
        }
    }
    Ok((ops, count))
}

/// X gates on the lowest qubits of each block, then the inverse elimination
/// sequence. Gauge: each eliminated pair is first phase-aligned by rotating
/// the relative phase (mod pi) onto the right column.
pub fn givens_decompose(spec: &SlaterSpec) -> Result<GivensCircuit> {
    let m = spec.block_modes;
    let mut circuit = Circuit::new(spec.num_qubits());
    for (block, q) in spec.blocks().into_iter().enumerate() {
        for r in 0..q.rows() {
            circuit.push(Gate::X(block * m + r))?;
        }
    }
    let mut rotations = [0usize; 2];
    let mut phase_gates = 0;
    for (block, q) in spec.blocks().into_iter().enumerate() {
        let off = block * m;
        let (ops, count) = eliminate(q)?;
        rotations[block] = count;
        for op in ops.iter().rev() {
            let gate = match *op {
                ColumnOp::Phase(col, phi) => {
                    phase_gates += 1;
                    Gate::PhaseZ(off + col, -phi)
                }
                ColumnOp::Rotate(k, theta) => Gate::G(off + k, off + k + 1, -theta),
            };
            if !gate.is_negligible() {
                circuit.push(gate)?;
            }
        }
    }
    Ok(GivensCircuit { circuit, rotations, phase_gates })
}

/// Runs a preparation circuit from `|0...0>`. After the X layer the state is
/// tagged with its spin sector so the rotations only visit that sector.
pub fn run_preparation(prep: &GivensCircuit) -> Result<Statevector> {
    let n = prep.circuit.num_qubits();
    let mut state = Statevector::zero(n)?;
    let split = prep.x_layer_len();
    let (x_layer, rest) = prep.circuit.gates().split_at(split);
    let b = n / 2;
    let mut filling = SpinFilling::new(0, 0);
    for g in x_layer {
        crate::simulator::apply_gate(&mut state, g)?;
        if let Gate::X(q) = *g {
            if q < b {
                filling.n_up += 1;
            } else {
                filling.n_down += 1;
            }
        }
    }
    state.attach_sector(filling)?;
    let mut tail = Circuit::new(n);
    for g in rest {
        tail.push(*g)?;
    }
    run_circuit(&mut state, &tail)?;
    Ok(state)
}

/// `prod_r (sum_m Q[r][m] c_m^dagger) |0>` on one block, row 0 leftmost.
fn block_slater(q: &CMatrix) -> Result<Vec<Complex64>> {
    let m = q.cols();
    let mut psi = vec![Complex64::new(0.0, 0.0); 1 << m];
    psi[0] = Complex64::new(1.0, 0.0);
    for r in (0..q.rows()).rev() {
        let mut next = vec![Complex64::new(0.0, 0.0); 1 << m];
        for (x, &a) in psi.iter().enumerate() {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (mode, &coef) in q.row(r).iter().enumerate() {
                if x >> mode & 1 == 1 || coef == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let sign = if (x & ((1 << mode) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                next[x | 1 << mode] += a * coef * sign;
            }
        }
        psi = next;
    }
    let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::pre("occupied orbitals are linearly dependent"));
    }
    Ok(psi)
}

/// Builds the Slater state amplitude by amplitude. Up creators stand to the
/// left of down creators, so no sign couples the two blocks.
pub fn direct_slater(spec: &SlaterSpec) -> Result<Statevector> {
    let m = spec.block_modes;
    let up = block_slater(&spec.q_up)?;
    let down = block_slater(&spec.q_down)?;
    let layout = Arc::new(SectorLayout::new(2 * m, spec.filling())?);
    let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << (2 * m)];
    for &i in layout.indices() {
        let i = i as usize;
        amps[i] = up[i & ((1 << m) - 1)] * down[i >> m];
    }
    let mut state = Statevector::from_amplitudes(2 * m, amps)?;
    state.normalize()?;
    state.attach_layout(layout);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_terms, build_hamiltonian_terms, Boundary};
    use crate::simulator::fidelity;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_orthonormal(n: usize, m: usize, rng: &mut ChaCha20Rng, complex: bool) -> CMatrix {
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        while rows.len() < n {
            let mut v: Vec<Complex64> = (0..m)
                .map(|_| {
                    let im = if complex { rng.random::<f64>() - 0.5 } else { 0.0 };
                    Complex64::new(rng.random::<f64>() - 0.5, im)
                })
                .collect();
            for u in &rows {
                let d: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-3 {
                rows.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        CMatrix::from_fn(n, m, |r, k| rows[r][k])
    }

    fn random_spec(modes: usize, n_up: usize, n_down: usize, seed: u64, complex: bool) -> SlaterSpec {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let up = random_orthonormal(n_up, modes, &mut rng, complex);
        let down = random_orthonormal(n_down, modes, &mut rng, complex);
        SlaterSpec::new(up, down).unwrap()
    }

    #[test]
    fn empty_and_full_filling() {
        let p = SshhParams::real(2, 0.7, 1.3, 0.0, 0.0, Boundary::Pbc).unwrap();
        let s = eigensolve(&build_hopping_matrix(&p)).unwrap();
        let (q, _) = occupied_orbitals(&s, 0).unwrap();
        assert_eq!((q.rows(), q.cols()), (0, 4));
        let (q, _) = occupied_orbitals(&s, 4).unwrap();
        assert!(gram_defect(&q) < 1e-12);
        assert!(occupied_orbitals(&s, 5).is_err());
    }

    #[test]
    fn dimer_bonding_orbitals() {
        let p = SshhParams::real(2, 1.0, 0.0, 0.0, 0.0, Boundary::Obc).unwrap();
        let (spec, warn) = ground_state_spec(&p, SpinFilling::half(2)).unwrap();
        assert!(warn.is_empty());
        let q = spec.q_up();
        // project both dimer bonding states onto the row space
        let bonding = [[c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2), c(0.0), c(0.0)], [c(0.0), c(0.0), c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)]];
        for b in bonding {
            let weight: f64 = (0..2)
                .map(|r| q.row(r).iter().zip(&b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr())
                .sum();
            assert!((weight - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum() {
        let spec = SlaterSpec::new(CMatrix::zeros(0, 4), CMatrix::zeros(0, 4)).unwrap();
        let s = direct_slater(&spec).unwrap();
        assert_eq!(s.amplitude(0), c(1.0));
        let g = givens_decompose(&spec).unwrap();
        assert!(g.circuit.is_empty());
        assert_eq!(g.rotations, [0, 0]);
    }

    #[test]
    fn site_aligned_orbitals_need_only_x_gates() {
        let up = CMatrix::from_fn(2, 4, |r, k| c((r == k) as u8 as f64));
        let down = CMatrix::from_fn(1, 4, |_, k| c((k == 0) as u8 as f64));
        let spec = SlaterSpec::new(up, down).unwrap();
        let g = givens_decompose(&spec).unwrap();
        assert_eq!(g.circuit.gates(), &[Gate::X(0), Gate::X(1), Gate::X(4)]);
        assert_eq!(g.rotations, [4, 3]);
        let s = run_preparation(&g).unwrap();
        assert!((fidelity(&s, &direct_slater(&spec).unwrap()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_mode_superposition() {
        let up = CMatrix::from_rows(&[vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]]).unwrap();
        let spec = SlaterSpec::new(up, CMatrix::zeros(0, 2)).unwrap();
        let g = givens_decompose(&spec).unwrap();
        assert_eq!(g.circuit.len(), 2);
        assert!(matches!(g.circuit.gates()[1], Gate::G(0, 1, _)));
        let s = run_preparation(&g).unwrap();
        let phase = s.amplitude(0b01) / s.amplitude(0b01).norm();
        assert!((s.amplitude(0b01) - phase * FRAC_1_SQRT_2).norm() < 1e-14);
        assert!((s.amplitude(0b10) - phase * FRAC_1_SQRT_2).norm() < 1e-14);
    }

    #[test]
    fn half_filled_six_cell_count() {
        let p = SshhParams::real(6, 0.5, 1.5, 0.0, 0.0, Boundary::Pbc).unwrap();
        let (spec, _) = ground_state_spec(&p, SpinFilling::half(6)).unwrap();
        let g = givens_decompose(&spec).unwrap();
        assert_eq!(g.rotations, [36, 36]);
        assert_eq!(g.phase_gates, 0);
        assert!(g.circuit.gates().iter().all(|gate| !matches!(gate, Gate::PhaseZ(..))));
    }

    #[test]
    fn blocks_touch_disjoint_qubits() {
        let spec = random_spec(6, 3, 2, 4, true);
        let g = givens_decompose(&spec).unwrap();
        for gate in g.circuit.gates() {
            if let Gate::G(i, j, _) = *gate {
                assert_eq!(i / 6, j / 6);
                assert_eq!(j, i + 1);
            }
        }
    }

    #[test]
    fn row_swap_flips_sign() {
        let spec = random_spec(4, 2, 1, 8, true);
        let mut rows = rows_of(spec.q_up());
        rows.swap(0, 1);
        let swapped = SlaterSpec::new(CMatrix::from_rows(&rows).unwrap(), spec.q_down().clone()).unwrap();
        let a = direct_slater(&spec).unwrap();
        let b = direct_slater(&swapped).unwrap();
        assert!((a.inner(&b).unwrap() + 1.0).norm() < 1e-12);
    }

    #[test]
    fn dependent_rows_rejected() {
        let r = vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)];
        let q = CMatrix::from_rows(&[r.clone(), r]).unwrap();
        assert!(matches!(SlaterSpec::new(q, CMatrix::zeros(0, 2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn dimer_state_is_product_of_bonding_pairs() {
        let p = SshhParams::real(2, 1.0, 0.0, 0.0, 0.0, Boundary::Obc).unwrap();
        let (spec, _) = ground_state_spec(&p, SpinFilling::half(2)).unwrap();
        let s = direct_slater(&spec).unwrap();
        // per block: (c_A1 - c_B1)(c_A2 - c_B2)/2 on vacuum
        let mut block = [Complex64::new(0.0, 0.0); 16];
        for (x, sign) in [(0b0101usize, 1.0), (0b1001, -1.0), (0b0110, -1.0), (0b1010, 1.0)] {
            block[x] = c(0.5 * sign);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 256];
        for u in 0..16 {
            for d in 0..16 {
                amps[u | d << 4] = block[u] * block[d];
            }
        }
        let want = Statevector::from_amplitudes(8, amps).unwrap();
        assert!((fidelity(&s, &want).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_slater_state_is_an_eigenstate() {
        for (n, boundary, v, w) in [(2, Boundary::Pbc, 0.5, 1.5), (2, Boundary::Obc, 1.1, 0.4), (3, Boundary::Pbc, 0.8, 1.3)] {
            let p = SshhParams::real(n, v, w, 0.0, 0.0, boundary).unwrap();
            let filling = SpinFilling::half(n);
            let (spec, _) = ground_state_spec(&p, filling).unwrap();
            let psi = direct_slater(&spec).unwrap();
            let e = slater_energy(&eigensolve(&build_hopping_matrix(&p)).unwrap(), filling);
            let terms = build_hamiltonian_terms(&p, 0.0, filling).unwrap();
            let h_psi = apply_terms(&terms, psi.amplitudes()).unwrap();
            let resid = h_psi.iter().zip(psi.amplitudes()).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt();
            assert!(resid < 1e-8, "residual {resid}");
        }
    }

    #[test]
    fn complex_hopping_inserts_phase_gates() {
        let p = SshhParams::new(3, Complex64::new(0.4, 0.3), Complex64::new(1.2, -0.5), 0.0, 0.0, Boundary::Pbc).unwrap();
        let (spec, _) = ground_state_spec(&p, SpinFilling::new(3, 2)).unwrap();
        let g = givens_decompose(&spec).unwrap();
        assert!(g.phase_gates > 0);
        let f = fidelity(&run_preparation(&g).unwrap(), &direct_slater(&spec).unwrap()).unwrap();
        assert!(f > 1.0 - 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn circuit_matches_direct_construction(seed in any::<u64>(), cells in 1usize..=3, complex in any::<bool>()) {
            let m = 2 * cells;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let n_up = rng.random_range(0..=m);
            let n_down = rng.random_range(0..=m);
            let spec = random_spec(m, n_up, n_down, seed, complex);
            let g = givens_decompose(&spec).unwrap();
            prop_assert!(g.rotations[0] == n_up * (m - n_up) && g.rotations[1] == n_down * (m - n_down));
            if !complex {
                prop_assert!(g.phase_gates == 0);
            }
            let f = fidelity(&run_preparation(&g).unwrap(), &direct_slater(&spec).unwrap()).unwrap();
            prop_assert!(f >= 1.0 - 1e-10, "fidelity {}", f);
        }

        #[test]
        fn direct_slater_has_fixed_block_weights(seed in any::<u64>()) {
            let spec = random_spec(4, 2, 3, seed, true);
            let s = direct_slater(&spec).unwrap();
            s.amplitudes().iter().enumerate().filter(|(_, a)| a.norm() > 0.0).for_each(|(i, _)| {
                assert_eq!(((i & 0xf).count_ones(), (i >> 4).count_ones()), (2, 3));
            });
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }
}
