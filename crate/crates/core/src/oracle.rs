//! Exact diagonalization in one `(n_up, n_down)` sector, built directly from
//! fermionic creation and annihilation on occupation bit strings.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::adiabatic::{run_adiabatic_with, Schedule, StepOptions};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::model::{build_hamiltonian_terms_with, Boundary, SpinFilling, SshhParams, TermOptions};
use crate::simulator::{fidelity, Statevector};
use crate::stateprep::{givens_decompose, ground_state_spec, run_preparation};

pub const DEFAULT_DIM_CAP: usize = 20_000;
/// Largest sector solved by dense Jacobi; power iteration beyond.
pub const DENSE_LIMIT: usize = 1000;
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub n_cells: usize,
    pub filling: SpinFilling,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl SectorBasis {
    pub fn new(n_cells: usize, filling: SpinFilling) -> Result<Self> {
        filling.validate(n_cells)?;
        let b = 2 * n_cells;
        let block: Vec<u64> = (0..1u64 << b).collect();
        let ups: Vec<u64> = block.iter().copied().filter(|u| u.count_ones() as usize == filling.n_up).collect();
        let mut states = Vec::new();
        for d in block.iter().copied().filter(|d| d.count_ones() as usize == filling.n_down) {
            states.extend(ups.iter().map(|&u| u | d << b));
        }
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(SectorBasis { n_cells, filling, states, index })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, config: u64) -> Option<usize> {
        self.index.get(&config).copied()
    }

    /// Embeds sector amplitudes into the full `2^{4N}` register.
    pub fn embed(&self, coeffs: &[Complex64]) -> Result<Statevector> {
        let nq = 4 * self.n_cells;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << nq];
        for (&s, &c) in self.states.iter().zip(coeffs) {
            amps[s as usize] = c;
        }
        let mut sv = Statevector::from_amplitudes(nq, amps)?;
        sv.attach_sector(self.filling)?;
        Ok(sv)
    }

    pub fn restrict(&self, state: &Statevector) -> Vec<Complex64> {
        self.states.iter().map(|&s| state.amplitude(s)).collect()
    }
}

/// Sparse Hermitian sector matrix in compressed rows, columns ascending.
#[derive(Debug, Clone)]
pub struct SectorMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SectorMatrix {
    fn from_rows(rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SectorMatrix { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] = self.vals[k];
            }
        }
        m
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                worst = worst.max((self.vals[k] - self.get(self.cols[k], r).conj()).norm());
            }
        }
        worst
    }

    /// `<x|H|x>` for a normalized sector vector.
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let hx = self.matvec(x);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Upper Gershgorin bound on the spectrum.
    fn gershgorin_upper(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                let mut diag = 0.0;
                let mut off = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    if self.cols[k] == r {
                        diag = self.vals[k].re;
                    } else {
                        off += self.vals[k].norm();
                    }
                }
                diag + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `c_m^dagger c_n` on configuration `x`: the new configuration and the sign
/// `(-1)^{#occupied modes strictly between m and n}`.
fn hop(x: u64, m: usize, n: usize) -> Option<(u64, f64)> {
    if x >> n & 1 == 0 {
        return None;
    }
    let y = x & !(1 << n);
    if m != n && y >> m & 1 == 1 {
        return None;
    }
    let (lo, hi) = (m.min(n), m.max(n));
    let between = if hi > lo + 1 { (y >> (lo + 1)) & ((1u64 << (hi - lo - 1)) - 1) } else { 0 };
    let sign = if between.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((y | 1 << m, sign))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleOptions {
    pub dim_cap: Option<usize>,
    /// Negates the periodic-boundary hops (mutation hook).
    pub flip_boundary_sign: bool,
}

pub fn build_sector_hamiltonian(params: &SshhParams, filling: SpinFilling, lambda: f64) -> Result<(SectorBasis, SectorMatrix)> {
    build_sector_hamiltonian_with(params, filling, lambda, OracleOptions::default())
}

/// Hopping `t c_row^dagger c_col + h.c.` for every nonzero entry of the
/// single-particle pattern, and `lambda U n_up n_down` on each site.
pub fn build_sector_hamiltonian_with(
    params: &SshhParams,
    filling: SpinFilling,
    lambda: f64,
    opts: OracleOptions,
) -> Result<(SectorBasis, SectorMatrix)> {
    params.validate()?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("interpolation fraction {lambda} outside [0, 1]")));
    }
    let n = params.n_cells;
    let cap = opts.dim_cap.unwrap_or(DEFAULT_DIM_CAP);
    let dim = binomial(2 * n, filling.n_up) * binomial(2 * n, filling.n_down);
    if dim > cap {
        return Err(Error::Resource(format!("sector dimension {dim} exceeds cap {cap}")));
    }
    let basis = SectorBasis::new(n, filling)?;

    // (row site, column site, amplitude) within one spin block
    let mut hops: Vec<(usize, usize, Complex64)> = Vec::new();
    for j in 0..n {
        hops.push((2 * j + 1, 2 * j, params.v));
    }
    for j in 0..n - 1 {
        hops.push((2 * j + 2, 2 * j + 1, params.w));
    }
    if params.boundary == Boundary::Pbc {
        let w = if opts.flip_boundary_sign { -params.w } else { params.w };
        hops.push((0, 2 * n - 1, w));
    }

    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); basis.dim()];
    for (col, &x) in basis.states.iter().enumerate() {
        for off in [0, 2 * n] {
            for &(r, c, t) in &hops {
                for (m, k, amp) in [(r, c, t), (c, r, t.conj())] {
                    if let Some((y, sign)) = hop(x, off + m, off + k) {
                        let row = basis.index_of(y).expect("hopping stays in the sector");
                        rows[row].push((col, amp * sign));
                    }
                }
            }
        }
        let mut diag = 0.0;
        for site in 0..2 * n {
            if x >> site & 1 == 1 && x >> (2 * n + site) & 1 == 1 {
                diag += lambda * if site % 2 == 0 { params.u_a } else { params.u_b };
            }
        }
        if diag != 0.0 {
            rows[col].push((col, Complex64::new(diag, 0.0)));
        }
    }
    Ok((basis, SectorMatrix::from_rows(rows)))
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: Statevector,
    /// Number of sector eigenvalues within [`DEGENERACY_TOL`] of the lowest.
    /// Only resolved by the dense solver; 1 otherwise.
    pub degeneracy: usize,
    /// Gap to the next distinct eigenvalue (dense solver only).
    pub gap: Option<f64>,
}

impl GroundState {
    pub fn is_degenerate(&self) -> bool {
        self.degeneracy > 1
    }
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;

/// Power iteration on `sigma I - H` from a deterministic start vector.
fn lowest_by_power_iteration(h: &SectorMatrix) -> Result<(f64, Vec<Complex64>)> {
    let sigma = h.gershgorin_upper();
    let dim = h.dim();
    let mut x: Vec<Complex64> = (0..dim).map(|i| Complex64::new(1.0 + (i as f64 * 0.618_033_988_7).fract(), 0.0)).collect();
    let norm = |v: &[Complex64]| v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(&x);
    x.iter_mut().for_each(|a| *a /= n0);
    let mut e = h.expectation(&x);
    for _ in 0..POWER_MAX_ITER {
        let hx = h.matvec(&x);
        let mut y: Vec<Complex64> = x.iter().zip(&hx).map(|(a, b)| a * sigma - b).collect();
        let ny = norm(&y);
        if ny == 0.0 {
            break;
        }
        y.iter_mut().for_each(|a| *a /= ny);
        let resid: f64 = {
            let hy = h.matvec(&y);
            let ey = y.iter().zip(&hy).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
            e = ey;
            hy.iter().zip(&y).map(|(a, b)| (a - b * ey).norm_sqr()).sum::<f64>().sqrt()
        };
        x = y;
        if resid < POWER_TOL {
            return Ok((e, x));
        }
    }
    Err(Error::Numeric(format!("power iteration did not converge in {POWER_MAX_ITER} iterations (energy {e})")))
}

pub fn ground_state_sector(params: &SshhParams, filling: SpinFilling, lambda: f64) -> Result<GroundState> {
    let (basis, h) = build_sector_hamiltonian(params, filling, lambda)?;
    ground_state_of(&basis, &h)
}

pub fn ground_state_of(basis: &SectorBasis, h: &SectorMatrix) -> Result<GroundState> {
    if h.dim() <= DENSE_LIMIT {
        let eig = hermitian_eigen(&h.to_dense())?;
        let e0 = eig.values[0];
        let degeneracy = eig.values.iter().take_while(|&&e| e - e0 < DEGENERACY_TOL).count();
        let gap = eig.values.iter().find(|&&e| e - e0 >= DEGENERACY_TOL).map(|e| e - e0);
        let mut state = basis.embed(&eig.vectors.column(0))?;
        state.normalize()?;
        Ok(GroundState { energy: e0, state, degeneracy, gap })
    } else {
        let (e0, v) = lowest_by_power_iteration(h)?;
        let mut state = basis.embed(&v)?;
        state.normalize()?;
        Ok(GroundState { energy: e0, state, degeneracy: 1, gap: None })
    }
}

pub const CROSSCHECK_TOL: f64 = 1e-10;

pub fn crosscheck_pauli_vs_fermionic(params: &SshhParams, filling: SpinFilling, lambda: f64) -> Result<f64> {
    crosscheck_with(params, filling, lambda, OracleOptions::default())
}

/// Max entry deviation between the sector restriction of the Pauli-term
/// Hamiltonian (literal strings) and the fermionic sector matrix. The Pauli
/// side is expanded column by column on sector basis states, which equals the
/// dense restriction entry for entry.
pub fn crosscheck_with(params: &SshhParams, filling: SpinFilling, lambda: f64, opts: OracleOptions) -> Result<f64> {
    if params.n_cells > 3 {
        return Err(Error::arg("Pauli cross-check is limited to three cells"));
    }
    let term_opts = TermOptions { flip_boundary_sign: opts.flip_boundary_sign, ..TermOptions::default() };
    let terms = build_hamiltonian_terms_with(params, lambda, filling, term_opts)?;
    let (basis, h) = build_sector_hamiltonian(params, filling, lambda)?;
    let mut worst = 0.0f64;
    for (col, &x) in basis.states().iter().enumerate() {
        let mut column: HashMap<u64, Complex64> = HashMap::new();
        for t in &terms {
            let (phase, y) = t.apply_to_basis(x);
            *column.entry(y).or_insert(Complex64::new(0.0, 0.0)) += t.coeff * phase;
        }
        for (&y, &val) in &column {
            match basis.index_of(y) {
                Some(row) => worst = worst.max((val - h.get(row, col)).norm()),
                None => worst = worst.max(val.norm()),
            }
        }
        for row in 0..basis.dim() {
            if !column.contains_key(&basis.states()[row]) {
                worst = worst.max(h.get(row, col).norm());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkResult {
    pub fidelity: f64,
    pub energy_error: f64,
    pub ground_energy: f64,
}

pub fn adiabatic_benchmark(params: &SshhParams, filling: SpinFilling, schedule: &Schedule) -> Result<BenchmarkResult> {
    adiabatic_benchmark_with(params, filling, schedule, StepOptions::default())
}

/// Evolves the Givens-prepared free ground state and compares it with the
/// interacting sector ground state.
pub fn adiabatic_benchmark_with(params: &SshhParams, filling: SpinFilling, schedule: &Schedule, opts: StepOptions) -> Result<BenchmarkResult> {
    let (basis, h) = build_sector_hamiltonian(params, filling, 1.0)?;
    let gs = ground_state_of(&basis, &h)?;
    let (spec, _) = ground_state_spec(params, filling)?;
    let initial = run_preparation(&givens_decompose(&spec)?)?;
    let fin = run_adiabatic_with(params, filling, schedule, &initial, opts)?;
    let energy = h.expectation(&basis.restrict(&fin));
    Ok(BenchmarkResult { fidelity: fidelity(&fin, &gs.state)?, energy_error: energy - gs.energy, ground_energy: gs.energy })
}

/// One hopping piece `a c_r^dagger c_c + conj(a) c_c^dagger c_r` applied as
/// `exp(-i tau piece)` on sector amplitudes. Each connected pair of
/// configurations is a 2x2 block, so the exponential is closed form.
fn apply_hop_exponential(basis: &SectorBasis, psi: &mut [Complex64], r: usize, c: usize, a: Complex64, tau: f64) {
    let mag = a.norm();
    if mag == 0.0 || tau == 0.0 {
        return;
    }
    let (sn, cs) = (mag * tau).sin_cos();
    let unit = a / mag;
    for (ix, &x) in basis.states().iter().enumerate() {
        if let Some((y, sign)) = hop(x, r, c) {
            let iy = basis.index_of(y).expect("hopping stays in the sector");
            let (px, py) = (psi[ix], psi[iy]);
            let minus_i = Complex64::new(0.0, -sn);
            psi[iy] = py * cs + minus_i * unit * sign * px;
            psi[ix] = px * cs + minus_i * unit.conj() * sign * py;
        }
    }
}

/// Sector-space product of exact fermionic exponentials in the same order
/// and split as the Trotter circuit: per bond the real part of the hopping,
/// then the imaginary part; layers intracell, intercell, boundary, Hubbard.
/// The boundary hop carries its fermionic sign literally.
pub fn trotter_reference(
    params: &SshhParams,
    filling: SpinFilling,
    schedule: &Schedule,
    initial: &[Complex64],
    opts: OracleOptions,
) -> Result<Vec<Complex64>> {
    params.validate()?;
    schedule.validate()?;
    let basis = SectorBasis::new(params.n_cells, filling)?;
    if initial.len() != basis.dim() {
        return Err(Error::arg("initial vector does not match the sector dimension"));
    }
    let n = params.n_cells;
    let dt = schedule.dt();
    let w_edge = if opts.flip_boundary_sign { -params.w } else { params.w };
    let mut layers: Vec<Vec<(usize, usize, Complex64)>> = vec![
        (0..n).map(|j| (2 * j + 1, 2 * j, params.v)).collect(),
        (0..n - 1).map(|j| (2 * j + 2, 2 * j + 1, params.w)).collect(),
    ];
    if params.boundary == Boundary::Pbc {
        layers.push(vec![(0, 2 * n - 1, w_edge)]);
    }
    let mut psi = initial.to_vec();
    for ell in 1..=schedule.steps {
        for layer in &layers {
            for off in [0, 2 * n] {
                for &(r, c, t) in layer {
                    apply_hop_exponential(&basis, &mut psi, off + r, off + c, Complex64::new(t.re, 0.0), dt);
                    apply_hop_exponential(&basis, &mut psi, off + r, off + c, Complex64::new(0.0, t.im), dt);
                }
            }
        }
        let frac = schedule.midpoint(ell);
        for (k, &x) in basis.states().iter().enumerate() {
            let mut e = 0.0;
            for site in 0..2 * n {
                if x >> site & 1 == 1 && x >> (2 * n + site) & 1 == 1 {
                    e += if site % 2 == 0 { params.u_a } else { params.u_b };
                }
            }
            psi[k] *= Complex64::from_polar(1.0, -dt * frac * e);
        }
    }
    Ok(psi)
}

pub const PARITY_TOL: f64 = 1e-10;

/// Infidelity between the circuit evolution and [`trotter_reference`] from
/// the Givens-prepared free ground state. Exact up to rounding when every
/// sign convention agrees.
pub fn trotter_consistency(params: &SshhParams, filling: SpinFilling, schedule: &Schedule, circuit_opts: StepOptions) -> Result<f64> {
    let basis = SectorBasis::new(params.n_cells, filling)?;
    let (spec, _) = ground_state_spec(params, filling)?;
    let initial = run_preparation(&givens_decompose(&spec)?)?;
    let fin = run_adiabatic_with(params, filling, schedule, &initial, circuit_opts)?;
    let reference = trotter_reference(params, filling, schedule, &basis.restrict(&initial), OracleOptions::default())?;
    let reference = basis.embed(&reference)?;
    Ok(1.0 - fidelity(&fin, &reference)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::model::terms_to_dense;
    use crate::singleparticle::{build_hopping_matrix, eigensolve};

    fn ring(n: usize, v: f64, w: f64, ua: f64, ub: f64) -> SshhParams {
        SshhParams::real(n, v, w, ua, ub, Boundary::Pbc).unwrap()
    }

    #[test]
    fn sector_dimension_and_order() {
        let b = SectorBasis::new(2, SpinFilling::half(2)).unwrap();
        assert_eq!(b.dim(), 36);
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(SectorBasis::new(3, SpinFilling::new(2, 4)).unwrap().dim(), 15 * 15);
    }

    #[test]
    fn fermionic_signs() {
        // c_3^dag c_0 on |0,1,1,0 ... > passes two occupied modes
        assert_eq!(hop(0b0111, 3, 0), Some((0b1110, 1.0)));
        assert_eq!(hop(0b0011, 3, 0), Some((0b1010, -1.0)));
        assert_eq!(hop(0b0010, 3, 0), None);
        assert_eq!(hop(0b1001, 3, 0), None);
        assert_eq!(hop(0b0001, 1, 0), Some((0b0010, 1.0)));
    }

    #[test]
    fn pure_hubbard_is_diagonal() {
        let u = 0.7;
        let p = ring(2, 0.0, 0.0, u, u);
        let (basis, h) = build_sector_hamiltonian(&p, SpinFilling::half(2), 0.5).unwrap();
        for (i, &x) in basis.states().iter().enumerate() {
            let doubles = ((x & 0xf) & (x >> 4)).count_ones() as f64;
            assert!((h.get(i, i).re - 0.5 * u * doubles).abs() < 1e-15);
            for j in 0..basis.dim() {
                if j != i {
                    assert_eq!(h.get(i, j), Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    /// All sums of `n_up` and `n_down` distinct single-particle levels.
    fn free_spectrum(p: &SshhParams, f: SpinFilling) -> Vec<f64> {
        let e = eigensolve(&build_hopping_matrix(p)).unwrap().values;
        let subset_sums = |k: usize| -> Vec<f64> {
            (0u32..1 << e.len()).filter(|m| m.count_ones() as usize == k).map(|m| (0..e.len()).filter(|i| m >> i & 1 == 1).map(|i| e[i]).sum()).collect()
        };
        let mut out: Vec<f64> = subset_sums(f.n_up).iter().flat_map(|a| subset_sums(f.n_down).into_iter().map(move |b| a + b)).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn free_sector_spectrum_is_sums_of_levels() {
        for p in [ring(2, 0.5, 1.5, 0.3, 0.3), SshhParams::new(2, Complex64::new(0.4, 0.2), Complex64::new(1.1, -0.6), 0.0, 0.0, Boundary::Pbc).unwrap()] {
            for f in [SpinFilling::half(2), SpinFilling::new(1, 3)] {
                let (_, h) = build_sector_hamiltonian(&p, f, 0.0).unwrap();
                let e = hermitian_eigen(&h.to_dense()).unwrap().values;
                let want = free_spectrum(&p, f);
                e.iter().zip(&want).for_each(|(a, b)| assert!((a - b).abs() < 1e-9, "{a} vs {b}"));
            }
        }
    }

    #[test]
    fn free_ground_energy() {
        let p = ring(3, 0.6, 1.2, 0.0, 0.0);
        let f = SpinFilling::new(3, 2);
        let gs = ground_state_sector(&p, f, 1.0).unwrap();
        let e = eigensolve(&build_hopping_matrix(&p)).unwrap().values;
        assert!((gs.energy - (e[..3].iter().sum::<f64>() + e[..2].iter().sum::<f64>())).abs() < 1e-9);
    }

    #[test]
    fn atomic_limit_avoids_double_occupancy() {
        let gs = ground_state_sector(&ring(2, 0.0, 0.0, 1.0, 1.0), SpinFilling::half(2), 1.0).unwrap();
        assert!(gs.energy.abs() < 1e-14);
        assert!(gs.is_degenerate());
    }

    #[test]
    fn weakly_interacting_ring_is_gapped() {
        let gs = ground_state_sector(&ring(2, 0.5, 1.5, 0.5, 0.5), SpinFilling::half(2), 1.0).unwrap();
        assert!(gs.energy.is_finite());
        assert_eq!(gs.degeneracy, 1);
        assert!(gs.gap.unwrap() > 0.0);
        assert!((gs.state.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spin_exchange_twins_share_energy() {
        let p = ring(2, 0.5, 1.5, 0.5, 0.5);
        let a = ground_state_sector(&p, SpinFilling::new(2, 1), 1.0).unwrap();
        let b = ground_state_sector(&p, SpinFilling::new(1, 2), 1.0).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-10);
    }

    #[test]
    fn matrix_is_hermitian_and_closed() {
        let p = SshhParams::new(3, Complex64::new(0.4, 0.3), Complex64::new(1.0, -0.2), 0.3, 0.9, Boundary::Pbc).unwrap();
        let (basis, h) = build_sector_hamiltonian(&p, SpinFilling::new(3, 2), 0.6).unwrap();
        assert!(h.hermitian_defect() < 1e-12);
        assert!(h.cols.iter().all(|&c| c < basis.dim()));
    }

    #[test]
    fn chiral_spectrum_symmetry() {
        // at half filling, particle-hole relabeling maps E to -E on a bipartite open chain
        let p = SshhParams::real(2, 0.3, 1.2, 0.0, 0.0, Boundary::Obc).unwrap();
        let (_, h) = build_sector_hamiltonian(&p, SpinFilling::half(2), 0.0).unwrap();
        let e = hermitian_eigen(&h.to_dense()).unwrap().values;
        let n = e.len();
        (0..n).for_each(|k| assert!((e[k] + e[n - 1 - k]).abs() < 1e-9));
    }

    #[test]
    fn dimension_cap() {
        let p = ring(4, 0.5, 1.5, 0.1, 0.1);
        let opts = OracleOptions { dim_cap: Some(100), ..Default::default() };
        assert!(matches!(build_sector_hamiltonian_with(&p, SpinFilling::half(4), 1.0, opts), Err(Error::Resource(_))));
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let p = ring(3, 0.5, 1.5, 0.4, 0.6);
        let (basis, h) = build_sector_hamiltonian(&p, SpinFilling::new(2, 2), 1.0).unwrap();
        let dense = ground_state_of(&basis, &h).unwrap();
        let (e, v) = lowest_by_power_iteration(&h).unwrap();
        assert!((e - dense.energy).abs() < 1e-9);
        let state = basis.embed(&v).unwrap();
        assert!(fidelity(&state, &dense.state).unwrap() > 1.0 - 1e-8);
    }

    #[test]
    fn crosscheck_passes_on_grid() {
        let grid = [(0.5, 1.5, 0.5, 0.5), (1.0, 0.3, 0.0, 0.0), (0.7, 0.7, 0.2, 0.9), (0.1, 1.0, 1.3, 0.2), (1.2, 0.8, 0.0, 0.4)];
        for boundary in [Boundary::Obc, Boundary::Pbc] {
            for &(v, w, ua, ub) in &grid {
                let p = SshhParams::real(2, v, w, ua, ub, boundary).unwrap();
                for f in [SpinFilling::half(2), SpinFilling::new(1, 2), SpinFilling::new(3, 0)] {
                    assert!(crosscheck_pauli_vs_fermionic(&p, f, 0.7).unwrap() < CROSSCHECK_TOL);
                }
            }
        }
        let complex = SshhParams::new(3, Complex64::new(0.4, 0.3), Complex64::new(1.0, -0.2), 0.3, 0.9, Boundary::Pbc).unwrap();
        assert!(crosscheck_pauli_vs_fermionic(&complex, SpinFilling::new(3, 2), 1.0).unwrap() < CROSSCHECK_TOL);
    }

    #[test]
    fn crosscheck_agrees_with_dense_expansion() {
        let p = SshhParams::real(2, 0.5, 1.5, 0.3, 0.8, Boundary::Pbc).unwrap();
        let f = SpinFilling::half(2);
        let dense = terms_to_dense(&crate::model::build_hamiltonian_terms(&p, 1.0, f).unwrap(), 8).unwrap();
        let (basis, h) = build_sector_hamiltonian(&p, f, 1.0).unwrap();
        let restricted = CMatrix::from_fn(basis.dim(), basis.dim(), |r, c| dense[basis.states()[r] as usize * 256 + basis.states()[c] as usize]);
        assert!(restricted.max_abs_diff(&h.to_dense()) < 1e-12);
    }

    #[test]
    fn flipped_boundary_is_detected() {
        let p = ring(2, 0.5, 1.5, 0.2, 0.2);
        let f = SpinFilling::half(2);
        let opts = OracleOptions { flip_boundary_sign: true, ..Default::default() };
        assert!(crosscheck_with(&p, f, 1.0, opts).unwrap() > 0.1);
    }

    #[test]
    fn free_benchmark_tracks_ground_state() {
        let p = ring(2, 0.5, 1.5, 0.0, 0.0);
        let r = adiabatic_benchmark(&p, SpinFilling::half(2), &Schedule::new(1.0, 100).unwrap()).unwrap();
        assert!(r.fidelity >= 0.999, "{r:?}");
    }

    #[test]
    fn sudden_switch_is_worse_than_slow() {
        let p = ring(2, 0.5, 1.5, 0.5, 0.5);
        let f = SpinFilling::half(2);
        let slow = adiabatic_benchmark(&p, f, &Schedule::new(10.0, 400).unwrap()).unwrap();
        let fast = adiabatic_benchmark(&p, f, &Schedule::new(1e-3, 1).unwrap()).unwrap();
        assert!(slow.fidelity >= 0.99, "{slow:?}");
        assert!(fast.fidelity < slow.fidelity);
    }

    #[test]
    fn circuit_equals_fermionic_trotter_product() {
        let s = Schedule::new(1.0, 40).unwrap();
        for (n, boundary, f) in [(2, Boundary::Pbc, SpinFilling::half(2)), (2, Boundary::Pbc, SpinFilling::new(1, 2)), (3, Boundary::Pbc, SpinFilling::half(3)), (3, Boundary::Obc, SpinFilling::new(4, 2))] {
            let p = SshhParams::new(n, Complex64::new(0.5, 0.2), Complex64::new(1.5, -0.3), 0.3, 0.6, boundary).unwrap();
            let inf = trotter_consistency(&p, f, &s, StepOptions::default()).unwrap();
            assert!(inf < PARITY_TOL, "{n} {boundary:?} {f:?}: {inf:e}");
        }
    }

    #[test]
    fn flipped_circuit_boundary_breaks_consistency() {
        let p = ring(2, 0.5, 1.5, 0.3, 0.3);
        let s = Schedule::new(1.0, 40).unwrap();
        let inf = trotter_consistency(&p, SpinFilling::half(2), &s, StepOptions { flip_boundary_sign: true }).unwrap();
        assert!(inf > 1e-3, "{inf:e}");
    }
}
