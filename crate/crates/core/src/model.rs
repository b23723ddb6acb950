//! Model parameters, the mode-to-qubit map, and the Jordan-Wigner Pauli form
//! of the SSH-Hubbard Hamiltonian.
//!
//! Qubit `q` is bit `q` of a basis-state index; `|1>` means the mode is
//! occupied. Spin-up modes occupy qubits `0..2N`, spin-down modes `2N..4N`,
//! and within a spin block the order is `A1, B1, A2, B2, ...`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Pbc,
    Obc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublattice {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

/// Parameters of the chain. Hoppings are complex; repulsions are real and
/// non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SshhParams {
    pub n_cells: usize,
    pub v: Complex64,
    pub w: Complex64,
    pub u_a: f64,
    pub u_b: f64,
    pub boundary: Boundary,
}

impl SshhParams {
    pub fn new(
        n_cells: usize,
        v: Complex64,
        w: Complex64,
        u_a: f64,
        u_b: f64,
        boundary: Boundary,
    ) -> Result<Self> {
        let p = Self {
            n_cells,
            v,
            w,
            u_a,
            u_b,
            boundary,
        };
        p.validate()?;
        Ok(p)
    }

    /// Real-hopping convenience constructor.
    pub fn real(n_cells: usize, v: f64, w: f64, u_a: f64, u_b: f64, boundary: Boundary) -> Result<Self> {
        Self::new(n_cells, v.into(), w.into(), u_a, u_b, boundary)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 2 {
            return Err(Error::arg(format!("need at least 2 unit cells, got {}", self.n_cells)));
        }
        if !(self.u_a >= 0.0 && self.u_b >= 0.0) {
            return Err(Error::arg(format!(
                "Hubbard repulsions must be non-negative (U_A={}, U_B={})",
                self.u_a, self.u_b
            )));
        }
        if !(self.v.is_finite() && self.w.is_finite() && self.u_a.is_finite() && self.u_b.is_finite()) {
            return Err(Error::arg("model parameters must be finite"));
        }
        Ok(())
    }

    /// `U_B - U_A`.
    pub fn delta_u(&self) -> f64 {
        self.u_b - self.u_a
    }

    pub fn num_qubits(&self) -> usize {
        4 * self.n_cells
    }

    /// Modes per spin block.
    pub fn block_size(&self) -> usize {
        2 * self.n_cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinFilling {
    pub n_up: usize,
    pub n_down: usize,
}

impl SpinFilling {
    pub fn new(n_up: usize, n_down: usize) -> Self {
        Self { n_up, n_down }
    }

    /// `n = 2N`, split evenly.
    pub fn half(n_cells: usize) -> Self {
        Self::new(n_cells, n_cells)
    }

    /// `n = 2N + 2`, split evenly.
    pub fn half_plus_two(n_cells: usize) -> Self {
        Self::new(n_cells + 1, n_cells + 1)
    }

    pub fn total(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn get(&self, spin: Spin) -> usize {
        match spin {
            Spin::Up => self.n_up,
            Spin::Down => self.n_down,
        }
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        let cap = 2 * n_cells;
        if self.n_up > cap || self.n_down > cap {
            return Err(Error::arg(format!(
                "filling ({}, {}) exceeds {} modes per spin block",
                self.n_up, self.n_down, cap
            )));
        }
        Ok(())
    }
}

/// Qubit index of mode `(sublattice, j, spin)` with 1-based cell index `j`.
pub fn map_mode(sublattice: Sublattice, j: usize, spin: Spin, n_cells: usize) -> Result<usize> {
    if j < 1 || j > n_cells {
        return Err(Error::arg(format!("cell index {j} outside 1..={n_cells}")));
    }
    let offset = match spin {
        Spin::Up => 0,
        Spin::Down => 2 * n_cells,
    };
    let site = match sublattice {
        Sublattice::A => 2 * j - 2,
        Sublattice::B => 2 * j - 1,
    };
    Ok(offset + site)
}

/// `(-1)^n_s`: the eigenvalue of the spin-block Z parity in a sector with
/// `n_s` particles.
pub fn sector_parity(n_s: usize) -> i32 {
    if n_s % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sign picked up by a periodic-boundary hop once the Z string between the two
/// end qubits is replaced by its sector eigenvalue. The hop connects states in
/// which exactly one end is occupied, so the string sees `n_s - 1` particles.
pub fn boundary_hop_sign(n_s: usize) -> i32 {
    -sector_parity(n_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// A complex coefficient times a product of single-qubit Paulis on distinct
/// qubits (ascending). An empty factor list is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: Complex64,
    factors: Vec<(usize, PauliAxis)>,
}

impl PauliTerm {
    pub fn new(coeff: Complex64, mut factors: Vec<(usize, PauliAxis)>) -> Result<Self> {
        factors.sort_by_key(|f| f.0);
        if factors.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::arg("repeated qubit in Pauli term"));
        }
        Ok(Self { coeff, factors })
    }

    pub fn identity(coeff: Complex64) -> Self {
        Self {
            coeff,
            factors: Vec::new(),
        }
    }

    pub fn factors(&self) -> &[(usize, PauliAxis)] {
        &self.factors
    }

    pub fn weight(&self) -> usize {
        self.factors.len()
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.factors.last().map(|f| f.0)
    }

    /// Axes on the non-Z factors, e.g. `"XY"` for `X_i Z.. Y_j`.
    pub fn flip_label(&self) -> String {
        self.factors
            .iter()
            .filter(|f| f.1 != PauliAxis::Z)
            .map(|f| match f.1 {
                PauliAxis::X => 'X',
                PauliAxis::Y => 'Y',
                PauliAxis::Z => 'Z',
            })
            .collect()
    }

    /// Action on a computational basis state: `P |x> = phase |y>`.
    /// The coefficient is not included.
    pub fn apply_to_basis(&self, x: u64) -> (Complex64, u64) {
        let mut y = x;
        let mut phase = Complex64::new(1.0, 0.0);
        for &(q, axis) in &self.factors {
            let bit = (x >> q) & 1;
            match axis {
                PauliAxis::X => y ^= 1 << q,
                PauliAxis::Y => {
                    y ^= 1 << q;
                    // Y|0> = i|1>, Y|1> = -i|0>
                    phase *= if bit == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, -1.0)
                    };
                }
                PauliAxis::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        (phase, y)
    }
}

/// How periodic-boundary hops carry their Jordan-Wigner string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryStrings {
    /// Explicit Z factors on every qubit between the two ends. Valid on the
    /// whole register.
    #[default]
    Literal,
    /// String replaced by its eigenvalue in the requested spin sector. Valid
    /// only inside that sector.
    ParityReplaced,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TermOptions {
    pub strings: BoundaryStrings,
    /// Negates every periodic-boundary hop. Only for mutation tests of the
    /// oracle checks.
    pub flip_boundary_sign: bool,
}

/// Pauli terms of `H_0 + lambda * H_1`, with literal boundary strings.
pub fn build_hamiltonian_terms(
    params: &SshhParams,
    lambda: f64,
    filling: SpinFilling,
) -> Result<Vec<PauliTerm>> {
    build_hamiltonian_terms_with(params, lambda, filling, TermOptions::default())
}

pub fn build_hamiltonian_terms_with(
    params: &SshhParams,
    lambda: f64,
    filling: SpinFilling,
    opts: TermOptions,
) -> Result<Vec<PauliTerm>> {
    params.validate()?;
    filling.validate(params.n_cells)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("interpolation fraction {lambda} outside [0, 1]")));
    }
    let n = params.n_cells;
    let mut terms = Vec::new();

    for spin in [Spin::Up, Spin::Down] {
        for bond in hopping_bonds(params, spin) {
            let mut sign = 1.0;
            let mut between = Vec::new();
            if bond.kind == BondKind::Boundary {
                if opts.flip_boundary_sign {
                    sign = -sign;
                }
                match opts.strings {
                    BoundaryStrings::Literal => {
                        let (lo, hi) = (bond.a.min(bond.b), bond.a.max(bond.b));
                        between.extend(lo + 1..hi);
                    }
                    BoundaryStrings::ParityReplaced => {
                        sign *= f64::from(boundary_hop_sign(filling.get(spin)));
                    }
                }
            }
            push_hop(&mut terms, bond.amplitude * sign, bond.a, bond.b, &between)?;
        }
    }

    for j in 0..n {
        let up_a = 2 * j;
        let up_b = 2 * j + 1;
        push_hubbard(&mut terms, lambda * params.u_a, up_a, up_a + 2 * n)?;
        push_hubbard(&mut terms, lambda * params.u_b, up_b, up_b + 2 * n)?;
    }
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondKind {
    Intracell,
    Intercell,
    Boundary,
}

/// One hopping term `t b^dag a + t* a^dag b` between the A-site qubit `a` and
/// the B-site qubit `b`.
#[derive(Debug, Clone, Copy)]
pub struct Bond {
    pub kind: BondKind,
    pub amplitude: Complex64,
    pub a: usize,
    pub b: usize,
}

/// Hopping bonds of one spin block, intracell first, then intercell, then the
/// periodic closure. Intercell hops read `w a^dag b + h.c.`, so their
/// amplitude in the `t b^dag a` form is `conj(w)`.
pub fn hopping_bonds(params: &SshhParams, spin: Spin) -> Vec<Bond> {
    let n = params.n_cells;
    let off = match spin {
        Spin::Up => 0,
        Spin::Down => 2 * n,
    };
    let mut out = Vec::with_capacity(2 * n);
    for j in 0..n {
        out.push(Bond {
            kind: BondKind::Intracell,
            amplitude: params.v,
            a: off + 2 * j,
            b: off + 2 * j + 1,
        });
    }
    for j in 0..n - 1 {
        out.push(Bond {
            kind: BondKind::Intercell,
            amplitude: params.w.conj(),
            a: off + 2 * j + 2,
            b: off + 2 * j + 1,
        });
    }
    if params.boundary == Boundary::Pbc {
        out.push(Bond {
            kind: BondKind::Boundary,
            amplitude: params.w.conj(),
            a: off,
            b: off + 2 * n - 1,
        });
    }
    out
}

// t b^dag a + h.c. = Re(t)/2 (X_a X_b + Y_a Y_b) + Im(t)/2 (X_a Y_b - Y_a X_b),
// each multiplied by Z on every qubit strictly between a and b.
fn push_hop(terms: &mut Vec<PauliTerm>, t: Complex64, a: usize, b: usize, between: &[usize]) -> Result<()> {
    use PauliAxis::{X, Y, Z};
    let with_string = |pa: PauliAxis, pb: PauliAxis| {
        let mut f = vec![(a, pa), (b, pb)];
        f.extend(between.iter().map(|&q| (q, Z)));
        f
    };
    let half_re = Complex64::new(t.re / 2.0, 0.0);
    let half_im = Complex64::new(t.im / 2.0, 0.0);
    if t.re != 0.0 {
        terms.push(PauliTerm::new(half_re, with_string(X, X))?);
        terms.push(PauliTerm::new(half_re, with_string(Y, Y))?);
    }
    if t.im != 0.0 {
        terms.push(PauliTerm::new(half_im, with_string(X, Y))?);
        terms.push(PauliTerm::new(-half_im, with_string(Y, X))?);
    }
    Ok(())
}

// u n_i n_j = u/4 (I - Z_i)(I - Z_j)
fn push_hubbard(terms: &mut Vec<PauliTerm>, u: f64, i: usize, j: usize) -> Result<()> {
    if u == 0.0 {
        return Ok(());
    }
    let q = Complex64::new(u / 4.0, 0.0);
    terms.push(PauliTerm::identity(q));
    terms.push(PauliTerm::new(-q, vec![(i, PauliAxis::Z)])?);
    terms.push(PauliTerm::new(-q, vec![(j, PauliAxis::Z)])?);
    terms.push(PauliTerm::new(q, vec![(i, PauliAxis::Z), (j, PauliAxis::Z)])?);
    Ok(())
}

/// Dense `2^n x 2^n` matrix of a term list, row-major. Only for small `n`.
pub fn terms_to_dense(terms: &[PauliTerm], num_qubits: usize) -> Result<Vec<Complex64>> {
    if num_qubits > 12 {
        return Err(Error::Resource(format!("dense expansion of {num_qubits} qubits")));
    }
    let dim = 1usize << num_qubits;
    let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
    for t in terms {
        if t.max_qubit().is_some_and(|q| q >= num_qubits) {
            return Err(Error::arg("term acts outside the register"));
        }
        for col in 0..dim {
            let (phase, row) = t.apply_to_basis(col as u64);
            m[row as usize * dim + col] += t.coeff * phase;
        }
    }
    Ok(m)
}

/// `H |psi>` for a term list acting on a full amplitude vector.
pub fn apply_terms(terms: &[PauliTerm], amps: &[Complex64]) -> Result<Vec<Complex64>> {
    if !amps.len().is_power_of_two() {
        return Err(Error::arg("amplitude vector length is not a power of two"));
    }
    let n = amps.len().trailing_zeros() as usize;
    if terms.iter().any(|t| t.max_qubit().is_some_and(|q| q >= n)) {
        return Err(Error::arg("term acts outside the register"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for (x, &a) in amps.iter().enumerate() {
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        for t in terms {
            let (phase, y) = t.apply_to_basis(x as u64);
            out[y as usize] += t.coeff * phase * a;
        }
    }
    Ok(out)
}
