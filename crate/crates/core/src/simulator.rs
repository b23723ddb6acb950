//! Full statevector engine for the R, G, CP, PhaseZ and X gate set.
//!
//! Amplitude index bit `q` is qubit `q`. Two-qubit kernels visit base indices
//! (both target bits clear) in ascending order, so results are reproducible.
//! A state may carry a sector layout: the sorted list of basis indices with
//! fixed per-block Hamming weights. Number-conserving gates then only touch
//! those indices, which is exact because every other amplitude is zero.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::SpinFilling;
use crate::sum::{ComplexKahanSum, KahanSum};

/// Largest register we allocate (2^26 amplitudes = 1 GiB).
pub const MAX_QUBITS: usize = 26;

pub const ZERO_ANGLE: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Basis indices of one `(n_up, n_down)` sector, ascending. The up block is
/// the low half of the register, the down block the high half.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorLayout {
    block_bits: usize,
    filling: SpinFilling,
    indices: Vec<u32>,
}

impl SectorLayout {
    pub fn new(num_qubits: usize, filling: SpinFilling) -> Result<Self> {
        if num_qubits % 2 != 0 || num_qubits > 32 {
            return Err(Error::arg(format!("sector layout needs an even register of at most 32 qubits, got {num_qubits}")));
        }
        let b = num_qubits / 2;
        if filling.n_up > b || filling.n_down > b {
            return Err(Error::arg(format!("filling ({}, {}) exceeds block size {b}", filling.n_up, filling.n_down)));
        }
        let block: Vec<u32> = (0..1u32 << b).collect();
        let ups: Vec<u32> = block.iter().copied().filter(|u| u.count_ones() as usize == filling.n_up).collect();
        let mut indices = Vec::new();
        for d in block.iter().copied().filter(|d| d.count_ones() as usize == filling.n_down) {
            indices.extend(ups.iter().map(|&u| u | (d << b)));
        }
        Ok(SectorLayout { block_bits: b, filling, indices })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn filling(&self) -> SpinFilling {
        self.filling
    }

    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    pub fn contains(&self, index: u64) -> bool {
        let mask = (1u64 << self.block_bits) - 1;
        (index & mask).count_ones() as usize == self.filling.n_up
            && (index >> self.block_bits).count_ones() as usize == self.filling.n_down
    }

    fn preserved_by(&self, gate: &Gate) -> bool {
        match *gate {
            Gate::X(_) => false,
            Gate::PhaseZ(..) | Gate::CP(..) => true,
            Gate::R(i, j, _) | Gate::G(i, j, _) => i / self.block_bits == j / self.block_bits,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
    sector: Option<Arc<SectorLayout>>,
}

impl PartialEq for Statevector {
    fn eq(&self, other: &Self) -> bool {
        self.num_qubits == other.num_qubits && self.amps == other.amps
    }
}

impl Statevector {
    /// `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: u64) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::Resource(format!("{num_qubits} qubits exceed the supported maximum of {MAX_QUBITS}")));
        }
        if index >> num_qubits != 0 {
            return Err(Error::arg(format!("basis index {index} out of range for {num_qubits} qubits")));
        }
        let mut amps = vec![ZERO; 1usize << num_qubits];
        amps[index as usize] = Complex64::new(1.0, 0.0);
        Ok(Statevector { num_qubits, amps, sector: None })
    }

    pub fn from_amplitudes(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::Resource(format!("{num_qubits} qubits exceed the supported maximum of {MAX_QUBITS}")));
        }
        if amps.len() != 1usize << num_qubits {
            return Err(Error::arg(format!("expected {} amplitudes, got {}", 1usize << num_qubits, amps.len())));
        }
        Ok(Statevector { num_qubits, amps, sector: None })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: u64) -> Complex64 {
        self.amps[index as usize]
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn sector(&self) -> Option<&SectorLayout> {
        self.sector.as_deref()
    }

    /// Records that the state lives in one spin sector after checking that
    /// every amplitude outside it is exactly zero.
    pub fn attach_sector(&mut self, filling: SpinFilling) -> Result<()> {
        if let Some(s) = &self.sector {
            if s.filling == filling {
                return Ok(());
            }
        }
        let layout = SectorLayout::new(self.num_qubits, filling)?;
        if let Some(bad) = self.amps.iter().enumerate().position(|(i, a)| *a != ZERO && !layout.contains(i as u64)) {
            return Err(Error::pre(format!(
                "basis state {bad} carries weight outside the ({}, {}) sector",
                filling.n_up, filling.n_down
            )));
        }
        self.sector = Some(Arc::new(layout));
        Ok(())
    }

    pub(crate) fn attach_layout(&mut self, layout: Arc<SectorLayout>) {
        self.sector = Some(layout);
    }

    pub fn detach_sector(&mut self) {
        self.sector = None;
    }

    /// Per-block Hamming weights of every nonzero amplitude, when they agree.
    pub fn support_filling(&self) -> Option<SpinFilling> {
        if let Some(s) = &self.sector {
            return Some(s.filling);
        }
        let b = self.num_qubits / 2;
        let mask = (1u64 << b) - 1;
        let mut found: Option<SpinFilling> = None;
        for (i, a) in self.amps.iter().enumerate() {
            if *a == ZERO {
                continue;
            }
            let i = i as u64;
            let f = SpinFilling::new((i & mask).count_ones() as usize, (i >> b).count_ones() as usize);
            match found {
                None => found = Some(f),
                Some(g) if g != f => return None,
                _ => {}
            }
        }
        found
    }

    /// Indices that may hold weight, ascending.
    pub fn for_each_support(&self, mut f: impl FnMut(u64, Complex64)) {
        match &self.sector {
            Some(s) => s.indices.iter().for_each(|&i| f(i as u64, self.amps[i as usize])),
            None => self.amps.iter().enumerate().for_each(|(i, &a)| f(i as u64, a)),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut acc = KahanSum::new();
        self.for_each_support(|_, a| acc.add(a.norm_sqr()));
        acc.value()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Numeric("cannot normalize a zero or non-finite state".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amps.iter_mut().for_each(|a| *a *= factor);
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Statevector) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::arg(format!("qubit counts differ: {} vs {}", self.num_qubits, other.num_qubits)));
        }
        let mut acc = ComplexKahanSum::new();
        let driver = if self.sector.is_some() || other.sector.is_none() { self } else { other };
        driver.for_each_support(|i, _| acc.add(self.amps[i as usize].conj() * other.amps[i as usize]));
        Ok(acc.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    X(usize),
    /// Multiplies the `|1>` component by `e^{-i phi}`.
    PhaseZ(usize, f64),
    /// `exp(-i theta/2 (X_i X_j + Y_i Y_j))`.
    R(usize, usize, f64),
    /// `exp(-i theta/2 (X_i Y_j - Y_i X_j))`.
    G(usize, usize, f64),
    /// Multiplies `|11>` by `e^{-i theta}`.
    CP(usize, usize, f64),
}

impl Gate {
    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::R(..) | Gate::G(..) | Gate::CP(..))
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::X(_) => None,
            Gate::PhaseZ(_, a) | Gate::R(_, _, a) | Gate::G(_, _, a) | Gate::CP(_, _, a) => Some(a),
        }
    }

    pub fn is_negligible(&self) -> bool {
        self.angle().is_some_and(|a| a.abs() < ZERO_ANGLE)
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::X(q) => Gate::X(q),
            Gate::PhaseZ(q, a) => Gate::PhaseZ(q, -a),
            Gate::R(i, j, a) => Gate::R(i, j, -a),
            Gate::G(i, j, a) => Gate::G(i, j, -a),
            Gate::CP(i, j, a) => Gate::CP(i, j, -a),
        }
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= num_qubits {
                Err(Error::arg(format!("qubit {q} out of range for {num_qubits} qubits")))
            } else {
                Ok(())
            }
        };
        match *self {
            Gate::X(q) => check(q)?,
            Gate::PhaseZ(q, _) => check(q)?,
            Gate::R(i, j, _) | Gate::G(i, j, _) | Gate::CP(i, j, _) => {
                check(i)?;
                check(j)?;
                if i == j {
                    return Err(Error::arg(format!("two-qubit gate on a single qubit {i}")));
                }
            }
        }
        match self.angle() {
            Some(a) if !a.is_finite() => Err(Error::arg("non-finite gate angle")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit { num_qubits, gates: Vec::new() }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::arg("cannot append circuits of different width"));
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    pub fn two_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_two_qubit()).count()
    }

    /// Drops rotations with `|angle| < 1e-14`.
    pub fn pruned(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            gates: self.gates.iter().copied().filter(|g| !g.is_negligible()).collect(),
        }
    }
}

pub fn apply_gate(state: &mut Statevector, gate: &Gate) -> Result<()> {
    gate.validate(state.num_qubits)?;
    let layout = match &state.sector {
        Some(s) if s.preserved_by(gate) => Some(Arc::clone(s)),
        _ => None,
    };
    state.sector = None;
    match &layout {
        Some(s) => apply_in_sector(&mut state.amps, s.indices(), gate),
        None => apply_full(&mut state.amps, state.num_qubits, gate),
    }
    state.sector = layout;
    Ok(())
}

pub fn run_circuit(state: &mut Statevector, circuit: &Circuit) -> Result<()> {
    if state.num_qubits != circuit.num_qubits {
        return Err(Error::arg(format!(
            "circuit acts on {} qubits but the state has {}",
            circuit.num_qubits, state.num_qubits
        )));
    }
    for g in &circuit.gates {
        apply_gate(state, g)?;
    }
    Ok(())
}

#[inline]
fn rotate_r(amps: &mut [Complex64], s: usize, t: usize, c: f64, sn: f64) {
    // s = |b_i b_j> = |10>, t = |01>
    let (a_s, a_t) = (amps[s], amps[t]);
    let mis = Complex64::new(0.0, -sn);
    amps[t] = a_t * c + a_s * mis;
    amps[s] = a_t * mis + a_s * c;
}

#[inline]
fn rotate_g(amps: &mut [Complex64], s: usize, t: usize, c: f64, sn: f64) {
    let (a_s, a_t) = (amps[s], amps[t]);
    amps[t] = a_t * c + a_s * sn;
    amps[s] = a_s * c - a_t * sn;
}

fn apply_in_sector(amps: &mut [Complex64], indices: &[u32], gate: &Gate) {
    match *gate {
        Gate::PhaseZ(q, phi) => {
            let f = Complex64::from_polar(1.0, -phi);
            let m = 1u32 << q;
            for &i in indices.iter().filter(|&&i| i & m != 0) {
                amps[i as usize] *= f;
            }
        }
        Gate::CP(i, j, theta) => {
            let f = Complex64::from_polar(1.0, -theta);
            let m = (1u32 << i) | (1u32 << j);
            for &k in indices.iter().filter(|&&k| k & m == m) {
                amps[k as usize] *= f;
            }
        }
        Gate::R(i, j, theta) | Gate::G(i, j, theta) => {
            let (mi, mj) = (1u32 << i, 1u32 << j);
            let (sn, c) = theta.sin_cos();
            let is_r = matches!(gate, Gate::R(..));
            for &s in indices.iter().filter(|&&s| s & mi != 0 && s & mj == 0) {
                let t = (s ^ mi ^ mj) as usize;
                if is_r {
                    rotate_r(amps, s as usize, t, c, sn);
                } else {
                    rotate_g(amps, s as usize, t, c, sn);
                }
            }
        }
        Gate::X(_) => unreachable!("X never preserves a sector"),
    }
}

fn apply_full(amps: &mut [Complex64], num_qubits: usize, gate: &Gate) {
    match *gate {
        Gate::X(q) => {
            let m = 1usize << q;
            for base in (0..amps.len()).step_by(2 * m) {
                for k in base..base + m {
                    amps.swap(k, k + m);
                }
            }
        }
        Gate::PhaseZ(q, phi) => {
            let f = Complex64::from_polar(1.0, -phi);
            let m = 1usize << q;
            for base in (0..amps.len()).step_by(2 * m) {
                amps[base + m..base + 2 * m].iter_mut().for_each(|a| *a *= f);
            }
        }
        Gate::CP(i, j, theta) => {
            let f = Complex64::from_polar(1.0, -theta);
            let m = (1usize << i) | (1usize << j);
            for_each_pair_base(num_qubits, i, j, |b| amps[b | m] *= f);
        }
        Gate::R(i, j, theta) | Gate::G(i, j, theta) => {
            let (mi, mj) = (1usize << i, 1usize << j);
            let (sn, c) = theta.sin_cos();
            let is_r = matches!(gate, Gate::R(..));
            for_each_pair_base(num_qubits, i, j, |b| {
                if is_r {
                    rotate_r(amps, b | mi, b | mj, c, sn);
                } else {
                    rotate_g(amps, b | mi, b | mj, c, sn);
                }
            });
        }
    }
}

/// Visits every index with bits `i` and `j` clear, ascending.
fn for_each_pair_base(num_qubits: usize, i: usize, j: usize, mut f: impl FnMut(usize)) {
    let (lo, hi) = (i.min(j), i.max(j));
    let insert_zero = |x: usize, pos: usize| ((x >> pos) << (pos + 1)) | (x & ((1usize << pos) - 1));
    for k in 0..1usize << (num_qubits - 2) {
        f(insert_zero(insert_zero(k, lo), hi));
    }
}

/// Measurement record. Keys are basis indices; [`bitstring`] renders them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotBatch {
    pub num_qubits: usize,
    pub shots: u64,
    pub counts: BTreeMap<u64, u64>,
    pub seed: u64,
}

impl ShotBatch {
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&b, &c)| (b, c))
    }
}

/// `b_0 b_1 ... b_{n-1}`, qubit 0 first.
pub fn bitstring(index: u64, num_qubits: usize) -> String {
    (0..num_qubits).map(|q| if index >> q & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(s: &str) -> Result<u64> {
    if s.len() > 64 {
        return Err(Error::arg("bitstring longer than 64 qubits"));
    }
    s.chars().enumerate().try_fold(0u64, |acc, (q, ch)| match ch {
        '0' => Ok(acc),
        '1' => Ok(acc | 1 << q),
        _ => Err(Error::arg(format!("invalid bitstring character {ch:?}"))),
    })
}

/// Draws `shots` outcomes from ChaCha20 seeded with `seed`. Uniform variates
/// are sorted and matched against one ascending cumulative sweep, so the
/// result depends only on the seed and the amplitudes.
pub fn sample(state: &Statevector, shots: u64, seed: u64) -> Result<ShotBatch> {
    if shots == 0 {
        return Err(Error::arg("at least one shot is required"));
    }
    let total = state.norm_sqr();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Numeric("cannot sample from a zero state".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = (0..shots).map(|_| rng.random::<f64>() * total).collect();
    draws.sort_by(f64::total_cmp);

    let mut counts = BTreeMap::new();
    let mut cum = KahanSum::new();
    let mut next = 0usize;
    let mut last_nonzero = None;
    state.for_each_support(|i, a| {
        let p = a.norm_sqr();
        if p == 0.0 || next == draws.len() {
            return;
        }
        last_nonzero = Some(i);
        cum.add(p);
        let edge = cum.value();
        let start = next;
        while next < draws.len() && draws[next] < edge {
            next += 1;
        }
        if next > start {
            *counts.entry(i).or_insert(0) += (next - start) as u64;
        }
    });
    // rounding can leave the largest draws just past the final edge
    if next < draws.len() {
        let i = last_nonzero.expect("nonzero state has support");
        *counts.entry(i).or_insert(0) += (draws.len() - next) as u64;
    }
    Ok(ShotBatch { num_qubits: state.num_qubits, shots, counts, seed })
}

/// `sum_b |amp(b)|^2 weight(b)` with compensated accumulation.
pub fn expectation_diagonal(state: &Statevector, mut weight: impl FnMut(u64) -> Complex64) -> Complex64 {
    let mut acc = ComplexKahanSum::new();
    state.for_each_support(|i, a| {
        let p = a.norm_sqr();
        if p != 0.0 {
            acc.add(weight(i) * p);
        }
    });
    acc.value()
}

pub fn fidelity(a: &Statevector, b: &Statevector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}
