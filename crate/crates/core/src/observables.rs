//! Diagonal observables: the twisted position phase `z`, its Berry phase and
//! charge center, the sublattice polarization profile and the edge
//! occupation. Each is available exactly or as a shot estimator.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::simulator::{ShotBatch, Statevector};
use crate::sum::{ComplexKahanSum, KahanSum};

/// Below this `|z|` the phase is rejected.
pub const PHASE_FLOOR: f64 = 1e-6;
/// Below this `|z|` the phase is reported with a warning flag.
pub const PHASE_WARN: f64 = 1e-3;

/// Filling ratio `n / N` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedFilling {
    pub n_tilde: usize,
    pub big_n_tilde: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn reduced_filling(n: usize, n_cells: usize) -> Result<ReducedFilling> {
    if n_cells == 0 {
        return Err(Error::arg("need at least one unit cell"));
    }
    if n > 4 * n_cells {
        return Err(Error::arg(format!("{n} electrons exceed {} modes", 4 * n_cells)));
    }
    if n == 0 {
        return Err(Error::Domain("phase undefined for an empty system".into()));
    }
    let g = gcd(n, n_cells);
    Ok(ReducedFilling { n_tilde: n / g, big_n_tilde: n_cells / g })
}

/// `sum_j (j+1) (b_{2j} + b_{2j+1} + b_{2N+2j} + b_{2N+2j+1})`.
pub fn position_weight(b: u64, n_cells: usize) -> Result<u64> {
    if 4 * n_cells < 64 && b >> (4 * n_cells) != 0 {
        return Err(Error::arg(format!("bitstring wider than {} qubits", 4 * n_cells)));
    }
    Ok(weight_unchecked(b, n_cells))
}

fn weight_unchecked(b: u64, n_cells: usize) -> u64 {
    let mut w = 0;
    for j in 0..n_cells {
        let cell = (b >> (2 * j) & 3).count_ones() + (b >> (2 * n_cells + 2 * j) & 3).count_ones();
        w += (j as u64 + 1) * cell as u64;
    }
    w
}

/// `exp(i 2 pi Ntilde k / N)` for every reachable position weight `k`.
fn phase_table(rf: ReducedFilling, n_cells: usize) -> Vec<Complex64> {
    let max = 2 * n_cells * (n_cells + 1);
    (0..=max)
        .map(|k| {
            // reduce the integer numerator first so large k loses no precision
            let num = (rf.big_n_tilde * k) % n_cells;
            Complex64::from_polar(1.0, 2.0 * PI * num as f64 / n_cells as f64)
        })
        .collect()
}

pub fn z_exact(state: &Statevector, rf: ReducedFilling, n_cells: usize) -> Result<Complex64> {
    check_width(state.num_qubits(), n_cells)?;
    let table = phase_table(rf, n_cells);
    Ok(crate::simulator::expectation_diagonal(state, |b| table[weight_unchecked(b, n_cells) as usize]))
}

fn check_width(num_qubits: usize, n_cells: usize) -> Result<()> {
    if num_qubits != 4 * n_cells {
        return Err(Error::arg(format!("register of {num_qubits} qubits does not match {n_cells} cells")));
    }
    Ok(())
}

/// Mean and standard error of a per-shot statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    mean: f64,
    se: Option<f64>,
}

fn moments(values: impl Iterator<Item = (f64, u64)>, shots: u64) -> Moments {
    let pairs: Vec<(f64, u64)> = values.collect();
    let mut s = KahanSum::new();
    pairs.iter().for_each(|&(x, c)| s.add(x * c as f64));
    let mean = s.value() / shots as f64;
    let se = (shots > 1).then(|| {
        let mut v = KahanSum::new();
        pairs.iter().for_each(|&(x, c)| v.add((x - mean) * (x - mean) * c as f64));
        (v.value() / (shots - 1) as f64 / shots as f64).sqrt()
    });
    Moments { mean, se }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledZ {
    pub z_bar: Complex64,
    pub se_re: Option<f64>,
    pub se_im: Option<f64>,
    /// Delta-method error of `arg z_bar`; absent below the phase floor.
    pub se_gamma: Option<f64>,
}

pub fn z_sampled(batch: &ShotBatch, rf: ReducedFilling, n_cells: usize) -> Result<SampledZ> {
    check_width(batch.num_qubits, n_cells)?;
    if batch.shots == 0 {
        return Err(Error::arg("empty shot batch"));
    }
    let table = phase_table(rf, n_cells);
    let per_shot: Vec<(Complex64, u64)> = batch.iter().map(|(b, c)| (table[weight_unchecked(b, n_cells) as usize], c)).collect();
    let re = moments(per_shot.iter().map(|&(z, c)| (z.re, c)), batch.shots);
    let im = moments(per_shot.iter().map(|&(z, c)| (z.im, c)), batch.shots);
    let z_bar = Complex64::new(re.mean, im.mean);
    let r2 = z_bar.norm_sqr();
    let se_gamma = if z_bar.norm() >= PHASE_FLOOR && batch.shots > 1 {
        moments(per_shot.iter().map(|&(z, c)| ((z_bar.re * z.im - z_bar.im * z.re) / r2, c)), batch.shots).se
    } else {
        None
    };
    Ok(SampledZ { z_bar, se_re: re.se, se_im: im.se, se_gamma })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerryPhase {
    /// `Im ln z` in `(-pi, pi]`.
    pub gamma: f64,
    /// `|z|` below [`PHASE_WARN`].
    pub low_magnitude: bool,
}

pub fn berry_phase(z: Complex64) -> Result<BerryPhase> {
    let r = z.norm();
    if !(r >= PHASE_FLOOR) {
        return Err(Error::Domain(format!("phase ill-defined near transition (|z| = {r:.3e})")));
    }
    let mut gamma = z.im.atan2(z.re);
    if gamma <= -PI {
        gamma = PI;
    }
    Ok(BerryPhase { gamma, low_magnitude: r < PHASE_WARN })
}

/// `N / (2 pi Ntilde) * Im ln z`, in unit cells.
pub fn charge_center(z: Complex64, n_cells: usize, rf: ReducedFilling) -> Result<f64> {
    let g = berry_phase(z)?.gamma;
    Ok(n_cells as f64 / (2.0 * PI * rf.big_n_tilde as f64) * g)
}

/// Spin-summed `n_A - n_B` of cell `j` in basis state `b`.
fn cell_imbalance(b: u64, j: usize, n_cells: usize) -> f64 {
    let bit = |q: usize| (b >> q & 1) as i32;
    let d = 2 * n_cells;
    f64::from(bit(2 * j) + bit(d + 2 * j) - bit(2 * j + 1) - bit(d + 2 * j + 1))
}

fn edge_count(b: u64, n_cells: usize) -> f64 {
    let d = 2 * n_cells;
    let mask = 0b11u64 | 0b11 << (d - 2);
    f64::from((b & mask).count_ones() + ((b >> d) & mask).count_ones())
}

pub fn polarization_profile(state: &Statevector, n_cells: usize) -> Result<Vec<f64>> {
    check_width(state.num_qubits(), n_cells)?;
    Ok((0..n_cells)
        .map(|j| crate::simulator::expectation_diagonal(state, |b| Complex64::new(cell_imbalance(b, j, n_cells), 0.0)).re)
        .collect())
}

/// Profile means and standard errors from shots.
pub fn polarization_profile_sampled(batch: &ShotBatch, n_cells: usize) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    check_width(batch.num_qubits, n_cells)?;
    if batch.shots == 0 {
        return Err(Error::arg("empty shot batch"));
    }
    let m: Vec<Moments> = (0..n_cells).map(|j| moments(batch.iter().map(|(b, c)| (cell_imbalance(b, j, n_cells), c)), batch.shots)).collect();
    Ok((m.iter().map(|x| x.mean).collect(), m.iter().map(|x| x.se).collect()))
}

pub fn edge_occupation(state: &Statevector, n_cells: usize) -> Result<f64> {
    check_width(state.num_qubits(), n_cells)?;
    Ok(crate::simulator::expectation_diagonal(state, |b| Complex64::new(edge_count(b, n_cells), 0.0)).re)
}

pub fn edge_occupation_sampled(batch: &ShotBatch, n_cells: usize) -> Result<(f64, Option<f64>)> {
    check_width(batch.num_qubits, n_cells)?;
    if batch.shots == 0 {
        return Err(Error::arg("empty shot batch"));
    }
    let m = moments(batch.iter().map(|(b, c)| (edge_count(b, n_cells), c)), batch.shots);
    Ok((m.mean, m.se))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StdErrors {
    pub z_re: Option<f64>,
    pub z_im: Option<f64>,
    pub gamma: Option<f64>,
    pub polarization: Vec<Option<f64>>,
    pub edge_occupation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub z_bar: Complex64,
    pub z_magnitude: f64,
    /// Absent when `|z|` is below the phase floor.
    pub gamma: Option<f64>,
    pub low_magnitude: bool,
    pub charge_center: Option<f64>,
    pub polarization: Vec<f64>,
    pub edge_occupation: f64,
    /// Zero for exact evaluation.
    pub shots: u64,
    pub std_errors: StdErrors,
}

impl EstimateReport {
    pub fn gamma_over_pi(&self) -> Option<f64> {
        self.gamma.map(|g| g / PI)
    }
}

fn phase_fields(z: Complex64, n_cells: usize, rf: ReducedFilling) -> (Option<f64>, bool, Option<f64>) {
    match berry_phase(z) {
        Ok(b) => (Some(b.gamma), b.low_magnitude, charge_center(z, n_cells, rf).ok()),
        Err(_) => (None, true, None),
    }
}

/// All observables from one pass over the amplitudes.
pub fn exact_report(state: &Statevector, n_cells: usize, n_electrons: usize) -> Result<EstimateReport> {
    check_width(state.num_qubits(), n_cells)?;
    let rf = reduced_filling(n_electrons, n_cells)?;
    let table = phase_table(rf, n_cells);
    let mut z = ComplexKahanSum::new();
    let mut pol = vec![KahanSum::new(); n_cells];
    let mut edge = KahanSum::new();
    state.for_each_support(|b, a| {
        let p = a.norm_sqr();
        if p == 0.0 {
            return;
        }
        z.add(table[weight_unchecked(b, n_cells) as usize] * p);
        for (j, acc) in pol.iter_mut().enumerate() {
            acc.add(cell_imbalance(b, j, n_cells) * p);
        }
        edge.add(edge_count(b, n_cells) * p);
    });
    let z = z.value();
    let (gamma, low, cc) = phase_fields(z, n_cells, rf);
    Ok(EstimateReport {
        z_bar: z,
        z_magnitude: z.norm(),
        gamma,
        low_magnitude: low,
        charge_center: cc,
        polarization: pol.iter().map(KahanSum::value).collect(),
        edge_occupation: edge.value(),
        shots: 0,
        std_errors: StdErrors { polarization: vec![None; n_cells], ..StdErrors::default() },
    })
}

pub fn sampled_report(batch: &ShotBatch, n_cells: usize, n_electrons: usize) -> Result<EstimateReport> {
    let rf = reduced_filling(n_electrons, n_cells)?;
    let zs = z_sampled(batch, rf, n_cells)?;
    let (pol, pol_se) = polarization_profile_sampled(batch, n_cells)?;
    let (edge, edge_se) = edge_occupation_sampled(batch, n_cells)?;
    let (gamma, low, cc) = phase_fields(zs.z_bar, n_cells, rf);
    Ok(EstimateReport {
        z_bar: zs.z_bar,
        z_magnitude: zs.z_bar.norm(),
        gamma,
        low_magnitude: low,
        charge_center: cc,
        polarization: pol,
        edge_occupation: edge,
        shots: batch.shots,
        std_errors: StdErrors {
            z_re: zs.se_re,
            z_im: zs.se_im,
            gamma: zs.se_gamma,
            polarization: pol_se,
            edge_occupation: edge_se,
        },
    })
}
