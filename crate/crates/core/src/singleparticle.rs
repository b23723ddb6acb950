//! The single-particle SSH hopping matrix, its spectrum, and the gap-based
//! bounds used to pick adiabatic parameters.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, Eigen};
use crate::model::{Boundary, SshhParams};

/// `2N x 2N` hopping matrix in the site order `A1, B1, A2, B2, ...`.
/// Shared by both spin blocks.
#[derive(Debug, Clone)]
pub struct HoppingMatrix {
    pub matrix: CMatrix,
}

impl HoppingMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

pub type Spectrum = Eigen;

/// Entry `(B_j, A_j) = v`, `(A_{j+1}, B_j) = w`, and under PBC
/// `(A_1, B_N) = w`, with Hermitian partners.
pub fn build_hopping_matrix(params: &SshhParams) -> HoppingMatrix {
    let n = params.n_cells;
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    let mut set = |row: usize, col: usize, t: Complex64| {
        m[(row, col)] += t;
        m[(col, row)] += t.conj();
    };
    for j in 0..n {
        set(2 * j + 1, 2 * j, params.v);
    }
    for j in 0..n - 1 {
        set(2 * j + 2, 2 * j + 1, params.w);
    }
    if params.boundary == Boundary::Pbc {
        set(0, 2 * n - 1, params.w);
    }
    HoppingMatrix { matrix: m }
}

pub fn eigensolve(h: &HoppingMatrix) -> Result<Spectrum> {
    hermitian_eigen(&h.matrix)
}

/// `2 min(|v + w|, |v - w|)`.
pub fn band_gap(params: &SshhParams) -> f64 {
    2.0 * (params.v + params.w).norm().min((params.v - params.w).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindingClass {
    Trivial,
    Topological,
    Critical,
}

pub const CRITICAL_TOL: f64 = 1e-12;

pub fn winding_class(params: &SshhParams) -> WindingClass {
    let v = params.v.norm();
    let w = params.w.norm();
    if (v - w).abs() <= CRITICAL_TOL {
        WindingClass::Critical
    } else if v > w {
        WindingClass::Trivial
    } else {
        WindingClass::Topological
    }
}

/// Spin flips stay energetically forbidden when
/// `max(U_A, U_B, |dU|) < min(|v + w|, |v - w|)`.
pub fn check_weak_interaction(params: &SshhParams) -> bool {
    let scale = params.u_a.max(params.u_b).max(params.delta_u().abs());
    scale < 0.5 * band_gap(params)
}

/// Advisory time scale `|H_1| / gap^2` with `|H_1| ~ N max(U_A, U_B)` and
/// `hbar = 1`. A rough indicator for choosing `T`, not a guarantee.
pub fn suggest_min_t(params: &SshhParams) -> Result<f64> {
    let gap = band_gap(params);
    if gap <= CRITICAL_TOL {
        return Err(Error::Domain("gap closes; adiabatic bound singular".into()));
    }
    let h1 = params.n_cells as f64 * params.u_a.max(params.u_b);
    Ok(h1 / (gap * gap))
}

/// Warning raised when the highest occupied and lowest empty levels are
/// degenerate, which makes the filled Slater determinant ambiguous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermiDegeneracy {
    pub n_occupied: usize,
    pub homo: f64,
    pub lumo: f64,
}

pub const FERMI_DEGENERACY_TOL: f64 = 1e-9;

pub fn fermi_level_check(spectrum: &Spectrum, n_occupied: usize) -> Option<FermiDegeneracy> {
    if n_occupied == 0 || n_occupied >= spectrum.values.len() {
        return None;
    }
    let homo = spectrum.values[n_occupied - 1];
    let lumo = spectrum.values[n_occupied];
    (lumo - homo < FERMI_DEGENERACY_TOL).then_some(FermiDegeneracy {
        n_occupied,
        homo,
        lumo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigen_residual, orthonormality_defect};
    use std::f64::consts::PI;

    fn params(n: usize, v: f64, w: f64, b: Boundary) -> SshhParams {
        SshhParams::real(n, v, w, 0.0, 0.0, b).unwrap()
    }

    #[test]
    fn decoupled_dimers() {
        let h = build_hopping_matrix(&params(2, 1.0, 0.0, Boundary::Obc));
        let s = eigensolve(&h).unwrap();
        for (got, want) in s.values.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        // bonding orbitals live on a single dimer with equal weights
        for k in 0..2 {
            let col = s.vectors.column(k);
            let (a, b) = if col[0].norm() > 0.5 { (col[0], col[1]) } else { (col[2], col[3]) };
            assert!((a + b).norm() < 1e-14);
            assert!((a.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_hopping() {
        let s = eigensolve(&build_hopping_matrix(&params(3, 0.0, 0.0, Boundary::Pbc))).unwrap();
        assert!(s.values.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn layout_of_entries() {
        let p = SshhParams::new(3, Complex64::new(0.3, 0.1), Complex64::new(0.9, -0.2), 0.0, 0.0, Boundary::Pbc).unwrap();
        let m = build_hopping_matrix(&p).matrix;
        assert_eq!(m[(1, 0)], p.v);
        assert_eq!(m[(0, 1)], p.v.conj());
        assert_eq!(m[(2, 1)], p.w);
        assert_eq!(m[(0, 5)], p.w);
        assert_eq!(m[(5, 0)], p.w.conj());
        assert_eq!(m[(0, 2)], Complex64::new(0.0, 0.0));
        assert_eq!(m.hermitian_defect(), 0.0);
    }

    #[test]
    fn periodic_gap_at_zone_boundary() {
        let s = eigensolve(&build_hopping_matrix(&params(6, 0.5, 1.5, Boundary::Pbc))).unwrap();
        let min_pos = s.values.iter().copied().filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
        assert!((min_pos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_spectrum_matches_dispersion() {
        for (n, v, w) in [(6, 0.5, 1.5), (5, 1.0, 0.3), (4, 0.8, 0.8)] {
            let p = SshhParams::new(n, Complex64::new(v, 0.2), Complex64::new(w, -0.1), 0.0, 0.0, Boundary::Pbc).unwrap();
            let s = eigensolve(&build_hopping_matrix(&p)).unwrap();
            let mut analytic: Vec<f64> = (0..n)
                .flat_map(|m| {
                    let k = 2.0 * PI * m as f64 / n as f64;
                    let e = (p.v + Complex64::from_polar(1.0, -k) * p.w.conj()).norm();
                    [-e, e]
                })
                .collect();
            analytic.sort_by(f64::total_cmp);
            for (a, b) in s.values.iter().zip(&analytic) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn open_chain_is_chiral_symmetric() {
        let s = eigensolve(&build_hopping_matrix(&params(5, 0.3, 1.1, Boundary::Obc))).unwrap();
        let n = s.values.len();
        for k in 0..n {
            assert!((s.values[k] + s.values[n - 1 - k]).abs() < 1e-9);
        }
        let h = build_hopping_matrix(&params(5, 0.3, 1.1, Boundary::Obc));
        assert!(eigen_residual(&h.matrix, &s) < 1e-10);
        assert!(orthonormality_defect(&s.vectors) < 1e-10);
    }

    #[test]
    fn gap_values() {
        assert_eq!(band_gap(&params(2, 1.0, 1.0, Boundary::Pbc)), 0.0);
        assert_eq!(band_gap(&params(2, 0.5, 1.5, Boundary::Pbc)), 2.0);
        assert_eq!(band_gap(&params(2, 1.0, 0.0, Boundary::Pbc)), 2.0);
    }

    #[test]
    fn classification() {
        assert_eq!(winding_class(&params(2, 1.0, 0.5, Boundary::Pbc)), WindingClass::Trivial);
        assert_eq!(winding_class(&params(2, 0.5, 1.5, Boundary::Pbc)), WindingClass::Topological);
        assert_eq!(winding_class(&params(2, 1.0, 1.0, Boundary::Pbc)), WindingClass::Critical);
    }

    #[test]
    fn classification_ignores_common_phase() {
        for phi in [0.3, 1.7, -2.2] {
            let ph = Complex64::from_polar(1.0, phi);
            for (v, w) in [(1.0, 0.5), (0.5, 1.5)] {
                let base = params(3, v, w, Boundary::Pbc);
                let rotated = SshhParams::new(3, ph * v, ph * w, 0.0, 0.0, Boundary::Pbc).unwrap();
                assert_eq!(winding_class(&base), winding_class(&rotated));
            }
        }
    }

    #[test]
    fn weak_interaction_condition() {
        let p = SshhParams::real(6, 0.5, 1.5, 0.5, 0.5, Boundary::Pbc).unwrap();
        assert!(check_weak_interaction(&p));
        let p = SshhParams::real(6, 0.5, 1.5, 0.0, 1.2, Boundary::Pbc).unwrap();
        assert!(!check_weak_interaction(&p));
        assert!(check_weak_interaction(&params(6, 0.2, 1.7, Boundary::Obc)));
    }

    #[test]
    fn advisory_time_scale() {
        assert_eq!(suggest_min_t(&params(6, 0.5, 1.5, Boundary::Pbc)).unwrap(), 0.0);
        let p = SshhParams::real(6, 0.5, 1.5, 0.01, 0.01, Boundary::Pbc).unwrap();
        assert!((suggest_min_t(&p).unwrap() - 0.015).abs() < 1e-15);
        assert!(matches!(suggest_min_t(&params(6, 1.0, 1.0, Boundary::Pbc)), Err(Error::Domain(_))));
    }

    #[test]
    fn fermi_degeneracy_flags_half_filled_critical_ring() {
        // v = w on a ring: k = pi closes the gap for even N
        let s = eigensolve(&build_hopping_matrix(&params(4, 1.0, 1.0, Boundary::Pbc))).unwrap();
        assert!(fermi_level_check(&s, 4).is_some());
        let s = eigensolve(&build_hopping_matrix(&params(4, 0.5, 1.5, Boundary::Pbc))).unwrap();
        assert!(fermi_level_check(&s, 4).is_none());
    }
}
