//! Covariance-matrix algebra for few-mode Gaussian states.
//!
//! Everything is in shot-noise units (vacuum variance 1) with interleaved
//! quadrature ordering `(q1, p1, ..., qn, pn)`. The symplectic form is the
//! direct sum of `[[0, 1], [-1, 0]]` blocks.

use nalgebra::{Cholesky, DMatrix, Matrix2, SVD};
use serde::Serialize;

use crate::error::{invalid, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
/// Symplectic eigenvalues this far below 1 still count as physical.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Entropy arguments in `[1 - ENTROPY_TOL, 1)` are clamped to 1.
pub const ENTROPY_TOL: f64 = 1e-6;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    modes: usize,
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps a square matrix of even size. The input must be symmetric to
    /// within a relative tolerance of 1e-12; it is then symmetrized exactly.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols || rows == 0 || rows % 2 != 0 {
            return invalid(format!(
                "covariance matrix must be 2n x 2n, got {rows} x {cols}"
            ));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return invalid("covariance matrix has non-finite entries");
        }
        let scale = entries.amax().max(1.0);
        for i in 0..rows {
            for j in (i + 1)..cols {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return invalid(format!("covariance matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(Self {
            modes: rows / 2,
            entries,
        })
    }

    pub fn from_row_slice(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return invalid(format!(
                "expected {} entries, got {}",
                dim * dim,
                values.len()
            ));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn identity(modes: usize) -> Self {
        Self {
            modes,
            entries: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(diag),
        ))
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        2 * self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    /// Block-diagonal combination of two independent states.
    pub fn direct_sum(&self, other: &CovarianceMatrix) -> CovarianceMatrix {
        let n = self.dim();
        let m = other.dim();
        let mut out = DMatrix::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&self.entries);
        out.view_mut((n, n), (m, m)).copy_from(&other.entries);
        CovarianceMatrix {
            modes: self.modes + other.modes,
            entries: out,
        }
    }

    /// Conjugation `S V S^T`, used for symplectic transformations.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<CovarianceMatrix> {
        if s.shape() != (self.dim(), self.dim()) {
            return invalid("transformation has the wrong shape");
        }
        CovarianceMatrix::new(s * &self.entries * s.transpose())
    }

    /// Smallest symplectic eigenvalue is at least `1 - 1e-9`.
    pub fn is_physical(&self) -> bool {
        match symplectic_spectrum(self) {
            Ok(spec) => spec.min() >= 1.0 - PHYSICAL_TOL,
            Err(_) => false,
        }
    }
}

/// Symplectic eigenvalues, sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymplecticSpectrum {
    eigenvalues: Vec<f64>,
}

impl SymplecticSpectrum {
    pub(crate) fn from_sorted(eigenvalues: Vec<f64>) -> Self {
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Symplectic form for `modes` modes.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Two-mode squeezed vacuum with local variance `mu`.
pub fn epr_cm(mu: f64) -> Result<CovarianceMatrix> {
    if !(mu >= 1.0) || !mu.is_finite() {
        return invalid(format!("EPR variance must be >= 1, got {mu}"));
    }
    let c = (mu * mu - 1.0).sqrt();
    CovarianceMatrix::from_row_slice(
        4,
        &[
            mu, 0.0, c, 0.0, //
            0.0, mu, 0.0, -c, //
            c, 0.0, mu, 0.0, //
            0.0, -c, 0.0, mu,
        ],
    )
}

/// Eve's ancilla pair in symmetric normal form: `omega I` on the diagonal,
/// `diag(g, gp)` off the diagonal.
pub fn two_mode_attack_cm(omega: f64, g: f64, gp: f64) -> Result<CovarianceMatrix> {
    if !crate::attack::validate(omega, g, gp)? {
        return invalid(format!("unphysical attack (omega={omega}, g={g}, g'={gp})"));
    }
    CovarianceMatrix::from_row_slice(
        4,
        &[
            omega, 0.0, g, 0.0, //
            0.0, omega, 0.0, gp, //
            g, 0.0, omega, 0.0, //
            0.0, gp, 0.0, omega,
        ],
    )
}

/// Moduli of the eigenvalues of `i Ω V`, each reported once.
///
/// With the Cholesky factor `V = L L^T`, the antisymmetric matrix
/// `L^T Ω L` has eigenvalues `±i ν_k`, so its singular values are the
/// symplectic eigenvalues, each appearing twice.
pub fn symplectic_spectrum(v: &CovarianceMatrix) -> Result<SymplecticSpectrum> {
    let dim = v.dim();
    let chol = Cholesky::new(v.entries.clone()).ok_or_else(|| {
        Error::InvalidParameter("covariance matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let m = l.transpose() * symplectic_form(v.modes) * &l;
    let svd = SVD::try_new(m, false, false, EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::NumericFailure("singular value decomposition did not converge".into())
    })?;
    let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let eigenvalues = (0..dim / 2)
        .map(|k| 0.5 * (values[2 * k] + values[2 * k + 1]))
        .collect();
    Ok(SymplecticSpectrum { eigenvalues })
}

/// Entropy (bits) of a thermal mode with symplectic eigenvalue `x`.
pub fn entropy_h(x: f64) -> Result<f64> {
    if x.is_nan() || x < 1.0 - ENTROPY_TOL {
        return invalid(format!("entropy argument must be >= 1, got {x}"));
    }
    if x <= 1.0 {
        return Ok(0.0);
    }
    let plus = 0.5 * (x + 1.0);
    let minus = 0.5 * (x - 1.0);
    Ok(plus * plus.log2() - minus * minus.log2())
}

pub fn von_neumann_entropy(v: &CovarianceMatrix) -> Result<f64> {
    entropy_of_spectrum(&symplectic_spectrum(v)?)
}

pub fn entropy_of_spectrum(spectrum: &SymplecticSpectrum) -> Result<f64> {
    spectrum.eigenvalues.iter().map(|&nu| entropy_h(nu)).sum()
}

/// State of the remaining modes after heterodyning `measured_mode`:
/// `B - C^T (A + I)^{-1} C`.
pub fn condition_on_heterodyne(
    v: &CovarianceMatrix,
    measured_mode: usize,
) -> Result<CovarianceMatrix> {
    let n = v.modes;
    if n < 2 {
        return invalid("heterodyne conditioning needs at least two modes");
    }
    if measured_mode >= n {
        return invalid(format!("mode {measured_mode} out of range for {n} modes"));
    }
    let rest: Vec<usize> = (0..2 * n).filter(|&i| i / 2 != measured_mode).collect();
    let a0 = 2 * measured_mode;
    let a = Matrix2::new(
        v.entries[(a0, a0)] + 1.0,
        v.entries[(a0, a0 + 1)],
        v.entries[(a0 + 1, a0)],
        v.entries[(a0 + 1, a0 + 1)] + 1.0,
    );
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    if !(det.abs() > f64::MIN_POSITIVE) || !det.is_finite() {
        return Err(Error::NumericFailure("A + I is singular".into()));
    }
    let inv = Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / det;

    let m = rest.len();
    let mut out = DMatrix::zeros(m, m);
    for (r, &i) in rest.iter().enumerate() {
        for (c, &j) in rest.iter().enumerate() {
            let ci = [v.entries[(a0, i)], v.entries[(a0 + 1, i)]];
            let cj = [v.entries[(a0, j)], v.entries[(a0 + 1, j)]];
            let mut corr = 0.0;
            for x in 0..2 {
                for y in 0..2 {
                    corr += ci[x] * inv[(x, y)] * cj[y];
                }
            }
            out[(r, c)] = v.entries[(i, j)] - corr;
        }
    }
    CovarianceMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn epr_vacuum_limit_is_identity() {
        let v = epr_cm(1.0).unwrap();
        assert_eq!(v.matrix(), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn epr_off_diagonal_entries() {
        let v = epr_cm(2.0).unwrap();
        let s3 = 3f64.sqrt();
        assert!(close(v.get(0, 2), s3, 1e-15));
        assert!(close(v.get(1, 3), -s3, 1e-15));
        assert!(close(v.get(2, 0), s3, 1e-15));
        assert!(close(v.get(3, 1), -s3, 1e-15));
    }

    #[test]
    fn epr_rejects_sub_vacuum_variance() {
        assert!(matches!(epr_cm(0.5), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn epr_is_pure() {
        // beyond mu ~ 1e3 rounding of sqrt(mu^2 - 1) alone moves nu by more than 1e-9
        for mu in [1.0, 1.5, 5.0, 10.0, 100.0] {
            let spec = symplectic_spectrum(&epr_cm(mu).unwrap()).unwrap();
            for nu in spec.eigenvalues() {
                assert!(close(*nu, 1.0, 1e-9), "mu={mu} nu={nu}");
            }
        }
    }

    #[test]
    fn attack_cm_examples() {
        let v = two_mode_attack_cm(1.0, 0.0, 0.0).unwrap();
        assert_eq!(v.matrix(), &DMatrix::<f64>::identity(4, 4));

        let s3 = 3f64.sqrt();
        let spec = symplectic_spectrum(&two_mode_attack_cm(2.0, s3, -s3).unwrap()).unwrap();
        assert!(spec.eigenvalues().iter().all(|nu| close(*nu, 1.0, 1e-9)));

        let spec = symplectic_spectrum(&two_mode_attack_cm(2.0, 0.0, 0.0).unwrap()).unwrap();
        assert!(spec.eigenvalues().iter().all(|nu| close(*nu, 2.0, 1e-12)));

        assert!(two_mode_attack_cm(2.0, 1.5, 1.5).is_err());
    }

    #[test]
    fn spectrum_of_simple_states() {
        for n in 1..=3 {
            let spec = symplectic_spectrum(&CovarianceMatrix::identity(n)).unwrap();
            assert_eq!(spec.len(), n);
            assert!(spec.eigenvalues().iter().all(|nu| close(*nu, 1.0, 1e-12)));
        }
        let v = CovarianceMatrix::from_diagonal(&[3.0, 3.0, 2.0, 2.0]).unwrap();
        let spec = symplectic_spectrum(&v).unwrap();
        assert!(close(spec.eigenvalues()[0], 3.0, 1e-12));
        assert!(close(spec.eigenvalues()[1], 2.0, 1e-12));
        // squeezed thermal mode: nu = sqrt(det)
        let v = CovarianceMatrix::from_diagonal(&[8.0, 0.5]).unwrap();
        assert!(close(
            symplectic_spectrum(&v).unwrap().eigenvalues()[0],
            2.0,
            1e-12
        ));
    }

    #[test]
    fn non_symmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(Error::InvalidParameter(_))
        ));
        let m = DMatrix::from_row_slice(3, 3, &[1.0; 9]);
        assert!(CovarianceMatrix::new(m).is_err());
    }

    #[test]
    fn entropy_h_values() {
        assert_eq!(entropy_h(1.0).unwrap(), 0.0);
        assert!(close(entropy_h(3.0).unwrap(), 2.0, 1e-15));
        assert_eq!(entropy_h(1.0 - 5e-7).unwrap(), 0.0);
        assert!(entropy_h(1.0 - 2e-6).is_err());
        assert!(entropy_h(f64::NAN).is_err());
    }

    #[test]
    fn entropy_h_approaches_asymptote() {
        // log2(e x / 2) - h(x) = O(1/x^2); at x = 100 it is ~1.2e-5
        for x in [100.0, 250.0, 1e3, 1e5] {
            let asym = (std::f64::consts::E * x / 2.0).log2();
            assert!(close(entropy_h(x).unwrap(), asym, 1e-3), "x={x}");
        }
    }

    #[test]
    fn entropy_h_increasing_and_concave() {
        let grid: Vec<f64> = (0..2000).map(|k| 1.0 + 0.01 * k as f64).collect();
        for w in grid.windows(3) {
            let (a, b, c) = (
                entropy_h(w[0]).unwrap(),
                entropy_h(w[1]).unwrap(),
                entropy_h(w[2]).unwrap(),
            );
            assert!(b > a && c > b);
            assert!(b >= 0.5 * (a + c));
        }
    }

    #[test]
    fn entropy_of_thermal_and_pure_states() {
        assert!(close(
            von_neumann_entropy(&epr_cm(10.0).unwrap()).unwrap(),
            0.0,
            1e-9
        ));
        let v = CovarianceMatrix::from_diagonal(&[3.0; 4]).unwrap();
        assert!(close(von_neumann_entropy(&v).unwrap(), 4.0, 1e-12));
    }

    #[test]
    fn heterodyne_on_uncorrelated_state_returns_rest() {
        let v = CovarianceMatrix::from_diagonal(&[5.0, 5.0, 2.0, 3.0]).unwrap();
        let cond = condition_on_heterodyne(&v, 0).unwrap();
        assert_eq!(
            cond.matrix(),
            &DMatrix::from_diagonal(&nalgebra::dvector![2.0, 3.0])
        );
    }

    #[test]
    fn heterodyne_on_epr_prepares_coherent_state() {
        for mu in [1.0, 2.0, 50.0, 1e4] {
            let cond = condition_on_heterodyne(&epr_cm(mu).unwrap(), 0).unwrap();
            let id = DMatrix::<f64>::identity(2, 2);
            assert!((cond.matrix() - id).amax() < 1e-9 * mu, "mu={mu}");
            let cond = condition_on_heterodyne(&epr_cm(mu).unwrap(), 1).unwrap();
            assert!((cond.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-9 * mu);
        }
    }

    #[test]
    fn heterodyne_rejects_bad_mode() {
        assert!(condition_on_heterodyne(&epr_cm(2.0).unwrap(), 2).is_err());
        assert!(condition_on_heterodyne(&CovarianceMatrix::identity(1), 0).is_err());
    }
}
