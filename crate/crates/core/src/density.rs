use crate::linalg::{self, LinalgError, C64};
use ndarray::Array2;

/// Hermitian, unit-trace density operator in the computational basis
/// (site 0 is the most significant bit).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Array2<C64>);

impl DensityMatrix {
    /// Wraps a matrix without checking the density-operator properties.
    pub fn from_matrix(m: Array2<C64>) -> Self {
        Self(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Array2::from_diag_elem(dim, C64::new(1.0 / dim as f64, 0.0)))
    }

    /// `|k><k|` for a computational basis index.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[k, k]] = C64::new(1.0, 0.0);
        Self(m)
    }

    pub fn from_pure(psi: &[C64]) -> Self {
        let d = psi.len();
        Self(Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj()))
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr rho^2 = sum |rho_ij|^2 for Hermitian rho.
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs(&(&self.0 - &linalg::dagger(&self.0)))
    }

    /// Diagonal of `rho`, the computational-basis measurement distribution.
    pub fn populations(&self) -> Vec<f64> {
        self.0.diag().iter().map(|z| z.re).collect()
    }

    pub fn expectation_diag(&self, diag: &[f64]) -> f64 {
        self.0.diag().iter().zip(diag).map(|(z, d)| z.re * d).sum()
    }

    pub fn expectation(&self, op: &Array2<C64>) -> C64 {
        // Tr(rho O) = sum_ij rho_ij O_ji
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.0[[i, j]] * op[[j, i]];
            }
        }
        acc
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, LinalgError> {
        linalg::eigvalsh_complex(&self.hermitian_part())
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    fn hermitian_part(&self) -> Array2<C64> {
        (&self.0 + &linalg::dagger(&self.0)).mapv(|z| z * 0.5)
    }

    /// Trace distance `||rho - sigma||_1 / 2`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64, LinalgError> {
        let diff = DensityMatrix(&self.0 - &other.0);
        Ok(0.5 * diff.eigenvalues()?.iter().map(|x| x.abs()).sum::<f64>())
    }
}
