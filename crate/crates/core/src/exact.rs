//! Thermal expectation values by exact diagonalization and, for the uniform
//! ferromagnet, by the Jordan-Wigner free-fermion solution.

use crate::density::DensityMatrix;
use crate::linalg::{self, LinalgError, C64};
use crate::model::{bond_energy, ChainSpec, SpinConfig};
use ndarray::Array2;
use thiserror::Error;

/// Boltzmann constant over Planck constant, GHz per mK.
pub const KB_OVER_H_GHZ_PER_MK: f64 = 0.0208366;

/// Largest chain handled by dense diagonalization unless a cap is given.
pub const ED_MAX_SITES: usize = 14;

/// Largest chain for which a dense density matrix is formed.
pub const STATE_MAX_SITES: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("n = {n} exceeds the dense limit of {cap} sites")]
    SizeCap { n: usize, cap: usize },
    #[error("temperature must be positive and finite, got {0} mK")]
    BadTemperature(f64),
    #[error("inverse temperature must be finite and non-negative, got {0}")]
    NonFiniteBeta(f64),
    #[error("A and B must be finite and non-negative")]
    BadEnergies,
    #[error("unsupported model: {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalPoint {
    pub a: f64,
    pub b: f64,
    /// Millikelvin; infinite when built from `beta_h = 0`.
    pub temperature: f64,
    /// `h / (k_B T)` in 1/GHz.
    pub beta_h: f64,
}

impl ThermalPoint {
    pub fn new(a: f64, b: f64, temperature_mk: f64) -> Result<Self, ExactError> {
        if !(temperature_mk > 0.0 && temperature_mk.is_finite()) {
            return Err(ExactError::BadTemperature(temperature_mk));
        }
        check_energies(a, b)?;
        Ok(Self { a, b, temperature: temperature_mk, beta_h: beta_from_mk(temperature_mk) })
    }

    /// Builds a point from `beta_h` directly; `beta_h = 0` is the infinite
    /// temperature limit.
    pub fn from_beta(a: f64, b: f64, beta_h: f64) -> Result<Self, ExactError> {
        if !(beta_h >= 0.0 && beta_h.is_finite()) {
            return Err(ExactError::NonFiniteBeta(beta_h));
        }
        check_energies(a, b)?;
        let temperature = if beta_h == 0.0 { f64::INFINITY } else { 1.0 / (KB_OVER_H_GHZ_PER_MK * beta_h) };
        Ok(Self { a, b, temperature, beta_h })
    }
}

fn check_energies(a: f64, b: f64) -> Result<(), ExactError> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(ExactError::BadEnergies);
    }
    Ok(())
}

pub fn beta_from_mk(temperature_mk: f64) -> f64 {
    1.0 / (KB_OVER_H_GHZ_PER_MK * temperature_mk)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsResult {
    pub e_ising: f64,
    pub m2: f64,
    /// GHz; `-inf` at infinite temperature.
    pub free_energy: f64,
    /// `E_1 - E_0` in GHz.
    pub gap: f64,
}

fn check_size(n: usize, cap: usize) -> Result<(), ExactError> {
    if n > cap {
        return Err(ExactError::SizeCap { n, cap });
    }
    Ok(())
}

/// `H_IM` on every computational basis state.
pub fn ising_diagonal(spec: &ChainSpec) -> Vec<f64> {
    let n = spec.n();
    let mut spins = vec![0i8; n];
    (0..1usize << n)
        .map(|x| {
            for (i, s) in spins.iter_mut().enumerate() {
                *s = if (x >> (n - 1 - i)) & 1 == 0 { 1 } else { -1 };
            }
            let mut e = bond_energy(spec, &spins) as f64;
            if spec.has_fields() {
                e += spec.fields().iter().zip(&spins).map(|(h, &s)| h * s as f64).sum::<f64>();
            }
            e
        })
        .collect()
}

/// `M_z^2 = (sum_i Z_i / n)^2` on every computational basis state.
pub fn m2_diagonal(n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|x| {
            let down = x.count_ones() as f64;
            let m = (n as f64 - 2.0 * down) / n as f64;
            m * m
        })
        .collect()
}

pub fn build_hamiltonian(spec: &ChainSpec, a: f64, b: f64) -> Result<Array2<f64>, ExactError> {
    build_hamiltonian_capped(spec, a, b, ED_MAX_SITES)
}

/// Real symmetric `H` in the computational basis, site 0 most significant.
pub fn build_hamiltonian_capped(spec: &ChainSpec, a: f64, b: f64, cap: usize) -> Result<Array2<f64>, ExactError> {
    let n = spec.n();
    check_size(n, cap)?;
    let dim = 1usize << n;
    let diag = ising_diagonal(spec);
    let mut h = Array2::<f64>::zeros((dim, dim));
    for x in 0..dim {
        h[[x, x]] = b * diag[x];
        for i in 0..n {
            h[[x ^ (1 << i), x]] -= a;
        }
    }
    Ok(h)
}

/// Eigenvalues together with the diagonal observables `<k|H_IM|k>` and
/// `<k|M_z^2|k>` of every eigenstate, enough to evaluate any temperature.
#[derive(Debug, Clone)]
pub struct ThermalSpectrum {
    pub n: usize,
    /// Ascending.
    pub energies: Vec<f64>,
    pub e_ising: Vec<f64>,
    pub m2: Vec<f64>,
}

impl ThermalSpectrum {
    pub fn compute(spec: &ChainSpec, a: f64, b: f64) -> Result<Self, ExactError> {
        Self::compute_capped(spec, a, b, ED_MAX_SITES)
    }

    /// Uses the `prod_i X_i` parity blocks when there are no longitudinal
    /// fields, halving the dimension of each dense problem.
    pub fn compute_capped(spec: &ChainSpec, a: f64, b: f64, cap: usize) -> Result<Self, ExactError> {
        check_energies(a, b)?;
        let n = spec.n();
        check_size(n, cap)?;
        let diag = ising_diagonal(spec);
        let m2d = m2_diagonal(n);
        let mut levels: Vec<(f64, f64, f64)> = Vec::with_capacity(1 << n);
        let mut push_block = |h: &Array2<f64>, basis_diag: &dyn Fn(usize) -> (f64, f64)| -> Result<(), ExactError> {
            let (w, v) = linalg::eigh_real(h)?;
            for (k, &e) in w.iter().enumerate() {
                let mut ei = 0.0;
                let mut mm = 0.0;
                for (x, c) in v.column(k).iter().enumerate() {
                    let p = c * c;
                    let (dx, mx) = basis_diag(x);
                    ei += p * dx;
                    mm += p * mx;
                }
                levels.push((e, ei, mm));
            }
            Ok(())
        };
        if spec.has_fields() {
            let h = build_hamiltonian_capped(spec, a, b, cap)?;
            push_block(&h, &|x| (diag[x], m2d[x]))?;
        } else {
            let half = 1usize << (n - 1);
            let mask = (1usize << n) - 1;
            for parity in [1.0, -1.0] {
                let mut h = Array2::<f64>::zeros((half, half));
                for x in 0..half {
                    h[[x, x]] = b * diag[x];
                    for i in 0..n {
                        let y = x ^ (1 << i);
                        if y < half {
                            h[[y, x]] -= a;
                        } else {
                            h[[y ^ mask, x]] -= a * parity;
                        }
                    }
                }
                push_block(&h, &|x| (diag[x], m2d[x]))?;
            }
        }
        levels.sort_by(|p, q| p.0.total_cmp(&q.0));
        Ok(Self {
            n,
            energies: levels.iter().map(|l| l.0).collect(),
            e_ising: levels.iter().map(|l| l.1).collect(),
            m2: levels.iter().map(|l| l.2).collect(),
        })
    }

    pub fn thermal(&self, beta_h: f64) -> Result<GibbsResult, ExactError> {
        if !(beta_h >= 0.0 && beta_h.is_finite()) {
            return Err(ExactError::NonFiniteBeta(beta_h));
        }
        let e0 = self.energies[0];
        let mut z = 0.0;
        let mut ei = 0.0;
        let mut mm = 0.0;
        for k in 0..self.energies.len() {
            let w = (-beta_h * (self.energies[k] - e0)).exp();
            z += w;
            ei += w * self.e_ising[k];
            mm += w * self.m2[k];
        }
        let free_energy = if beta_h == 0.0 { f64::NEG_INFINITY } else { e0 - z.ln() / beta_h };
        let gap = self.energies.get(1).map_or(0.0, |e1| e1 - e0);
        Ok(GibbsResult { e_ising: ei / z, m2: mm / z, free_energy, gap })
    }
}

pub fn gibbs_expectations(spec: &ChainSpec, pt: &ThermalPoint) -> Result<GibbsResult, ExactError> {
    if !(pt.beta_h >= 0.0 && pt.beta_h.is_finite()) {
        return Err(ExactError::NonFiniteBeta(pt.beta_h));
    }
    ThermalSpectrum::compute(spec, pt.a, pt.b)?.thermal(pt.beta_h)
}

/// `exp(-beta H) / Z` as a dense matrix, for `n <= 7`.
pub fn gibbs_state(spec: &ChainSpec, pt: &ThermalPoint) -> Result<DensityMatrix, ExactError> {
    if !(pt.beta_h >= 0.0 && pt.beta_h.is_finite()) {
        return Err(ExactError::NonFiniteBeta(pt.beta_h));
    }
    let h = build_hamiltonian_capped(spec, pt.a, pt.b, STATE_MAX_SITES)?;
    let (w, v) = linalg::eigh_real(&h)?;
    Ok(gibbs_from_eigen(&w, &v, pt.beta_h))
}

pub(crate) fn gibbs_from_eigen(w: &[f64], v: &Array2<f64>, beta_h: f64) -> DensityMatrix {
    let e0 = w[0];
    let p: Vec<f64> = w.iter().map(|e| (-beta_h * (e - e0)).exp()).collect();
    let z: f64 = p.iter().sum();
    let d = w.len();
    let mut rho = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in 0..d {
                acc += v[[i, k]] * p[k] * v[[j, k]];
            }
            rho[[i, j]] = C64::new(acc / z, 0.0);
            rho[[j, i]] = C64::new(acc / z, 0.0);
        }
    }
    DensityMatrix::from_matrix(rho)
}

/// Computational-basis populations of the Gibbs state.
pub fn gibbs_populations(spec: &ChainSpec, pt: &ThermalPoint) -> Result<Vec<f64>, ExactError> {
    Ok(gibbs_state(spec, pt)?.populations())
}

/// Energy of a single configuration under `H_IM`, kept here for callers that
/// only hold a basis index.
pub fn ising_energy_of_index(spec: &ChainSpec, index: usize) -> f64 {
    let c = SpinConfig::from_index(index, spec.n());
    crate::model::ising_energy(spec, &c).expect("length matches")
}

/// `<H_IM>` for the uniform periodic ferromagnet from the exact free-fermion
/// partition function
///
/// ```text
/// Z = 1/2 [ prod_NS 2cosh(b e/2) + prod_NS 2sinh(b e/2)
///         + prod_R  2cosh(b e/2) - prod_R  2sinh(b e/2) ]
/// ```
///
/// with `k = pi(2m+1)/n` (NS) or `2 pi m / n` (R) and `e_k = 2 sqrt(A^2 + B^2 - 2AB cos k)`,
/// except that the unpaired modes `k = 0, pi` carry the signed energy
/// `2 (A - B cos k)`. Then `<H_IM> = -(1/beta) d ln Z / dB`.
pub fn free_fermion_e_ising(spec: &ChainSpec, pt: &ThermalPoint) -> Result<f64, ExactError> {
    if !spec.is_ferromagnetic() || spec.has_fields() {
        return Err(ExactError::Unsupported("free-fermion solution needs the uniform ferromagnetic chain without fields"));
    }
    if !(pt.beta_h >= 0.0 && pt.beta_h.is_finite()) {
        return Err(ExactError::NonFiniteBeta(pt.beta_h));
    }
    let (a, b, beta) = (pt.a, pt.b, pt.beta_h);
    if a == 0.0 && b == 0.0 {
        return Ok(0.0);
    }
    let n = spec.n();
    let modes = |ks: Vec<f64>| -> Vec<(f64, f64)> {
        // (beta e / 2, (1/2) de/dB)
        ks.into_iter()
            .map(|k| {
                let c = k.cos();
                if k == 0.0 || k == std::f64::consts::PI {
                    let c = if k == 0.0 { 1.0 } else { -1.0 };
                    (beta * (a - b * c), -c)
                } else {
                    let e = 2.0 * (a * a + b * b - 2.0 * a * b * c).sqrt();
                    (0.5 * beta * e, 2.0 * (b - a * c) / e)
                }
            })
            .collect()
    };
    let pi = std::f64::consts::PI;
    let ns = modes(
        (0..n)
            .map(|m| if 2 * m + 1 == n { pi } else { pi * (2 * m + 1) as f64 / n as f64 })
            .collect(),
    );
    let r = modes((0..n).map(|m| if 2 * m == n { pi } else { 2.0 * pi * m as f64 / n as f64 }).collect());

    // Each term contributes sign * exp(log_mag) to Z and sign' * exp(log_dmag)
    // to dZ/dB / beta.
    let terms = [
        cosh_product(&ns, 1.0),
        sinh_product(&ns, 1.0),
        cosh_product(&r, 1.0),
        sinh_product(&r, -1.0),
    ];
    let lmax = terms
        .iter()
        .flat_map(|t| [t.log_mag, t.log_dmag])
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = terms.iter().map(|t| t.sign * (t.log_mag - lmax).exp()).sum();
    let dz: f64 = terms.iter().map(|t| t.dsign * (t.log_dmag - lmax).exp()).sum();
    Ok(-dz / z)
}

struct Term {
    sign: f64,
    log_mag: f64,
    dsign: f64,
    log_dmag: f64,
}

fn ln_2cosh(x: f64) -> f64 {
    x.abs() + (-2.0 * x.abs()).exp().ln_1p()
}

fn ln_abs_2sinh(x: f64) -> f64 {
    x.abs() + (-(-2.0 * x.abs()).exp()).ln_1p()
}

fn split(v: f64) -> (f64, f64) {
    if v == 0.0 {
        (0.0, f64::NEG_INFINITY)
    } else {
        (v.signum(), v.abs().ln())
    }
}

fn cosh_product(modes: &[(f64, f64)], sign: f64) -> Term {
    let log_mag: f64 = modes.iter().map(|&(x, _)| ln_2cosh(x)).sum();
    // d/dB prod 2cosh(x_k) / beta = prod * sum tanh(x_k) q_k
    let s: f64 = modes.iter().map(|&(x, q)| x.tanh() * q).sum();
    let (ds, dl) = split(s);
    Term { sign, log_mag, dsign: sign * ds, log_dmag: log_mag + dl }
}

fn sinh_product(modes: &[(f64, f64)], sign: f64) -> Term {
    let zeros: Vec<usize> = (0..modes.len()).filter(|&k| modes[k].0 == 0.0).collect();
    let prod_sign: f64 = modes.iter().filter(|m| m.0 != 0.0).map(|m| m.0.signum()).product();
    let log_rest: f64 = modes.iter().filter(|m| m.0 != 0.0).map(|m| ln_abs_2sinh(m.0)).sum();
    match zeros.len() {
        0 => {
            let s: f64 = modes.iter().map(|&(x, q)| q / x.tanh()).sum();
            let (ds, dl) = split(s);
            Term { sign: sign * prod_sign, log_mag: log_rest, dsign: sign * prod_sign * ds, log_dmag: log_rest + dl }
        }
        1 => {
            // Only the derivative of the vanishing factor survives:
            // d/dB 2sinh(x) / beta = cosh(0) * 2 q = 2 q.
            let q = modes[zeros[0]].1;
            let (ds, dl) = split(2.0 * q);
            Term { sign: 0.0, log_mag: f64::NEG_INFINITY, dsign: sign * prod_sign * ds, log_dmag: log_rest + dl }
        }
        _ => Term { sign: 0.0, log_mag: f64::NEG_INFINITY, dsign: 0.0, log_dmag: f64::NEG_INFINITY },
    }
}
