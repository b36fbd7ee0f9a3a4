//! Davies generator in the instantaneous eigenbasis of `H(s)`.

use super::bath::BathParams;
use super::{AmeError, OMEGA_PER_GHZ};
use crate::exact::ising_diagonal;
use crate::linalg::{self, cluster_sorted, C64};
use crate::model::ChainSpec;
use ndarray::{Array2, Zip};

/// Degenerate energies and Bohr frequencies are grouped within this many GHz.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Largest chain the density-matrix dynamics accepts.
pub const AME_MAX_SITES: usize = 5;

/// Fixed operators of a chain: the driver `H_TF = -sum X_i`, the diagonal of
/// `H_p` and the diagonal of every `Z_i`.
#[derive(Debug, Clone)]
pub struct Operators {
    pub n: usize,
    pub dim: usize,
    pub driver: Array2<f64>,
    pub problem: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

impl Operators {
    pub fn new(spec: &ChainSpec, cap: usize) -> Result<Self, AmeError> {
        let n = spec.n();
        if n > cap {
            return Err(AmeError::SizeCap { n, cap });
        }
        let dim = 1usize << n;
        let mut driver = Array2::zeros((dim, dim));
        for x in 0..dim {
            for i in 0..n {
                driver[[x ^ (1 << i), x]] -= 1.0;
            }
        }
        let z = (0..n)
            .map(|site| (0..dim).map(|x| if (x >> (n - 1 - site)) & 1 == 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        Ok(Self { n, dim, driver, problem: ising_diagonal(spec), z })
    }

    /// `A H_TF + B H_p` in GHz.
    pub fn hamiltonian(&self, a: f64, b: f64) -> Array2<f64> {
        let mut h = self.driver.mapv(|x| a * x);
        for (i, p) in self.problem.iter().enumerate() {
            h[[i, i]] += b * p;
        }
        h
    }
}

/// Eigendecomposition of `H(s)` plus the driver and problem operators in
/// that basis.
#[derive(Debug, Clone)]
pub struct Frame {
    pub a: f64,
    pub b: f64,
    pub energies: Vec<f64>,
    pub vectors: Array2<f64>,
}

impl Frame {
    pub fn new(ops: &Operators, a: f64, b: f64) -> Result<Self, AmeError> {
        let (energies, vectors) = linalg::eigh_real(&ops.hamiltonian(a, b))?;
        Ok(Self { a, b, energies, vectors })
    }

    /// `V^T diag(d) V`.
    pub fn diag_op(&self, d: &[f64]) -> Array2<f64> {
        let mut scaled = self.vectors.clone();
        for (mut row, &w) in scaled.rows_mut().into_iter().zip(d) {
            row.mapv_inplace(|x| x * w);
        }
        self.vectors.t().dot(&scaled)
    }

    pub fn op(&self, m: &Array2<f64>) -> Array2<f64> {
        self.vectors.t().dot(m).dot(&self.vectors)
    }

    pub fn to_eigen(&self, rho: &Array2<C64>) -> Array2<C64> {
        linalg::to_basis(rho, &self.vectors)
    }

    pub fn from_eigen(&self, rho: &Array2<C64>) -> Array2<C64> {
        linalg::from_basis(rho, &self.vectors)
    }
}

/// Pairs `(a, b)` of eigenstate indices sharing one Bohr frequency together
/// with the real dissipator block acting on `rho_ab`.
#[derive(Debug, Clone)]
pub struct Bin {
    pub pairs: Vec<(usize, usize)>,
    /// `2 pi * 1e3 * (E_a - E_b)` per pair, rad/us, from exact energies.
    pub phase_rates: Vec<f64>,
    /// Dissipator restricted to the bin, 1/us, row-major over `pairs`.
    pub block: Array2<f64>,
}

/// Davies generator at fixed `(A, B)`; all rates in 1/us.
#[derive(Debug, Clone)]
pub struct DaviesGenerator {
    pub frame: Frame,
    pub bins: Vec<Bin>,
    pub level_of: Vec<usize>,
    pub level_energies: Vec<f64>,
}

pub fn davies_generator(spec: &ChainSpec, a: f64, b: f64, bath: &BathParams) -> Result<DaviesGenerator, AmeError> {
    let ops = Operators::new(spec, AME_MAX_SITES)?;
    DaviesGenerator::new(&ops, Frame::new(&ops, a, b)?, bath)
}

impl DaviesGenerator {
    pub fn new(ops: &Operators, frame: Frame, bath: &BathParams) -> Result<Self, AmeError> {
        bath.validate()?;
        let d = ops.dim;
        let (level_of, level_energies) = cluster_sorted(&frame.energies, DEGENERACY_TOL);
        let nl = level_energies.len();
        // gamma(E_l - E_m) for level pairs, 1/us
        let mut gamma_lv = Array2::<f64>::zeros((nl, nl));
        for l in 0..nl {
            for m in 0..nl {
                gamma_lv[[l, m]] = if bath.coupling == 0.0 { 0.0 } else { bath.rate(level_energies[l] - level_energies[m]) };
            }
        }
        let x: Vec<Array2<f64>> = if bath.coupling == 0.0 { Vec::new() } else { ops.z.iter().map(|z| frame.diag_op(z)).collect() };

        // G_ac = sum_alpha sum_e gamma(E_a - E_e) X_ea X_ec, needed for a, c in one level.
        let mut g = Array2::<f64>::zeros((d, d));
        for xa in &x {
            let mut weighted = xa.clone();
            Zip::indexed(&mut weighted).for_each(|(e, a), w| *w *= gamma_lv[[level_of[a], level_of[e]]]);
            g = g + weighted.t().dot(xa);
        }

        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                pairs.push((level_energies[level_of[a]] - level_energies[level_of[b]], a, b));
            }
        }
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
        let omegas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let (bin_of, bin_omegas) = cluster_sorted(&omegas, DEGENERACY_TOL);
        let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); bin_omegas.len()];
        for (k, p) in pairs.iter().enumerate() {
            members[bin_of[k]].push((p.1, p.2));
        }

        let bins = members
            .into_iter()
            .map(|pairs| {
                let p = pairs.len();
                let mut block = Array2::<f64>::zeros((p, p));
                if !x.is_empty() {
                    for (r, &(a, b)) in pairs.iter().enumerate() {
                        for (c_idx, &(c, dd)) in pairs.iter().enumerate() {
                            let gam = gamma_lv[[level_of[c], level_of[a]]];
                            let mut v = 0.0;
                            for xa in &x {
                                v += xa[[a, c]] * xa[[b, dd]];
                            }
                            v *= gam;
                            if b == dd && level_of[a] == level_of[c] {
                                v -= 0.5 * g[[a, c]];
                            }
                            if a == c && level_of[b] == level_of[dd] {
                                v -= 0.5 * g[[dd, b]];
                            }
                            block[[r, c_idx]] = v;
                        }
                    }
                }
                let phase_rates =
                    pairs.iter().map(|&(a, b)| OMEGA_PER_GHZ * (frame.energies[a] - frame.energies[b])).collect();
                Bin { pairs, phase_rates, block }
            })
            .collect();
        Ok(Self { frame, bins, level_of, level_energies })
    }

    /// Dissipator applied to an eigenbasis operator.
    pub fn dissipate(&self, rho: &Array2<C64>) -> Array2<C64> {
        let d = rho.nrows();
        let mut out = Array2::<C64>::zeros((d, d));
        for bin in &self.bins {
            for (r, &(a, b)) in bin.pairs.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (c_idx, &(c, dd)) in bin.pairs.iter().enumerate() {
                    acc += bin.block[[r, c_idx]] * rho[[c, dd]];
                }
                out[[a, b]] = acc;
            }
        }
        out
    }

    /// Full generator `-i 2 pi [H, rho] + D(rho)` on an eigenbasis operator.
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        let mut out = self.dissipate(rho);
        for bin in &self.bins {
            for (&(a, b), &w) in bin.pairs.iter().zip(&bin.phase_rates) {
                out[[a, b]] += C64::new(0.0, -w) * rho[[a, b]];
            }
        }
        out
    }

    /// Largest absolute row sum of the generator, 1/us.
    pub fn norm_scale(&self) -> f64 {
        self.bins
            .iter()
            .flat_map(|bin| {
                (0..bin.pairs.len())
                    .map(move |r| bin.block.row(r).iter().map(|v| v.abs()).sum::<f64>() + bin.phase_rates[r].abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute row sum of the dissipator alone, 1/us.
    pub fn dissipator_scale(&self) -> f64 {
        self.bins
            .iter()
            .flat_map(|bin| bin.block.rows().into_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// `exp(t L) rho` for an eigenbasis operator, one block exponential per
    /// Bohr bin. The mean phase of each bin is factored out exactly.
    pub fn propagate(&self, rho: &Array2<C64>, t: f64) -> Result<Array2<C64>, AmeError> {
        let d = rho.nrows();
        let mut out = Array2::<C64>::zeros((d, d));
        for bin in &self.bins {
            let p = bin.pairs.len();
            let center = bin.phase_rates.iter().sum::<f64>() / p as f64;
            let rot = C64::from_polar(1.0, -center * t);
            if p == 1 {
                let (a, b) = bin.pairs[0];
                let rate = C64::new(bin.block[[0, 0]], -(bin.phase_rates[0] - center));
                out[[a, b]] = rot * (rate * t).exp() * rho[[a, b]];
                continue;
            }
            let mut m = Array2::<C64>::zeros((p, p));
            for r in 0..p {
                for c in 0..p {
                    m[[r, c]] = C64::new(bin.block[[r, c]] * t, 0.0);
                }
                m[[r, r]] += C64::new(0.0, -(bin.phase_rates[r] - center) * t);
            }
            let e = linalg::expm(&m)?;
            for (r, &(a, b)) in bin.pairs.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (c, &(cc, dd)) in bin.pairs.iter().enumerate() {
                    acc += e[[r, c]] * rho[[cc, dd]];
                }
                out[[a, b]] = rot * acc;
            }
        }
        Ok(out)
    }
}
