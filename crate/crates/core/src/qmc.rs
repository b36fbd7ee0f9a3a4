//! Discrete imaginary-time path-integral Monte Carlo with Wolff cluster
//! updates.
//!
//! The quantum chain at inverse temperature `beta_h` maps onto an anisotropic
//! `n x M` classical Ising model with spatial couplings `-J_e K_space`
//! (`K_space = beta_h B / M`) and temporal couplings
//! `K_tau = -1/2 ln tanh(beta_h A / M)`.

use crate::exact::ThermalPoint;
use crate::model::ChainSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Default bound on `beta_h * max(A, B) / M`.
pub const DEFAULT_MAX_DTAU: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmcError {
    #[error("A must be positive for the path-integral mapping (got {0}); use the classical limit instead")]
    DegenerateMapping(f64),
    #[error("invalid QMC configuration: {0}")]
    InvalidConfig(String),
    #[error("longitudinal fields are not supported by the cluster sampler")]
    FieldsUnsupported,
    #[error("extrapolation needs at least 2 distinct slice counts")]
    TooFewSlices,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QmcConfig {
    /// Trotter slices; `None` picks the smallest `M` with
    /// `beta_h max(A, B) / M <= max_dtau`.
    pub slices: Option<usize>,
    pub max_dtau: f64,
    pub therm_sweeps: usize,
    pub measure_sweeps: usize,
    pub seed: u64,
    pub bins: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self { slices: None, max_dtau: DEFAULT_MAX_DTAU, therm_sweeps: 2_000, measure_sweeps: 20_000, seed: 0, bins: 32 }
    }
}

impl QmcConfig {
    pub fn validate(&self) -> Result<(), QmcError> {
        let bad = |m: &str| Err(QmcError::InvalidConfig(m.to_string()));
        if self.bins < 16 {
            return bad("bins must be at least 16");
        }
        if self.measure_sweeps < self.bins {
            return bad("measure_sweeps must be at least bins");
        }
        if matches!(self.slices, Some(m) if m < 2) {
            return bad("slices must be at least 2");
        }
        if !(self.max_dtau > 0.0 && self.max_dtau.is_finite()) {
            return bad("max_dtau must be positive");
        }
        Ok(())
    }

    pub fn slices_for(&self, pt: &ThermalPoint) -> usize {
        self.slices.unwrap_or_else(|| auto_slices(pt, self.max_dtau))
    }
}

pub fn auto_slices(pt: &ThermalPoint, max_dtau: f64) -> usize {
    ((pt.beta_h * pt.a.max(pt.b) / max_dtau).ceil() as usize).max(2)
}

/// `(K_space, K_tau)` for `M` slices.
pub fn trotter_couplings(pt: &ThermalPoint, m: usize) -> Result<(f64, f64), QmcError> {
    if !(pt.a > 0.0) {
        return Err(QmcError::DegenerateMapping(pt.a));
    }
    if m < 2 {
        return Err(QmcError::InvalidConfig("slices must be at least 2".into()));
    }
    let mf = m as f64;
    let k_space = pt.beta_h * pt.b / mf;
    let k_tau = -0.5 * (pt.beta_h * pt.a / mf).tanh().ln();
    Ok((k_space, k_tau))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Integrated autocorrelation time in sweeps.
    pub tau_int: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QmcResult {
    pub e_ising: QmcEstimate,
    pub m2: QmcEstimate,
    /// `<M_z>` with every sample averaged against its global flip.
    pub mz_symmetrized: f64,
    pub slices: usize,
    pub warnings: Vec<String>,
}

/// Space-time spin lattice, index `tau * n + i`, periodic in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Worldline {
    pub n: usize,
    pub m: usize,
    pub spins: Vec<i8>,
}

impl Worldline {
    pub fn spin(&self, i: usize, tau: usize) -> i8 {
        self.spins[tau * self.n + i]
    }

    /// `sum_e J_e s s` averaged over slices.
    pub fn ising_energy(&self, couplings: &[i8]) -> f64 {
        let n = self.n;
        let mut total = 0i64;
        for tau in 0..self.m {
            let row = &self.spins[tau * n..(tau + 1) * n];
            for e in 0..n {
                total += (couplings[e] * row[e] * row[(e + 1) % n]) as i64;
            }
        }
        total as f64 / self.m as f64
    }

    /// `(sum_i s / n)^2` averaged over slices.
    pub fn squared_magnetization(&self) -> f64 {
        let n = self.n;
        let mut acc = 0i64;
        for tau in 0..self.m {
            let s: i64 = self.spins[tau * n..(tau + 1) * n].iter().map(|&x| x as i64).sum();
            acc += s * s;
        }
        acc as f64 / (self.m as f64 * (n * n) as f64)
    }

    pub fn total_magnetization(&self) -> i64 {
        self.spins.iter().map(|&x| x as i64).sum()
    }
}

/// Wolff sampler for one Markov chain.
pub struct WolffSampler {
    lattice: Worldline,
    /// Per-edge effective coupling `-J_e K_space`.
    k_edge: Vec<f64>,
    p_edge: Vec<f64>,
    k_tau: f64,
    p_tau: f64,
    rng: ChaCha8Rng,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<usize>,
    cluster: Vec<usize>,
    clusters_per_sweep: usize,
}

impl WolffSampler {
    pub fn new(spec: &ChainSpec, pt: &ThermalPoint, m: usize, seed: u64, stream: u64) -> Result<Self, QmcError> {
        if spec.has_fields() {
            return Err(QmcError::FieldsUnsupported);
        }
        let (k_space, k_tau) = trotter_couplings(pt, m)?;
        let n = spec.n();
        let k_edge: Vec<f64> = spec.couplings().iter().map(|&j| -(j as f64) * k_space).collect();
        let p_edge = k_edge.iter().map(|k| -(-2.0 * k.abs()).exp_m1()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let spins = (0..n * m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Ok(Self {
            lattice: Worldline { n, m, spins },
            k_edge,
            p_edge,
            k_tau,
            p_tau: -(-2.0 * k_tau).exp_m1(),
            rng,
            stamp: vec![0; n * m],
            epoch: 0,
            stack: Vec::new(),
            cluster: Vec::new(),
            clusters_per_sweep: 1,
        })
    }

    pub fn lattice(&self) -> &Worldline {
        &self.lattice
    }

    /// Grows and flips one cluster; returns its size.
    pub fn cluster_update(&mut self) -> usize {
        let (n, m) = (self.lattice.n, self.lattice.m);
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let seed_site = self.rng.random_range(0..n * m);
        self.stack.clear();
        self.cluster.clear();
        self.stamp[seed_site] = self.epoch;
        self.stack.push(seed_site);
        let spins = &self.lattice.spins;
        while let Some(site) = self.stack.pop() {
            self.cluster.push(site);
            let (tau, i) = (site / n, site % n);
            let s = spins[site];
            let right = tau * n + (i + 1) % n;
            let left = tau * n + (i + n - 1) % n;
            let up = ((tau + 1) % m) * n + i;
            let down = ((tau + m - 1) % m) * n + i;
            let left_edge = (i + n - 1) % n;
            let candidates = [
                (right, self.k_edge[i], self.p_edge[i]),
                (left, self.k_edge[left_edge], self.p_edge[left_edge]),
                (up, self.k_tau, self.p_tau),
                (down, self.k_tau, self.p_tau),
            ];
            for (nb, k, p) in candidates {
                if self.stamp[nb] == self.epoch {
                    continue;
                }
                // Only satisfied bonds can be activated.
                if k * (s * spins[nb]) as f64 > 0.0 && self.rng.random::<f64>() < p {
                    self.stamp[nb] = self.epoch;
                    self.stack.push(nb);
                }
            }
        }
        for &site in &self.cluster {
            self.lattice.spins[site] = -self.lattice.spins[site];
        }
        self.cluster.len()
    }

    /// Runs `sweeps` equilibration sweeps, each flipping clusters until
    /// `n * M` spins have been touched, then fixes the number of clusters per
    /// measurement sweep from the mean cluster size seen.
    ///
    /// The size-driven stopping rule is only used here: measuring right after
    /// it would favour states reached by large clusters and bias the
    /// estimators toward order.
    pub fn equilibrate(&mut self, sweeps: usize) {
        let target = self.lattice.n * self.lattice.m;
        let mut clusters = 0usize;
        let mut total = 0usize;
        for _ in 0..sweeps {
            let mut flipped = 0;
            while flipped < target {
                flipped += self.cluster_update();
                clusters += 1;
            }
            total += flipped;
        }
        if clusters > 0 {
            let mean = total as f64 / clusters as f64;
            self.clusters_per_sweep = ((target as f64 / mean).ceil() as usize).max(1);
        }
    }

    pub fn clusters_per_sweep(&self) -> usize {
        self.clusters_per_sweep
    }

    /// A fixed number of cluster updates (see [`Self::equilibrate`]).
    pub fn sweep(&mut self) {
        for _ in 0..self.clusters_per_sweep {
            self.cluster_update();
        }
    }
}

pub fn run_qmc(spec: &ChainSpec, pt: &ThermalPoint, cfg: &QmcConfig) -> Result<QmcResult, QmcError> {
    run_chain(spec, pt, cfg, cfg.slices_for(pt), 0)
}

fn run_chain(spec: &ChainSpec, pt: &ThermalPoint, cfg: &QmcConfig, m: usize, stream: u64) -> Result<QmcResult, QmcError> {
    cfg.validate()?;
    let mut sampler = WolffSampler::new(spec, pt, m, cfg.seed, stream)?;
    sampler.equilibrate(cfg.therm_sweeps.max(1));
    let mut e = Vec::with_capacity(cfg.measure_sweeps);
    let mut m2 = Vec::with_capacity(cfg.measure_sweeps);
    let mut mz_sym = 0i64;
    for _ in 0..cfg.measure_sweeps {
        sampler.sweep();
        let lat = sampler.lattice();
        e.push(lat.ising_energy(spec.couplings()));
        m2.push(lat.squared_magnetization());
        let s = lat.total_magnetization();
        // The flipped copy contributes -s.
        mz_sym += s + (-s);
    }
    let mut warnings = Vec::new();
    let e_est = estimate(&e, cfg.bins, "e_ising", &mut warnings);
    let m2_est = estimate(&m2, cfg.bins, "m2", &mut warnings);
    let mz_symmetrized = mz_sym as f64 / (2 * cfg.measure_sweeps * spec.n() * m) as f64;
    Ok(QmcResult { e_ising: e_est, m2: m2_est, mz_symmetrized, slices: m, warnings })
}

/// Mean and error bar of a correlated series: the larger of the binning
/// error and the naive error inflated by `sqrt(1 + 2 tau_int)`. Adds a
/// warning when the first and second halves of the bins disagree by more
/// than 3 sigma.
pub fn estimate(series: &[f64], bins: usize, label: &str, warnings: &mut Vec<String>) -> QmcEstimate {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let tau_int = integrated_autocorrelation(series, mean, var);
    let naive = (var / n as f64).sqrt();
    let bin_size = n / bins;
    let bin_means: Vec<f64> = (0..bins)
        .map(|b| series[b * bin_size..(b + 1) * bin_size].iter().sum::<f64>() / bin_size as f64)
        .collect();
    let (bm, be) = mean_and_err(&bin_means);
    let stderr = be.max(naive * (1.0 + 2.0 * tau_int).sqrt());
    let half = bins / 2;
    let (m1, e1) = mean_and_err(&bin_means[..half]);
    let (m2, e2) = mean_and_err(&bin_means[half..]);
    let sigma = (e1 * e1 + e2 * e2).sqrt();
    if (m1 - m2).abs() > 3.0 * sigma && sigma > 0.0 {
        warnings.push(format!(
            "{label}: bin means drift between halves ({m1:.6} vs {m2:.6}, {:.1} sigma); chain may not be equilibrated",
            (m1 - m2).abs() / sigma
        ));
    }
    debug_assert!((bm - mean).abs() <= 1e-9 * (1.0 + mean.abs()) || n % bins != 0);
    QmcEstimate { mean, stderr, tau_int, n_samples: n }
}

fn mean_and_err(x: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let m = x.iter().sum::<f64>() / k;
    let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (v / k).sqrt())
}

/// Integrated autocorrelation time `1/2 + sum_t rho(t)` with Sokal's
/// self-consistent window `W >= 6 tau`.
pub fn integrated_autocorrelation(series: &[f64], mean: f64, var: f64) -> f64 {
    let n = series.len();
    if var <= 0.0 || n < 4 {
        return 0.5;
    }
    let c0 = var * (n - 1) as f64 / n as f64;
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let ct: f64 = (0..n - t).map(|i| (series[i] - mean) * (series[i + t] - mean)).sum::<f64>() / (n - t) as f64;
        tau += ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Runs `chains` independent chains on separate RNG streams of `cfg.seed`
/// and pools them. The result does not depend on the thread count.
pub fn run_qmc_chains(spec: &ChainSpec, pt: &ThermalPoint, cfg: &QmcConfig, chains: usize) -> Result<QmcResult, QmcError> {
    let m = cfg.slices_for(pt);
    let results: Vec<QmcResult> =
        (0..chains as u64).into_par_iter().map(|k| run_chain(spec, pt, cfg, m, k)).collect::<Result<_, _>>()?;
    Ok(pool(results, m))
}

fn pool(results: Vec<QmcResult>, m: usize) -> QmcResult {
    let k = results.len() as f64;
    let combine = |f: &dyn Fn(&QmcResult) -> QmcEstimate| {
        let ests: Vec<QmcEstimate> = results.iter().map(f).collect();
        let mean = ests.iter().map(|e| e.mean).sum::<f64>() / k;
        let var_of_mean = ests.iter().map(|e| e.stderr * e.stderr).sum::<f64>() / (k * k);
        QmcEstimate {
            mean,
            stderr: var_of_mean.sqrt(),
            tau_int: ests.iter().map(|e| e.tau_int).fold(0.0, f64::max),
            n_samples: ests.iter().map(|e| e.n_samples).sum(),
        }
    };
    QmcResult {
        e_ising: combine(&|r| r.e_ising),
        m2: combine(&|r| r.m2),
        mz_symmetrized: results.iter().map(|r| r.mz_symmetrized).sum::<f64>() / k,
        slices: m,
        warnings: results.into_iter().flat_map(|r| r.warnings).collect(),
    }
}

/// Weighted least-squares fit of `mean(M) = a + b / M^2`; returns `a`.
pub fn trotter_extrapolate(
    spec: &ChainSpec,
    pt: &ThermalPoint,
    cfg: &QmcConfig,
    m_list: &[usize],
) -> Result<QmcEstimate, QmcError> {
    let mut ms = m_list.to_vec();
    ms.sort_unstable();
    ms.dedup();
    if ms.len() < 2 {
        return Err(QmcError::TooFewSlices);
    }
    let points: Vec<(f64, QmcEstimate)> = ms
        .par_iter()
        .enumerate()
        .map(|(k, &m)| run_chain(spec, pt, cfg, m, k as u64).map(|r| (1.0 / (m * m) as f64, r.e_ising)))
        .collect::<Result<_, _>>()?;
    Ok(fit_intercept(&points))
}

/// Intercept of a weighted straight-line fit `y = a + b x` with its standard
/// error. Falls back to equal weights when any error bar is zero.
pub fn fit_intercept(points: &[(f64, QmcEstimate)]) -> QmcEstimate {
    let equal = points.iter().any(|(_, e)| e.stderr <= 0.0);
    let w: Vec<f64> = points.iter().map(|(_, e)| if equal { 1.0 } else { 1.0 / (e.stderr * e.stderr) }).collect();
    let s: f64 = w.iter().sum();
    let sx: f64 = points.iter().zip(&w).map(|((x, _), w)| w * x).sum();
    let sy: f64 = points.iter().zip(&w).map(|((_, e), w)| w * e.mean).sum();
    let sxx: f64 = points.iter().zip(&w).map(|((x, _), w)| w * x * x).sum();
    let sxy: f64 = points.iter().zip(&w).map(|((x, e), w)| w * x * e.mean).sum();
    let det = s * sxx - sx * sx;
    let a = (sxx * sy - sx * sxy) / det;
    let var_a = if equal {
        // Propagate the individual error bars through the linear map.
        points
            .iter()
            .zip(&w)
            .map(|((x, e), w)| ((sxx - sx * x) * w / det).powi(2) * e.stderr * e.stderr)
            .sum()
    } else {
        sxx / det
    };
    QmcEstimate {
        mean: a,
        stderr: var_a.sqrt(),
        tau_int: points.iter().map(|(_, e)| e.tau_int).fold(0.0, f64::max),
        n_samples: points.iter().map(|(_, e)| e.n_samples).sum(),
    }
}
