//! Davies master-equation dynamics of the anneal protocol, its closed-system
//! limit, and the unitary-norm criterion for the final quench.

mod bath;
mod evolve;
mod generator;
mod norm;

pub use bath::BathParams;
pub use evolve::{
    closed_system_evolve, evolve, quench_sweep, relax_at, AmeRun, InitialState, QuenchSweep, SweepCell, SweepRow,
    TrajectoryOutput,
};
pub use generator::{davies_generator, DaviesGenerator, Frame, Operators, AME_MAX_SITES, DEGENERACY_TOL};
pub use norm::{minimal_quench_rate, unitary_quench_norm, NormSearch, NORM_MAX_SITES};

use crate::exact::ExactError;
use crate::linalg::LinalgError;
use crate::model::{ModelError, SpinConfig};
use crate::schedule::ScheduleError;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// `2 pi * 1e3`: GHz to angular frequency in rad/us.
pub const OMEGA_PER_GHZ: f64 = 2.0 * std::f64::consts::PI * 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmeError {
    #[error("n = {n} exceeds the limit of {cap} sites")]
    SizeCap { n: usize, cap: usize },
    #[error("bath temperature and cutoff must be positive, coupling non-negative")]
    InvalidBath,
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("integrator failed at t = {t} us: {reason}")]
    Integrator { t: f64, reason: String },
    #[error("probability {value} at index {index} is negative")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    BadNormalization(f64),
    #[error("norm {norm} at the largest rate {rate} us^-1 is above {eps}")]
    NoBracket { rate: f64, norm: f64, eps: f64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Draws computational-basis outcomes from a population vector. Small
/// normalization errors (up to 1e-6) are renormalized away.
pub fn sample_measurements(populations: &[f64], shots: usize, seed: u64) -> Result<Vec<SpinConfig>, AmeError> {
    let dim = populations.len();
    let n = dim.trailing_zeros() as usize;
    if dim == 0 || !dim.is_power_of_two() {
        return Err(AmeError::InvalidRun(format!("population length {dim} is not a power of two")));
    }
    if let Some((index, &value)) = populations.iter().enumerate().find(|(_, p)| **p < -1e-9 || !p.is_finite()) {
        return Err(AmeError::NegativeProbability { index, value });
    }
    let total: f64 = populations.iter().map(|p| p.max(0.0)).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(AmeError::BadNormalization(total));
    }
    let dist = WeightedIndex::new(populations.iter().map(|p| p.max(0.0) / total))
        .map_err(|e| AmeError::InvalidRun(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..shots).map(|_| SpinConfig::from_index(dist.sample(&mut rng), n)).collect())
}
