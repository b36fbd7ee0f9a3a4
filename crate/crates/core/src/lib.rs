//! Thermal-sampling simulator for the periodic transverse-field Ising chain.
//!
//! `H(s) = -A(s) sum_i X_i + B(s) (sum_e J_e Z_e Z_{e+1} + sum_i h_i Z_i)`
//!
//! Energies are frequencies in GHz (E/h), times are in microseconds and
//! temperatures in millikelvin. Thermal references come from exact
//! diagonalization, a free-fermion solution and path-integral Monte Carlo;
//! anneal dynamics come from a Davies master equation.

pub mod ame;
pub mod density;
pub mod exact;
pub mod linalg;
pub mod model;
pub mod qmc;
pub mod schedule;
pub mod stats;

pub use density::DensityMatrix;
pub use exact::{GibbsResult, ThermalPoint};
pub use model::{ChainSpec, GaugeVector, SpinConfig};
pub use schedule::{AnnealSchedule, ProtocolParams, ScheduleProtocol};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Schedule(#[from] schedule::ScheduleError),
    #[error(transparent)]
    Exact(#[from] exact::ExactError),
    #[error(transparent)]
    Qmc(#[from] qmc::QmcError),
    #[error(transparent)]
    Ame(#[from] ame::AmeError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}
