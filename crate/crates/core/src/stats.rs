//! Gauge-ensemble bookkeeping and the percentile bootstrap over gauges.

use crate::model::{apply_gauge_config, ising_energy, squared_magnetization, ChainSpec, GaugeVector, ModelError, SpinConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("ensemble has no gauges")]
    EmptyEnsemble,
    #[error("gauge {0} has no samples")]
    EmptyGauge(usize),
    #[error("bootstrap needs at least 2 gauges, got {0}")]
    TooFewGauges(usize),
    #[error("resamples must be positive")]
    NoResamples,
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("reference value is zero")]
    ZeroReference,
    #[error("{gauges} gauges but {sets} sample sets")]
    Mismatch { gauges: usize, sets: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    IsingEnergy,
    SquaredMagnetization,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::IsingEnergy => "e_ising",
            Observable::SquaredMagnetization => "m2",
        }
    }
}

/// Samples stored in the original (un-gauged) frame, one set per gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeEnsemble {
    pub spec: ChainSpec,
    pub gauges: Vec<GaugeVector>,
    pub samples: Vec<Vec<SpinConfig>>,
}

impl GaugeEnsemble {
    /// Maps samples measured on the gauged problems back to the original frame.
    pub fn from_gauged_samples(
        spec: ChainSpec,
        gauges: Vec<GaugeVector>,
        gauged: Vec<Vec<SpinConfig>>,
    ) -> Result<Self, StatsError> {
        if gauges.len() != gauged.len() {
            return Err(StatsError::Mismatch { gauges: gauges.len(), sets: gauged.len() });
        }
        let samples = gauges
            .iter()
            .zip(gauged)
            .map(|(g, set)| set.iter().map(|c| apply_gauge_config(c, g)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { spec, gauges, samples })
    }

    pub fn samples_per_gauge(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableMeans {
    pub per_gauge: Vec<f64>,
    /// Unweighted mean over gauges.
    pub grand_mean: f64,
}

pub fn observable_mean(ens: &GaugeEnsemble, obs: Observable) -> Result<ObservableMeans, StatsError> {
    if ens.samples.is_empty() {
        return Err(StatsError::EmptyEnsemble);
    }
    let per_gauge = ens
        .samples
        .iter()
        .enumerate()
        .map(|(k, set)| {
            if set.is_empty() {
                return Err(StatsError::EmptyGauge(k));
            }
            let mut acc = 0.0;
            for c in set {
                acc += match obs {
                    Observable::IsingEnergy => ising_energy(&ens.spec, c)?,
                    Observable::SquaredMagnetization => squared_magnetization(c),
                };
            }
            Ok(acc / set.len() as f64)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grand_mean = per_gauge.iter().sum::<f64>() / per_gauge.len() as f64;
    Ok(ObservableMeans { per_gauge, grand_mean })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCI {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub resamples: usize,
    /// Standard deviation of the resampled grand means.
    pub std_error: f64,
    /// Mean of the resampled grand means.
    pub resample_mean: f64,
}

/// Percentile bootstrap: resample gauges with replacement, recompute the
/// grand mean, take the `(1 -/+ level)/2` quantiles. Resample `b` draws from
/// its own RNG stream, so the result is independent of the thread count.
pub fn bootstrap_ci(per_gauge_means: &[f64], level: f64, resamples: usize, seed: u64) -> Result<BootstrapCI, StatsError> {
    let k = per_gauge_means.len();
    if k < 2 {
        return Err(StatsError::TooFewGauges(k));
    }
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let mean = per_gauge_means.iter().sum::<f64>() / k as f64;
    let mut boot: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            (0..k).map(|_| per_gauge_means[rng.random_range(0..k)]).sum::<f64>() / k as f64
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let resample_mean = boot.iter().sum::<f64>() / resamples as f64;
    let std_error = (boot.iter().map(|x| (x - resample_mean).powi(2)).sum::<f64>() / resamples.max(2) as f64).sqrt();
    // Percentile bounds can miss the point estimate for very skewed inputs;
    // widen so the interval always contains it.
    let lo = quantile_sorted(&boot, 0.5 * (1.0 - level)).min(mean);
    let hi = quantile_sorted(&boot, 0.5 * (1.0 + level)).max(mean);
    Ok(BootstrapCI { mean, lo, hi, level, resamples, std_error, resample_mean })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// `|x - reference| / |reference|`.
pub fn relative_difference(x: f64, reference: f64) -> Result<f64, StatsError> {
    if reference == 0.0 {
        return Err(StatsError::ZeroReference);
    }
    Ok((x - reference).abs() / reference.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_ferromagnetic_chain, random_gauge};
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    #[test]
    fn means_over_gauges() {
        let spec = build_ferromagnetic_chain(4).unwrap();
        let g = vec![GaugeVector::identity(4), random_gauge(4, 1)];
        let up = SpinConfig::all_up(4);
        let gauged: Vec<Vec<SpinConfig>> =
            g.iter().map(|gv| vec![apply_gauge_config(&up, gv).unwrap(); 10]).collect();
        let ens = GaugeEnsemble::from_gauged_samples(spec, g, gauged).unwrap();
        let m = observable_mean(&ens, Observable::IsingEnergy).unwrap();
        assert_eq!(m.grand_mean, -4.0);
        assert_eq!(ens.samples_per_gauge(), 10);

        let spec3 = build_ferromagnetic_chain(3).unwrap();
        let a = SpinConfig::new(vec![1, 1, 1]).unwrap(); // -3
        let b = SpinConfig::new(vec![1, 1, -1]).unwrap(); // +1
        let ens = GaugeEnsemble {
            spec: spec3,
            gauges: vec![GaugeVector::identity(3); 2],
            samples: vec![vec![a.clone(), b.clone()], vec![a.clone(), a.clone(), a, b.clone(), b.clone(), b.clone(), b.clone(), b]],
        };
        // Gauge means: -1 and (3 * -3 + 5 * 1) / 8 = -0.5
        let m = observable_mean(&ens, Observable::IsingEnergy).unwrap();
        assert_eq!(m.per_gauge, vec![-1.0, -0.5]);
        assert_eq!(m.grand_mean, -0.75);
        let empty = GaugeEnsemble { samples: vec![vec![]], gauges: vec![GaugeVector::identity(3)], ..ens };
        assert_eq!(observable_mean(&empty, Observable::IsingEnergy), Err(StatsError::EmptyGauge(0)));
    }

    #[test]
    fn bootstrap_edge_cases() {
        let ci = bootstrap_ci(&[2.5; 7], 0.95, 500, 1).unwrap();
        assert_eq!((ci.lo, ci.mean, ci.hi), (2.5, 2.5, 2.5));
        assert_eq!(bootstrap_ci(&[1.0], 0.95, 10, 1), Err(StatsError::TooFewGauges(1)));
        assert_eq!(bootstrap_ci(&[1.0, 2.0], 0.95, 0, 1), Err(StatsError::NoResamples));
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert_eq!(bootstrap_ci(&x, 0.95, 1000, 4).unwrap(), bootstrap_ci(&x, 0.95, 1000, 4).unwrap());
    }

    #[test]
    fn bootstrap_mean_converges_to_grand_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..100).map(|_| normal(&mut rng)).collect();
        let ci = bootstrap_ci(&x, 0.95, 10_000, 2).unwrap();
        assert!(ci.lo <= ci.mean && ci.mean <= ci.hi);
        assert!((ci.resample_mean - ci.mean).abs() <= 3.0 * ci.std_error / (10_000f64).sqrt());
    }

    #[test]
    fn more_gauges_give_narrower_intervals() {
        let mut narrower = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let x: Vec<f64> = (0..100).map(|_| normal(&mut rng)).collect();
            let wide = bootstrap_ci(&x[..25], 0.95, 1000, trial).unwrap();
            let narrow = bootstrap_ci(&x, 0.95, 1000, trial).unwrap();
            if narrow.hi - narrow.lo < wide.hi - wide.lo {
                narrower += 1;
            }
        }
        assert!(narrower >= 95, "{narrower}");
    }

    #[test]
    fn relative_difference_rules() {
        assert!((relative_difference(-132.0, -16.5).unwrap() - 7.0).abs() < 1e-15);
        assert_eq!(relative_difference(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(relative_difference(3.0, 0.0), Err(StatsError::ZeroReference));
    }

    proptest::proptest! {
        #[test]
        fn relative_difference_is_scale_invariant(x in -1e3f64..1e3, r in 1e-3f64..1e3, e in -8i32..8, neg in proptest::bool::ANY) {
            // Powers of two scale without rounding.
            let c = if neg { -(2f64.powi(e)) } else { 2f64.powi(e) };
            proptest::prop_assert_eq!(relative_difference(c * x, c * r).unwrap(), relative_difference(x, r).unwrap());
        }
    }
}
