//! Ohmic bath rates.

use super::AmeError;
use crate::exact::beta_from_mk;
use std::f64::consts::PI;

/// One independent Ohmic bath per qubit, coupled through `Z_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// mK.
    pub temperature: f64,
    /// Dimensionless `eta g^2`.
    pub coupling: f64,
    /// Ohmic cutoff, GHz.
    pub cutoff: f64,
}

impl Default for BathParams {
    fn default() -> Self {
        Self { temperature: 12.0, coupling: 1e-4, cutoff: 8.0 * PI }
    }
}

impl BathParams {
    /// Zero coupling is accepted and means closed-system dynamics.
    pub fn validate(&self) -> Result<(), AmeError> {
        let ok = self.temperature > 0.0
            && self.temperature.is_finite()
            && self.coupling >= 0.0
            && self.coupling.is_finite()
            && self.cutoff > 0.0
            && self.cutoff.is_finite();
        if ok {
            Ok(())
        } else {
            Err(AmeError::InvalidBath)
        }
    }

    pub fn beta_h(&self) -> f64 {
        beta_from_mk(self.temperature)
    }

    /// `gamma(omega)` in 1/ns for `omega` in GHz. Positive `omega` is emission.
    pub fn rate_per_ns(&self, omega: f64) -> f64 {
        let beta = self.beta_h();
        let x = beta * omega;
        // omega / (1 - e^{-beta omega}) = (1/beta) * x / (1 - e^{-x})
        let bose = if x == 0.0 { 1.0 } else { x / -(-x).exp_m1() };
        2.0 * PI * self.coupling * bose / beta * (-omega.abs() / self.cutoff).exp()
    }

    /// `gamma(omega)` in 1/us.
    pub fn rate(&self, omega: f64) -> f64 {
        1e3 * self.rate_per_ns(omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kms_ratio() {
        let b = BathParams::default();
        for w in [0.1, 1.0, 10.0] {
            let ratio = b.rate(-w) / b.rate(w);
            let expect = (-b.beta_h() * w).exp();
            assert!((ratio / expect - 1.0).abs() < 1e-12, "{w}: {ratio} vs {expect}");
        }
    }

    #[test]
    fn zero_frequency_limit() {
        let b = BathParams::default();
        let limit = 2.0 * PI * b.coupling / b.beta_h();
        assert_eq!(b.rate_per_ns(0.0), limit);
        assert!((b.rate_per_ns(1e-9) / limit - 1.0).abs() < 1e-8);
        assert!((b.rate_per_ns(-1e-9) / limit - 1.0).abs() < 1e-8);
    }

    #[test]
    fn large_negative_frequency_underflows_to_zero() {
        let b = BathParams { temperature: 1.0, ..Default::default() };
        assert_eq!(b.rate(-1e4), 0.0);
        assert!(b.rate(1e4).is_finite());
    }

    #[test]
    fn validation() {
        assert!(BathParams { coupling: 0.0, ..Default::default() }.validate().is_ok());
        assert!(BathParams { temperature: 0.0, ..Default::default() }.validate().is_err());
        assert!(BathParams { cutoff: -1.0, ..Default::default() }.validate().is_err());
    }
}
