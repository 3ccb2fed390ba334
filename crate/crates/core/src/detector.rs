//! Neyman-Pearson energy detection at a single secondary user.
//!
//! Under `H0` the energy collected over `N` samples is `sigma^2 * chi2_N`;
//! under `H1` the signal variance adds to the noise, giving
//! `(sigma_s^2 + sigma^2) * chi2_N`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::gamma::{gamma_tail, gamma_tail_inverse};
use crate::model::ChannelState;

/// Above this many samples the chi-square draw switches to a gamma sampler.
const DIRECT_CHI2_MAX_SAMPLES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDetectorConfig {
    pub num_samples: u32,
    pub noise_variance: f64,
    pub pfa_target: f64,
}

impl Default for EnergyDetectorConfig {
    fn default() -> Self {
        Self {
            num_samples: 10,
            noise_variance: 1.0,
            pfa_target: 0.05,
        }
    }
}

impl EnergyDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::config("detector needs at least one sample"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config("noise variance must be positive"));
        }
        if !(self.pfa_target > 0.0 && self.pfa_target < 1.0) {
            return Err(Error::config("pfa must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Shape of the chi-square law written as a gamma distribution.
    pub fn gamma_shape(&self) -> f64 {
        self.num_samples as f64 / 2.0
    }
}

/// Received PU signal variance at one SU, in linear units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct LinkGain {
    pub signal_variance: f64,
}

impl LinkGain {
    pub fn new(signal_variance: f64) -> Self {
        Self {
            signal_variance: signal_variance.max(0.0),
        }
    }

    pub const BLIND: LinkGain = LinkGain {
        signal_variance: 0.0,
    };
}

/// Energy threshold meeting the false-alarm target under pure noise.
pub fn np_threshold(cfg: &EnergyDetectorConfig) -> Result<f64> {
    if cfg.num_samples == 0 || !(cfg.noise_variance > 0.0) {
        return Err(Error::invalid("invalid energy detector configuration"));
    }
    Ok(cfg.noise_variance * gamma_tail_inverse(cfg.gamma_shape(), 2.0, cfg.pfa_target)?)
}

/// One chi-square draw with `n` degrees of freedom.
pub fn sample_chi_square<R: Rng + ?Sized>(n: u32, rng: &mut R) -> f64 {
    if n <= DIRECT_CHI2_MAX_SAMPLES {
        (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * z
            })
            .sum()
    } else {
        Gamma::new(n as f64 / 2.0, 2.0)
            .expect("positive shape")
            .sample(rng)
    }
}

/// Detected energy at one SU for one channel.
pub fn sense_energy<R: Rng + ?Sized>(
    truth: ChannelState,
    gain: LinkGain,
    cfg: &EnergyDetectorConfig,
    rng: &mut R,
) -> f64 {
    let scale = match truth {
        ChannelState::Idle => cfg.noise_variance,
        ChannelState::Busy => cfg.noise_variance + gain.signal_variance,
    };
    (scale * sample_chi_square(cfg.num_samples, rng)).max(f64::MIN_POSITIVE)
}

/// Local one-bit decision; ties are declared busy.
pub fn hard_decision(energy: f64, zeta: f64) -> ChannelState {
    ChannelState::from_bit(energy >= zeta)
}

/// Probability that the detector declares busy when the PU transmits.
pub fn detector_pd(zeta: f64, gain: LinkGain, cfg: &EnergyDetectorConfig) -> Result<f64> {
    let scale = 2.0 * (gain.signal_variance + cfg.noise_variance);
    gamma_tail(cfg.gamma_shape(), scale, zeta)
}
