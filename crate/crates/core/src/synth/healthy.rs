//! Stand-in for a healthy-machine recording when no measured one is available.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BandPass, VibrationSignal};
use crate::error::{Error, Result};
use crate::Float;

/// Shaft harmonics plus band-limited structural noise and a white floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthyProfile {
    pub shaft_hz: f64,
    /// Amplitudes of the 1x, 2x, ... shaft harmonics.
    pub harmonics: Vec<f64>,
    /// Pass band of the structural noise in Hz.
    pub resonance: (f64, f64),
    pub resonance_level: f64,
    pub white_level: f64,
}

impl HealthyProfile {
    /// A drive-end-like profile at 12 kHz and about 1797 rpm.
    pub fn drive_end() -> Self {
        Self {
            shaft_hz: 29.95,
            harmonics: vec![0.05, 0.03, 0.01],
            resonance: (2500.0, 4000.0),
            resonance_level: 0.3,
            white_level: 0.05,
        }
    }
}

pub fn simulate_healthy<T: Float, R: Rng + ?Sized>(
    profile: &HealthyProfile,
    fs: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<VibrationSignal<T>> {
    let (low, high) = profile.resonance;
    if !(low > 0.0 && low < high && high < fs / 2.0) {
        return Err(Error::Config(format!("resonance band ({low}, {high}) must lie inside (0, {})", fs / 2.0)));
    }
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let mut structural: Vec<f64> = (0..n_samples).map(|_| StandardNormal.sample(rng)).collect();
    BandPass::new(low, high, fs).filtfilt(&mut structural);
    let rms = (structural.iter().map(|v| v * v).sum::<f64>() / n_samples as f64).sqrt().max(1e-12);
    let phases: Vec<f64> = profile.harmonics.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let samples = (0..n_samples)
        .map(|i| {
            let t = i as f64 / fs;
            let tonal: f64 = profile
                .harmonics
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (a, p))| a * (2.0 * PI * (h + 1) as f64 * profile.shaft_hz * t + p).sin())
                .sum();
            let white: f64 = StandardNormal.sample(rng);
            T::lit(tonal + profile.resonance_level * structural[i] / rms + profile.white_level * white)
        })
        .collect();
    VibrationSignal::new(samples, fs)
}
