//! Self-contained two-domain benchmark data.
//!
//! Both domains are synthesized from simulated healthy noise. The target
//! shifts the impact band and the noise-scale range and is recorded through a
//! less sensitive acquisition chain. This opens a domain gap without any
//! external files.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::{Domain, DomainDataset};
use crate::synth::{
    generate_dataset, simulate_healthy, BearingGeometry, FaultSpec, FaultType, HealthyProfile, SynthConfig,
};
use crate::Float;

/// Settings of one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRecipe {
    pub healthy: HealthyProfile,
    /// Band-pass edges of the impacts in Hz.
    pub band: (f64, f64),
    pub beta_range: (f64, f64),
    pub shaft_hz: f64,
    /// Signals per health state.
    pub per_class: usize,
    /// Sensitivity of the acquisition chain relative to the source.
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskData {
    pub fs: f64,
    /// Samples per segment; the feature width is half of this.
    pub segment: usize,
    /// Length of each simulated healthy recording.
    pub healthy_len: usize,
    pub source: DomainRecipe,
    pub target: DomainRecipe,
}

impl Default for DeskData {
    fn default() -> Self {
        let fs = 12_000.0;
        Self {
            fs,
            segment: 1024,
            healthy_len: 60_000,
            source: DomainRecipe {
                healthy: HealthyProfile::drive_end(),
                band: (300.0, 5700.0),
                beta_range: (0.25, 2.0),
                shaft_hz: 29.95,
                per_class: 200,
                gain: 1.0,
            },
            target: DomainRecipe {
                healthy: HealthyProfile::drive_end(),
                band: (700.0, 5000.0),
                beta_range: (0.25, 2.5),
                shaft_hz: 29.95,
                per_class: 1200,
                gain: 0.7,
            },
        }
    }
}

/// Labeled source and fully labeled target, before scenario selection.
pub struct DeskDomains<T> {
    pub source: DomainDataset<T>,
    pub target_full: DomainDataset<T>,
    pub source_betas: Vec<f64>,
    pub target_betas: Vec<f64>,
}

impl DeskData {
    fn synth_config(&self, recipe: &DomainRecipe, seed: u64) -> SynthConfig {
        SynthConfig { band: recipe.band, beta_range: recipe.beta_range, ..SynthConfig::new(self.fs, self.segment, seed) }
    }

    fn domain<T: Float>(&self, recipe: &DomainRecipe, seed: u64, noise_stream: u64, domain: Domain) -> Result<(DomainDataset<T>, Vec<f64>)> {
        let config = self.synth_config(recipe, seed);
        config.validate()?;
        let healthy = simulate_healthy::<T, _>(&recipe.healthy, self.fs, self.healthy_len, &mut crate::rng::stream(seed, noise_stream))?;
        let specs = FaultSpec::catalog(&BearingGeometry::skf_6205(), recipe.shaft_hz);
        let mut generated = generate_dataset(&specs, &FaultType::ALL, &healthy, recipe.per_class, &config, domain)?;
        // the envelope spectrum is linear in the signal amplitude
        let gain = T::lit(recipe.gain);
        generated.dataset.features.mapv_inplace(|v| v * gain);
        Ok((generated.dataset, generated.betas))
    }

    /// Generates both domains from `seed`. The two healthy recordings are
    /// simulated independently, so no noise is shared across domains.
    pub fn generate<T: Float>(&self, seed: u64) -> Result<DeskDomains<T>> {
        let (source, source_betas) = self.domain(&self.source, seed, u64::MAX - 1, Domain::Source)?;
        let target_seed = seed ^ 0x5eed_7a26_e700_0000;
        let (target_full, target_betas) = self.domain(&self.target, target_seed, u64::MAX - 2, Domain::Target)?;
        Ok(DeskDomains { source, target_full, source_betas, target_betas })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DeskData {
        let mut d = DeskData { segment: 256, healthy_len: 4_000, ..DeskData::default() };
        d.source.per_class = 3;
        d.target.per_class = 5;
        d
    }

    #[test]
    fn shapes_and_labels() {
        let d = small().generate::<f32>(4).unwrap();
        assert_eq!(d.source.features.dim(), (12, 128));
        assert_eq!(d.target_full.features.dim(), (20, 128));
        assert_eq!(d.source.class_counts().unwrap().values().copied().collect::<Vec<_>>(), vec![3; 4]);
        assert_eq!(d.target_full.domain, Domain::Target);
        assert!(d.target_betas.iter().all(|b| (0.25..=2.5).contains(b)));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = small().generate::<f64>(9).unwrap();
        let b = small().generate::<f64>(9).unwrap();
        let c = small().generate::<f64>(10).unwrap();
        assert_eq!(a.source.features, b.source.features);
        assert_eq!(a.target_full.features, b.target_full.features);
        assert_ne!(a.source.features, c.source.features);
    }

    #[test]
    fn bad_band_is_a_config_error() {
        let mut d = small();
        d.target.band = (5000.0, 7000.0);
        assert!(matches!(d.generate::<f32>(0), Err(crate::Error::Config(_))));
    }
}
