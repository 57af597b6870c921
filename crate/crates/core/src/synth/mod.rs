//! Physics-informed synthetic fault signals.
//!
//! A faulty bearing signal is modeled as a train of band-limited impacts with
//! period `T`, each scaled by a (possibly modulated) amplitude, plus a scaled
//! slice of a real healthy recording acting as background noise:
//!
//! ```text
//! xi(t) = sum_j A_j s(t - jT) + beta n(t)
//! A_j   = lambda_j sum_{m=0}^{M} alpha_m cos(2 pi m T j / Q)
//! ```

mod filter;
mod healthy;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use filter::{BandPass, Biquad};
pub use healthy::{simulate_healthy, HealthyProfile};

use crate::error::{Error, Result};
use crate::pipeline::{Domain, DomainDataset, EnvelopeSpectrum};
use crate::Float;

/// Health state of a bearing. The discriminant is the class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultType {
    #[serde(rename = "NC")]
    Nc = 0,
    #[serde(rename = "IRF")]
    Irf = 1,
    #[serde(rename = "BF")]
    Bf = 2,
    #[serde(rename = "ORF")]
    Orf = 3,
}

impl FaultType {
    pub const ALL: [FaultType; 4] = [FaultType::Nc, FaultType::Irf, FaultType::Bf, FaultType::Orf];

    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            FaultType::Nc => "NC",
            FaultType::Irf => "IRF",
            FaultType::Bf => "BF",
            FaultType::Orf => "ORF",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown health state `{s}`")))
    }
}

/// Rolling-element bearing geometry (diameters in any consistent unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingGeometry {
    pub balls: u32,
    pub ball_diameter: f64,
    pub pitch_diameter: f64,
    pub contact_angle_deg: f64,
}

/// Characteristic defect frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectFrequencies {
    pub bpfo: f64,
    pub bpfi: f64,
    pub bsf: f64,
    pub ftf: f64,
}

impl BearingGeometry {
    /// SKF 6205-2RS deep-groove ball bearing (drive end of the CWRU rig).
    pub fn skf_6205() -> Self {
        Self {
            balls: 9,
            ball_diameter: 0.3126,
            pitch_diameter: 1.537,
            contact_angle_deg: 0.0,
        }
    }

    pub fn defect_frequencies(&self, shaft_hz: f64) -> DefectFrequencies {
        let ratio = self.ball_diameter / self.pitch_diameter * self.contact_angle_deg.to_radians().cos();
        let n = f64::from(self.balls);
        DefectFrequencies {
            bpfo: n / 2.0 * shaft_hz * (1.0 - ratio),
            bpfi: n / 2.0 * shaft_hz * (1.0 + ratio),
            bsf: self.pitch_diameter / (2.0 * self.ball_diameter) * shaft_hz * (1.0 - ratio * ratio),
            ftf: shaft_hz / 2.0 * (1.0 - ratio),
        }
    }
}

/// Impact kinematics of one health state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault_type: FaultType,
    /// Impact period `T` in seconds.
    pub period: f64,
    /// Modulation period `Q` in seconds.
    pub modulation_period: f64,
    /// Sideband amplitudes `alpha_0..=alpha_M`.
    pub sidebands: Vec<f64>,
    /// Impact width as a fraction of `T`.
    pub duty: f64,
}

impl FaultSpec {
    pub const DEFAULT_DUTY: f64 = 0.05;

    pub fn healthy() -> Self {
        Self {
            fault_type: FaultType::Nc,
            period: 1.0,
            modulation_period: 1.0,
            sidebands: vec![1.0],
            duty: Self::DEFAULT_DUTY,
        }
    }

    /// Outer-race fault: constant amplitude, impacts at BPFO.
    pub fn outer_race(period: f64) -> Self {
        Self {
            fault_type: FaultType::Orf,
            period,
            modulation_period: period,
            sidebands: vec![1.0],
            duty: Self::DEFAULT_DUTY,
        }
    }

    /// Modulated fault (inner race or ball) with the default sideband profile.
    pub fn modulated(fault_type: FaultType, period: f64, modulation_period: f64) -> Self {
        Self {
            fault_type,
            period,
            modulation_period,
            sidebands: vec![1.0, 0.5, 0.25],
            duty: Self::DEFAULT_DUTY,
        }
    }

    /// Derives `T` and `Q` from bearing kinematics at a constant shaft speed.
    pub fn from_kinematics(fault_type: FaultType, geometry: &BearingGeometry, shaft_hz: f64) -> Self {
        let f = geometry.defect_frequencies(shaft_hz);
        match fault_type {
            FaultType::Nc => Self::healthy(),
            FaultType::Orf => Self::outer_race(1.0 / f.bpfo),
            FaultType::Irf => Self::modulated(FaultType::Irf, 1.0 / f.bpfi, 1.0 / shaft_hz),
            FaultType::Bf => Self::modulated(FaultType::Bf, 1.0 / (2.0 * f.bsf), 1.0 / f.ftf),
        }
    }

    /// Specs for all four health states of one bearing.
    pub fn catalog(geometry: &BearingGeometry, shaft_hz: f64) -> BTreeMap<FaultType, FaultSpec> {
        FaultType::ALL
            .into_iter()
            .map(|f| (f, Self::from_kinematics(f, geometry, shaft_hz)))
            .collect()
    }

    pub fn sideband_count(&self) -> usize {
        self.sidebands.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fault_type == FaultType::Nc {
            return Ok(());
        }
        if !(self.period > 0.0) {
            return Err(Error::InvalidSpec(format!("impact period must be positive, got {}", self.period)));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::InvalidSpec(format!("duty must lie in (0, 1), got {}", self.duty)));
        }
        match self.sidebands.first() {
            Some(a0) if *a0 > 0.0 => {}
            _ => return Err(Error::InvalidSpec("alpha_0 must be present and positive".into())),
        }
        match self.fault_type {
            FaultType::Orf if self.sidebands.len() != 1 => Err(Error::InvalidSpec(
                "outer-race faults carry no modulation (M = 0)".into(),
            )),
            FaultType::Irf | FaultType::Bf if !(self.modulation_period > 0.0) => Err(Error::InvalidSpec(format!(
                "modulation period must be positive, got {}",
                self.modulation_period
            ))),
            _ => Ok(()),
        }
    }
}

fn default_beta_range() -> (f64, f64) {
    (0.25, 2.0)
}

fn default_lambda_mean() -> f64 {
    1.0
}

fn default_lambda_std() -> f64 {
    0.1
}

/// Sampling and randomization settings for signal synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub fs: f64,
    pub n_samples: usize,
    #[serde(default = "default_beta_range")]
    pub beta_range: (f64, f64),
    #[serde(default = "default_lambda_mean")]
    pub lambda_mean: f64,
    #[serde(default = "default_lambda_std")]
    pub lambda_std: f64,
    /// Band-pass edges in Hz applied to each impact.
    pub band: (f64, f64),
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(fs: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            fs,
            n_samples,
            beta_range: default_beta_range(),
            lambda_mean: default_lambda_mean(),
            lambda_std: default_lambda_std(),
            band: (0.05 * fs / 2.0, 0.95 * fs / 2.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {}", self.fs)));
        }
        let (low, high) = self.band;
        if !(low > 0.0 && low < high && high < self.fs / 2.0) {
            return Err(Error::Config(format!(
                "band edges ({low}, {high}) must satisfy 0 < low < high < fs/2 = {}",
                self.fs / 2.0
            )));
        }
        let (blo, bhi) = self.beta_range;
        if !(blo > 0.0 && blo <= bhi) {
            return Err(Error::Config(format!("beta range ({blo}, {bhi}) must satisfy 0 < low <= high")));
        }
        if !(self.lambda_std >= 0.0) {
            return Err(Error::Config("lambda_std must be nonnegative".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        Ok(())
    }
}

/// A sampled acceleration record.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationSignal<T> {
    pub samples: Vec<T>,
    pub fs: f64,
}

impl<T: Float> VibrationSignal<T> {
    pub fn new(samples: Vec<T>, fs: f64) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::InvalidInput(format!("sample rate must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, fs })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A single filtered impact. `samples[onset..onset + window_len]` covers the
/// Hann window before filtering; the margins hold the filter response.
#[derive(Debug, Clone)]
pub struct Impact {
    pub samples: Vec<f64>,
    pub window_len: usize,
    pub onset: usize,
}

/// Symmetric Hann window; both end coefficients are zero.
pub fn hann(len: usize) -> Vec<f64> {
    if len < 2 {
        return vec![1.0; len];
    }
    let denom = (len - 1) as f64;
    (0..len).map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / denom).cos())).collect()
}

pub fn impact_waveform(spec: &FaultSpec, config: &SynthConfig) -> Result<Impact> {
    spec.validate()?;
    config.validate()?;
    let window_len = (spec.duty * spec.period * config.fs).round() as usize;
    if window_len < 2 {
        return Err(Error::InvalidSpec(format!(
            "impact spans {window_len} samples (duty {} x T {} s x fs {} Hz); need at least 2",
            spec.duty, spec.period, config.fs
        )));
    }
    let mut window = hann(window_len);
    let peak = window.iter().fold(0.0f64, |m, v| m.max(*v));
    window.iter_mut().for_each(|v| *v /= peak);

    // room for the high-pass section to settle on both sides
    let margin = (4.0 * config.fs / config.band.0).ceil() as usize;
    let mut samples = vec![0.0; window_len + 2 * margin];
    samples[margin..margin + window_len].copy_from_slice(&window);
    BandPass::new(config.band.0, config.band.1, config.fs).filtfilt(&mut samples);
    Ok(Impact { samples, window_len, onset: margin })
}

/// Deterministic part of the impact amplitudes: `sum_m alpha_m cos(2 pi m T j / Q)`.
pub fn modulation_profile(n_impacts: usize, spec: &FaultSpec) -> Vec<f64> {
    let ratio = spec.period / spec.modulation_period;
    (0..n_impacts)
        .map(|j| {
            spec.sidebands
                .iter()
                .enumerate()
                .map(|(m, alpha)| alpha * (2.0 * PI * m as f64 * ratio * j as f64).cos())
                .sum()
        })
        .collect()
}

/// Impact amplitudes `A_j`, each scaled by an independent `lambda_j ~ N(mean, std)`.
pub fn modulation_amplitudes<R: Rng + ?Sized>(
    n_impacts: usize,
    spec: &FaultSpec,
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_impacts == 0 {
        return Err(Error::InvalidInput("need at least one impact".into()));
    }
    let lambda = Normal::new(config.lambda_mean, config.lambda_std)
        .map_err(|e| Error::Config(format!("lambda distribution: {e}")))?;
    Ok(modulation_profile(n_impacts, spec)
        .into_iter()
        .map(|a| a * lambda.sample(rng))
        .collect())
}

/// Noise-free impact train `sum_j A_j s(t - jT)` of `config.n_samples` samples.
///
/// The first impact falls at a uniformly random phase within one period;
/// impacts whose response overlaps the record from either side are included.
pub fn impulse_train<R: Rng + ?Sized>(spec: &FaultSpec, config: &SynthConfig, rng: &mut R) -> Result<Vec<f64>> {
    let n = config.n_samples;
    let mut out = vec![0.0; n];
    if spec.fault_type == FaultType::Nc {
        return Ok(out);
    }
    let impact = impact_waveform(spec, config)?;
    let spacing = (spec.period * config.fs).round().max(1.0) as i64;
    let phase = rng.random_range(0..spacing);
    let wave_len = impact.samples.len() as i64;
    let onset = impact.onset as i64;
    // first impact index whose tail still reaches sample 0
    let first = -((wave_len - onset) / spacing + 1);
    let last = n as i64 / spacing + 1;
    let count = (last - first + 1) as usize;
    let amplitudes = modulation_amplitudes(count, spec, config, rng)?;
    for (k, amp) in amplitudes.iter().enumerate() {
        let start = phase + (first + k as i64) * spacing - onset;
        for (i, s) in impact.samples.iter().enumerate() {
            let t = start + i as i64;
            if (0..n as i64).contains(&t) {
                out[t as usize] += amp * s;
            }
        }
    }
    Ok(out)
}

/// A synthesized record and the noise scale drawn for it.
#[derive(Debug, Clone)]
pub struct Synthesized<T> {
    pub signal: VibrationSignal<T>,
    pub beta: f64,
}

pub fn synthesize_signal<T: Float, R: Rng + ?Sized>(
    spec: &FaultSpec,
    healthy: &VibrationSignal<T>,
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Synthesized<T>> {
    config.validate()?;
    spec.validate()?;
    if (healthy.fs - config.fs).abs() > 1e-9 * config.fs {
        return Err(Error::Config(format!(
            "healthy recording sampled at {} Hz, synthesis configured for {} Hz",
            healthy.fs, config.fs
        )));
    }
    let n = config.n_samples;
    if healthy.len() < n {
        return Err(Error::InsufficientNoise { needed: n, available: healthy.len() });
    }
    let start = rng.random_range(0..=healthy.len() - n);
    let beta = Uniform::new_inclusive(config.beta_range.0, config.beta_range.1)
        .map_err(|e| Error::Config(format!("beta distribution: {e}")))?
        .sample(rng);
    let train = impulse_train(spec, config, rng)?;
    let samples = train
        .iter()
        .zip(&healthy.samples[start..start + n])
        .map(|(x, noise)| T::lit(x + beta * noise.as_f64()))
        .collect();
    Ok(Synthesized { signal: VibrationSignal { samples, fs: config.fs }, beta })
}

/// A labeled, class-balanced feature dataset plus per-row generation metadata.
#[derive(Debug, Clone)]
pub struct GeneratedDataset<T> {
    pub dataset: DomainDataset<T>,
    /// Noise scale drawn for each row, in row order.
    pub betas: Vec<f64>,
}

/// Synthesizes `per_class` signals for each requested health state and
/// converts each to its envelope-spectrum feature.
///
/// Signal `k` draws from its own stream derived from `config.seed`, so the
/// result does not depend on evaluation order.
pub fn generate_source_dataset<T: Float>(
    specs: &BTreeMap<FaultType, FaultSpec>,
    classes: &[FaultType],
    healthy_pool: &VibrationSignal<T>,
    per_class: usize,
    config: &SynthConfig,
) -> Result<GeneratedDataset<T>> {
    generate_dataset(specs, classes, healthy_pool, per_class, config, Domain::Source)
}

pub(crate) fn generate_dataset<T: Float>(
    specs: &BTreeMap<FaultType, FaultSpec>,
    classes: &[FaultType],
    healthy_pool: &VibrationSignal<T>,
    per_class: usize,
    config: &SynthConfig,
    domain: Domain,
) -> Result<GeneratedDataset<T>> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    if classes.is_empty() {
        return Err(Error::Config("no classes requested".into()));
    }
    let resolved = classes
        .iter()
        .map(|c| {
            specs
                .get(c)
                .ok_or_else(|| Error::Config(format!("no fault spec for requested class {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let envelope = EnvelopeSpectrum::<T>::new(config.n_samples)?;
    let rows = classes.len() * per_class;
    let mut features = Array2::<T>::zeros((rows, envelope.output_len()));
    let mut labels = Vec::with_capacity(rows);
    let mut betas = Vec::with_capacity(rows);
    for (ci, spec) in resolved.iter().enumerate() {
        for k in 0..per_class {
            let row = ci * per_class + k;
            let mut rng = crate::rng::stream(config.seed, row as u64);
            let synth = synthesize_signal(spec, healthy_pool, config, &mut rng)?;
            let feat = envelope.compute(&synth.signal.samples)?;
            features.row_mut(row).assign(&ndarray::ArrayView1::from(&feat));
            labels.push(spec.fault_type.class_id());
            betas.push(synth.beta);
        }
    }
    let dataset = DomainDataset::labeled(features, labels, FaultType::ALL.len(), domain)?;
    Ok(GeneratedDataset { dataset, betas })
}

#[cfg(test)]
mod tests;
