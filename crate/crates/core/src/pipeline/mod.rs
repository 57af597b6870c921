//! Segmentation and envelope-spectrum features, plus the datasets and transfer scenarios built from them.

mod io;
mod matlab;
mod scenario;

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use io::{read_dataset, write_dataset, DatasetManifest};
pub use matlab::{ingest_matlab_records, read_mat_arrays, MatArray, RecordSource};
pub use scenario::{build_scenario, split_dataset, ScenarioConfig, Split, SplitRatios};

use crate::error::{Error, Result};
use crate::synth::VibrationSignal;
use crate::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Ground-truth labels of an unlabeled domain, kept for evaluation only.
///
/// Training entry points never read these; [`SealedLabels::reveal`] exists
/// for metric computation and scenario bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedLabels(Vec<usize>);

impl SealedLabels {
    pub fn reveal(&self) -> &[usize] {
        &self.0
    }
}

/// Feature matrix with optional labels.
#[derive(Debug, Clone)]
pub struct DomainDataset<T> {
    pub features: Array2<T>,
    pub labels: Option<Vec<usize>>,
    pub domain: Domain,
    /// Size of the source label space.
    pub n_classes: usize,
    sealed: Option<SealedLabels>,
}

impl<T: Float> DomainDataset<T> {
    pub fn labeled(features: Array2<T>, labels: Vec<usize>, n_classes: usize, domain: Domain) -> Result<Self> {
        check_labels(&labels, features.nrows(), n_classes)?;
        Ok(Self { features, labels: Some(labels), domain, n_classes, sealed: None })
    }

    pub fn unlabeled(features: Array2<T>, n_classes: usize, domain: Domain) -> Self {
        Self { features, labels: None, domain, n_classes, sealed: None }
    }

    /// Moves visible labels into the sealed evaluation-only slot.
    pub fn seal(mut self) -> Self {
        if let Some(labels) = self.labels.take() {
            self.sealed = Some(SealedLabels(labels));
        }
        self
    }

    pub(crate) fn with_sealed(mut self, labels: Vec<usize>) -> Result<Self> {
        check_labels(&labels, self.features.nrows(), self.n_classes)?;
        self.sealed = Some(SealedLabels(labels));
        Ok(self)
    }

    pub fn sealed_labels(&self) -> Option<&SealedLabels> {
        self.sealed.as_ref()
    }

    /// Visible labels if present, otherwise the sealed ones.
    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.labels.as_deref().or_else(|| self.sealed.as_ref().map(SealedLabels::reveal))
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// True per-class counts; `None` for unlabeled data.
    pub fn class_counts(&self) -> Option<BTreeMap<usize, usize>> {
        self.labels.as_ref().map(|l| count_labels(l))
    }

    /// Rows at `indices`, carrying visible and sealed labels along.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |l: &Vec<usize>| indices.iter().map(|&i| l[i]).collect::<Vec<_>>();
        Self {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.as_ref().map(pick),
            domain: self.domain,
            n_classes: self.n_classes,
            sealed: self.sealed.as_ref().map(|s| SealedLabels(pick(&s.0))),
        }
    }
}

fn check_labels(labels: &[usize], rows: usize, n_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidInput(format!("label {bad} outside {n_classes} classes")));
    }
    Ok(())
}

pub(crate) fn count_labels(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
}

/// Contiguous windows of `length` samples taken every `hop` samples.
pub fn segment_signal<T: Float>(signal: &VibrationSignal<T>, length: usize, hop: usize) -> Result<Vec<&[T]>> {
    if length < 2 || hop == 0 {
        return Err(Error::InvalidInput(format!("segment length {length} / hop {hop}")));
    }
    let n = signal.len();
    if n < length {
        return Err(Error::EmptyResult { len: n, window: length });
    }
    let count = (n - length) / hop + 1;
    Ok((0..count).map(|k| &signal.samples[k * hop..k * hop + length]).collect())
}

/// Hop that yields at least `count` windows of `length` from `n` samples.
pub fn hop_for_count(n: usize, length: usize, count: usize) -> Result<usize> {
    if n < length {
        return Err(Error::EmptyResult { len: n, window: length });
    }
    if count <= 1 {
        return Ok(length.max(1));
    }
    let hop = (n - length) / (count - 1);
    if hop == 0 {
        return Err(Error::InsufficientData { class: 0, requested: count, available: n - length + 1 });
    }
    Ok(hop)
}

/// Full-wave rectified envelope spectrum with a cached FFT plan.
pub struct EnvelopeSpectrum<T: Float> {
    len: usize,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Float> EnvelopeSpectrum<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len < 4 || len % 2 != 0 {
            return Err(Error::InvalidInput(format!("segment length must be even and >= 4, got {len}")));
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Self { len, fft })
    }

    pub fn output_len(&self) -> usize {
        self.len / 2
    }

    /// Mean removal, rectification, then the one-sided magnitude spectrum scaled by `2 / len`.
    pub fn compute(&self, segment: &[T]) -> Result<Vec<T>> {
        if segment.len() != self.len {
            return Err(Error::Shape(format!("expected {} samples, got {}", self.len, segment.len())));
        }
        if let Some(i) = segment.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        let n = T::lit(self.len as f64);
        let mean = segment.iter().copied().sum::<T>() / n;
        let mut buf: Vec<Complex<T>> = segment
            .iter()
            .map(|&v| Complex::new((v - mean).abs(), T::zero()))
            .collect();
        self.fft.process(&mut buf);
        let scale = T::lit(2.0) / n;
        Ok(buf[..self.len / 2].iter().map(|c| c.norm() * scale).collect())
    }
}

pub fn envelope_spectrum<T: Float>(segment: &[T]) -> Result<Vec<T>> {
    EnvelopeSpectrum::new(segment.len())?.compute(segment)
}

/// Envelope features for every segment, stacked as rows.
pub fn envelope_features<T: Float>(segments: &[&[T]]) -> Result<Array2<T>> {
    let len = segments
        .first()
        .map(|s| s.len())
        .ok_or_else(|| Error::InvalidInput("no segments".into()))?;
    let env = EnvelopeSpectrum::new(len)?;
    let mut out = Array2::zeros((segments.len(), env.output_len()));
    for (mut row, seg) in out.rows_mut().into_iter().zip(segments) {
        let feat = env.compute(seg)?;
        row.assign(&ndarray::ArrayView1::from(&feat));
    }
    Ok(out)
}
