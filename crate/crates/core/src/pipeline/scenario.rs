use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::Float;

/// Which classes survive in the target domain and how scarce the faults are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub target_classes: Vec<usize>,
    /// Fault-class size as a fraction of the healthy-class size.
    pub balance_rate: f64,
    pub healthy_class: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(self.balance_rate > 0.0 && self.balance_rate <= 1.0) {
            return Err(Error::Config(format!("balance rate {} outside (0, 1]", self.balance_rate)));
        }
        if self.target_classes.is_empty() {
            return Err(Error::Config("target domain needs at least one class".into()));
        }
        if let Some(c) = self.target_classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Config(format!("target class {c} is not a source class")));
        }
        if self.healthy_class >= n_classes {
            return Err(Error::Config(format!("healthy class {} is not a source class", self.healthy_class)));
        }
        Ok(())
    }

    /// Number of rows a fault class keeps, rounding halves up.
    pub fn fault_count(&self, n_healthy: usize) -> usize {
        (self.balance_rate * n_healthy as f64 + 0.5).floor() as usize
    }
}

/// Builds a partial, imbalanced transfer task.
///
/// The healthy class keeps every row; each other target class keeps
/// `round(balance_rate * n_healthy)` randomly chosen rows; classes outside
/// `target_classes` are dropped. The target comes back with sealed labels and
/// the source is returned untouched.
pub fn build_scenario<T: Float>(
    source: &DomainDataset<T>,
    target_full: &DomainDataset<T>,
    cfg: &ScenarioConfig,
) -> Result<(DomainDataset<T>, DomainDataset<T>)> {
    cfg.validate(source.n_classes)?;
    let source_counts = source
        .class_counts()
        .ok_or_else(|| Error::InvalidInput("source domain must be labeled".into()))?;
    if let Some(c) = cfg.target_classes.iter().find(|c| !source_counts.contains_key(c)) {
        return Err(Error::Config(format!("target class {c} has no source samples")));
    }
    let truth = target_full
        .ground_truth()
        .ok_or_else(|| Error::InvalidInput("target needs ground truth to build a scenario".into()))?;

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in truth.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let n_healthy = by_class.get(&cfg.healthy_class).map_or(0, Vec::len);
    let fault_count = cfg.fault_count(n_healthy);

    let mut keep = Vec::new();
    for &class in &cfg.target_classes {
        let mut rows = by_class.get(&class).cloned().unwrap_or_default();
        let wanted = if class == cfg.healthy_class { rows.len() } else { fault_count };
        if wanted > rows.len() || wanted == 0 {
            return Err(Error::InsufficientData { class, requested: wanted, available: rows.len() });
        }
        let mut rng = crate::rng::stream(cfg.seed, class as u64);
        rows.shuffle(&mut rng);
        rows.truncate(wanted);
        rows.sort_unstable();
        keep.extend(rows);
    }

    let selected = target_full.select(&keep);
    let labels: Vec<usize> = keep.iter().map(|&i| truth[i]).collect();
    let target = DomainDataset::unlabeled(selected.features, target_full.n_classes, Domain::Target).with_sealed(labels)?;
    Ok((source.clone(), target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: DomainDataset<T>,
    pub val: DomainDataset<T>,
    pub test: DomainDataset<T>,
    /// Classes too small to split, all assigned to train.
    pub warnings: Vec<String>,
}

/// Stratified random train/validation/test partition.
///
/// Per class, validation and test sizes are `round(ratio * n)` and train takes
/// the remainder. Classes with fewer than three rows go entirely to train.
/// Unlabeled data without sealed labels is split as one stratum.
pub fn split_dataset<T: Float>(ds: &DomainDataset<T>, ratios: SplitRatios, seed: u64) -> Result<Split<T>> {
    let sum = ratios.train + ratios.val + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 {
        return Err(Error::Config(format!("split ratios must be nonnegative and sum to 1, got {sum}")));
    }
    let strata: BTreeMap<usize, Vec<usize>> = match ds.ground_truth() {
        Some(truth) => {
            let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &l) in truth.iter().enumerate() {
                m.entry(l).or_default().push(i);
            }
            m
        }
        None => BTreeMap::from([(0, (0..ds.len()).collect())]),
    };

    let (mut train, mut val, mut test, mut warnings) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (class, mut rows) in strata {
        let n = rows.len();
        if n < 3 {
            let msg = format!("class {class} has {n} samples; all assigned to train");
            log::warn!("{msg}");
            warnings.push(msg);
            train.extend(rows);
            continue;
        }
        let mut rng = crate::rng::stream(seed, class as u64);
        rows.shuffle(&mut rng);
        let n_val = (ratios.val * n as f64).round() as usize;
        let n_test = (ratios.test * n as f64).round() as usize;
        let n_train = n - n_val - n_test;
        train.extend_from_slice(&rows[..n_train]);
        val.extend_from_slice(&rows[n_train..n_train + n_val]);
        test.extend_from_slice(&rows[n_train + n_val..]);
    }
    Ok(Split { train: ds.select(&train), val: ds.select(&val), test: ds.select(&test), warnings })
}
