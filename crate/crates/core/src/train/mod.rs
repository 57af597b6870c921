//! Min-max training of the full network with class and instance weighting.

mod adam;
mod losses;
mod step;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::{debug, info};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use losses::{
    cdan_loss, cdan_loss_grad, classification_loss, classification_loss_grad, lr_schedule, total_objective,
    warmup_factor, CdanGrads, CdanInputs, TermLosses,
};
pub use step::{compute_step, Detached, StepBatch, StepOutput, StepSettings, Terms};

use crate::error::{Error, Result};
use crate::eval::{balanced_accuracy, macro_f1};
use crate::gap::{KernelPower, KernelSpec};
use crate::mix::{argmax, LabelRule, MixConfig};
use crate::net::{Architecture, NetLayout, NetParams, ParamGroup};
use crate::pipeline::DomainDataset;
use crate::weights::class_level_weights;
use crate::{rng, Float};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Rows drawn from each domain per batch.
    pub batch_per_domain: usize,
    pub lr0: f64,
    pub mu: f64,
    pub gamma: f64,
    /// Ramp `mu` from 0 with training progress instead of holding it constant.
    pub mu_warmup: bool,
    pub kernel: KernelSpec,
    pub mix: MixConfig,
    pub use_rf_mixup: bool,
    pub use_weighting: bool,
    /// Epochs that train with all-ones class weights before the first refresh takes effect.
    pub class_weight_warmup: usize,
    /// Squared-kernel discrepancy; plain MMD when off.
    pub use_mmsd: bool,
    /// Label factor equal to the feature factor.
    pub plain_mixup: bool,
    pub adam: AdamConfig,
    pub net: NetLayout,
    /// A batch objective above this magnitude aborts training.
    pub divergence_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_per_domain: 128,
            lr0: 0.002,
            mu: 1.0,
            gamma: 0.05,
            mu_warmup: false,
            kernel: KernelSpec::default(),
            mix: MixConfig::default(),
            use_rf_mixup: true,
            use_weighting: true,
            class_weight_warmup: 1,
            use_mmsd: true,
            plain_mixup: false,
            adam: AdamConfig::default(),
            net: NetLayout::default(),
            divergence_threshold: 1e3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_per_domain < 2 {
            return Err(Error::Config("need at least one epoch and batches of at least 2 rows".into()));
        }
        if !(self.mu >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config("mu and gamma must be nonnegative".into()));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::Config("lr0 must be positive".into()));
        }
        self.kernel.validate()?;
        self.mix.validate()
    }

    pub fn terms(&self) -> Terms {
        Terms { classification: true, cdan: self.mu > 0.0, mmsd: self.gamma > 0.0, aux: self.use_weighting }
    }

    fn mix_rule(&self) -> Option<LabelRule> {
        self.use_rf_mixup
            .then_some(if self.plain_mixup { LabelRule::Plain } else { LabelRule::Rebalanced })
    }

    fn power(&self) -> KernelPower {
        if self.use_mmsd {
            KernelPower::Mmsd
        } else {
            KernelPower::Mmd
        }
    }
}

/// The full method and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PTPAI")]
    Ptpai,
    #[serde(rename = "source-only")]
    SourceOnly,
    /// Without RF-Mixup.
    #[serde(rename = "PAIP")]
    Paip,
    /// Without weighting.
    #[serde(rename = "PAIR")]
    Pair,
    /// Plain MMD instead of MMSD.
    #[serde(rename = "PAIM")]
    Paim,
    /// Ordinary Mixup labels.
    #[serde(rename = "plain-Mixup")]
    PlainMixup,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Ptpai, Method::SourceOnly, Method::Paip, Method::Pair, Method::Paim, Method::PlainMixup];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ptpai => "PTPAI",
            Method::SourceOnly => "source-only",
            Method::Paip => "PAIP",
            Method::Pair => "PAIR",
            Method::Paim => "PAIM",
            Method::PlainMixup => "plain-Mixup",
        }
    }

    /// `base` with this method's switches applied.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Method::Ptpai => {}
            Method::SourceOnly => {
                c.mu = 0.0;
                c.gamma = 0.0;
                c.use_weighting = false;
                c.use_rf_mixup = false;
            }
            Method::Paip => c.use_rf_mixup = false,
            Method::Pair => c.use_weighting = false,
            Method::Paim => c.use_mmsd = false,
            Method::PlainMixup => c.plain_mixup = true,
        }
        c
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the epoch's last batch.
    pub lr: f64,
    pub mu: f64,
    /// Mean per-batch losses.
    pub losses: TermLosses,
    pub total: f64,
    /// Class weights refreshed at the end of the epoch.
    pub omega_c: Vec<f64>,
    pub val_bacc: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistoryHeader {
    optimizer: AdamConfig,
    notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub optimizer: AdamConfig,
    pub notes: Vec<String>,
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_omega_c(&self) -> Option<&[f64]> {
        self.records.last().map(|r| r.omega_c.as_slice())
    }

    /// A header line with optimizer settings and notes, then one line per epoch.
    pub fn to_json_lines(&self) -> String {
        let header = HistoryHeader { optimizer: self.optimizer, notes: self.notes.clone() };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: HistoryHeader = serde_json::from_str(lines.next().ok_or_else(|| Error::Format("empty history".into()))?)
            .map_err(|e| Error::Format(format!("history header: {e}")))?;
        let records = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("history line {}: {e}", i + 2))))
            .collect::<Result<_>>()?;
        Ok(Self { optimizer: header.optimizer, notes: header.notes, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_lines()).map_err(|e| Error::io_at(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_lines(&std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?)
    }
}

/// Endless shuffled walk over `0..n`, or uniform draws when `n` is below the batch size.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    with_replacement: bool,
}

impl Sampler {
    fn new(n: usize, batch: usize) -> Self {
        Self { order: (0..n).collect(), pos: n, with_replacement: n < batch }
    }

    fn next<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Vec<usize> {
        let n = self.order.len();
        if self.with_replacement {
            return (0..k).map(|_| rng.random_range(0..n)).collect();
        }
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == n {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Argmax class counts of `probs`, each at least 1.
fn pseudo_counts<T: Float>(probs: &Array2<T>) -> BTreeMap<usize, usize> {
    let mut counts: BTreeMap<usize, usize> = (0..probs.ncols()).map(|c| (c, 0)).collect();
    for row in probs.axis_iter(Axis(0)) {
        *counts.entry(argmax(row)).or_default() += 1;
    }
    counts.values_mut().for_each(|v| *v = (*v).max(1));
    counts
}

fn gather<T: Float>(x: &Array2<T>, idx: &[usize]) -> Array2<T> {
    x.select(Axis(0), idx)
}

/// Eval-mode predictions in chunks.
pub fn predict<T: Float>(net: &mut NetParams<T>, x: &Array2<T>) -> Result<Array2<T>> {
    net.predict_proba_chunked(x.view(), 256)
}

/// b-accuracy and macro-F1 of `net` on a dataset with ground truth, over the classes it contains.
pub fn score<T: Float>(net: &mut NetParams<T>, ds: &DomainDataset<T>) -> Result<(f64, f64)> {
    let truth = ds
        .ground_truth()
        .ok_or_else(|| Error::InvalidInput("dataset has no ground truth to score against".into()))?;
    let probs = predict(net, &ds.features)?;
    let pred: Vec<usize> = probs.axis_iter(Axis(0)).map(argmax).collect();
    let classes: Vec<usize> = (0..ds.n_classes).collect();
    Ok((balanced_accuracy(truth, &pred, &classes)?, macro_f1(truth, &pred, &classes)?))
}

pub fn fit<T: Float>(cfg: &TrainConfig, source: &DomainDataset<T>, target: &DomainDataset<T>) -> Result<(NetParams<T>, TrainHistory)> {
    fit_with_validation(cfg, source, target, None)
}

/// Trains on labeled `source` and unlabeled `target`; `validation` is scored
/// after every epoch and never influences the parameters.
pub fn fit_with_validation<T: Float>(
    cfg: &TrainConfig,
    source: &DomainDataset<T>,
    target: &DomainDataset<T>,
    validation: Option<&DomainDataset<T>>,
) -> Result<(NetParams<T>, TrainHistory)> {
    cfg.validate()?;
    let labels = source
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("source dataset must be labeled".into()))?;
    if source.dim() != target.dim() || source.n_classes != target.n_classes {
        return Err(Error::Shape(format!(
            "source is {}x{} classes, target is {}x{} classes",
            source.dim(),
            source.n_classes,
            target.dim(),
            target.n_classes
        )));
    }
    if source.len() < 2 || target.is_empty() {
        return Err(Error::InvalidInput("need at least 2 source rows and 1 target row".into()));
    }
    let n_classes = source.n_classes;
    let arch = Architecture::with_layout(source.dim(), n_classes, cfg.net.clone());
    let mut net = NetParams::<T>::new(arch, &mut rng::stream(cfg.seed, 1))?;
    let mut order_rng = rng::stream(cfg.seed, 2);
    let mut step_rng = rng::stream(cfg.seed, 3);

    let bs = cfg.batch_per_domain.min(source.len());
    let bt = cfg.batch_per_domain;
    let iters = (source.len() / bs).max(1);
    let total_iters = (cfg.epochs * iters) as f64;
    let mut src_sampler = Sampler::new(source.len(), bs);
    let mut tgt_sampler = Sampler::new(target.len(), bt);

    let mut history = TrainHistory { optimizer: cfg.adam, ..Default::default() };
    if tgt_sampler.with_replacement {
        history.notes.push(format!("target has {} rows, fewer than one batch of {bt}; sampling with replacement", target.len()));
    }
    let terms = cfg.terms();
    let mut optimizers: BTreeMap<ParamGroup, Adam<T>> = ParamGroup::ALL
        .into_iter()
        .map(|g| {
            let shapes: Vec<usize> = net.group_tensors(g).iter().map(|t| t.len()).collect();
            (g, Adam::new(cfg.adam, &shapes))
        })
        .collect();
    let active = |g: ParamGroup| match g {
        ParamGroup::Features | ParamGroup::Classifier => true,
        ParamGroup::Discriminator => terms.cdan,
        ParamGroup::Auxiliary => terms.aux,
    };

    let mut omega_c: Array1<T> = Array1::ones(n_classes);
    let mut counts = pseudo_counts(&predict(&mut net, &target.features)?);
    let rule = cfg.mix_rule();
    let power = cfg.power();

    for epoch in 0..cfg.epochs {
        let mut sums = TermLosses::default();
        let mut total_sum = 0.0;
        let mut lr = cfg.lr0;
        let mut mu = cfg.mu;
        for it in 0..iters {
            let progress = (epoch * iters + it) as f64 / total_iters;
            lr = lr_schedule(cfg.lr0, progress);
            mu = if cfg.mu_warmup { cfg.mu * warmup_factor(progress) } else { cfg.mu };
            let si = src_sampler.next(bs, &mut order_rng);
            let ti = tgt_sampler.next(bt, &mut order_rng);
            let xs = gather(&source.features, &si);
            let ys: Vec<usize> = si.iter().map(|&i| labels[i]).collect();
            let xt = gather(&target.features, &ti);
            let settings = StepSettings {
                terms,
                mu,
                gamma: cfg.gamma,
                kernel: &cfg.kernel,
                power,
                mix: rule.map(|r| (&cfg.mix, r)),
                weighting: cfg.use_weighting,
                omega_c: omega_c.view(),
                class_counts: &counts,
            };
            let batch = StepBatch { source: xs.view(), labels: &ys, target: xt.view() };
            let out = compute_step(&mut net, &batch, &settings, None, &mut step_rng)?;
            let total = total_objective(&out.losses, mu, cfg.gamma);
            if !out.losses.is_finite() || !total.is_finite() || total.abs() > cfg.divergence_threshold {
                let reason = format!("batch {it}: objective {total} with losses {:?}", out.losses);
                return Err(Error::Diverged { epoch, reason, history: Box::new(history) });
            }
            sums.classification += out.losses.classification;
            sums.cdan += out.losses.cdan;
            sums.mmsd += out.losses.mmsd;
            sums.aux += out.losses.aux;
            total_sum += total;

            let grads = out.grads;
            for g in ParamGroup::ALL {
                if active(g) {
                    let opt = optimizers.get_mut(&g).expect("every group has an optimizer");
                    opt.step(net.group_tensors_mut(g), grads.group_tensors(g), lr);
                }
            }
        }

        let n = iters as f64;
        let losses = TermLosses {
            classification: sums.classification / n,
            cdan: sums.cdan / n,
            mmsd: sums.mmsd / n,
            aux: sums.aux / n,
        };
        let target_probs = predict(&mut net, &target.features)?;
        counts = pseudo_counts(&target_probs);
        if cfg.use_weighting && epoch + 1 >= cfg.class_weight_warmup {
            omega_c = class_level_weights(target_probs.view())?;
        }
        let (val_bacc, val_f1) = match validation {
            Some(v) => {
                let (b, f) = score(&mut net, v)?;
                (Some(b), Some(f))
            }
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            lr,
            mu,
            losses,
            total: total_sum / n,
            omega_c: omega_c.iter().map(|v| v.as_f64()).collect(),
            val_bacc,
            val_f1,
        };
        debug!("epoch {epoch}: {:?}", record);
        history.records.push(record);
    }
    if let Some(r) = history.records.last() {
        info!("trained {} epochs, final objective {:.4}", cfg.epochs, r.total);
    }
    Ok((net, history))
}
