//! Repeated runs of every method on one task, and the multi-task benchmark.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::catalog::ScenarioEntry;
use super::config::{DataSource, ExperimentConfig, Precision};
use crate::error::{Error, Result};
use crate::eval::{cd_diagram_svg, friedman_nemenyi, line_chart_svg, MetricsTable, RankSummary, ScoreMatrix, Series};
use crate::net::save_checkpoint;
use crate::pipeline::{build_scenario, read_dataset, split_dataset, DomainDataset};
use crate::synth::FaultType;
use crate::train::{fit_with_validation, score, Method, TrainHistory};
use crate::Float;

pub const REPORT_FORMAT: &str = "ptpai-report/1";
pub const BENCH_FORMAT: &str = "ptpai-bench/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Scores of one method in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatScore {
    pub method: Method,
    pub repeat: usize,
    pub seed: u64,
    pub b_accuracy: f64,
    pub f1: f64,
    /// Class weights after the last epoch.
    pub omega_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub b_accuracy: MeanStd,
    pub f1: MeanStd,
    pub repeats: Vec<RepeatScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub scenario: ScenarioEntry,
    /// SHA-256 over the resolved config and every input file.
    pub input_hash: String,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodSummary>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario {} (classes {}, rate {}), {} repeat(s)\n",
            self.scenario.name,
            self.scenario.target_classes.iter().map(|c| c.label()).collect::<Vec<_>>().join(","),
            self.scenario.balance_rate,
            self.config.repeats
        );
        out.push_str(&format!("{:<12} {:>18} {:>18}\n", "method", "b-accuracy", "F1"));
        for m in &self.methods {
            out.push_str(&format!(
                "{:<12} {:>9.4} ± {:<6.4} {:>9.4} ± {:<6.4}\n",
                m.method.name(),
                m.b_accuracy.mean,
                m.b_accuracy.std,
                m.f1.mean,
                m.f1.std
            ));
        }
        out.push_str(&format!("input hash {}\n", self.input_hash));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format: String,
    pub input_hash: String,
    pub config: ExperimentConfig,
    pub b_accuracy: MetricsTable,
    pub f1: MetricsTable,
    /// Present when there are at least three methods and two tasks.
    pub ranks: Option<RankSummary>,
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut out = self.b_accuracy.to_text();
        out.push('\n');
        out.push_str(&self.f1.to_text());
        if let Some(r) = &self.ranks {
            out.push_str("\naverage rank\n");
            for (m, rank) in self.b_accuracy.methods.iter().zip(&r.avg_ranks) {
                out.push_str(&format!("{m:<12} {rank:.4}\n"));
            }
            out.push_str(&format!("CD {:.4} (alpha {})\n", r.critical_difference, r.alpha));
        }
        out.push_str(&format!("input hash {}\n", self.input_hash));
        out
    }
}

fn hash_frame(h: &mut Sha256, name: &str, bytes: &[u8]) {
    h.update(format!("{name} {}\0", bytes.len()).as_bytes());
    h.update(bytes);
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io_at(path, e))
}

/// Content hash of the resolved config plus, for file inputs, each manifest and its blob.
pub fn input_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut h = Sha256::new();
    let json = serde_json::to_vec(cfg).map_err(|e| Error::Format(e.to_string()))?;
    hash_frame(&mut h, "config", &json);
    if let DataSource::Files { source, target } = &cfg.data {
        for (role, manifest) in [("source", source), ("target", target)] {
            let text = read_bytes(manifest)?;
            hash_frame(&mut h, role, &text);
            let m: crate::pipeline::DatasetManifest = toml::from_str(&String::from_utf8_lossy(&text))
                .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
            let blob = manifest.parent().unwrap_or(Path::new(".")).join(&m.data_file);
            hash_frame(&mut h, role, &read_bytes(&blob)?);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn load_domains<T: Float>(cfg: &ExperimentConfig, seed: u64) -> Result<(DomainDataset<T>, DomainDataset<T>)> {
    match &cfg.data {
        DataSource::Synthetic(desk) => {
            let d = desk.generate::<T>(seed)?;
            Ok((d.source, d.target_full))
        }
        DataSource::Files { source, target } => {
            let (s, _) = read_dataset::<T>(source)?;
            let (t, _) = read_dataset::<T>(target)?;
            Ok((s, t))
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io_at(path, e))
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn file_stem(method: Method) -> String {
    method.name().to_lowercase()
}

fn curves(histories: &[(Method, TrainHistory)], dir: &Path) -> Result<()> {
    let Some((method, h)) = histories.first() else { return Ok(()) };
    let pick = |f: fn(&crate::train::EpochRecord) -> f64| h.records.iter().map(f).collect::<Vec<_>>();
    let losses = [
        Series { name: "classification".into(), values: pick(|r| r.losses.classification) },
        Series { name: "adversarial".into(), values: pick(|r| r.losses.cdan) },
        Series { name: "discrepancy".into(), values: pick(|r| r.losses.mmsd) },
        Series { name: "auxiliary".into(), values: pick(|r| r.losses.aux) },
    ];
    write_file(&dir.join("losses.svg"), line_chart_svg(&format!("{} losses, repeat 0", method.name()), "epoch", &losses))?;
    let n_classes = h.records.first().map_or(0, |r| r.omega_c.len());
    let weights: Vec<Series> = (0..n_classes)
        .map(|c| Series {
            name: FaultType::from_class_id(c).map_or_else(|| c.to_string(), |f| f.label().to_string()),
            values: h.records.iter().map(|r| r.omega_c[c]).collect(),
        })
        .collect();
    write_file(&dir.join("weights.svg"), line_chart_svg(&format!("{} class weights, repeat 0", method.name()), "epoch", &weights))
}

fn run_scenario_typed<T: Float>(cfg: &ExperimentConfig, entry: &ScenarioEntry, dir: &Path, hash: &str) -> Result<RunReport> {
    let mut notes = Vec::new();
    let mut scores: Vec<RepeatScore> = Vec::new();
    let mut first_histories = Vec::new();
    for r in 0..cfg.repeats {
        let seed = cfg.seed + r as u64;
        let rdir = dir.join(format!("repeat-{r:02}"));
        fs::create_dir_all(&rdir).map_err(|e| Error::io_at(&rdir, e))?;
        let (source_full, target_full) = load_domains::<T>(cfg, seed)?;
        let (source_full, target) = build_scenario(&source_full, &target_full, &entry.scenario_config(seed))?;
        let source = split_dataset(&source_full, cfg.split, seed)?;
        let target = split_dataset(&target, cfg.split, seed ^ 0x7a26)?;
        for w in source.warnings.iter().chain(&target.warnings) {
            let note = format!("repeat {r}: {w}");
            warn!("{note}");
            notes.push(note);
        }
        let mut repeat_scores = Vec::new();
        for &method in &cfg.methods {
            let mut tcfg = method.configure(&cfg.train);
            tcfg.seed = cfg.train.seed.wrapping_add(seed);
            info!("{} repeat {r} (seed {seed}): {}", entry.name, method.name());
            let history_path = rdir.join(format!("{}.history.jsonl", file_stem(method)));
            let (mut net, history) = match fit_with_validation(&tcfg, &source.train, &target.train, Some(&target.val)) {
                Ok(v) => v,
                Err(Error::Diverged { epoch, reason, history }) => {
                    history.write(&history_path)?;
                    return Err(Error::Diverged { epoch, reason, history });
                }
                Err(e) => return Err(e),
            };
            history.write(&history_path)?;
            if cfg.save_checkpoints {
                save_checkpoint(&rdir.join(format!("{}.ckpt", file_stem(method))), &net)?;
            }
            let (b_accuracy, f1) = score(&mut net, &target.test)?;
            info!("  target test b-accuracy {b_accuracy:.4}, F1 {f1:.4}");
            let omega_c = history.final_omega_c().unwrap_or_default().to_vec();
            repeat_scores.push(RepeatScore { method, repeat: r, seed, b_accuracy, f1, omega_c });
            if r == 0 {
                first_histories.push((method, history));
            }
        }
        write_file(&rdir.join("scores.json"), to_json(&repeat_scores)?)?;
        scores.extend(repeat_scores);
    }
    curves(&first_histories, dir)?;
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let repeats: Vec<RepeatScore> = scores.iter().filter(|s| s.method == method).cloned().collect();
            let b: Vec<f64> = repeats.iter().map(|s| s.b_accuracy).collect();
            let f: Vec<f64> = repeats.iter().map(|s| s.f1).collect();
            MethodSummary { method, b_accuracy: MeanStd::of(&b), f1: MeanStd::of(&f), repeats }
        })
        .collect();
    let report = RunReport {
        format: REPORT_FORMAT.into(),
        scenario: entry.clone(),
        input_hash: hash.to_string(),
        config: cfg.clone(),
        methods,
        notes,
    };
    write_file(&dir.join("report.json"), to_json(&report)?)?;
    write_file(&dir.join("metrics.txt"), report.to_text())?;
    Ok(report)
}

fn run_entry(cfg: &ExperimentConfig, entry: &ScenarioEntry, dir: &Path, hash: &str) -> Result<RunReport> {
    match cfg.precision {
        Precision::F32 => run_scenario_typed::<f32>(cfg, entry, dir, hash),
        Precision::F64 => run_scenario_typed::<f64>(cfg, entry, dir, hash),
    }
}

/// Runs every method on the configured task, writing into
/// `output_dir/<scenario>/`. Artifacts of finished fits stay on disk when a
/// later fit fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let entry = cfg.resolve_scenario()?;
    let hash = input_hash(cfg)?;
    run_entry(cfg, &entry, &scenario_dir(cfg, &entry), &hash)
}

pub fn scenario_dir(cfg: &ExperimentConfig, entry: &ScenarioEntry) -> PathBuf {
    cfg.output_dir.join(&entry.name)
}

/// Runs every bench task and ranks the methods by mean target b-accuracy.
pub fn bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if cfg.bench_scenarios.is_empty() {
        return Err(Error::Config("bench_scenarios is empty".into()));
    }
    let hash = input_hash(cfg)?;
    let methods: Vec<String> = cfg.methods.iter().map(|m| m.name().to_string()).collect();
    let mut tasks = Vec::new();
    let mut bacc = Vec::new();
    let mut f1 = Vec::new();
    for name in &cfg.bench_scenarios {
        let entry = cfg.resolve_named(&super::config::ScenarioRef::Named(name.clone()))?;
        let report = run_entry(cfg, &entry, &cfg.output_dir.join(name), &hash)?;
        tasks.push(name.clone());
        bacc.push(report.methods.iter().map(|m| m.b_accuracy.mean).collect::<Vec<_>>());
        f1.push(report.methods.iter().map(|m| m.f1.mean).collect::<Vec<_>>());
    }
    let mut notes = Vec::new();
    let ranks = if methods.len() >= 3 && tasks.len() >= 2 {
        let flat: Vec<f64> = bacc.iter().flatten().copied().collect();
        let scores = Array2::from_shape_vec((tasks.len(), methods.len()), flat).map_err(|e| Error::Shape(e.to_string()))?;
        let sm = ScoreMatrix::new(methods.clone(), tasks.clone(), scores)?;
        let ranks = friedman_nemenyi(&sm, 0.05)?;
        write_file(&cfg.output_dir.join("cd.svg"), cd_diagram_svg(&methods, &ranks.avg_ranks, ranks.critical_difference))?;
        Some(ranks)
    } else {
        notes.push("ranking needs at least three methods and two tasks".into());
        None
    };
    let report = BenchReport {
        format: BENCH_FORMAT.into(),
        input_hash: hash,
        config: cfg.clone(),
        b_accuracy: MetricsTable { metric: "b-accuracy".into(), methods: methods.clone(), tasks: tasks.clone(), values: bacc },
        f1: MetricsTable { metric: "F1".into(), methods, tasks, values: f1 },
        ranks,
        notes,
    };
    write_file(&cfg.output_dir.join("bench.json"), to_json(&report)?)?;
    write_file(&cfg.output_dir.join("bench.txt"), report.to_text())?;
    Ok(report)
}
