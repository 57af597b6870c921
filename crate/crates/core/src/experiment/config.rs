//! Experiment configuration: a TOML file layered over a preset, then dotted
//! `key=value` overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::catalog::{self, Family, ScenarioEntry, BENCH_ALIASES, RECORDED_HEALTHY};
use super::desk::DeskData;
use crate::error::{Error, Result};
use crate::pipeline::SplitRatios;
use crate::synth::FaultType;
use crate::train::{Method, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// A catalog name, or an explicit class subset and balance rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline {
        #[serde(default = "inline_name")]
        name: String,
        target_classes: Vec<FaultType>,
        balance_rate: f64,
    },
}

fn inline_name() -> String {
    "custom".into()
}

impl ScenarioRef {
    pub fn name(&self) -> &str {
        match self {
            ScenarioRef::Named(n) | ScenarioRef::Inline { name: n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Both domains simulated from the recipe.
    Synthetic(DeskData),
    /// Dataset manifests written by `generate` or `prepare`. The target must
    /// carry labels or sealed labels so that tasks can be cut from it.
    Files { source: PathBuf, target: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioRef,
    /// Repeat `r` runs with seed `seed + r`.
    pub repeats: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub precision: Precision,
    pub split: SplitRatios,
    pub save_checkpoints: bool,
    /// Tasks that `bench` runs, in table order.
    pub bench_scenarios: Vec<String>,
    pub data: DataSource,
    pub train: TrainConfig,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

/// Training settings sized for the synthetic benchmark on one CPU core.
pub fn desk_train() -> TrainConfig {
    TrainConfig { epochs: 20, batch_per_domain: 32, mu_warmup: true, class_weight_warmup: 12, ..TrainConfig::default() }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioRef::Named("bench-partial-10pct".into()),
            repeats: 10,
            seed: 0,
            methods: Method::ALL.to_vec(),
            precision: Precision::F32,
            split: SplitRatios::default(),
            save_checkpoints: true,
            bench_scenarios: BENCH_ALIASES.iter().map(|(alias, _)| alias.to_string()).collect(),
            data: DataSource::Synthetic(DeskData::default()),
            train: desk_train(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Preset for a scenario name: desk tasks get the synthetic benchmark,
    /// tasks of the recorded datasets get the full training schedule and
    /// expect prepared dataset files.
    pub fn for_scenario(name: &str) -> Self {
        let base = Self { scenario: ScenarioRef::Named(name.into()), ..Self::default() };
        match catalog::find(name, base.desk_healthy()) {
            Ok(e) if e.family != Family::Desk => Self {
                data: DataSource::Files {
                    source: PathBuf::from("data/source.manifest.toml"),
                    target: PathBuf::from("data/target.manifest.toml"),
                },
                train: TrainConfig::default(),
                ..base
            },
            _ => base,
        }
    }

    fn desk_healthy(&self) -> usize {
        match &self.data {
            DataSource::Synthetic(d) => d.target.per_class,
            DataSource::Files { .. } => RECORDED_HEALTHY,
        }
    }

    /// The catalog entry, or an ad hoc entry for an inline scenario.
    pub fn resolve_scenario(&self) -> Result<ScenarioEntry> {
        self.resolve_named(&self.scenario)
    }

    pub fn resolve_named(&self, scenario: &ScenarioRef) -> Result<ScenarioEntry> {
        match scenario {
            ScenarioRef::Named(n) => catalog::find(n, self.desk_healthy()),
            ScenarioRef::Inline { name, target_classes, balance_rate } => Ok(ScenarioEntry {
                name: name.clone(),
                family: Family::Desk,
                task: 0,
                target_classes: target_classes.clone(),
                balance_rate: *balance_rate,
                healthy: self.desk_healthy(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods are listed more than once".into()));
        }
        self.train.validate()?;
        let e = self.resolve_scenario()?;
        e.scenario_config(0).validate(FaultType::ALL.len())?;
        for name in &self.bench_scenarios {
            catalog::find(name, self.desk_healthy())?;
        }
        if let DataSource::Files { source, target } = &self.data {
            for p in [source, target] {
                if !p.is_file() {
                    return Err(Error::FileNotFound(p.clone()));
                }
            }
        }
        Ok(())
    }

    /// Resolves a configuration. `scenario` (from the command line) wins over
    /// the file's scenario, which wins over the default; the chosen scenario
    /// picks the preset that the file and then `overrides` are merged into.
    pub fn load(path: Option<&Path>, scenario: Option<&str>, overrides: &[String]) -> Result<Self> {
        let file: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io_at(p, e))?;
                // typed parse first so that errors carry the line and field
                toml::from_str::<ExperimentConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let mut parsed_overrides = Vec::with_capacity(overrides.len());
        for o in overrides {
            parsed_overrides.push(parse_override(o)?);
        }
        let name = scenario
            .map(str::to_string)
            .or_else(|| {
                parsed_overrides.iter().rev().find(|(k, _)| k == "scenario").and_then(|(_, v)| v.as_str().map(String::from))
            })
            .or_else(|| file.get("scenario").and_then(|v| v.as_str()).map(String::from))
            .unwrap_or_else(|| Self::default().scenario.name().to_string());

        let preset = Self::for_scenario(&name);
        let output_dir = preset.output_dir.clone();
        let mut merged = toml::Table::try_from(&preset).map_err(|e| Error::Config(e.to_string()))?;
        merged.insert("output_dir".into(), toml::Value::String(output_dir.display().to_string()));
        merge(&mut merged, file);
        for (key, value) in parsed_overrides {
            set_path(&mut merged, &key, value)?;
        }
        if let Some(s) = scenario {
            merged.insert("scenario".into(), toml::Value::String(s.into()));
        }
        let cfg: ExperimentConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {}", e.message())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Recursively overlays `top` on `base`; tables merge, everything else replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Splits `a.b.c=value`; the value is read as a TOML literal and falls back
/// to a bare string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{text}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{text}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn bare_scenario_name_is_runnable() {
        let cfg = ExperimentConfig::load(None, Some("bench-partial-10pct"), &[]).unwrap();
        assert_eq!(cfg.repeats, 10);
        assert_eq!(cfg.methods.len(), 6);
        assert!(matches!(cfg.data, DataSource::Synthetic(_)));
        let e = cfg.resolve_scenario().unwrap();
        assert_eq!(e.target_classes, vec![FaultType::Nc, FaultType::Irf, FaultType::Bf]);
        cfg.validate().unwrap();
    }

    #[test]
    fn recorded_tasks_get_the_full_schedule() {
        let cfg = ExperimentConfig::for_scenario("C1-complete");
        assert_eq!(cfg.train, TrainConfig::default());
        assert!(matches!(cfg.data, DataSource::Files { .. }));
        assert!(matches!(cfg.validate(), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let sets = ["train.epochs=3", "repeats=2", "data.target.band=[900.0, 5000.0]", "methods=[\"PTPAI\", \"PAIR\"]"];
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        let cfg = ExperimentConfig::load(None, None, &sets).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_per_domain, desk_train().batch_per_domain);
        assert_eq!(cfg.repeats, 2);
        assert_eq!(cfg.methods, vec![Method::Ptpai, Method::Pair]);
        match cfg.data {
            DataSource::Synthetic(d) => assert_eq!(d.target.band, (900.0, 5000.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bare_words_become_strings() {
        let (k, v) = parse_override("scenario=D4-5pct").unwrap();
        assert_eq!((k.as_str(), v.as_str()), ("scenario", Some("D4-5pct")));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
        let cfg = ExperimentConfig::load(None, None, &["scenario=D4-5pct".into()]).unwrap();
        assert_eq!(cfg.scenario.name(), "D4-5pct");
    }

    #[test]
    fn file_values_merge_over_the_preset() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "repeats = 1\n[train]\nepochs = 2\n[train.kernel]\nbandwidths = [1.0]").unwrap();
        let cfg = ExperimentConfig::load(Some(f.path()), None, &["train.seed=4".into()]).unwrap();
        assert_eq!((cfg.repeats, cfg.train.epochs, cfg.train.seed), (1, 2, 4));
        assert_eq!(cfg.train.kernel.bandwidths, vec![1.0]);
        assert_eq!(cfg.train.batch_per_domain, 32);
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "repeats = 1\nepohcs = 2").unwrap();
        let msg = ExperimentConfig::load(Some(f.path()), None, &[]).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("epohcs"), "{msg}");

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[train]\nepochs = \"many\"").unwrap();
        let msg = ExperimentConfig::load(Some(f.path()), None, &[]).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn inline_scenarios_and_validation() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[scenario]\ntarget_classes = [\"NC\", \"ORF\"]\nbalance_rate = 0.05").unwrap();
        let cfg = ExperimentConfig::load(Some(f.path()), None, &[]).unwrap();
        let e = cfg.resolve_scenario().unwrap();
        assert_eq!((e.name.as_str(), e.target_classes.len()), ("custom", 2));
        cfg.validate().unwrap();
        let zero = ExperimentConfig { repeats: 0, ..cfg.clone() };
        assert!(zero.validate().is_err());
        let twice = ExperimentConfig { methods: vec![Method::Ptpai, Method::Ptpai], ..cfg };
        assert!(twice.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
