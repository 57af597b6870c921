//! Named transfer tasks: which health states survive in the target and how
//! scarce the faults are.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ScenarioConfig;
use crate::synth::FaultType;

/// Healthy-class size of the full-scale tasks.
pub const RECORDED_HEALTHY: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Drive-end rig recorded at 12 kHz.
    Cwru,
    /// Roller-bearing rig recorded at 50 kHz.
    Jnu,
    /// Self-contained synthetic benchmark.
    Desk,
}

impl Family {
    fn prefix(self) -> &'static str {
        match self {
            Family::Cwru => "C",
            Family::Jnu => "J",
            Family::Desk => "D",
        }
    }
}

/// Target class subsets of the seven tasks, in task order.
pub fn task_classes(task: usize) -> Option<Vec<FaultType>> {
    use FaultType::*;
    let classes = match task {
        1 => vec![Nc, Irf, Bf, Orf],
        2 => vec![Nc, Irf, Bf],
        3 => vec![Nc, Bf, Orf],
        4 => vec![Nc, Irf],
        5 => vec![Nc, Orf],
        6 => vec![Irf],
        7 => vec![Bf],
        _ => return None,
    };
    Some(classes)
}

/// The four balance rates of every task, with their name suffixes.
pub const RATES: [(&str, f64); 4] = [("complete", 1.0), ("10pct", 0.10), ("5pct", 0.05), ("1pct", 0.01)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub name: String,
    pub family: Family,
    pub task: usize,
    pub target_classes: Vec<FaultType>,
    pub balance_rate: f64,
    /// Healthy rows the task is specified for.
    pub healthy: usize,
}

impl ScenarioEntry {
    fn new(family: Family, task: usize, rate: (&str, f64), healthy: usize) -> Self {
        Self {
            name: format!("{}{task}-{}", family.prefix(), rate.0),
            family,
            task,
            target_classes: task_classes(task).expect("tasks 1..=7"),
            balance_rate: rate.1,
            healthy,
        }
    }

    /// Rows per target fault class at the entry's healthy size.
    pub fn fault_rows(&self) -> usize {
        self.scenario_config(0).fault_count(self.healthy)
    }

    pub fn scenario_config(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            target_classes: self.target_classes.iter().map(|c| c.class_id()).collect(),
            balance_rate: self.balance_rate,
            healthy_class: FaultType::Nc.class_id(),
            seed,
        }
    }
}

/// Short names of the desk variants that the benchmark runs by default.
pub const BENCH_ALIASES: [(&str, &str); 4] = [
    ("bench-complete", "D1-complete"),
    ("bench-partial-10pct", "D2-10pct"),
    ("bench-partial-5pct", "D2-5pct"),
    ("bench-partial-1pct", "D2-1pct"),
];

/// Every task of both datasets plus the desk-scale variants.
pub fn catalog(desk_healthy: usize) -> Vec<ScenarioEntry> {
    let mut out = Vec::with_capacity(3 * 28);
    for (family, healthy) in [(Family::Cwru, RECORDED_HEALTHY), (Family::Jnu, RECORDED_HEALTHY), (Family::Desk, desk_healthy)] {
        for task in 1..=7 {
            for rate in RATES {
                out.push(ScenarioEntry::new(family, task, rate, healthy));
            }
        }
    }
    out
}

/// Looks up a task by name (case-insensitive) or by one of the bench aliases.
pub fn find(name: &str, desk_healthy: usize) -> Result<ScenarioEntry> {
    let key = BENCH_ALIASES
        .iter()
        .find(|(alias, _)| alias.eq_ignore_ascii_case(name))
        .map_or(name, |(_, target)| target);
    catalog(desk_healthy)
        .into_iter()
        .find(|e| e.name.eq_ignore_ascii_case(key))
        .ok_or_else(|| Error::Config(format!("unknown scenario `{name}`; run list-scenarios for the catalog")))
}

/// Plain-text catalog table.
pub fn render_catalog(desk_healthy: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:<6} {:<16} {:>8} {:>8} {:>12}", "scenario", "family", "target classes", "rate", "healthy", "per fault");
    for e in catalog(desk_healthy) {
        let classes: Vec<&str> = e.target_classes.iter().map(|c| c.label()).collect();
        let _ = writeln!(
            out,
            "{:<14} {:<6} {:<16} {:>7}% {:>8} {:>12}",
            e.name,
            format!("{:?}", e.family).to_lowercase(),
            classes.join(","),
            e.balance_rate * 100.0,
            e.healthy,
            e.fault_rows()
        );
    }
    let _ = writeln!(out);
    for (alias, target) in BENCH_ALIASES {
        let _ = writeln!(out, "{alias:<20} = {target}");
    }
    out
}
