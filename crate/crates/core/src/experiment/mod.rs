//! Reproducible experiments: the task catalog, the synthetic benchmark data,
//! configuration loading and the run and bench drivers.

pub mod catalog;
pub mod config;
pub mod desk;
pub mod run;

pub use catalog::{catalog, find, render_catalog, Family, ScenarioEntry};
pub use config::{desk_train, DataSource, ExperimentConfig, Precision, ScenarioRef};
pub use desk::{DeskData, DomainRecipe};
pub use run::{bench, input_hash, run_experiment, BenchReport, MeanStd, RepeatScore, RunReport};
