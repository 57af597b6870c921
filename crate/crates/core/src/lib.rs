//! Partial-set transfer learning for bearing fault diagnosis from
//! physics-informed synthetic vibration data.
//!
//! The crate covers the whole path from signal simulation to statistics:
//!
//! * [`synth`] simulates faulty vibration by injecting periodic impacts into healthy noise.
//! * [`pipeline`] turns recordings into envelope-spectrum datasets and carves out partial, imbalanced target sets.
//! * [`net`] holds the 1-D CNN, its heads and the checkpoint format.
//! * [`gap`] measures the domain discrepancy and [`mix`] blends target features for the adversary.
//! * [`weights`] derives the class and instance weights for partial-set transfer.
//! * [`train`] runs the min-max optimization; [`eval`] scores and ranks methods.
//! * [`experiment`] ties everything into reproducible runs and reports.
//!
//! Numeric code is generic over [`Float`] (`f32` or `f64`).

pub mod error;
pub mod eval;
pub mod experiment;
pub mod gap;
pub mod mix;
pub mod net;
pub mod pipeline;
pub mod rng;
mod scalar;
pub mod synth;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Float;

/// Single-precision network used for training runs.
pub type NetParamsF32 = net::NetParams<f32>;
/// Double-precision network used for gradient audits.
pub type NetParamsF64 = net::NetParams<f64>;
pub type DatasetF32 = pipeline::DomainDataset<f32>;
pub type DatasetF64 = pipeline::DomainDataset<f64>;
pub type SignalF32 = synth::VibrationSignal<f32>;
pub type SignalF64 = synth::VibrationSignal<f64>;
