//! Off-grid weather forecasting at station locations.
//!
//! Gridded large-scale weather series (reanalysis or forecast products) are
//! corrected toward local station observations: per-station-token transformer,
//! message passing on a heterogeneous station/grid graph, an MLP baseline,
//! plus persistence/interpolation references, metrics, and a training loop —
//! all on a small self-contained f64 reverse-mode engine.

pub mod data;
pub mod models;
pub mod synth;
pub mod diff;
pub mod error;
pub mod geometry;

pub use error::{Error, Result};
