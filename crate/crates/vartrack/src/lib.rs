//! Signal-level multi-object tracking for multi-sensor MIMO radar.
//!
//! The crate simulates raw matched-filtered radar snapshots from ground-truth
//! scenes, runs joint detection/tracking directly on those snapshots with a
//! mean-field variational message passing engine fusing all radar nodes, and
//! scores the result with the OSPA metric.
//!
//! Modules:
//! - [`config`]: the single table of physical and algorithmic constants.
//! - [`signal`]: steering vectors, matched-filter spectra, snapshot synthesis.
//! - [`scenario`]: ground-truth trajectories, RCS fluctuation, benchmark scenes.
//! - [`beliefs`]: Gaussian/Gamma/Bernoulli belief types and state-message algebra.
//! - [`engine`]: the per-step variational update schedule, track initiation and
//!   pruning.
//! - [`bus`]: the inter-node exchange abstraction with a binary wire codec.
//! - [`eval`]: OSPA scoring and Monte-Carlo aggregation.

pub mod beliefs;
pub mod bus;
pub mod config;
pub mod engine;
pub mod eval;
pub mod scenario;
pub mod signal;

pub use config::ModelConfig;

/// Kinematic state of one object: (x, y, v_x, v_y) in meters and meters/second.
pub type ObjectState = nalgebra::Vector4<f64>;

