//! Parameter-space exploration for a seeded stochastic loose-packing model.
//!
//! The crate is organised the way an experiment flows:
//!
//! * [`recipe`] describes the packing problem and its tunable parameters.
//! * [`sampler`] turns a recipe plus parameter specifications into an N×R job matrix.
//! * [`engine`] runs one deterministic packing per (assignment, seed).
//! * [`metrics`] and [`density`] reduce outputs to run-level summaries and
//!   probabilistic occupancy volumes.
//! * [`xfilter`] answers AND-combined filter and histogram queries over runs.
//! * [`store`] and [`runner`] persist and execute experiments on disk.
//!
//! Batch work (job matrices, voxelization, filter scans) is data-parallel when
//! the `parallel` feature is enabled and falls back to sequential loops
//! otherwise; results are identical either way.

pub mod canonical;
pub mod density;
pub mod engine;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod par;
pub mod params;
pub mod recipe;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod stats;
pub mod store;
pub mod ticks;
pub mod xfilter;

pub use error::{Error, Result};
