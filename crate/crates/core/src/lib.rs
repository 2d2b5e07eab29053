//! Reward-guided wide-magnitude data augmentation for multi-domain image
//! classification, with a desk-scale training and evaluation harness.
//!
//! The crate is organized around the training procedure it implements:
//!
//! - [`imaging`] — pixel kernels (warps, blending, histogram ops) every
//!   augmentation is built from;
//! - [`augment`] — the fourteen-transform inventory with Default/Wide/Wider
//!   magnitude ranges, uniform sampling, and the weak/wider pipelines;
//! - [`model`] — a small dense classifier with analytic gradients, Adam, and
//!   EMA shadow parameters;
//! - [`selection`] — the diversity/consistency reward, the weak-vs-wider
//!   per-sample selection rule, and the two-phase minibatch step;
//! - [`data`] — synthetic multi-domain shape datasets;
//! - [`train`] — the seeded training loop with checkpoint selection;
//! - [`metrics`] — affinity/diversity analytics, rejection-rate series, and
//!   the leave-one-out evaluation protocol;
//! - [`harness`] — experiment configuration, run orchestration, sweeps,
//!   report emission, and step benchmarking.
//!
//! With the `parallel` feature (default) per-sample work inside a step and
//! independent runs fan out over rayon; the sequential fallback produces
//! bit-identical outputs.

pub mod augment;
pub mod data;
pub mod error;
pub mod exec;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod selection;
pub mod train;

pub use error::{Error, Result};
