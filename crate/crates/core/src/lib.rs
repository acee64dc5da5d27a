//! Continuously measured quantum dynamics of a driven double well, the
//! matched noisy classical system, and the chaos diagnostics used to compare
//! them.
//!
//! The potential is `V(x,t) = B x⁴ − A x² + Λ x cos ωt`. Quantum trajectories
//! are propagated on a uniform grid with a split-step spectral scheme and a
//! position-measurement update; classical trajectories use a leapfrog with
//! optional additive noise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod classical;
pub mod closure;
pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod output;
pub mod params;
pub mod quantum;
pub mod record;
pub mod regime;
pub mod rng;

pub use error::{Error, Result};
pub use grid::{init_gaussian, make_grid, Grid, Moments, WaveState};
pub use params::{MeasureParams, SystemParams};
pub use config::{parse_config, RunConfig};
pub use harness::{run, run_ensemble};
