//! Repairs missing ship attributes (main-engine power, ship type,
//! navigational status) from AIS movement traces and estimates maritime
//! exhaust emissions with a speed-cubed transient power model.
//!
//! Pipeline shape: `ingest` raw AIS CSV -> `regularize` onto a fixed time
//! grid with movement features -> `window` into (frame, history) instances
//! -> `crbm` encodes each instance into hidden-unit activations ->
//! `learners` predict the missing attributes or cluster behaviors ->
//! `emissions` turns attributed traces into per-pollutant gram estimates.
//! `synth` generates a deterministic toy fleet for end-to-end validation.

pub mod bathy;
pub mod crbm;
pub mod emissions;
pub mod error;
pub mod ingest;
pub mod learners;
pub mod regularize;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
