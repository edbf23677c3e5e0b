//! Perceived-safety-aware vehicle trajectory prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`scene`]: CSV ingestion, scene windows, missing-frame variants and repair.
//! - [`safety`]: time-to-collision family and the SPR/DRV risk tendency pair.
//! - [`graph`]: per-frame proximity graphs, six centralities, BMI/BTI/BCI.
//! - [`nn`]: a small reverse-mode autodiff tape and the layers the model uses.
//! - [`model`]: featurization, the three encoders, fusion block, mixture
//!   decoder, loss and training loop.
//! - [`eval`]: per-horizon RMSE, missing-data evaluation and plot output.
//! - [`synth`]: synthetic scene corpora.
//! - [`cli`]: the command implementations behind the `cognitraj` binary.

pub mod cli;
pub mod eval;
pub mod geom;
pub mod graph;
pub mod model;
pub mod nn;
pub mod safety;
pub mod scene;
pub mod synth;
pub mod util;

pub use geom::Vec2;
