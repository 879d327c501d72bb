//! Wave-based reservoir computing in a 2D acoustic cavity doped with
//! tunable nonlinear meta-scatterers.
//!
//! The crate is organised the way a run flows:
//!
//! * [`wavefield`]: the FDTD solver that plays the role of the reservoir;
//! * [`scatterers`]: the nonlinear feedback law and harmonic analysis;
//! * [`encoding`]: turning task inputs into source waveforms;
//! * [`readout`]: Fourier features, normalisation, PCA and the linear models;
//! * [`benchmarks`]: the regression, vowel and memory experiments;
//! * [`config`], [`io`] and [`manifest`]: configuration and artifacts.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod config;
pub mod encoding;
pub mod error;
pub mod io;
pub mod manifest;
pub mod readout;
pub mod scatterers;
pub mod wavefield;

pub use benchmarks::report::BenchmarkReport;
pub use config::RunConfig;
pub use error::{Error, InstabilityKind, Result};
pub use manifest::{ArtifactWriter, RunManifest};
pub use scatterers::{feedback, HarmonicPhasors, PowerLaw, ScattererSpec};
pub use wavefield::{
    derive_timestep, run, CavitySpec, Cell, Medium, ProbeRecord, ProbeSpec, ReservoirState, SourceSpec, Waveform,
};
