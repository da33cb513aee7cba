//! Simulation of hybrid Boolean network physically unclonable functions.
//!
//! Networks of XOR nodes with noisy first-order dynamics and delayed, thresholded
//! inputs are integrated with forward Euler; ensembles of classes, instances,
//! challenges and noise repeats produce a packed response tensor from which
//! uniqueness, reliability and the optimal readout time are computed.
//!
//! Modules follow the pipeline: [`topology`] and [`params`] draw a network and
//! its manufacturing variation, [`dynamics`] integrates one trajectory,
//! [`ensemble`] builds datasets, [`stats`] and [`fit`] analyse them, and [`io`]
//! and [`cli`] handle files and the command line.

pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod io;
pub mod params;
pub mod rng;
pub mod stats;
pub mod topology;

pub use error::{Error, Result};
