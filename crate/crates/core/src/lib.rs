//! Toolkit for the neutrino-precession correction to the measured muon
//! anomalous magnetic moment.
//!
//! Modules, bottom-up:
//! - [`constants`]: configuration-backed constants with provenance
//! - [`relkin`]: boosts and the angular-momentum tensor
//! - [`precession`]: spin precession and the moment-transfer identity
//! - [`decaygen`]: polarized muon decay Monte Carlo and lab spectra
//! - [`anomaly`]: `δa_μ = C·f`, window averages, comparison table
//! - [`wigglefit`]: synthetic wiggle data and the five-parameter fit
//! - [`cli`]: the `mug2` command line

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod cli;
pub mod constants;
pub mod decaygen;
pub mod error;
pub mod numeric;
pub mod output;
pub mod precession;
pub mod relkin;
pub mod rng;
pub mod weighting;
pub mod wigglefit;

pub use error::{Error, Result};
