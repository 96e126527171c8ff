//! Calibrated likelihood ratios for body-fluid mixtures from mRNA marker
//! profiles.
//!
//! The crate covers the whole chain: marker profiles and their ingestion
//! ([`profiles`]), stratified splitting and in-silico mixture generation
//! ([`augmentation`]), logistic score models under one-vs-rest and label
//! power-set strategies ([`classify`]), logistic calibration of scores into
//! likelihood ratios ([`calibrate`]), performance metrics ([`metrics`]),
//! per-case evaluation with per-marker contributions ([`casework`]) and the
//! seeded experiment runner ([`pipeline`]).
//!
//! H1 is "the sample contains at least one fluid of interest", H2 "it
//! contains none of them"; every LR reported here is P(E | H1) / P(E | H2).

pub mod augmentation;
pub mod calibrate;
pub mod casework;
pub mod classify;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod pipeline;
pub mod profiles;
pub mod seed;
pub mod system;

pub use error::{Error, ErrorKind, Result};
