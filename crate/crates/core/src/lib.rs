//! Parametric signal detection analysis for trial-level discrimination data.
//!
//! The crate turns scored trials (an evidence value plus a correctness bit)
//! into confidence-rating ROCs, fits equal- and unequal-variance Gaussian
//! models by maximum likelihood, and layers bootstrap inference,
//! equivalence testing, trend tests and calibration metrics on top.
//! A synthetic-data engine generates trials from known parameters so every
//! estimator can be checked against ground truth.
//!
//! Module map:
//!
//! * [`ingest`]: trial files, answer normalisation and alias scoring
//! * [`roc`]: binning, corrected rating ROCs, trapezoidal AUC, z-ROC regression
//! * [`fit`]: UVSD / EVSD maximum likelihood, `d_a`, criterion, model comparison
//! * [`afc`]: m-alternative forced choice proportion correct <-> d'
//! * [`stats`]: bootstrap CIs, TOST, Spearman trends, Bland-Altman, calibration
//! * [`simulate`]: synthetic trials, equivalence bounds, recovery studies
//! * [`pipeline`], [`report`], [`config`]: batch analysis behind the CLI

pub mod afc;
pub mod config;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod normal;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod roc;
pub mod simulate;
pub mod stats;

pub use error::{Result, SdtError};
