//! Steganographer identification: simulate actors sending JPEG images,
//! some of them carrying batch-embedded payloads, and find the guilty
//! actors from JPEG-domain features without training data.
//!
//! The pipeline, module by module:
//!
//! * [`dctdomain`]: luminance JPEG compression, calibration, synthetic covers.
//! * [`embedsim`]: payload allocation across a batch and nsF5 change simulation.
//! * [`features`]: PEV-274 and LI-250 feature vectors.
//! * [`setdist`]: normalization and distances between sets of feature vectors.
//! * [`cluster`], [`outlier`]: agglomerative clustering and LOF detectors.
//! * [`ensemble`]: crop-voting and feature-subsampling ensembles.
//! * [`project`]: linear feature projections.
//! * [`bench`]: seeded multi-actor trials and reports.
//! * [`formats`]: on-disk formats.

pub mod bench;
pub mod cluster;
pub mod dctdomain;
pub mod embedsim;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod formats;
pub mod outlier;
pub mod project;
pub mod seeds;
pub mod setdist;

pub use error::{Error, Result};
