//! Assurance machinery for a perception function built from two dissimilar
//! detection channels guarded by a runtime safety monitor.
//!
//! The crate is organised by stage:
//!
//! - [`geometry`]: axis-aligned boxes and Intersection-over-Union.
//! - [`channels`]: per-frame detection records, fixture ingestion and seeded synthesis.
//! - [`monitor`]: the pass/inhibit voter and availability accounting.
//! - [`calibration`]: Beta fitting, regularized incomplete beta, threshold selection.
//! - [`evaluation`]: precision/recall curves and average precision for one channel.
//! - [`datatrace`]: requirement catalogs, dataset manifests, traceability and independence.
//! - [`compliance`]: certification objectives catalog, architecture assertions, report.
//! - [`pipeline`]: the end-to-end run that ties the stages together.

pub mod calibration;
pub mod channels;
pub mod compliance;
pub mod datatrace;
mod error;
pub mod evaluation;
pub mod geometry;
pub mod monitor;
pub mod pipeline;

pub use error::{Error, Result};
