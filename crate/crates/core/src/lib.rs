//! Joint detection and lineage tracking of dividing cells.
//!
//! Segmentation masks are turned into hierarchies of conflicting ellipse
//! hypotheses ([`hypothesis`]), linked into a spatio-temporal graph
//! ([`graph`]) and resolved by a single binary-flow integer program
//! ([`ilp`]) whose weights come from event classifiers ([`events`]). The
//! optimal flow is decoded into a lineage forest ([`lineage`]) and scored
//! with [`metrics`]. [`synth`] generates test sequences with ground truth.

pub mod error;
pub mod events;
pub mod geometry;
pub mod graph;
pub mod hypothesis;
pub mod ilp;
pub mod lineage;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod testkit;

pub use error::{Error, Result};
