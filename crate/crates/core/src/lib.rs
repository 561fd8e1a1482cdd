//! Frame-dataset preparation and leakage auditing for classifiers trained on
//! frames extracted from clinical videos.
//!
//! The crate covers the whole path from a raw folder of frame images to the
//! statistics that show how much a leaky split inflates reported metrics:
//!
//! - [`manifest`]: the dataset registry and its text format
//! - [`imaging`]: Laplacian variance, Shannon entropy, circular crop, average hash
//! - [`pipeline`]: trim, score, quality-filter and crop frames
//! - [`splitting`]: naive frame-level and patient-grouped train/test splits
//! - [`audit`]: patient/video overlap, adjacent-frame and near-duplicate detection
//! - [`evaluation`]: confusion matrix, per-class metrics, MCC, one-vs-rest AUC
//! - [`stats`]: two-factor ANOVA with replication and the F distribution
//! - [`synth`]: synthetic video datasets and a nearest-neighbour probe
//! - [`cli`]: the `otopipe` command line

pub mod audit;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod manifest;
pub mod pipeline;
pub mod rng;
pub mod splitting;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
