//! Dataset harmonization and model evaluation for multi-label recognition
//! of reinforced-concrete damage.
//!
//! - [`taxonomy`]: the six unified classes and per-dataset label remapping
//! - [`metabuilder`] / [`split`]: meta dataset compilation, statistics and
//!   label-stratified splits
//! - [`oversampler`]: std-reducing multi-label oversampling
//! - [`augment`]: preprocessing and the flip / TrivialAugment / erase pipeline
//! - [`metrics`]: Exact Match Ratio, classwise Recall, crop-size sweeps
//! - [`featurespace`]: exact t-SNE over bottleneck features and silhouette
//!   scoring
//! - [`config`], [`plot`]: training-config emission and SVG figures
//!
//! All randomness comes from [`rng::SplitMix64`] seeded explicitly.

pub mod augment;
pub mod config;
pub mod error;
pub mod featurespace;
pub mod manifest;
pub mod metabuilder;
pub mod metrics;
pub mod oversampler;
pub mod plot;
pub mod rng;
pub mod split;
pub mod taxonomy;

pub use error::{Error, Result};
pub use manifest::{DatasetManifest, SampleRecord, Split};
pub use taxonomy::{Dataset, LabelVector, UnifiedClass};
