//! Cross-domain CutMix and intra-domain MixUp for labeled LiDAR frames.
//!
//! The crate covers the full two-stage data recipe for semi-supervised domain
//! adaptation of 3D detectors:
//!
//! - [`dataset`]: labeled/unlabeled splits by frame stride, detection-range cropping.
//! - [`geom`]: BEV range, rotation, rectangle membership, box collision (SAT plus a
//!   polygon-clipping oracle).
//! - [`cutmix`]: stage one, range-matched region mixing of source and labeled target frames.
//! - [`mixup`]: stage two, density-preserving mixing of real- and pseudo-labeled target frames.
//! - [`augment`]: world flip/rotate/scale, intensity normalisation, GT database and GT sampling.
//! - [`synth`]: synthetic 64-beam / 32-beam scans of shared cuboid scenes.
//! - [`eval`]: centre-distance AP over {0.5, 1, 2, 4} m and the closed-gap statistic.
//! - [`io`]: cloud, label, manifest and GT-database files.
//! - [`pipeline`]: the dataset-generation stages behind the `pointmix` binary.

pub mod augment;
pub mod cutmix;
pub mod dataset;
pub mod eval;
pub mod error;
pub mod geom;
pub mod io;
pub mod mixup;
pub mod pipeline;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Box3D, DatasetManifest, Domain, Emission, Frame, FrameSource, LabeledBox, ManifestEntry, Point,
    PointCloud, Provenance, Seed, SplitTag,
};
