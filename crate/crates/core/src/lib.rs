//! Training-free transferability estimation for segmentation encoders.
//!
//! Each candidate encoder is scored from frozen feature dumps and the target
//! labels alone:
//!
//! * [`grtd`] compares the minimum spanning tree of decoder features with the
//!   tree induced by the labels (global structure);
//! * [`lbtc`] measures how often local feature trees around label boundaries
//!   cross between classes (boundary structure);
//! * [`fusion`] blends both with a gate driven by the number of classes.
//!
//! [`rank`] evaluates a ranking against fine-tuned Dice and [`synth`] builds
//! zoos with a known quality order for end-to-end checks.

pub mod cli;
pub mod engine;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod grtd;
pub mod ingest;
pub mod lbtc;
pub mod output;
pub mod rank;
pub mod sampling;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
