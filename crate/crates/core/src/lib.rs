//! Saliency-guided sampling of dense trajectory features for action recognition.
//!
//! Frames go through Farnebäck flow, multi-scale dense tracking and
//! HOG/HOF/MBH description. Object and motion boundaries score box proposals
//! whose votes form per-frame saliency maps, which decide the trajectories
//! kept for Fisher-vector encoding and one-vs-rest linear SVM training.

pub mod classifier;
pub mod descriptors;
pub mod encoding;
pub mod error;
pub mod harness;
pub mod imgproc;
pub mod media_io;
pub mod optical_flow;
pub mod pipeline;
pub mod proposals;
pub mod rng;
pub mod saliency;
pub mod trajectories;

pub use error::{Error, Result};
