//! Deep clustering of volumetric scans on dense U-Net features.
//!
//! A 3-D U-Net is trained without labels by alternating two phases each
//! epoch: k-means on lung-pooled features assigns pseudo-labels, then a
//! freshly initialized 1x1x1 classifier head and the network are trained on
//! those labels. Because the features are dense, applying the head at every
//! voxel yields full-resolution cluster activation maps.

pub mod cli;
pub mod clustering;
pub mod dcam;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod volume;

pub use error::{Error, Result};
