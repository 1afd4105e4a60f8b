//! Multi-view articulated mesh fitting for markerless motion capture.
//!
//! A template mesh with a kinematic tree is posed by linear blend skinning
//! and fitted to multi-camera keypoints and silhouettes by staged Adam
//! optimization. See the README for the command-line workflow.

pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod render;
pub mod solve;
pub mod synth;

pub use error::{Error, Result};
