//! Easy-versus-hard routing of images between a fast and an accurate face
//! detector.
//!
//! Each image is scored by a splitting criterion (an external difficulty
//! predictor, or the count / size of faces found by the fast detector). Easy
//! images keep the fast detector's answer, hard ones go to the slow one. The
//! split point trades accuracy for time on a continuous scale; [`eval`]
//! measures the accuracy side and [`router::compute_cost`] the time side.

pub mod detectors;
pub mod difficulty;
pub mod error;
pub mod eval;
pub mod harness;
pub mod keyed;
pub mod model;
pub mod router;

pub use error::{Error, Result};
