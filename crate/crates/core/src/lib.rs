//! Black-box size/shape/position patch attacks against thermal person detectors.
//!
//! A [`grid::Genome`] describes `m` nine-square-grid patches of one block
//! intensity sharing a 3x3 shape. The [`compositor`] draws it onto every
//! person of a scene, a [`detector::Detector`] scores the result, and the
//! [`optimizer`] searches shape and positions with a particle swarm to drive
//! the persons' object probability down while penalizing area growth.

pub mod baselines;
pub mod compositor;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod grid;
pub mod image;
pub mod metrics;
pub mod objective;
pub mod optimizer;

pub use error::{Category, Error, Result};
