//! Desk-scale simulator and evaluation suite for semantic audio-visual
//! navigation in continuous 2-D environments.
//!
//! The crate is organised bottom-up: [`geometry`] holds floorplans and the
//! action model, [`acoustics`] renders binaural audio, [`env`] runs episodes,
//! [`dataset`] generates them, [`descriptor`] estimates and tracks goals,
//! [`agents`] closes the loop and [`metrics`] scores the results.

pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod acoustics;
pub mod agents;
pub mod cli;
pub mod dataset;
pub mod descriptor;
pub mod env;
pub mod metrics;
pub mod runner;
pub mod seed;
