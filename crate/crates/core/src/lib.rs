//! Desk-scale multi-spectral re-identification laboratory.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod normalization;
pub mod numkit;
pub mod training;

pub use error::{Error, Result};
