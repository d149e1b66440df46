//! Simulation, architecture search, and one-shot federated distillation of
//! variational quantum convolutional classifiers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod complexity;
pub mod config;
pub mod data;
pub mod encode;
pub mod error;
pub mod federation;
pub mod model;
pub mod pso;
pub mod qsim;
pub mod seeds;
pub mod train;

pub use error::{Error, Result};
