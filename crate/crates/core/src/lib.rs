//! Constrained Bayesian optimization for accelerator hardware and loop-nest
//! mapping co-design.
//!
//! The [`design_space`] module defines layers, hardware, mappings and their
//! constraints; [`cost_model`] scores a mapping by energy-delay product;
//! [`gp`] and [`acquisition`] provide the surrogate and the proposal step;
//! [`optimizer`] runs the nested hardware/software search.

pub mod acquisition;
pub mod cli;
pub mod cost_model;
pub mod design_space;
pub mod error;
pub mod gp;
pub mod optimizer;
pub mod par;
pub mod report;
pub mod workloads;

pub use error::{Error, Result};
