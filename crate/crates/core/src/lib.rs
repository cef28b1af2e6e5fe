//! Joint search over per-layer bit-widths and layer widths with a
//! cluster-based Tree-structured Parzen Estimator, Hessian-trace search-space
//! pruning and a systolic-array FPGA cost model.

pub mod cluster;
pub mod config;
pub mod driver;
pub mod error;
pub mod evalsim;
pub mod hw;
pub mod models;
pub mod net;
pub mod quant;
pub mod rng;
pub mod sensitivity;
pub mod space;
pub mod tpe;

pub use error::{Error, Result};
