//! Quasi-Newton proposals for particle Metropolis-Hastings.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod kalman;
pub mod models;
pub mod rng;
pub mod smc;
pub mod gaussian;
pub mod quasi_newton;
pub mod target;
pub mod sampler;
pub mod diagnostics;
pub mod config;
pub mod io;
pub mod commands;
