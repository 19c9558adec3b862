//! Locked-differential tricycle vehicle model, micro-stepped nonlinear MPC,
//! speed-profile planners and a closed-loop racing simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod lowlevel;
pub mod models;
pub mod mpc;
pub mod numerics;
pub mod params;
pub mod planner;
pub mod plot;
pub mod qp;
pub mod sim;
pub mod track;
pub mod trackgen;

pub use error::{Error, Result};
