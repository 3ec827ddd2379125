//! Over-canopy crop-row navigation in simulation: a synthetic field and LiDAR,
//! row detection from the point cloud, MPC row following and a lane-switching
//! state machine, plus a closed-loop harness that scores runs against ground
//! truth.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod config;
pub mod control;
pub mod detection;
pub mod error;
pub mod eval;
pub mod exec;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod lane_switch;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Exec;
