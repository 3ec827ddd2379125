//! Row following: midline waypoints from the detected rows and the MPC that
//! tracks them.

pub mod mpc;
mod waypoints;

use serde::{Deserialize, Serialize};

pub use mpc::{mpc_step, Mpc, MpcConfig, MpcSolution};
pub use waypoints::{generate_waypoints, MIN_LOOKAHEAD};

use crate::detection::RowSegment;

/// Velocity command for the base.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NavCommand {
    pub v: f64,
    pub w: f64,
}

impl NavCommand {
    pub const STOP: NavCommand = NavCommand { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

/// What the follower did this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowStatus {
    Tracking,
    /// Rows missing or unusable; last command repeated.
    Holding,
    /// Rows missing for too long.
    SafeStop,
    /// The optimizer produced a non-finite cost.
    SolverFault,
}

/// Number of consecutive frames without usable rows that still reuse the
/// last command.
pub const MAX_HELD_FRAMES: usize = 2;

/// MPC row follower with detection-dropout handling.
#[derive(Debug, Clone)]
pub struct RowFollower {
    mpc: Mpc,
    last: NavCommand,
    dropout: usize,
}

impl RowFollower {
    pub fn new(cfg: MpcConfig) -> Self {
        Self {
            mpc: Mpc::new(cfg),
            last: NavCommand::STOP,
            dropout: 0,
        }
    }

    pub fn config(&self) -> &MpcConfig {
        self.mpc.config()
    }

    pub fn reset(&mut self) {
        self.mpc.reset();
        self.last = NavCommand::STOP;
        self.dropout = 0;
    }

    pub fn step(&mut self, left: Option<RowSegment>, right: Option<RowSegment>) -> (NavCommand, FollowStatus) {
        let spacing = self.mpc.config().waypoint_spacing;
        let waypoints = match (left, right) {
            (Some(l), Some(r)) => generate_waypoints(&l, &r, spacing).ok(),
            _ => None,
        };
        let Some(waypoints) = waypoints else {
            self.dropout += 1;
            if self.dropout <= MAX_HELD_FRAMES {
                return (self.last, FollowStatus::Holding);
            }
            self.last = NavCommand::STOP;
            self.mpc.reset();
            return (NavCommand::STOP, FollowStatus::SafeStop);
        };
        self.dropout = 0;
        match self.mpc.step(&waypoints) {
            Ok(sol) if !sol.fault => {
                self.last = sol.command;
                (sol.command, FollowStatus::Tracking)
            }
            _ => {
                self.last = NavCommand::STOP;
                (NavCommand::STOP, FollowStatus::SolverFault)
            }
        }
    }
}
