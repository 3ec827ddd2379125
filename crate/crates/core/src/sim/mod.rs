//! Robot kinematics, odometry error model and LiDAR raycasting.

mod kinematics;
pub mod lidar;
mod odometry;

pub use kinematics::{step_robot, RobotLimits, RobotState};
pub use lidar::{simulate_scan, LidarConfig, LidarSim};
pub use odometry::{OdomNoise, Odometer};
