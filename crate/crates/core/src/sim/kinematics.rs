use log::warn;
use serde::{Deserialize, Serialize};

use crate::control::NavCommand;
use crate::geometry::Pose2;

/// Velocity limits of the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotLimits {
    pub v_max: f64,
    pub w_max: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self { v_max: 1.0, w_max: 1.0 }
    }
}

impl RobotLimits {
    pub fn clamp(&self, cmd: NavCommand) -> NavCommand {
        NavCommand {
            v: cmd.v.clamp(-self.v_max, self.v_max),
            w: cmd.w.clamp(-self.w_max, self.w_max),
        }
    }
}

/// True robot state: world pose plus the velocities applied over the last step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2,
    pub v: f64,
    pub w: f64,
}

impl RobotState {
    pub fn at(pose: Pose2) -> Self {
        Self { pose, v: 0.0, w: 0.0 }
    }
}

/// Explicit-Euler unicycle step. Commands outside `limits` are clamped.
pub fn step_robot(state: &RobotState, cmd: NavCommand, dt: f64, limits: &RobotLimits) -> RobotState {
    debug_assert!(dt > 0.0);
    let applied = limits.clamp(cmd);
    if applied != cmd {
        warn!(
            "command (v={:.3}, w={:.3}) clamped to (v={:.3}, w={:.3})",
            cmd.v, cmd.w, applied.v, applied.w
        );
    }
    let p = state.pose;
    let (s, c) = p.psi.sin_cos();
    RobotState {
        pose: Pose2::new(
            p.x + applied.v * c * dt,
            p.y + applied.v * s * dt,
            p.psi + applied.w * dt,
        ),
        v: applied.v,
        w: applied.w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_line_step() {
        let s = step_robot(
            &RobotState::default(),
            NavCommand::new(1.0, 0.0),
            1.0,
            &RobotLimits::default(),
        );
        assert_eq!(s.pose, Pose2::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn pure_rotation_step() {
        let limits = RobotLimits { v_max: 1.0, w_max: 2.0 };
        let s = step_robot(&RobotState::default(), NavCommand::new(0.0, FRAC_PI_2), 1.0, &limits);
        assert_abs_diff_eq!(s.pose.x, 0.0);
        assert_abs_diff_eq!(s.pose.y, 0.0);
        assert_abs_diff_eq!(s.pose.psi, FRAC_PI_2);
    }

    #[test]
    fn euler_integration_tracks_analytic_arc() {
        let (v, w, dt) = (1.0, 0.1, 1e-3);
        let limits = RobotLimits::default();
        let mut s = RobotState::default();
        for _ in 0..1000 {
            s = step_robot(&s, NavCommand::new(v, w), dt, &limits);
        }
        let t = 1000.0 * dt;
        let (ex, ey) = (v / w * (w * t).sin(), v / w * (1.0 - (w * t).cos()));
        let err = (s.pose.x - ex).hypot(s.pose.y - ey);
        assert!(err < 1e-3, "arc error {err}");
        assert_abs_diff_eq!(s.pose.psi, w * t, epsilon = 1e-12);
    }

    #[test]
    fn commands_are_clamped_to_limits() {
        let s = step_robot(
            &RobotState::default(),
            NavCommand::new(5.0, -3.0),
            0.1,
            &RobotLimits::default(),
        );
        assert_eq!((s.v, s.w), (1.0, -1.0));
    }
}
