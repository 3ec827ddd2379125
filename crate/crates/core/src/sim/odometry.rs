use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::sim::RobotState;

/// Dead-reckoning error model: each step the measured velocities are
/// `v * (1 + v_std * n) + v_bias` with `n ~ N(0, 1)`, likewise for `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdomNoise {
    pub v_std: f64,
    pub w_std: f64,
    pub v_bias: f64,
    pub w_bias: f64,
}

impl Default for OdomNoise {
    fn default() -> Self {
        Self {
            v_std: 0.01,
            w_std: 0.01,
            v_bias: 0.0,
            w_bias: 0.0,
        }
    }
}

impl OdomNoise {
    pub const NONE: OdomNoise = OdomNoise {
        v_std: 0.0,
        w_std: 0.0,
        v_bias: 0.0,
        w_bias: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("v_std", self.v_std), ("w_std", self.w_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("v_bias", self.v_bias), ("w_bias", self.w_bias)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Integrates noisy velocity measurements into an odometry pose. There is no
/// global correction, so error accumulates.
#[derive(Debug, Clone)]
pub struct Odometer {
    pose: Pose2,
    noise: OdomNoise,
}

impl Odometer {
    pub fn new(start: Pose2, noise: OdomNoise) -> Self {
        Self { pose: start, noise }
    }

    pub fn pose(&self) -> Pose2 {
        self.pose
    }

    /// Consumes the velocities the base applied during the last `dt` and
    /// returns the updated odometry pose.
    pub fn read_odometry<R: Rng + ?Sized>(&mut self, true_state: &RobotState, dt: f64, rng: &mut R) -> Pose2 {
        let nv: f64 = StandardNormal.sample(rng);
        let nw: f64 = StandardNormal.sample(rng);
        let v = true_state.v * (1.0 + self.noise.v_std * nv) + self.noise.v_bias;
        let w = true_state.w * (1.0 + self.noise.w_std * nw) + self.noise.w_bias;
        let p = self.pose;
        let (s, c) = p.psi.sin_cos();
        self.pose = Pose2::new(p.x + v * c * dt, p.y + v * s * dt, p.psi + w * dt);
        self.pose
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::NavCommand;
    use crate::sim::{step_robot, RobotLimits};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn drive(noise: OdomNoise, seed: u64, steps: usize, cmd: NavCommand) -> (RobotState, Vec<Pose2>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limits = RobotLimits::default();
        let mut state = RobotState::at(Pose2::new(1.0, 2.0, 0.3));
        let mut odo = Odometer::new(state.pose, noise);
        let mut trace = Vec::with_capacity(steps);
        for _ in 0..steps {
            state = step_robot(&state, cmd, 0.05, &limits);
            trace.push(odo.read_odometry(&state, 0.05, &mut rng));
        }
        (state, trace)
    }

    #[test]
    fn noiseless_odometry_equals_truth() {
        let (state, trace) = drive(OdomNoise::NONE, 3, 500, NavCommand::new(0.7, 0.2));
        assert_eq!(*trace.last().unwrap(), state.pose);
    }

    #[test]
    fn fixed_seed_reproduces_trace() {
        let cmd = NavCommand::new(0.5, -0.1);
        let (_, a) = drive(OdomNoise::default(), 11, 300, cmd);
        let (_, b) = drive(OdomNoise::default(), 11, 300, cmd);
        let (_, c) = drive(OdomNoise::default(), 12, 300, cmd);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn negative_std_rejected() {
        let n = OdomNoise {
            v_std: -1.0,
            ..OdomNoise::NONE
        };
        assert!(n.validate().unwrap_err().to_string().contains("v_std"));
    }
}
