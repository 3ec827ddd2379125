use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Symmetric output clamp.
    pub out_limit: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            kp: 2.0,
            ki: 0.0,
            kd: 0.2,
            out_limit: 1.0,
        }
    }
}

impl PidConfig {
    pub fn validate(&self, name: &str) -> Result<()> {
        for (g, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name}.{g}"), "gains must be >= 0"));
            }
        }
        if !(self.out_limit > 0.0) {
            return Err(Error::invalid(format!("{name}.out_limit"), "must be > 0"));
        }
        Ok(())
    }
}

/// PID on a scalar error with output clamping and conditional-integration
/// anti-windup.
#[derive(Debug, Clone)]
pub struct Pid {
    cfg: PidConfig,
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(cfg: PidConfig) -> Self {
        Self {
            cfg,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let deriv = self.prev_error.map_or(0.0, |p| (error - p) / dt);
        self.prev_error = Some(error);
        let lim = self.cfg.out_limit;
        let trial_integral = self.integral + error * dt;
        let raw = self.cfg.kp * error + self.cfg.ki * trial_integral + self.cfg.kd * deriv;
        if raw.abs() < lim || raw.signum() != error.signum() {
            self.integral = trial_integral;
        }
        (self.cfg.kp * error + self.cfg.ki * self.integral + self.cfg.kd * deriv).clamp(-lim, lim)
    }
}
