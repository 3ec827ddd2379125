//! End-of-row detection and the lane-switching state machine.
//!
//! A completed lane runs `RowFollowing -> TurnOut -> Traverse -> TurnIn ->
//! Reacquire` and then either back to `RowFollowing` in the next lane or to
//! `Done` once the configured lane count is exhausted. Turns are in place and
//! closed on odometry heading; the traverse is measured by odometry arc length.

mod pid;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use pid::{Pid, PidConfig};

use crate::control::NavCommand;
use crate::detection::LocalTrack;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    RowFollowing,
    TurnOut,
    Traverse,
    TurnIn,
    Reacquire,
    Done,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::RowFollowing => "RowFollowing",
            Phase::TurnOut => "TurnOut",
            Phase::Traverse => "Traverse",
            Phase::TurnIn => "TurnIn",
            Phase::Reacquire => "Reacquire",
            Phase::Done => "Done",
        }
    }

    /// Legal successor states.
    pub fn successors(&self) -> &'static [Phase] {
        match self {
            Phase::RowFollowing => &[Phase::TurnOut],
            Phase::TurnOut => &[Phase::Traverse],
            Phase::Traverse => &[Phase::TurnIn],
            Phase::TurnIn => &[Phase::Reacquire],
            Phase::Reacquire => &[Phase::RowFollowing, Phase::Done],
            Phase::Done => &[],
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnSide {
    Left,
    Right,
}

impl TurnSide {
    pub fn sign(&self) -> f64 {
        match self {
            TurnSide::Left => 1.0,
            TurnSide::Right => -1.0,
        }
    }

    pub fn flipped(&self) -> TurnSide {
        match self {
            TurnSide::Left => TurnSide::Right,
            TurnSide::Right => TurnSide::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NavState {
    pub phase: Phase,
    pub lane_index: usize,
    pub turn_side: TurnSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchConfig {
    pub heading_pid: PidConfig,
    /// Heading-hold gains while driving straight (pre-roll, traverse, reacquire).
    pub hold_pid: PidConfig,
    pub turn_exit_heading_deg: f64,
    pub turn_exit_rate: f64,
    /// Traverse distance in units of the inter-row spacing.
    pub lane_offset_multiplier: f64,
    /// Taken from the field at run time.
    #[serde(skip)]
    pub inter_row_spacing: f64,
    /// Straight drive after end-of-row detection before turning out.
    pub preroll_distance: f64,
    pub reacquire_timeout: f64,
    pub v_ref: f64,
    /// End-of-row: farthest centroid on both rows closer than this ...
    pub end_distance: f64,
    /// ... for this many consecutive frames.
    pub end_frames: usize,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self {
            heading_pid: PidConfig::default(),
            hold_pid: PidConfig {
                kp: 2.0,
                ki: 0.0,
                kd: 0.0,
                out_limit: 1.0,
            },
            turn_exit_heading_deg: 2.0,
            turn_exit_rate: 0.05,
            lane_offset_multiplier: 2.0,
            inter_row_spacing: 0.75,
            preroll_distance: 1.0,
            reacquire_timeout: 3.0,
            v_ref: 0.5,
            end_distance: 1.0,
            end_frames: 5,
        }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<()> {
        self.heading_pid.validate("heading_pid")?;
        self.hold_pid.validate("hold_pid")?;
        for (name, v) in [
            ("turn_exit_heading_deg", self.turn_exit_heading_deg),
            ("turn_exit_rate", self.turn_exit_rate),
            ("lane_offset_multiplier", self.lane_offset_multiplier),
            ("inter_row_spacing", self.inter_row_spacing),
            ("reacquire_timeout", self.reacquire_timeout),
            ("v_ref", self.v_ref),
            ("end_distance", self.end_distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.preroll_distance >= 0.0) {
            return Err(Error::invalid("preroll_distance", "must be >= 0"));
        }
        if self.end_frames == 0 {
            return Err(Error::invalid("end_frames", "must be >= 1"));
        }
        Ok(())
    }

    pub fn lane_offset(&self) -> f64 {
        self.lane_offset_multiplier * self.inter_row_spacing
    }
}

/// True when no row ahead reaches `end_distance`: the farthest centroid of
/// both the first-left and first-right track is closer than that. A side
/// without a track counts as ended.
pub fn row_end_candidate(left: Option<&LocalTrack>, right: Option<&LocalTrack>, end_distance: f64) -> bool {
    let ended = |t: Option<&LocalTrack>| t.and_then(|t| t.farthest_x()).is_none_or(|x| x < end_distance);
    ended(left) && ended(right)
}

/// Debounces [`row_end_candidate`] over consecutive frames.
#[derive(Debug, Clone, Default)]
pub struct RowEndDetector {
    consecutive: usize,
}

impl RowEndDetector {
    pub fn reset(&mut self) {
        self.consecutive = 0;
    }

    pub fn update(&mut self, candidate: bool, frames: usize) -> bool {
        self.consecutive = if candidate { self.consecutive + 1 } else { 0 };
        self.consecutive >= frames
    }
}

/// One-shot check over a scripted sequence of per-frame track views.
pub fn detect_row_end<'a, I>(frames: I, cfg: &SwitchConfig) -> bool
where
    I: IntoIterator<Item = (Option<&'a LocalTrack>, Option<&'a LocalTrack>)>,
{
    let mut det = RowEndDetector::default();
    let mut fired = false;
    for (l, r) in frames {
        fired = det.update(row_end_candidate(l, r, cfg.end_distance), cfg.end_frames);
    }
    fired
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutput {
    pub command: NavCommand,
    pub transition: Option<(Phase, Phase)>,
    /// Set when reacquisition timed out with lanes remaining.
    pub fault: Option<String>,
}

/// The lane-switching state machine. The row-following phase itself is
/// driven by the caller; this type takes over once [`begin_exit`] is called.
///
/// [`begin_exit`]: LaneSwitcher::begin_exit
#[derive(Debug, Clone)]
pub struct LaneSwitcher {
    cfg: SwitchConfig,
    state: NavState,
    lane_count: usize,
    /// Odometry heading of travel in the current lane.
    lane_heading: f64,
    exiting: bool,
    distance: f64,
    last_pos: Vec2,
    pid: Pid,
}

impl LaneSwitcher {
    pub fn new(cfg: SwitchConfig, lane_count: usize, first_turn: TurnSide, lane_heading: f64) -> Self {
        Self {
            pid: Pid::new(cfg.heading_pid),
            cfg,
            state: NavState {
                phase: Phase::RowFollowing,
                lane_index: 0,
                turn_side: first_turn,
            },
            lane_count,
            lane_heading,
            exiting: false,
            distance: 0.0,
            last_pos: Vec2::ZERO,
        }
    }

    pub fn state(&self) -> NavState {
        self.state
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.cfg
    }

    pub fn lane_heading(&self) -> f64 {
        self.lane_heading
    }

    /// In `RowFollowing`, driving the pre-roll past the row end.
    pub fn is_exiting(&self) -> bool {
        self.exiting
    }

    pub fn lanes_exhausted(&self) -> bool {
        self.state.lane_index + 1 >= self.lane_count
    }

    /// Called when the row end is confirmed. `lane_heading` is the odometry
    /// heading of the rows just followed.
    pub fn begin_exit(&mut self, odom: &Pose2, lane_heading: f64) {
        debug_assert_eq!(self.state.phase, Phase::RowFollowing);
        self.lane_heading = normalize_angle(lane_heading);
        self.exiting = true;
        self.reset_distance(odom);
        self.pid = Pid::new(self.cfg.hold_pid);
    }

    fn reset_distance(&mut self, odom: &Pose2) {
        self.distance = 0.0;
        self.last_pos = odom.position();
    }

    fn advance_distance(&mut self, odom: &Pose2) {
        self.distance += odom.position().distance(self.last_pos);
        self.last_pos = odom.position();
    }

    fn enter(&mut self, next: Phase, odom: &Pose2) -> Option<(Phase, Phase)> {
        let prev = self.state.phase;
        debug_assert!(prev.successors().contains(&next), "{prev} -> {next}");
        self.state.phase = next;
        self.reset_distance(odom);
        self.pid = Pid::new(match next {
            Phase::TurnOut | Phase::TurnIn => self.cfg.heading_pid,
            _ => self.cfg.hold_pid,
        });
        Some((prev, next))
    }

    fn turn_target(&self) -> f64 {
        let s = self.state.turn_side.sign();
        match self.state.phase {
            Phase::TurnOut | Phase::Traverse => normalize_angle(self.lane_heading + s * FRAC_PI_2),
            _ => normalize_angle(self.lane_heading + PI),
        }
    }

    fn hold(&mut self, target: f64, odom: &Pose2, dt: f64) -> f64 {
        self.pid.update(normalize_angle(target - odom.psi), dt)
    }

    /// Advances the machine one tick from the latest odometry. `rows_ready`
    /// reports whether the detector currently has both rows fitted over a
    /// span above its trigger.
    pub fn step(&mut self, odom: &Pose2, rows_ready: bool, dt: f64) -> SwitchOutput {
        let mut out = SwitchOutput {
            command: NavCommand::STOP,
            transition: None,
            fault: None,
        };
        match self.state.phase {
            Phase::RowFollowing => {
                if !self.exiting {
                    return out;
                }
                self.advance_distance(odom);
                let remaining = self.cfg.preroll_distance - self.distance;
                if remaining <= 1e-3 {
                    self.exiting = false;
                    out.transition = self.enter(Phase::TurnOut, odom);
                    out.command = self.turn_command(odom, dt);
                } else {
                    let w = self.hold(self.lane_heading, odom, dt);
                    out.command = NavCommand::new(self.cfg.v_ref.min(remaining / dt), w);
                }
            }
            Phase::TurnOut | Phase::TurnIn => {
                let cmd = self.turn_command(odom, dt);
                let err = normalize_angle(self.turn_target() - odom.psi);
                if err.abs() < self.cfg.turn_exit_heading_deg.to_radians() && cmd.w.abs() < self.cfg.turn_exit_rate {
                    let next = if self.state.phase == Phase::TurnOut {
                        Phase::Traverse
                    } else {
                        Phase::Reacquire
                    };
                    out.transition = self.enter(next, odom);
                    out.command = NavCommand::STOP;
                } else {
                    out.command = cmd;
                }
            }
            Phase::Traverse => {
                self.advance_distance(odom);
                let remaining = self.cfg.lane_offset() - self.distance;
                if remaining <= 1e-3 {
                    out.transition = self.enter(Phase::TurnIn, odom);
                    out.command = NavCommand::STOP;
                } else {
                    let target = self.turn_target();
                    let w = self.hold(target, odom, dt);
                    out.command = NavCommand::new(self.cfg.v_ref.min(remaining / dt), w);
                }
            }
            Phase::Reacquire => {
                self.advance_distance(odom);
                let exhausted = self.lanes_exhausted();
                if rows_ready && !exhausted {
                    self.state.lane_index += 1;
                    self.state.turn_side = self.state.turn_side.flipped();
                    self.lane_heading = normalize_angle(self.lane_heading + PI);
                    out.transition = self.enter(Phase::RowFollowing, odom);
                } else if self.distance >= self.cfg.reacquire_timeout {
                    if exhausted {
                        out.transition = self.enter(Phase::Done, odom);
                    } else {
                        out.fault = Some(format!(
                            "no rows found within {:.2} m while entering lane {}",
                            self.cfg.reacquire_timeout,
                            self.state.lane_index + 1
                        ));
                    }
                } else {
                    let target = self.turn_target();
                    let w = self.hold(target, odom, dt);
                    out.command = NavCommand::new(self.cfg.v_ref, w);
                }
            }
            Phase::Done => {}
        }
        out
    }

    fn turn_command(&mut self, odom: &Pose2, dt: f64) -> NavCommand {
        let target = self.turn_target();
        NavCommand::new(0.0, self.hold(target, odom, dt))
    }
}

/// Free-function form of [`LaneSwitcher::step`].
pub fn switch_step(fsm: &mut LaneSwitcher, odom: &Pose2, rows_ready: bool, dt: f64) -> (NavCommand, NavState) {
    let out = fsm.step(odom, rows_ready, dt);
    (out.command, fsm.state())
}
