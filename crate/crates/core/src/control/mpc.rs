//! Nonlinear MPC over a unicycle rollout.
//!
//! The decision vector is the command sequence `(v_0, w_0, ..., v_{N-1}, w_{N-1})`.
//! Each outer iteration linearizes the stacked residuals (lateral and heading
//! error of every predicted pose, speed and turn-rate effort of every command)
//! about the current sequence, solves the damped Gauss-Newton quadratic
//! subproblem, projects the step onto the command box and backtracks until
//! the true cost decreases. Iterates are therefore feasible and the cost is
//! monotone non-increasing.

use serde::{Deserialize, Serialize};

use crate::control::NavCommand;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_lat: f64,
    pub q_head: f64,
    pub r_v: f64,
    pub r_w: f64,
    pub v_ref: f64,
    /// Lower speed bound; 0 forbids reversing.
    pub v_min: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub max_iters: usize,
    /// Waypoint pitch along the detected centerline, meters.
    pub waypoint_spacing: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.1,
            q_lat: 10.0,
            q_head: 2.0,
            r_v: 1.0,
            r_w: 0.5,
            v_ref: 0.5,
            v_min: 0.0,
            v_max: 1.0,
            w_max: 1.0,
            max_iters: 10,
            waypoint_spacing: 0.25,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::invalid("horizon", "must be >= 2"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        for (name, v) in [
            ("q_lat", self.q_lat),
            ("q_head", self.q_head),
            ("r_v", self.r_v),
            ("r_w", self.r_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        if !(self.v_max > 0.0 && self.w_max > 0.0) {
            return Err(Error::invalid("v_max", "velocity bounds must be > 0"));
        }
        if !(self.v_min <= self.v_ref && self.v_ref <= self.v_max) {
            return Err(Error::invalid("v_ref", "must lie within [v_min, v_max]"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1"));
        }
        if !(self.waypoint_spacing > 0.0) {
            return Err(Error::invalid("waypoint_spacing", "must be > 0"));
        }
        Ok(())
    }

    fn clamp(&self, u: &mut [f64]) {
        for pair in u.chunks_exact_mut(2) {
            pair[0] = pair[0].clamp(self.v_min, self.v_max);
            pair[1] = pair[1].clamp(-self.w_max, self.w_max);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub command: NavCommand,
    pub sequence: Vec<NavCommand>,
    pub cost: f64,
    /// Cost after initialization and after every accepted iteration.
    pub cost_history: Vec<f64>,
    /// Set when the cost was not finite; `command` is then a stop.
    pub fault: bool,
}

/// Nearest waypoint segment to `p`: (anchor, unit tangent).
fn nearest_segment(wps: &[Vec2], p: Vec2) -> (Vec2, Vec2) {
    let mut best = (wps[0], (wps[1] - wps[0]).normalized(), f64::INFINITY);
    for w in wps.windows(2) {
        let (q, _) = crate::geometry::closest_on_segment(w[0], w[1], p);
        let d = q.distance(p);
        if d < best.2 {
            let len = w[0].distance(w[1]);
            if len > 0.0 {
                best = (w[0], (w[1] - w[0]) * (1.0 / len), d);
            }
        }
    }
    (best.0, best.1)
}

struct Rollout {
    pos: Vec<Vec2>,
    psi: Vec<f64>,
}

fn rollout(start: &Pose2, u: &[f64], dt: f64) -> Rollout {
    let n = u.len() / 2;
    let mut pos = Vec::with_capacity(n + 1);
    let mut psi = Vec::with_capacity(n + 1);
    pos.push(start.position());
    psi.push(start.psi);
    for k in 0..n {
        let (v, w) = (u[2 * k], u[2 * k + 1]);
        let (s, c) = psi[k].sin_cos();
        pos.push(pos[k] + Vec2::new(c, s) * (v * dt));
        psi.push(psi[k] + w * dt);
    }
    Rollout { pos, psi }
}

/// Tracking cost of the command sequence `u` from `start`.
pub fn sequence_cost(start: &Pose2, waypoints: &[Vec2], u: &[f64], cfg: &MpcConfig) -> f64 {
    let r = rollout(start, u, cfg.dt);
    let mut cost = 0.0;
    for k in 1..r.pos.len() {
        let (a, t) = nearest_segment(waypoints, r.pos[k]);
        let e_lat = t.cross(r.pos[k] - a);
        let e_head = normalize_angle(r.psi[k] - t.angle());
        cost += cfg.q_lat * e_lat * e_lat + cfg.q_head * e_head * e_head;
    }
    for pair in u.chunks_exact(2) {
        let dv = pair[0] - cfg.v_ref;
        cost += cfg.r_v * dv * dv + cfg.r_w * pair[1] * pair[1];
    }
    cost
}

/// Residual vector and its Jacobian (row-major, `4N x 2N`).
fn linearize(start: &Pose2, waypoints: &[Vec2], u: &[f64], cfg: &MpcConfig) -> (Vec<f64>, Vec<f64>) {
    let n = u.len() / 2;
    let cols = 2 * n;
    let rows = 4 * n;
    let dt = cfg.dt;
    let r = rollout(start, u, dt);
    let (sq_lat, sq_head) = (cfg.q_lat.sqrt(), cfg.q_head.sqrt());
    let (sq_v, sq_w) = (cfg.r_v.sqrt(), cfg.r_w.sqrt());

    let mut res = vec![0.0; rows];
    let mut jac = vec![0.0; rows * cols];

    // d p_{m+1} / d psi_m
    let g: Vec<Vec2> = (0..n)
        .map(|m| {
            let (s, c) = r.psi[m].sin_cos();
            Vec2::new(-s, c) * (u[2 * m] * dt)
        })
        .collect();

    for k in 1..=n {
        let (a, t) = nearest_segment(waypoints, r.pos[k]);
        let normal = Vec2::new(-t.y, t.x);
        let row_lat = 2 * (k - 1);
        let row_head = row_lat + 1;
        res[row_lat] = sq_lat * t.cross(r.pos[k] - a);
        res[row_head] = sq_head * normalize_angle(r.psi[k] - t.angle());

        // suffix sum of g over m in (j, k)
        let mut suffix = Vec2::ZERO;
        for j in (0..k).rev() {
            let (s, c) = r.psi[j].sin_cos();
            let dp_dv = Vec2::new(c, s) * dt;
            jac[row_lat * cols + 2 * j] = sq_lat * normal.dot(dp_dv);
            jac[row_lat * cols + 2 * j + 1] = sq_lat * normal.dot(suffix) * dt;
            jac[row_head * cols + 2 * j + 1] = sq_head * dt;
            suffix = suffix + g[j];
        }
    }
    for j in 0..n {
        let rv = 2 * n + 2 * j;
        let rw = rv + 1;
        res[rv] = sq_v * (u[2 * j] - cfg.v_ref);
        res[rw] = sq_w * u[2 * j + 1];
        jac[rv * cols + 2 * j] = sq_v;
        jac[rw * cols + 2 * j + 1] = sq_w;
    }
    (res, jac)
}

/// Solves `a x = b` in place (Gaussian elimination, partial pivoting).
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-14 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * b[k];
        }
        b[row] = s / a[row * n + row];
    }
    Some(())
}

const LM_DAMPING: f64 = 1e-3;
const MAX_BACKTRACKS: usize = 10;

/// One MPC solve from `start` (robot frame, normally the origin) toward
/// `waypoints`. `warm` seeds the search alongside the zero and cruise
/// sequences; the best of the three starts the iteration.
pub fn solve(start: &Pose2, waypoints: &[Vec2], cfg: &MpcConfig, warm: Option<&[NavCommand]>) -> Result<MpcSolution> {
    if waypoints.len() < 2 {
        return Err(Error::DegenerateRows("MPC needs at least two waypoints".into()));
    }
    let n = cfg.horizon;
    let cols = 2 * n;

    let mut candidates: Vec<Vec<f64>> = vec![vec![0.0; cols], {
        let mut c = vec![0.0; cols];
        for k in 0..n {
            c[2 * k] = cfg.v_ref;
        }
        c
    }];
    if let Some(w) = warm.filter(|w| !w.is_empty()) {
        let mut c = Vec::with_capacity(cols);
        for k in 0..n {
            let cmd = w[(k + 1).min(w.len() - 1)];
            c.push(cmd.v);
            c.push(cmd.w);
        }
        cfg.clamp(&mut c);
        candidates.push(c);
    }
    let (mut u, mut cost) = candidates
        .into_iter()
        .map(|c| {
            let j = sequence_cost(start, waypoints, &c, cfg);
            (c, j)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two candidates");

    let stop = |history: Vec<f64>| MpcSolution {
        command: NavCommand::STOP,
        sequence: vec![NavCommand::STOP; n],
        cost: f64::NAN,
        cost_history: history,
        fault: true,
    };
    let inputs_finite =
        waypoints.iter().all(|w| w.is_finite()) && start.position().is_finite() && start.psi.is_finite();
    if !inputs_finite || !cost.is_finite() {
        return Ok(stop(vec![cost]));
    }

    let mut history = vec![cost];
    for _ in 0..cfg.max_iters {
        let (res, jac) = linearize(start, waypoints, &u, cfg);
        let rows = res.len();
        let mut h = vec![0.0; cols * cols];
        let mut grad = vec![0.0; cols];
        for r in 0..rows {
            let jr = &jac[r * cols..(r + 1) * cols];
            for i in 0..cols {
                if jr[i] == 0.0 {
                    continue;
                }
                grad[i] += jr[i] * res[r];
                for k in i..cols {
                    h[i * cols + k] += jr[i] * jr[k];
                }
            }
        }
        for i in 0..cols {
            for k in 0..i {
                h[i * cols + k] = h[k * cols + i];
            }
            h[i * cols + i] += LM_DAMPING * h[i * cols + i] + 1e-9;
        }
        let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
        if solve_dense(&mut h, &mut step, cols).is_none() {
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            cfg.clamp(&mut trial);
            let j = sequence_cost(start, waypoints, &trial, cfg);
            if !j.is_finite() {
                return Ok(stop(history));
            }
            if j < cost {
                u = trial;
                cost = j;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        let improvement = history.last().copied().unwrap_or(f64::INFINITY) - cost;
        history.push(cost);
        if improvement < 1e-12 {
            break;
        }
    }

    let sequence: Vec<NavCommand> = u.chunks_exact(2).map(|p| NavCommand::new(p[0], p[1])).collect();
    Ok(MpcSolution {
        command: sequence[0],
        sequence,
        cost,
        cost_history: history,
        fault: false,
    })
}

/// MPC with a warm-start cache of the previous optimal sequence.
#[derive(Debug, Clone)]
pub struct Mpc {
    cfg: MpcConfig,
    warm: Option<Vec<NavCommand>>,
}

impl Mpc {
    pub fn new(cfg: MpcConfig) -> Self {
        Self { cfg, warm: None }
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Solves from the robot-frame origin. A non-finite cost yields a stop
    /// command with `fault` set.
    pub fn step(&mut self, waypoints: &[Vec2]) -> Result<MpcSolution> {
        let sol = solve(&Pose2::default(), waypoints, &self.cfg, self.warm.as_deref())?;
        self.warm = (!sol.fault).then(|| sol.sequence.clone());
        Ok(sol)
    }
}

/// Stateless single solve from the robot-frame origin.
pub fn mpc_step(waypoints: &[Vec2], cfg: &MpcConfig) -> Result<NavCommand> {
    solve(&Pose2::default(), waypoints, cfg, None).map(|s| s.command)
}
