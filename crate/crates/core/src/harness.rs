//! Closed-loop scenario runner.
//!
//! Each tick: raycast from the true pose, detect rows against the odometry
//! pose, follow or switch lanes, integrate the unicycle, read odometry.
//! Metrics are scored against the true pose and the generating geometry.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::load_toml;
use crate::control::{FollowStatus, MpcConfig, NavCommand, RowFollower};
use crate::detection::{select_side_tracks, Detection, Detector, DetectorConfig, LocalTrack, RowSegment};
use crate::error::{Error, Result};
use crate::eval::{aggregate, row_detection_error, write_metrics_csv, MetricSummary, MetricsRecord};
use crate::exec::Exec;
use crate::field::{generate_field, ground_truth_centerline, Field, FieldSpec};
use crate::geometry::{normalize_angle, project_onto_polyline, Pose2, Vec2};
use crate::lane_switch::{row_end_candidate, LaneSwitcher, Phase, RowEndDetector, SwitchConfig, TurnSide};
use crate::sim::{step_robot, LidarConfig, LidarSim, OdomNoise, Odometer, RobotLimits, RobotState};

/// Plant collision threshold on |cross-track|.
pub const COLLISION_TOLERANCE: f64 = 0.225;
/// Clear strip beyond the last plant available for turning.
pub const HEADLAND_LENGTH: f64 = 1.5;
/// Consecutive safe-stop ticks tolerated before the run is aborted.
const MAX_SAFE_STOP_TICKS: usize = 40;
/// A row end declared further than this from the true end of the rows is a fault.
const PREMATURE_EXIT_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartConfig {
    /// Corridor index: the robot starts between rows `lane` and `lane + 1`.
    pub lane: usize,
    /// Along-row start position measured from the first plant.
    pub s: f64,
    /// Positive to the left of the travel direction.
    pub lateral_offset: f64,
    #[serde(rename = "heading_error_deg", with = "crate::config::degrees")]
    pub heading_error: f64,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            lane: 0,
            s: 0.0,
            lateral_offset: 0.0,
            heading_error: 0.0,
        }
    }
}

/// Robot body used for the headland check, centered on the robot origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            length: 1.8,
            width: 1.2,
        }
    }
}

impl Footprint {
    fn corners(&self, pose: &Pose2) -> [Vec2; 4] {
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].map(|(x, y)| pose.to_parent(Vec2::new(x, y)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub field: FieldSpec,
    pub lidar: LidarConfig,
    pub detector: DetectorConfig,
    pub mpc: MpcConfig,
    pub noise: OdomNoise,
    pub limits: RobotLimits,
    pub switch: SwitchConfig,
    pub start: StartConfig,
    pub footprint: Footprint,
    /// Number of lanes to drive, including the first.
    pub lane_count: usize,
    pub first_turn: TurnSide,
    pub tick_rate: f64,
    pub max_ticks: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            field: FieldSpec::default(),
            lidar: LidarConfig::default(),
            detector: DetectorConfig::default(),
            mpc: MpcConfig::default(),
            noise: OdomNoise::default(),
            limits: RobotLimits::default(),
            switch: SwitchConfig::default(),
            start: StartConfig::default(),
            footprint: Footprint::default(),
            lane_count: 1,
            first_turn: TurnSide::Left,
            tick_rate: 20.0,
            max_ticks: 10_000,
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let sc: Scenario = load_toml(path)?;
        sc.validate()?;
        Ok(sc)
    }

    /// Corridors advanced per lane switch.
    pub fn lane_stride(&self) -> usize {
        self.switch.lane_offset_multiplier.round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.lidar.validate()?;
        self.detector.validate()?;
        self.mpc.validate()?;
        self.noise.validate()?;
        self.switch.validate()?;
        if (self.detector.tilt - self.lidar.tilt).abs() > 1e-9 {
            return Err(Error::invalid("detector.tilt_deg", "must equal lidar.tilt_deg"));
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return Err(Error::invalid("tick_rate", "must be > 0"));
        }
        if self.max_ticks == 0 {
            return Err(Error::invalid("max_ticks", "must be > 0"));
        }
        if self.lane_count == 0 {
            return Err(Error::invalid("lane_count", "must be >= 1"));
        }
        let m = self.switch.lane_offset_multiplier;
        if (m - m.round()).abs() > 1e-9 || m < 1.0 {
            return Err(Error::invalid(
                "switch.lane_offset_multiplier",
                "must be a positive whole number of row spacings",
            ));
        }
        let last = self.start.lane + (self.lane_count - 1) * self.lane_stride();
        if last + 1 >= self.field.num_rows {
            return Err(Error::invalid(
                "lane_count",
                format!(
                    "{} lanes from corridor {} need {} rows, field has {}",
                    self.lane_count,
                    self.start.lane,
                    last + 2,
                    self.field.num_rows
                ),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    pub dump_clouds: bool,
    pub dump_centroids: bool,
    /// Dump every n-th tick.
    pub dump_every: u64,
    pub exec: Exec,
}

/// One FSM transition.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmEvent {
    pub tick: u64,
    pub from: Phase,
    pub to: Phase,
    pub true_pose: Pose2,
    pub odom_pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    pub sim_time: f64,
    pub completed: bool,
    pub fault: Option<String>,
    pub collision: bool,
    pub max_abs_cross_track: f64,
    pub lanes_completed: usize,
    pub lanes_planned: usize,
    /// Largest footprint excursion past the last plant during maneuvers.
    pub max_headland_excursion: f64,
    pub headland_ok: bool,
    pub mean_detection_ms: f64,
    pub wall_time_s: f64,
    pub metrics: Option<MetricSummary>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.completed && self.fault.is_none() && !self.collision && self.headland_ok
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub records: Vec<MetricsRecord>,
    pub events: Vec<FsmEvent>,
    /// Distance travelled along the first lane per tick, for recovery analysis.
    pub progress: Vec<f64>,
    /// Along-track distance from the robot to the last plant of the active pass.
    pub to_row_end: Vec<f64>,
}

/// One traversal of a corridor.
struct Pass {
    corridor: usize,
    /// Centerline oriented in the travel direction.
    centerline: Vec<Vec2>,
    /// Left and right rows in travel direction, oriented likewise.
    left_row: Vec<Vec2>,
    right_row: Vec<Vec2>,
    /// Arc length along `centerline` of the last crop plant ahead.
    exit_s: f64,
    length: f64,
}

impl Pass {
    fn new(field: &Field, corridor: usize, forward: bool) -> Result<Pass> {
        let mut centerline = ground_truth_centerline(field, corridor)?;
        let mut lower = field.row_polylines[corridor].clone();
        let mut upper = field.row_polylines[corridor + 1].clone();
        // the extreme plant on either row, measured along the row direction
        let rows = [corridor, corridor + 1];
        let along: Vec<f64> = field
            .plants
            .iter()
            .filter(|p| p.row.is_some_and(|r| rows.contains(&r)))
            .filter_map(|p| project_onto_polyline(&centerline, p.position).map(|q| q.arc_length))
            .collect();
        let length = crate::geometry::polyline_length(&centerline);
        let (first, last) = along
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
        if !first.is_finite() {
            return Err(Error::DegenerateRows(format!("corridor {corridor} has no plants")));
        }
        let (left_row, right_row, exit_s) = if forward {
            (upper, lower, last)
        } else {
            centerline.reverse();
            lower.reverse();
            upper.reverse();
            (lower, upper, length - first)
        };
        Ok(Pass {
            corridor,
            centerline,
            left_row,
            right_row,
            exit_s,
            length,
        })
    }

    /// Arc length along the centerline, extended linearly past both ends.
    fn along(&self, p: Vec2) -> f64 {
        let q = project_onto_polyline(&self.centerline, p).expect("centerline has two vertices");
        q.arc_length + q.tangent.dot(p - q.point)
    }

    fn errors(&self, pose: &Pose2) -> (f64, f64) {
        let q = project_onto_polyline(&self.centerline, pose.position()).expect("centerline has two vertices");
        let a = self.centerline[q.segment];
        let ct = q.tangent.cross(pose.position() - a);
        (ct, normalize_angle(pose.psi - q.tangent.angle()))
    }

    fn start_pose(&self, start: &StartConfig) -> Pose2 {
        let n = self.centerline.len();
        let s = start.s.min(self.length);
        // before the rows: extend the first segment backwards
        if s < 0.0 {
            let (a, b) = (self.centerline[0], self.centerline[1]);
            let dir = (b - a).normalized();
            let p = a + dir * s + dir.perp() * start.lateral_offset;
            return Pose2::new(p.x, p.y, dir.angle() + start.heading_error);
        }
        let mut walked = 0.0;
        let mut pose = Pose2::default();
        for i in 0..n - 1 {
            let (a, b) = (self.centerline[i], self.centerline[i + 1]);
            let l = a.distance(b);
            if walked + l >= s || i == n - 2 {
                let t = if l > 0.0 { ((s - walked) / l).min(1.0) } else { 0.0 };
                let dir = (b - a).normalized();
                let p = a.lerp(b, t) + dir.perp() * start.lateral_offset;
                pose = Pose2::new(p.x, p.y, dir.angle() + start.heading_error);
                break;
            }
            walked += l;
        }
        pose
    }
}

struct Dumper {
    dir: Option<PathBuf>,
    centroids: Option<(BufWriter<File>, BufWriter<File>)>,
    clouds: bool,
    every: u64,
}

impl Dumper {
    fn new(out: Option<&Path>, opts: &RunOptions) -> Result<Dumper> {
        let every = opts.dump_every.max(1);
        let Some(out) = out else {
            return Ok(Dumper {
                dir: None,
                centroids: None,
                clouds: false,
                every,
            });
        };
        let create = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let path = out.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(w, "{header}")?;
            Ok(w)
        };
        let centroids = if opts.dump_centroids {
            Some((
                create("centroids.csv", "frame,track_id,x,y")?,
                create("segments.csv", "frame,side,x1,y1,x2,y2")?,
            ))
        } else {
            None
        };
        if opts.dump_clouds {
            let d = out.join("clouds");
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(Dumper {
            dir: Some(out.to_path_buf()),
            centroids,
            clouds: opts.dump_clouds,
            every,
        })
    }

    fn frame(
        &mut self,
        tick: u64,
        cloud: &crate::cloud::PointCloud,
        det: Option<(&Detection, &[LocalTrack])>,
    ) -> Result<()> {
        if !tick.is_multiple_of(self.every) {
            return Ok(());
        }
        if let (true, Some(dir)) = (self.clouds, &self.dir) {
            let path = dir.join("clouds").join(format!("tick_{tick:06}.xyz"));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            cloud.write_ascii(BufWriter::new(f))?;
        }
        // robot frame throughout
        if let (Some((cw, sw)), Some((det, tracks))) = (self.centroids.as_mut(), det) {
            for t in tracks {
                for p in &t.points {
                    writeln!(cw, "{tick},{},{:.6},{:.6}", t.id, p.x, p.y)?;
                }
            }
            for (side, seg) in [("left", det.left), ("right", det.right)] {
                if let Some(s) = seg {
                    writeln!(sw, "{tick},{side},{:.6},{:.6},{:.6},{:.6}", s.x1, s.y1, s.x2, s.y2)?;
                }
            }
        }
        Ok(())
    }
}

/// Lane heading in the odometry frame from the current row estimates.
fn lane_heading(odom: &Pose2, det: Option<&Detection>) -> f64 {
    let rel = det.and_then(|d| d.both_rows()).map_or(0.0, |(l, r)| {
        let (a, b) = (l.direction(), r.direction());
        let a = if a.x < 0.0 { -a } else { a };
        let b = if b.x < 0.0 { -b } else { b };
        (a + b).angle()
    });
    normalize_angle(odom.psi + rel)
}

fn det_error(seg: Option<RowSegment>, pose: &Pose2, row: &[Vec2], gate: f64) -> (Option<f64>, Option<f64>) {
    let Some(seg) = seg else { return (None, None) };
    match row_detection_error(&seg.map(|p| pose.to_parent(p)), row, gate) {
        Ok((d, a)) => (Some(d), Some(a)),
        Err(_) => (None, None),
    }
}

/// Runs a scenario in memory. `out` receives optional dumps only.
pub fn run(sc: &Scenario, opts: &RunOptions, out: Option<&Path>) -> Result<RunReport> {
    let mut sc = sc.clone();
    sc.switch.inter_row_spacing = sc.field.inter_row_spacing;
    sc.validate()?;
    let wall = Instant::now();
    let dt = sc.dt();
    let field = generate_field(&sc.field)?;
    let lidar = LidarSim::new(&field, sc.lidar);
    let mut dumper = Dumper::new(out, opts)?;

    let mut forward = true;
    let mut pass = Pass::new(&field, sc.start.lane, forward)?;
    let start = pass.start_pose(&sc.start);
    let mut state = RobotState::at(start);
    let mut odom_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut odometer = Odometer::new(start, sc.noise);
    let mut detector = Detector::new(sc.detector, opts.seed.wrapping_add(0x5eed));
    let mut follower = RowFollower::new(sc.mpc);
    let mut switcher = LaneSwitcher::new(sc.switch, sc.lane_count, sc.first_turn, start.psi);
    let mut row_end = RowEndDetector::default();

    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut progress = Vec::new();
    let mut to_row_end = Vec::new();
    let first_pass_s0 = pass.along(start.position());
    let mut fault: Option<String> = None;
    let mut collision = false;
    let mut max_ct: f64 = 0.0;
    let mut max_excursion = f64::NEG_INFINITY;
    let mut safe_stop_ticks = 0;
    let mut detect_time = 0.0;
    let mut detect_calls = 0u32;
    let mut lanes_completed = 0;
    let gate = sc.field.inter_row_spacing / 2.0;

    // until both rows are first fitted the robot creeps straight ahead, as in Reacquire
    let mut acquired = false;
    let mut tick = 0u64;
    while tick < sc.max_ticks {
        let odom = odometer.pose();
        let nav = switcher.state();
        if nav.phase == Phase::Done {
            break;
        }
        let scanning = matches!(nav.phase, Phase::RowFollowing | Phase::Reacquire);
        let cloud = if scanning || dumper.clouds {
            lidar.scan_with(&state.pose, opts.exec)
        } else {
            Default::default()
        };
        let det = if scanning {
            let t0 = Instant::now();
            let d = detector.process(&cloud, &odom);
            detect_time += t0.elapsed().as_secs_f64();
            detect_calls += 1;
            Some(d)
        } else {
            None
        };
        if dumper.centroids.is_some() {
            let local = detector.map().local_tracks(&odom);
            dumper.frame(tick, &cloud, det.as_ref().map(|d| (d, local.as_slice())))?;
        } else {
            dumper.frame(tick, &cloud, det.as_ref().map(|d| (d, &[][..])))?;
        }

        let mut cmd = NavCommand::STOP;
        let mut transition = None;
        if nav.phase == Phase::RowFollowing && !switcher.is_exiting() {
            let d = det.as_ref().expect("scanned while following");
            let local = detector.map().local_tracks(&odom);
            let (l, r) = select_side_tracks(&local, detector.config());
            let ended = row_end.update(row_end_candidate(l, r, sc.switch.end_distance), sc.switch.end_frames);
            if !acquired && d.rows_ready() {
                acquired = true;
            }
            if !acquired {
                let crept = odom.position().distance(start.position());
                if crept > sc.switch.reacquire_timeout {
                    fault = Some(format!("no rows found within {crept:.2} m of the start"));
                }
                cmd = NavCommand::new(sc.switch.v_ref, 0.0);
            } else if ended {
                debug!("row end confirmed at tick {tick}");
                let left_in_crop = pass.exit_s - pass.along(state.pose.position());
                if left_in_crop > PREMATURE_EXIT_MARGIN {
                    fault = Some(format!(
                        "row end declared {left_in_crop:.2} m before the end of the rows"
                    ));
                }
                switcher.begin_exit(&odom, lane_heading(&odom, Some(d)));
                row_end.reset();
            } else {
                let (c, status) = follower.step(d.left, d.right);
                cmd = c;
                match status {
                    FollowStatus::SolverFault => {
                        fault = Some(format!("MPC produced a non-finite cost at tick {tick}"));
                    }
                    FollowStatus::SafeStop => {
                        safe_stop_ticks += 1;
                        if safe_stop_ticks > MAX_SAFE_STOP_TICKS {
                            fault = Some(format!("rows lost for {safe_stop_ticks} ticks at tick {tick}"));
                        }
                    }
                    _ => safe_stop_ticks = 0,
                }
            }
        }
        if switcher.state().phase != Phase::RowFollowing || switcher.is_exiting() {
            let rows_ready = det.as_ref().is_some_and(|d| d.rows_ready());
            let out = switcher.step(&odom, rows_ready, dt);
            cmd = out.command;
            transition = out.transition;
            if let Some(f) = out.fault {
                fault = Some(f);
            }
        }

        if let Some((from, to)) = transition {
            info!("tick {tick}: {from} -> {to}");
            events.push(FsmEvent {
                tick,
                from,
                to,
                true_pose: state.pose,
                odom_pose: odom,
            });
            match to {
                Phase::Reacquire => {
                    detector.reset();
                    if !switcher.lanes_exhausted() {
                        forward = !forward;
                        pass = Pass::new(&field, pass.corridor + sc.lane_stride(), forward)?;
                    }
                }
                Phase::RowFollowing => {
                    follower.reset();
                    row_end.reset();
                    lanes_completed += 1;
                }
                Phase::Done => lanes_completed += 1,
                _ => {}
            }
        }

        // score the pose this tick's command was computed from
        let phase = switcher.state().phase;
        let (ct, he) = pass.errors(&state.pose);
        let maneuvering = matches!(phase, Phase::TurnOut | Phase::Traverse | Phase::TurnIn)
            || (phase == Phase::RowFollowing && switcher.is_exiting());
        let s = pass.along(state.pose.position());
        let inside_rows = s > 0.0 && s < pass.exit_s;
        let final_reacquire = (phase == Phase::Reacquire && switcher.lanes_exhausted()) || phase == Phase::Done;
        if !maneuvering && !final_reacquire && inside_rows {
            max_ct = max_ct.max(ct.abs());
            if ct.abs() >= COLLISION_TOLERANCE && !collision {
                collision = true;
                fault.get_or_insert_with(|| format!("plant collision at tick {tick}: cross-track {ct:.3} m"));
            }
        }
        if maneuvering || final_reacquire {
            for c in sc.footprint.corners(&state.pose) {
                max_excursion = max_excursion.max(pass.along(c) - pass.exit_s);
            }
        }
        let (dl, al) = det_error(det.as_ref().and_then(|d| d.left), &state.pose, &pass.left_row, gate);
        let (dr, ar) = det_error(det.as_ref().and_then(|d| d.right), &state.pose, &pass.right_row, gate);
        records.push(MetricsRecord {
            tick,
            true_pose: state.pose,
            odom_pose: odom,
            cross_track: ct,
            heading_err: he,
            det_dist_err_left: dl,
            det_dist_err_right: dr,
            det_ang_err_left: al,
            det_ang_err_right: ar,
            fsm_state: phase,
        });
        progress.push(if lanes_completed == 0 {
            s - first_pass_s0
        } else {
            f64::NAN
        });
        to_row_end.push(pass.exit_s - s);

        if fault.is_some() {
            break;
        }
        state = step_robot(&state, cmd, dt, &sc.limits);
        odometer.read_odometry(&state, dt, &mut odom_rng);
        tick += 1;
    }

    let completed = switcher.state().phase == Phase::Done;
    if !completed && fault.is_none() {
        fault = Some(format!(
            "max_ticks ({}) reached in {}",
            sc.max_ticks,
            switcher.state().phase
        ));
    }
    let headland_ok = max_excursion <= HEADLAND_LENGTH;
    let summary = RunSummary {
        scenario: sc.name.clone(),
        seed: opts.seed,
        ticks: records.len() as u64,
        sim_time: records.len() as f64 * dt,
        completed,
        fault,
        collision,
        max_abs_cross_track: max_ct,
        lanes_completed,
        lanes_planned: sc.lane_count,
        max_headland_excursion: if max_excursion.is_finite() { max_excursion } else { 0.0 },
        headland_ok,
        mean_detection_ms: if detect_calls > 0 {
            1e3 * detect_time / detect_calls as f64
        } else {
            0.0
        },
        wall_time_s: wall.elapsed().as_secs_f64(),
        metrics: aggregate(&records).ok(),
    };
    Ok(RunReport {
        summary,
        records,
        events,
        progress,
        to_row_end,
    })
}

pub fn write_events_csv<W: Write>(events: &[FsmEvent], mut out: W) -> Result<()> {
    writeln!(out, "tick,from,to,true_x,true_y,true_psi,odom_x,odom_y,odom_psi")?;
    for e in events {
        let (t, o) = (e.true_pose, e.odom_pose);
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            e.tick, e.from, e.to, t.x, t.y, t.psi, o.x, o.y, o.psi
        )?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Loads `path`, runs it and writes `metrics.csv`, `events.csv` and
/// `summary.json` (plus any requested dumps) into `out_dir`.
pub fn run_scenario(path: &Path, opts: &RunOptions, out_dir: &Path) -> Result<RunReport> {
    let sc = Scenario::load(path)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report = run(&sc, opts, Some(out_dir))?;
    write_metrics_csv(&report.records, create(&out_dir.join("metrics.csv"))?)?;
    write_events_csv(&report.events, create(&out_dir.join("events.csv"))?)?;
    let mut w = create(&out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &report.summary)?;
    writeln!(w)?;
    Ok(report)
}

/// Scenario files (`*.toml`) in `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

/// One line of the batch table.
#[derive(Debug, Clone, Serialize)]
pub struct BatchRow {
    pub scenario: String,
    pub success: bool,
    pub dist_err_cm: Option<(f64, f64)>,
    pub ang_err_deg: Option<(f64, f64)>,
    pub cross_track_cm: Option<(f64, f64)>,
    pub fault: Option<String>,
}

impl BatchRow {
    fn from_summary(s: &RunSummary) -> BatchRow {
        let stat = |name: &str, scale: f64| {
            s.metrics
                .as_ref()
                .and_then(|m| m.metrics.get(name))
                .map(|st| (st.mean * scale, st.std * scale))
        };
        BatchRow {
            scenario: s.scenario.clone(),
            success: s.success(),
            dist_err_cm: stat("det_dist_err", 100.0),
            ang_err_deg: stat("det_ang_err", 180.0 / std::f64::consts::PI),
            cross_track_cm: stat("cross_track", 100.0),
            fault: s.fault.clone(),
        }
    }
}

/// Runs every scenario in `dir`, each into `out_dir/<file stem>`, and writes
/// `table.csv` / `table.json` with mean ± std per scenario.
pub fn run_batch(dir: &Path, opts: &RunOptions, out_dir: &Path) -> Result<Vec<BatchRow>> {
    let files = scenario_files(dir)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    // scenarios fan out; each run keeps its own scan sequential
    let inner = RunOptions {
        exec: Exec::Sequential,
        ..opts.clone()
    };
    let results = opts.exec.map(&files, |f| {
        let stem = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        run_scenario(f, &inner, &out_dir.join(&stem)).map(|r| r.summary)
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(BatchRow::from_summary(&r?));
    }
    let mut w = create(&out_dir.join("table.csv"))?;
    writeln!(w, "scenario,success,dist_err_mean_cm,dist_err_std_cm,ang_err_mean_deg,ang_err_std_deg,cross_track_mean_cm,cross_track_std_cm")?;
    let pair = |p: Option<(f64, f64)>| p.map_or("nan,nan".to_string(), |(m, s)| format!("{m:.3},{s:.3}"));
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.scenario,
            r.success,
            pair(r.dist_err_cm),
            pair(r.ang_err_deg),
            pair(r.cross_track_cm)
        )?;
    }
    let mut j = create(&out_dir.join("table.json"))?;
    serde_json::to_writer_pretty(&mut j, &rows)?;
    writeln!(j)?;
    Ok(rows)
}
