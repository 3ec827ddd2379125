//! Multi-channel spinning LiDAR raycast against the plant geometry.
//!
//! The sensor sits `mount_height` above the robot origin and is pitched down by
//! `tilt` about its Y axis. A sensor-frame direction `d` maps to the level robot
//! frame as `R_y(tilt) * d`, so the sensor X axis points forward and down.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::{Field, Plant, STALK_RADIUS};
use crate::geometry::Pose2;

const GRID_CELL: f64 = 0.5;
const MIN_T: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub mount_height: f64,
    /// Downward pitch about the sensor Y axis, radians (degrees in files).
    #[serde(rename = "tilt_deg", with = "crate::config::degrees")]
    pub tilt: f64,
    pub num_channels: usize,
    /// Channels are spread evenly over `[-vertical_fov_deg, +vertical_fov_deg]`.
    pub vertical_fov_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            mount_height: 1.5,
            tilt: 30f64.to_radians(),
            num_channels: 16,
            vertical_fov_deg: 15.0,
            azimuth_step_deg: 1.0,
            max_range: 30.0,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tilt > 0.0 && self.tilt < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("tilt_deg", "must be in (0, 90)"));
        }
        if self.num_channels == 0 {
            return Err(Error::invalid("num_channels", "must be >= 1"));
        }
        if !(self.mount_height > 0.0) {
            return Err(Error::invalid("mount_height", "must be > 0"));
        }
        if !(self.vertical_fov_deg >= 0.0 && self.vertical_fov_deg < 90.0) {
            return Err(Error::invalid("vertical_fov_deg", "must be in [0, 90)"));
        }
        if !(self.azimuth_step_deg > 0.0 && self.azimuth_step_deg <= 360.0) {
            return Err(Error::invalid("azimuth_step_deg", "must be in (0, 360]"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::invalid("max_range", "must be > 0"));
        }
        Ok(())
    }

    pub fn channel_elevations(&self) -> Vec<f64> {
        let n = self.num_channels;
        if n == 1 {
            return vec![0.0];
        }
        let fov = self.vertical_fov_deg.to_radians();
        (0..n).map(|c| -fov + 2.0 * fov * c as f64 / (n - 1) as f64).collect()
    }

    pub fn azimuths(&self) -> Vec<f64> {
        let n = (360.0 / self.azimuth_step_deg).round().max(1.0) as usize;
        (0..n)
            .map(|i| (-180.0 + i as f64 * self.azimuth_step_deg).to_radians())
            .collect()
    }

    /// Unit ray directions in the sensor frame, ordered by channel then azimuth.
    pub fn ray_directions(&self) -> Vec<[f64; 3]> {
        let az = self.azimuths();
        self.channel_elevations()
            .into_iter()
            .flat_map(|e| {
                let (se, ce) = e.sin_cos();
                az.iter().map(move |&a| {
                    let (sa, ca) = a.sin_cos();
                    [ce * ca, ce * sa, se]
                })
            })
            .collect()
    }

    /// Sensor-frame vector to the level robot frame (rotation only).
    pub fn sensor_to_level(&self, d: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.tilt.sin_cos();
        [c * d[0] + s * d[2], d[1], -s * d[0] + c * d[2]]
    }

    /// Sensor-frame point to world coordinates for a robot at `pose`.
    pub fn sensor_to_world(&self, pose: &Pose2, p: Point3) -> [f64; 3] {
        let l = self.sensor_to_level([p.x, p.y, p.z]);
        let (s, c) = pose.psi.sin_cos();
        [
            pose.x + c * l[0] - s * l[1],
            pose.y + s * l[0] + c * l[1],
            self.mount_height + l[2],
        ]
    }
}

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitKind {
    Ground,
    Canopy(usize),
    Stalk(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub kind: HitKind,
}

pub fn intersect_sphere(o: [f64; 3], d: [f64; 3], c: [f64; 3], r: f64) -> Option<f64> {
    let oc = [o[0] - c[0], o[1] - c[1], o[2] - c[2]];
    let b = d[0] * oc[0] + d[1] * oc[1] + d[2] * oc[2];
    let cc = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > MIN_T {
        return Some(t0);
    }
    let t1 = -b + sq;
    (t1 > MIN_T).then_some(t1)
}

/// Vertical cylinder of radius `r` standing on the ground at `(cx, cy)`, up to `h`.
pub fn intersect_stalk(o: [f64; 3], d: [f64; 3], cx: f64, cy: f64, r: f64, h: f64) -> Option<f64> {
    let a = d[0] * d[0] + d[1] * d[1];
    if a < 1e-18 {
        return None;
    }
    let ox = o[0] - cx;
    let oy = o[1] - cy;
    let b = 2.0 * (d[0] * ox + d[1] * oy);
    let c = ox * ox + oy * oy - r * r;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
        if t > MIN_T {
            let z = o[2] + t * d[2];
            if (0.0..=h).contains(&z) {
                return Some(t);
            }
        }
    }
    None
}

pub fn intersect_ground(o: [f64; 3], d: [f64; 3]) -> Option<f64> {
    (d[2] < 0.0).then(|| -o[2] / d[2]).filter(|&t| t > MIN_T)
}

fn plant_hit(plant: &Plant, idx: usize, o: [f64; 3], d: [f64; 3]) -> Option<RayHit> {
    let c = [plant.position.x, plant.position.y, plant.stalk_height];
    let sphere = intersect_sphere(o, d, c, plant.canopy_radius).map(|t| RayHit {
        t,
        kind: HitKind::Canopy(idx),
    });
    let stalk = intersect_stalk(
        o,
        d,
        plant.position.x,
        plant.position.y,
        STALK_RADIUS,
        plant.stalk_height,
    )
    .map(|t| RayHit {
        t,
        kind: HitKind::Stalk(idx),
    });
    match (sphere, stalk) {
        (Some(a), Some(b)) => Some(if b.t < a.t { b } else { a }),
        (a, b) => a.or(b),
    }
}

/// Nearest hit by testing every primitive. Reference path for tests.
pub fn cast_brute_force(field: &Field, o: [f64; 3], d: [f64; 3], max_range: f64) -> Option<RayHit> {
    let mut best = intersect_ground(o, d).map(|t| RayHit {
        t,
        kind: HitKind::Ground,
    });
    for (i, p) in field.plants.iter().enumerate() {
        if let Some(h) = plant_hit(p, i, o, d) {
            if best.is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        }
    }
    best.filter(|h| h.t <= max_range)
}

/// Uniform 2-D grid over plant footprints.
#[derive(Debug, Clone)]
pub struct PlantGrid {
    origin: [f64; 2],
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl PlantGrid {
    pub fn build(field: &Field) -> Self {
        let (lo, hi) = field.bounds();
        let (lo, hi) = if lo.x.is_finite() {
            (lo, hi)
        } else {
            (crate::geometry::Vec2::ZERO, crate::geometry::Vec2::ZERO)
        };
        let origin = [lo.x - GRID_CELL, lo.y - GRID_CELL];
        let nx = (((hi.x - origin[0]) / GRID_CELL).ceil() as usize + 1).max(1);
        let ny = (((hi.y - origin[1]) / GRID_CELL).ceil() as usize + 1).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, p) in field.plants.iter().enumerate() {
            let r = p.footprint_radius();
            let x0 = ((p.position.x - r - origin[0]) / GRID_CELL).floor() as usize;
            let x1 = ((p.position.x + r - origin[0]) / GRID_CELL).floor() as usize;
            let y0 = ((p.position.y - r - origin[1]) / GRID_CELL).floor() as usize;
            let y1 = ((p.position.y + r - origin[1]) / GRID_CELL).floor() as usize;
            for cx in x0..=x1.min(nx - 1) {
                for cy in y0..=y1.min(ny - 1) {
                    cells[cy * nx + cx].push(i as u32);
                }
            }
        }
        Self { origin, nx, ny, cells }
    }

    /// Nearest plant hit with `t < t_end`, walking cells along the ray's
    /// ground projection (Amanatides-Woo traversal).
    fn cast(&self, plants: &[Plant], o: [f64; 3], d: [f64; 3], t_end: f64) -> Option<RayHit> {
        let gx = (o[0] - self.origin[0]) / GRID_CELL;
        let gy = (o[1] - self.origin[1]) / GRID_CELL;
        let (dx, dy) = (d[0] / GRID_CELL, d[1] / GRID_CELL);

        // clip the parametric interval to the grid rectangle
        let (mut t0, mut t1) = (0.0f64, t_end);
        for (g, dg, n) in [(gx, dx, self.nx as f64), (gy, dy, self.ny as f64)] {
            if dg.abs() < 1e-15 {
                if g < 0.0 || g >= n {
                    return None;
                }
            } else {
                let ta = (0.0 - g) / dg;
                let tb = (n - g) / dg;
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t0 > t1 {
            return None;
        }

        let sx = gx + dx * t0;
        let sy = gy + dy * t0;
        let mut cx = (sx.floor() as isize).clamp(0, self.nx as isize - 1);
        let mut cy = (sy.floor() as isize).clamp(0, self.ny as isize - 1);
        let step_x: isize = if dx > 0.0 { 1 } else { -1 };
        let step_y: isize = if dy > 0.0 { 1 } else { -1 };
        let next_boundary = |c: isize, step: isize| if step > 0 { (c + 1) as f64 } else { c as f64 };
        let mut t_max_x = if dx.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(cx, step_x) - gx) / dx
        };
        let mut t_max_y = if dy.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(cy, step_y) - gy) / dy
        };
        let t_delta_x = if dx.abs() < 1e-15 {
            f64::INFINITY
        } else {
            1.0 / dx.abs()
        };
        let t_delta_y = if dy.abs() < 1e-15 {
            f64::INFINITY
        } else {
            1.0 / dy.abs()
        };

        let mut best: Option<RayHit> = None;
        loop {
            for &pi in &self.cells[cy as usize * self.nx + cx as usize] {
                let pi = pi as usize;
                if let Some(h) = plant_hit(&plants[pi], pi, o, d) {
                    if h.t < t_end && best.is_none_or(|b| h.t < b.t) {
                        best = Some(h);
                    }
                }
            }
            let t_exit = t_max_x.min(t_max_y);
            if let Some(b) = best {
                if b.t <= t_exit {
                    return best;
                }
            }
            if t_exit > t1 {
                return best;
            }
            if t_max_x < t_max_y {
                cx += step_x;
                t_max_x += t_delta_x;
                if cx < 0 || cx >= self.nx as isize {
                    return best;
                }
            } else {
                cy += step_y;
                t_max_y += t_delta_y;
                if cy < 0 || cy >= self.ny as isize {
                    return best;
                }
            }
        }
    }
}

/// A LiDAR bound to one field, with precomputed rays and plant index.
#[derive(Debug, Clone)]
pub struct LidarSim<'a> {
    field: &'a Field,
    cfg: LidarConfig,
    grid: PlantGrid,
    rays_sensor: Vec<[f64; 3]>,
    rays_level: Vec<[f64; 3]>,
}

impl<'a> LidarSim<'a> {
    pub fn new(field: &'a Field, cfg: LidarConfig) -> Self {
        let rays_sensor = cfg.ray_directions();
        let rays_level = rays_sensor.iter().map(|&d| cfg.sensor_to_level(d)).collect();
        Self {
            field,
            cfg,
            grid: PlantGrid::build(field),
            rays_sensor,
            rays_level,
        }
    }

    pub fn config(&self) -> &LidarConfig {
        &self.cfg
    }

    pub fn num_rays(&self) -> usize {
        self.rays_sensor.len()
    }

    /// World-frame origin and direction of ray `i` for a robot at `pose`.
    pub fn world_ray(&self, pose: &Pose2, i: usize) -> ([f64; 3], [f64; 3]) {
        let l = self.rays_level[i];
        let (s, c) = pose.psi.sin_cos();
        (
            [pose.x, pose.y, self.cfg.mount_height],
            [c * l[0] - s * l[1], s * l[0] + c * l[1], l[2]],
        )
    }

    /// Nearest hit of ray `i` via the grid.
    pub fn cast(&self, pose: &Pose2, i: usize) -> Option<RayHit> {
        let (o, d) = self.world_ray(pose, i);
        let ground = intersect_ground(o, d).filter(|&t| t <= self.cfg.max_range);
        let t_end = ground.unwrap_or(self.cfg.max_range);
        match self.grid.cast(&self.field.plants, o, d, t_end) {
            Some(h) if h.t <= self.cfg.max_range => Some(h),
            _ => ground.map(|t| RayHit {
                t,
                kind: HitKind::Ground,
            }),
        }
    }

    pub fn scan(&self, pose: &Pose2) -> PointCloud {
        self.scan_with(pose, Exec::default())
    }

    /// Returns in sensor frame, ordered by channel then azimuth.
    pub fn scan_with(&self, pose: &Pose2, exec: Exec) -> PointCloud {
        exec.map_range(self.rays_sensor.len(), |i| {
            self.cast(pose, i).map(|h| {
                let d = self.rays_sensor[i];
                Point3::new(h.t * d[0], h.t * d[1], h.t * d[2])
            })
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

/// One-shot scan of `field` from `true_pose`.
pub fn simulate_scan(field: &Field, true_pose: &Pose2, cfg: &LidarConfig) -> PointCloud {
    LidarSim::new(field, *cfg).scan(true_pose)
}
