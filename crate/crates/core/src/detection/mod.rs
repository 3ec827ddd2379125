//! Crop-row detection.
//!
//! Per frame: crop the cloud to the frontal field of view, drop everything
//! below a virtual ground plane raised to the cloud centroid, project the
//! survivors onto the ground, cluster them per depth bin, fold the centroids
//! into odometry-frame tracks and fit a line to the first row on each side.

mod cluster;
mod filter;
mod ransac;
mod tracks;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cluster::{bin_and_cluster, kmeans_lateral, merge_centroids, Centroid};
pub use filter::{crop_fov, ground_plane_filter, plane_normal, GroundFiltered};
pub use ransac::{
    fit_line_lsq, fit_rows, ransac_line, segment_from_fit, select_side_tracks, Line2, RansacFit, RowFit, RowSegment,
    SideFit,
};
pub use tracks::{accumulate_centroids, CentroidMap, LocalTrack, StampedCentroid, Track, TrackParams};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};

pub use crate::cloud::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Downward pitch of the sensor, radians (degrees in files).
    #[serde(rename = "tilt_deg", with = "crate::config::degrees")]
    pub tilt: f64,
    /// Sensor height above ground, used for the ground projection.
    pub mount_height: f64,
    pub fov_deg: f64,
    pub range: f64,
    pub bin_depth: f64,
    pub k_init: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    /// Clusters supported by fewer points are discarded as clutter.
    pub min_cluster_points: usize,
    pub merge_dist: f64,
    pub ransac_iters: usize,
    pub ransac_inlier_tol: f64,
    pub span_trigger: f64,
    pub behind_window: f64,
    /// Extra distance behind `behind_window` a centroid survives before eviction.
    pub evict_margin: f64,
    pub association_gate: f64,
    /// Tracks with fewer centroids are not eligible as the first row on a side.
    pub min_track_centroids: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            tilt: 30f64.to_radians(),
            mount_height: 1.5,
            fov_deg: 120.0,
            range: 4.0,
            bin_depth: 1.0,
            k_init: 16,
            kmeans_max_iters: 25,
            kmeans_tol: 1e-4,
            min_cluster_points: 3,
            merge_dist: 0.3,
            ransac_iters: 1000,
            ransac_inlier_tol: 0.1,
            span_trigger: 2.0,
            behind_window: 0.5,
            evict_margin: 0.5,
            association_gate: 0.375,
            min_track_centroids: 3,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tilt_deg", self.tilt),
            ("mount_height", self.mount_height),
            ("fov_deg", self.fov_deg),
            ("range", self.range),
            ("bin_depth", self.bin_depth),
            ("kmeans_tol", self.kmeans_tol),
            ("merge_dist", self.merge_dist),
            ("ransac_inlier_tol", self.ransac_inlier_tol),
            ("span_trigger", self.span_trigger),
            ("behind_window", self.behind_window),
            ("association_gate", self.association_gate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.evict_margin >= 0.0) {
            return Err(Error::invalid("evict_margin", "must be >= 0"));
        }
        if self.fov_deg > 180.0 {
            return Err(Error::invalid("fov_deg", "must be <= 180"));
        }
        for (name, v) in [
            ("k_init", self.k_init),
            ("kmeans_max_iters", self.kmeans_max_iters),
            ("ransac_iters", self.ransac_iters),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn track_params(&self) -> TrackParams {
        TrackParams {
            merge_dist: self.merge_dist,
            association_gate: self.association_gate,
            evict_behind: self.behind_window + self.evict_margin,
        }
    }

    /// Rotation angle handed to [`ground_plane_filter`]: the ground normal of a
    /// sensor pitched down by `tilt` is `R_y(-tilt) * z`.
    pub fn plane_angle(&self) -> f64 {
        -self.tilt
    }

    /// Sensor-frame point to its ground projection in the robot frame.
    pub fn project_to_ground(&self, p: &Point3) -> Vec2 {
        let (s, c) = self.tilt.sin_cos();
        Vec2::new(c * p.x + s * p.z, p.y)
    }
}

/// Everything the detector produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Robot-frame cluster centroids found in this frame.
    pub centroids: Vec<Centroid>,
    pub fit: RowFit,
    /// Current estimate per side: this frame's fit, or the previous one
    /// carried forward while the span is below the trigger.
    pub left: Option<RowSegment>,
    pub right: Option<RowSegment>,
    pub no_return: bool,
}

impl Detection {
    pub fn both_rows(&self) -> Option<(RowSegment, RowSegment)> {
        Some((self.left?, self.right?))
    }

    /// Both sides were refit this frame from spans above the trigger.
    pub fn rows_ready(&self) -> bool {
        self.fit.left.segment().is_some() && self.fit.right.segment().is_some()
    }
}

/// Stateful detector: owns the centroid map and the seeded RNG driving
/// K-means seeding and RANSAC sampling.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    map: CentroidMap,
    rng: ChaCha8Rng,
    /// Last fitted segment per side, stored in the odometry frame.
    held_left: Option<RowSegment>,
    held_right: Option<RowSegment>,
}

impl Detector {
    pub fn new(cfg: DetectorConfig, seed: u64) -> Self {
        Self {
            cfg,
            map: CentroidMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            held_left: None,
            held_right: None,
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn map(&self) -> &CentroidMap {
        &self.map
    }

    /// Forgets all tracks and held estimates (used when entering a new lane).
    pub fn reset(&mut self) {
        self.map.clear();
        self.held_left = None;
        self.held_right = None;
    }

    /// Stages 1 and 2 for one frame: robot-frame centroids from a raw cloud.
    pub fn extract_centroids(&mut self, cloud: &PointCloud) -> (Vec<Centroid>, bool) {
        let cropped = crop_fov(cloud, &self.cfg);
        let filtered = ground_plane_filter(&cropped, self.cfg.plane_angle());
        if filtered.no_return {
            return (Vec::new(), true);
        }
        let ground: Vec<Vec2> = filtered.cloud.iter().map(|p| self.cfg.project_to_ground(p)).collect();
        (bin_and_cluster(&ground, &self.cfg, &mut self.rng), false)
    }

    pub fn process(&mut self, cloud: &PointCloud, odom: &Pose2) -> Detection {
        let (centroids, no_return) = self.extract_centroids(cloud);
        let positions: Vec<Vec2> = centroids.iter().map(|c| c.pos).collect();
        self.map.accumulate(&positions, odom, &self.cfg.track_params());
        let local = self.map.local_tracks(odom);
        let fit = fit_rows(&local, &self.cfg, &mut self.rng);

        let resolve = |side: &SideFit, held: &mut Option<RowSegment>| -> Option<RowSegment> {
            match side {
                SideFit::Fitted { segment, .. } => {
                    *held = Some(segment.map(|p| odom.to_parent(p)));
                    Some(*segment)
                }
                SideFit::BelowSpan { .. } => held.map(|s| s.map(|p| odom.to_local(p))),
                SideFit::Absent => {
                    *held = None;
                    None
                }
            }
        };
        let left = resolve(&fit.left, &mut self.held_left);
        let right = resolve(&fit.right, &mut self.held_right);
        Detection {
            centroids,
            fit,
            left,
            right,
            no_return,
        }
    }
}
