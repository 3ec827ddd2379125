//! Per-row centroid tracks accumulated in the odometry frame.
//!
//! Centroids are stored in odometry coordinates together with the odometry
//! pose at detection time; every query re-expresses them in the current robot
//! frame, so the robot-frame view is always a from-scratch transform of the
//! stored data.

use crate::geometry::{Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedCentroid {
    /// Odometry-frame position.
    pub pos: Vec2,
    /// Odometry pose when the centroid (or its latest merge) was observed.
    pub stamp: Pose2,
    /// Number of detections fused into this entry.
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// Odometry-frame heading defining the along-track coordinate.
    pub axis: f64,
    /// Sorted by along-track coordinate, pairwise at least the merge distance apart.
    pub centroids: Vec<StampedCentroid>,
}

impl Track {
    fn insert(&mut self, c: StampedCentroid, merge_dist: f64) {
        let newest_stamp = c.stamp;
        self.centroids.push(c);
        // fuse until no pair is closer than the merge distance
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..self.centroids.len() {
                for j in i + 1..self.centroids.len() {
                    let d = self.centroids[i].pos.distance(self.centroids[j].pos);
                    if d < merge_dist && best.is_none_or(|b| d < b.2) {
                        best = Some((i, j, d));
                    }
                }
            }
            let Some((i, j, _)) = best else { break };
            let b = self.centroids.remove(j);
            let a = &mut self.centroids[i];
            let w = (a.weight + b.weight) as f64;
            a.pos = (a.pos * a.weight as f64 + b.pos * b.weight as f64) * (1.0 / w);
            a.weight += b.weight;
            if b.stamp == newest_stamp {
                a.stamp = newest_stamp;
            }
        }
        let axis = Vec2::from_angle(self.axis);
        self.centroids
            .sort_by(|a, b| a.pos.dot(axis).total_cmp(&b.pos.dot(axis)));
    }
}

/// A track re-expressed in the current robot frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrack {
    pub id: u64,
    /// Robot-frame centroids in along-track order.
    pub points: Vec<Vec2>,
}

impl LocalTrack {
    /// Lateral position of the track at robot-frame depth `x`, read off a
    /// Theil-Sen line through its centroids. Robust to a stray centroid and
    /// valid when the rows are slanted in the robot frame.
    pub fn lateral_at(&self, x: f64) -> Option<f64> {
        let pts = &self.points;
        let mut slopes = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let dx = b.x - a.x;
                if dx.abs() > 1e-6 {
                    slopes.push((b.y - a.y) / dx);
                }
            }
        }
        let m = median(&mut slopes).unwrap_or(0.0);
        let mut icepts: Vec<f64> = pts.iter().map(|p| p.y - m * p.x).collect();
        median(&mut icepts).map(|b| b + m * x)
    }

    pub fn farthest_x(&self) -> Option<f64> {
        self.points.iter().map(|p| p.x).reduce(f64::max)
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    pub merge_dist: f64,
    pub association_gate: f64,
    /// Centroids further behind the robot than this are evicted.
    pub evict_behind: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidMap {
    tracks: Vec<Track>,
    next_id: u64,
}

impl Default for CentroidMap {
    fn default() -> Self {
        Self::new()
    }
}

impl CentroidMap {
    pub fn new() -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.iter().map(|t| t.centroids.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn clear(&mut self) {
        self.tracks.clear();
    }

    /// All tracks expressed in the robot frame of `odom`.
    pub fn local_tracks(&self, odom: &Pose2) -> Vec<LocalTrack> {
        self.tracks
            .iter()
            .map(|t| LocalTrack {
                id: t.id,
                points: t.centroids.iter().map(|c| odom.to_local(c.pos)).collect(),
            })
            .collect()
    }

    /// Folds this frame's robot-frame `centroids` into the map at odometry pose
    /// `odom`: evicts stale entries, then associates each centroid with the
    /// laterally nearest track inside the gate or opens a new track.
    pub fn accumulate(&mut self, centroids: &[Vec2], odom: &Pose2, params: &TrackParams) {
        for t in &mut self.tracks {
            t.centroids.retain(|c| odom.to_local(c.pos).x >= -params.evict_behind);
        }
        self.tracks.retain(|t| !t.centroids.is_empty());

        for &c in centroids {
            let local = self.local_tracks(odom);
            let mut best: Option<(usize, f64, f64)> = None;
            for (i, t) in local.iter().enumerate() {
                let Some(ty) = t.lateral_at(c.x) else { continue };
                let off = (c.y - ty).abs();
                if off > params.association_gate {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, bo, bty)) => off < bo || (off == bo && ty.abs() < bty.abs()),
                };
                if better {
                    best = Some((i, off, ty));
                }
            }
            let entry = StampedCentroid {
                pos: odom.to_parent(c),
                stamp: *odom,
                weight: 1,
            };
            match best {
                Some((i, _, _)) => self.tracks[i].insert(entry, params.merge_dist),
                None => {
                    self.tracks.push(Track {
                        id: self.next_id,
                        axis: odom.psi,
                        centroids: vec![entry],
                    });
                    self.next_id += 1;
                }
            }
        }
        self.fuse_duplicates(odom, params.merge_dist);
    }

    /// Folds together tracks that follow the same row: the median lateral gap
    /// between the shorter track's centroids and the other track is below
    /// `merge_dist`. The older track survives.
    fn fuse_duplicates(&mut self, odom: &Pose2, merge_dist: f64) {
        'outer: loop {
            let local = self.local_tracks(odom);
            for i in 0..local.len() {
                for j in i + 1..local.len() {
                    let (short, long) = if local[i].points.len() <= local[j].points.len() {
                        (&local[i], &local[j])
                    } else {
                        (&local[j], &local[i])
                    };
                    let mut gaps: Vec<f64> = short
                        .points
                        .iter()
                        .filter_map(|p| long.lateral_at(p.x).map(|y| (p.y - y).abs()))
                        .collect();
                    if gaps.is_empty() {
                        continue;
                    }
                    gaps.sort_by(f64::total_cmp);
                    if gaps[gaps.len() / 2] < merge_dist {
                        let absorbed = self.tracks.remove(j);
                        for c in absorbed.centroids {
                            self.tracks[i].insert(c, merge_dist);
                        }
                        continue 'outer;
                    }
                }
            }
            break;
        }
    }
}

/// Free-function form of [`CentroidMap::accumulate`].
pub fn accumulate_centroids(map: &mut CentroidMap, centroids: &[Vec2], odom: &Pose2, params: &TrackParams) {
    map.accumulate(centroids, odom, params);
}
