//! RANSAC line fitting on accumulated centroids and first-left/first-right
//! row extraction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::tracks::LocalTrack;
use crate::detection::DetectorConfig;
use crate::geometry::Vec2;

/// A detected crop row as a robot-frame segment. Endpoint 1 is the trailing
/// end, endpoint 2 the far end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl RowSegment {
    pub fn new(p1: Vec2, p2: Vec2) -> Self {
        Self {
            x1: p1.x,
            y1: p1.y,
            x2: p2.x,
            y2: p2.y,
        }
    }

    pub fn start(&self) -> Vec2 {
        Vec2::new(self.x1, self.y1)
    }

    pub fn end(&self) -> Vec2 {
        Vec2::new(self.x2, self.y2)
    }

    pub fn length(&self) -> f64 {
        self.start().distance(self.end())
    }

    pub fn direction(&self) -> Vec2 {
        (self.end() - self.start()).normalized()
    }

    /// Orientation of the segment in the robot frame.
    pub fn angle(&self) -> f64 {
        self.direction().angle()
    }

    pub fn midpoint(&self) -> Vec2 {
        self.start().lerp(self.end(), 0.5)
    }

    pub fn is_valid(&self) -> bool {
        self.start().is_finite() && self.end().is_finite() && self.length() > 0.0
    }

    /// Applies a rigid map (e.g. a change of frame) to both endpoints.
    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> RowSegment {
        RowSegment::new(f(self.start()), f(self.end()))
    }
}

/// Infinite line through `point` along unit `dir`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2 {
    pub point: Vec2,
    pub dir: Vec2,
}

impl Line2 {
    pub fn distance(&self, p: Vec2) -> f64 {
        self.dir.cross(p - self.point).abs()
    }

    pub fn param(&self, p: Vec2) -> f64 {
        (p - self.point).dot(self.dir)
    }

    pub fn at(&self, t: f64) -> Vec2 {
        self.point + self.dir * t
    }
}

/// Orthogonal least-squares line (principal axis of the points).
pub fn fit_line_lsq(points: &[Vec2]) -> Option<Line2> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if sxx + syy == 0.0 {
        return None;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Line2 {
        point: mean,
        dir: Vec2::from_angle(angle),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub line: Line2,
    pub inliers: Vec<usize>,
}

/// Samples `iters` random pairs, keeps the line with the most points within
/// `tol` (first best wins), then refits on that inlier set by least squares.
pub fn ransac_line<R: Rng + ?Sized>(points: &[Vec2], iters: usize, tol: f64, rng: &mut R) -> Option<RansacFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mut best: Option<(usize, Line2)> = None;
    for _ in 0..iters {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let d = points[j] - points[i];
        if d.norm() < 1e-9 {
            continue;
        }
        let line = Line2 {
            point: points[i],
            dir: d.normalized(),
        };
        let count = points.iter().filter(|&&p| line.distance(p) <= tol).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, line));
        }
    }
    let (_, hypothesis) = best?;
    let inliers: Vec<usize> = (0..n).filter(|&k| hypothesis.distance(points[k]) <= tol).collect();
    let subset: Vec<Vec2> = inliers.iter().map(|&k| points[k]).collect();
    let line = fit_line_lsq(&subset).unwrap_or(hypothesis);
    Some(RansacFit { line, inliers })
}

/// Segment covering the inliers of `fit`, oriented so that it points forward
/// (non-negative robot-frame x component).
pub fn segment_from_fit(points: &[Vec2], fit: &RansacFit) -> Option<RowSegment> {
    let mut line = fit.line;
    if line.dir.x < 0.0 {
        line.dir = -line.dir;
    }
    let (lo, hi) = fit
        .inliers
        .iter()
        .map(|&k| line.param(points[k]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let seg = RowSegment::new(line.at(lo), line.at(hi));
    seg.is_valid().then_some(seg)
}

/// Outcome for one side of the robot.
#[derive(Debug, Clone, PartialEq)]
pub enum SideFit {
    /// No usable track on this side.
    Absent,
    /// A track exists but its windowed span is below the trigger; the caller
    /// keeps its previous estimate.
    BelowSpan {
        track: u64,
        span: f64,
    },
    Fitted {
        track: u64,
        segment: RowSegment,
    },
}

impl SideFit {
    pub fn segment(&self) -> Option<RowSegment> {
        match self {
            SideFit::Fitted { segment, .. } => Some(*segment),
            _ => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, SideFit::Absent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFit {
    pub left: SideFit,
    pub right: SideFit,
}

impl RowFit {
    pub fn end_of_row(&self) -> bool {
        self.left.is_absent() && self.right.is_absent()
    }
}

/// Tracks nearest the robot centerline on each side: `(left, right)`.
pub fn select_side_tracks<'a>(
    tracks: &'a [LocalTrack],
    cfg: &DetectorConfig,
) -> (Option<&'a LocalTrack>, Option<&'a LocalTrack>) {
    let mut left: Option<(&LocalTrack, f64)> = None;
    let mut right: Option<(&LocalTrack, f64)> = None;
    for t in tracks {
        if t.points.len() < cfg.min_track_centroids.max(2) {
            continue;
        }
        let Some(y) = t.lateral_at(0.0) else { continue };
        if y > 0.0 {
            if left.is_none_or(|(_, ly)| y < ly) {
                left = Some((t, y));
            }
        } else if y < 0.0 && right.is_none_or(|(_, ry)| y > ry) {
            right = Some((t, y));
        }
    }
    (left.map(|l| l.0), right.map(|r| r.0))
}

fn fit_side<R: Rng + ?Sized>(track: Option<&LocalTrack>, cfg: &DetectorConfig, rng: &mut R) -> SideFit {
    let Some(track) = track else {
        return SideFit::Absent;
    };
    let window: Vec<Vec2> = track
        .points
        .iter()
        .copied()
        .filter(|p| p.x >= -cfg.behind_window)
        .collect();
    if window.len() < 2 {
        return SideFit::Absent;
    }
    let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.x), hi.max(p.x))
    });
    let span = hi - lo;
    if span <= cfg.span_trigger {
        return SideFit::BelowSpan { track: track.id, span };
    }
    ransac_line(&window, cfg.ransac_iters, cfg.ransac_inlier_tol, rng)
        .and_then(|fit| segment_from_fit(&window, &fit))
        .map_or(SideFit::BelowSpan { track: track.id, span }, |segment| {
            SideFit::Fitted {
                track: track.id,
                segment,
            }
        })
}

/// Fits the first row on each side of the robot from the robot-frame tracks.
pub fn fit_rows<R: Rng + ?Sized>(tracks: &[LocalTrack], cfg: &DetectorConfig, rng: &mut R) -> RowFit {
    let (l, r) = select_side_tracks(tracks, cfg);
    let left = fit_side(l, cfg, rng);
    let right = fit_side(r, cfg, rng);
    RowFit { left, right }
}
