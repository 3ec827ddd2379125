//! Ground-truth comparison and metric aggregation.
//!
//! Every statistic is a mean absolute value with the population standard
//! deviation of the absolute values.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::detection::RowSegment;
use crate::error::{Error, Result};
use crate::geometry::{project_onto_polyline, Pose2, Vec2};
use crate::lane_switch::Phase;

/// Number of uniform samples along a predicted row.
pub const ROW_SAMPLES: usize = 10;

/// One control tick of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub tick: u64,
    pub true_pose: Pose2,
    pub odom_pose: Pose2,
    /// Signed, positive when the robot is left of the active centerline.
    pub cross_track: f64,
    pub heading_err: f64,
    pub det_dist_err_left: Option<f64>,
    pub det_dist_err_right: Option<f64>,
    pub det_ang_err_left: Option<f64>,
    pub det_ang_err_right: Option<f64>,
    pub fsm_state: Phase,
}

pub const CSV_HEADER: &str = "tick,true_x,true_y,true_psi,odom_x,odom_y,odom_psi,cross_track,heading_err,\
det_dist_err_left,det_dist_err_right,det_ang_err_left,det_ang_err_right,fsm_state";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let (t, o) = (&self.true_pose, &self.odom_pose);
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            self.tick,
            t.x,
            t.y,
            t.psi,
            o.x,
            o.y,
            o.psi,
            self.cross_track,
            self.heading_err,
            opt(self.det_dist_err_left),
            opt(self.det_dist_err_right),
            opt(self.det_ang_err_left),
            opt(self.det_ang_err_right),
            self.fsm_state
        )
    }
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Distance and angular error of a predicted row against its true polyline,
/// both in the same frame. `gate` bounds how far the segment midpoint may lie
/// from the polyline before the pair is rejected as unrelated.
pub fn row_detection_error(pred: &RowSegment, gt: &[Vec2], gate: f64) -> Result<(f64, f64)> {
    let mid = project_onto_polyline(gt, pred.midpoint()).ok_or(Error::Association { gate })?;
    if mid.distance > gate {
        return Err(Error::Association { gate });
    }
    let (a, b) = (pred.start(), pred.end());
    let mut dist = 0.0;
    for i in 0..ROW_SAMPLES {
        let p = a.lerp(b, i as f64 / (ROW_SAMPLES - 1) as f64);
        dist += project_onto_polyline(gt, p).map_or(f64::NAN, |q| q.distance);
    }
    dist /= ROW_SAMPLES as f64;
    let dir = pred.direction();
    // rows are undirected: fold into [0, pi/2]
    let ang = dir.cross(mid.tangent).atan2(dir.dot(mid.tangent)).abs();
    let ang = ang.min(std::f64::consts::PI - ang);
    Ok((dist, ang))
}

/// Mean absolute value and population standard deviation of the absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Stat> {
        let abs: Vec<f64> = values.iter().filter(|v| !v.is_nan()).map(|v| v.abs()).collect();
        if abs.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let n = abs.len() as f64;
        let mean = abs.iter().sum::<f64>() / n;
        let var = abs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Stat {
            mean,
            std: var.sqrt(),
            count: abs.len(),
        })
    }
}

/// Per-metric statistics of one run. Detection errors pool left and right rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub records: usize,
    pub std_kind: &'static str,
    pub metrics: BTreeMap<&'static str, Stat>,
}

pub fn aggregate(records: &[MetricsRecord]) -> Result<MetricSummary> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let following: Vec<&MetricsRecord> = records.iter().filter(|r| r.fsm_state == Phase::RowFollowing).collect();
    let collect = |f: &dyn Fn(&MetricsRecord) -> Vec<Option<f64>>| -> Vec<f64> {
        following.iter().flat_map(|r| f(r)).flatten().collect()
    };
    let columns: [(&'static str, Vec<f64>); 4] = [
        ("cross_track", collect(&|r| vec![Some(r.cross_track)])),
        ("heading_err", collect(&|r| vec![Some(r.heading_err)])),
        (
            "det_dist_err",
            collect(&|r| vec![r.det_dist_err_left, r.det_dist_err_right]),
        ),
        (
            "det_ang_err",
            collect(&|r| vec![r.det_ang_err_left, r.det_ang_err_right]),
        ),
    ];
    let mut metrics = BTreeMap::new();
    for (name, values) in columns {
        // a metric with no samples (e.g. detection never fired) is omitted
        if let Ok(s) = Stat::of(&values) {
            metrics.insert(name, s);
        }
    }
    Ok(MetricSummary {
        records: records.len(),
        std_kind: "population",
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gt() -> Vec<Vec2> {
        (0..=20).map(|i| Vec2::new(i as f64 * 0.5, 0.375)).collect()
    }

    #[test]
    fn exact_and_offset_predictions() {
        let seg = RowSegment::new(Vec2::new(1.0, 0.375), Vec2::new(4.0, 0.375));
        let (d, a) = row_detection_error(&seg, &gt(), 0.375).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-12);

        let seg = RowSegment::new(Vec2::new(1.0, 0.405), Vec2::new(4.0, 0.405));
        let (d, a) = row_detection_error(&seg, &gt(), 0.375).unwrap();
        assert_abs_diff_eq!(d, 0.03, epsilon = 1e-6);
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn rotated_prediction_matches_closed_form() {
        let len = 3.0;
        let th = 2f64.to_radians();
        let c = Vec2::new(5.0, 0.375);
        let half = Vec2::new(len / 2.0, 0.0).rotated(th);
        let seg = RowSegment::new(c - half, c + half);
        let (d, a) = row_detection_error(&seg, &gt(), 0.375).unwrap();
        let expected = (0..10)
            .map(|i| (i as f64 / 9.0 - 0.5).abs() * len * th.sin())
            .sum::<f64>()
            / 10.0;
        assert_abs_diff_eq!(a, th, epsilon = 1e-6);
        assert_abs_diff_eq!(d, expected, epsilon = 1e-6);
    }

    #[test]
    fn reversed_prediction_has_same_angle() {
        let seg = RowSegment::new(Vec2::new(4.0, 0.375), Vec2::new(1.0, 0.375));
        let (_, a) = row_detection_error(&seg, &gt(), 0.375).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn far_prediction_fails_association() {
        let seg = RowSegment::new(Vec2::new(1.0, 1.2), Vec2::new(4.0, 1.2));
        assert!(matches!(
            row_detection_error(&seg, &gt(), 0.375),
            Err(Error::Association { .. })
        ));
    }

    #[test]
    fn stats_match_hand_computation() {
        let s = Stat::of(&[0.01, 0.02, 0.03]).unwrap();
        assert_abs_diff_eq!(s.mean, 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std, 0.008164965809277, epsilon = 1e-12);
        let z = Stat::of(&[0.0; 5]).unwrap();
        assert_eq!((z.mean, z.std), (0.0, 0.0));
        assert!(matches!(Stat::of(&[]), Err(Error::EmptyRecords)));
        assert!(matches!(aggregate(&[]), Err(Error::EmptyRecords)));
    }

    fn record(tick: u64, ct: f64) -> MetricsRecord {
        MetricsRecord {
            tick,
            true_pose: Pose2::default(),
            odom_pose: Pose2::default(),
            cross_track: ct,
            heading_err: 0.0,
            det_dist_err_left: Some(ct / 2.0),
            det_dist_err_right: None,
            det_ang_err_left: None,
            det_ang_err_right: None,
            fsm_state: Phase::RowFollowing,
        }
    }

    #[test]
    fn csv_uses_six_decimals_and_nan() {
        let row = record(3, -0.0125).csv_row();
        assert_eq!(
            row,
            "3,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,-0.012500,0.000000,-0.006250,nan,nan,nan,RowFollowing"
        );
        assert_eq!(CSV_HEADER.split(',').count(), row.split(',').count());
    }

    #[test]
    fn aggregate_of_concatenation_is_weighted() {
        let a: Vec<_> = (0..7).map(|i| record(i, 0.01 * i as f64)).collect();
        let b: Vec<_> = (0..4).map(|i| record(i, -0.03 * i as f64 + 0.005)).collect();
        let (sa, sb) = (aggregate(&a).unwrap(), aggregate(&b).unwrap());
        let ab: Vec<_> = a.iter().chain(&b).cloned().collect();
        let s = aggregate(&ab).unwrap();
        assert_eq!(s.records, a.len() + b.len());
        let (ma, mb, m) = (
            sa.metrics["cross_track"],
            sb.metrics["cross_track"],
            s.metrics["cross_track"],
        );
        assert_eq!(m.count, ma.count + mb.count);
        let weighted = (ma.mean * ma.count as f64 + mb.mean * mb.count as f64) / m.count as f64;
        assert_abs_diff_eq!(m.mean, weighted, epsilon = 1e-12);
    }
}
