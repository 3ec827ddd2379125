use crate::detection::RowSegment;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Segments steeper than this (|cos| of the robot-frame angle) cannot be used
/// as functions of depth.
const MIN_FORWARD_COMPONENT: f64 = 0.2;

/// Rows are extrapolated at least this far ahead so a held estimate that has
/// slipped behind the robot still yields a usable horizon.
pub const MIN_LOOKAHEAD: f64 = 1.0;

/// Robot-frame lateral position of the segment's supporting line at depth `x`.
fn lateral_at(seg: &RowSegment, x: f64) -> Result<f64> {
    let d = seg.end() - seg.start();
    let len = d.norm();
    if !(len > 0.0) || (d.x / len).abs() < MIN_FORWARD_COMPONENT {
        return Err(Error::DegenerateRows(format!(
            "segment ({:.3}, {:.3})-({:.3}, {:.3}) is not a forward row",
            seg.x1, seg.y1, seg.x2, seg.y2
        )));
    }
    Ok(seg.y1 + (x - seg.x1) * d.y / d.x)
}

/// Midline waypoints between two detected rows, every `spacing` meters of
/// depth from the robot (x = 0) to the far end of the shorter segment, or to
/// [`MIN_LOOKAHEAD`] if that is further.
pub fn generate_waypoints(left: &RowSegment, right: &RowSegment, spacing: f64) -> Result<Vec<Vec2>> {
    if !(spacing > 0.0) {
        return Err(Error::invalid("waypoint_spacing", "must be > 0"));
    }
    let far = left.x2.max(left.x1).min(right.x2.max(right.x1));
    if !far.is_finite() {
        return Err(Error::DegenerateRows("non-finite row segment".into()));
    }
    let far = far.max(MIN_LOOKAHEAD);
    for x in [0.0, far] {
        if lateral_at(left, x)? <= lateral_at(right, x)? {
            return Err(Error::DegenerateRows(format!("rows cross within {far:.2} m")));
        }
    }
    let n = (far / spacing + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..=n {
        let x = i as f64 * spacing;
        out.push(Vec2::new(x, 0.5 * (lateral_at(left, x)? + lateral_at(right, x)?)));
    }
    if out.len() < 2 {
        out.push(Vec2::new(far, 0.5 * (lateral_at(left, far)? + lateral_at(right, far)?)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64) -> RowSegment {
        RowSegment { x1, y1, x2, y2 }
    }

    #[test]
    fn symmetric_rows_give_centerline_waypoints() {
        let wps = generate_waypoints(&seg(0.0, 0.375, 3.0, 0.375), &seg(0.0, -0.375, 3.0, -0.375), 0.25).unwrap();
        assert_eq!(wps.len(), 13);
        for (i, w) in wps.iter().enumerate() {
            assert_abs_diff_eq!(w.x, 0.25 * i as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(w.y, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sloped_left_row_matches_analytic_midline() {
        let left = seg(0.0, 0.375, 3.0, 0.475);
        let right = seg(0.0, -0.375, 3.0, -0.375);
        let wps = generate_waypoints(&left, &right, 0.25).unwrap();
        for w in &wps {
            // midline of y = 0.375 + x/30 and y = -0.375
            let expected = 0.5 * ((0.375 + w.x / 30.0) + (-0.375));
            assert_abs_diff_eq!(w.y, expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn waypoints_stop_at_the_shorter_row() {
        let wps = generate_waypoints(&seg(-0.5, 0.4, 2.1, 0.4), &seg(-0.5, -0.4, 3.8, -0.4), 0.5).unwrap();
        assert_abs_diff_eq!(wps.last().unwrap().x, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rows_behind_the_robot_are_extrapolated() {
        let wps = generate_waypoints(&seg(-2.0, 0.4, -0.1, 0.4), &seg(-2.0, -0.4, -0.3, -0.4), 0.25).unwrap();
        assert_eq!(wps.len(), 5);
        assert_abs_diff_eq!(wps.last().unwrap().x, MIN_LOOKAHEAD, epsilon = 1e-12);
    }

    #[test]
    fn crossing_rows_are_degenerate() {
        let err = generate_waypoints(&seg(0.0, 0.3, 3.0, -0.5), &seg(0.0, -0.3, 3.0, 0.2), 0.25).unwrap_err();
        assert!(matches!(err, Error::DegenerateRows(_)));
        let err = generate_waypoints(&seg(0.0, 0.3, 0.1, 2.0), &seg(0.0, -0.3, 3.0, -0.3), 0.25).unwrap_err();
        assert!(matches!(err, Error::DegenerateRows(_)));
    }
}
