//! Field-of-view crop and the virtual ground-plane filter.

use crate::cloud::{Point3, PointCloud};
use crate::detection::DetectorConfig;

/// Keeps points inside the frontal cone `|azimuth| <= fov/2` (about sensor X)
/// whose horizontal range `hypot(x, y)` is at most `cfg.range`.
pub fn crop_fov(cloud: &PointCloud, cfg: &DetectorConfig) -> PointCloud {
    let half = 0.5 * cfg.fov_deg.to_radians();
    cloud
        .iter()
        .copied()
        .filter(|p| p.y.atan2(p.x).abs() <= half && p.x.hypot(p.y) <= cfg.range)
        .collect()
}

/// Normal of the virtual ground plane, `R_y(theta) * [0, 0, 1]`.
pub fn plane_normal(theta: f64) -> Point3 {
    let (s, c) = theta.sin_cos();
    Point3::new(s, 0.0, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundFiltered {
    pub cloud: PointCloud,
    /// Input cloud was empty; nothing to filter against.
    pub no_return: bool,
}

/// Keeps the points strictly above the plane with normal `plane_normal(theta)`
/// raised to pass through the cloud centroid: `{ p : n · (p - centroid) > 0 }`.
pub fn ground_plane_filter(cloud: &PointCloud, theta: f64) -> GroundFiltered {
    let Some(centroid) = cloud.centroid() else {
        return GroundFiltered {
            cloud: PointCloud::default(),
            no_return: true,
        };
    };
    let n = plane_normal(theta);
    let d = n.dot(centroid);
    GroundFiltered {
        cloud: cloud.iter().copied().filter(|p| n.dot(*p) > d).collect(),
        no_return: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn level_plane_through_centroid_keeps_the_top_layer() {
        let cloud = PointCloud::new(vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(2.0, -1.0, 2.0),
        ]);
        let out = ground_plane_filter(&cloud, 0.0);
        assert_eq!(out.cloud.points, vec![Point3::new(2.0, -1.0, 2.0)]);
        assert!(!out.no_return);
    }

    #[test]
    fn thirty_degree_normal() {
        let n = plane_normal(30f64.to_radians());
        assert_abs_diff_eq!(n.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(n.y, 0.0);
        assert_abs_diff_eq!(n.z, 0.8660254037844386, epsilon = 1e-12);
    }

    #[test]
    fn empty_cloud_is_flagged() {
        let out = ground_plane_filter(&PointCloud::default(), 0.4);
        assert!(out.no_return);
        assert!(out.cloud.is_empty());
    }

    #[test]
    fn fov_crop_edge_cases() {
        let cfg = DetectorConfig::default();
        let az = |deg: f64, r: f64| {
            let a = deg.to_radians();
            Point3::new(r * a.cos(), r * a.sin(), -1.0)
        };
        let cloud = PointCloud::new(vec![az(0.0, 2.0), az(90.0, 2.0), az(-59.0, 3.9), az(10.0, 4.1)]);
        let kept = crop_fov(&cloud, &cfg);
        assert_eq!(kept.points, vec![az(0.0, 2.0), az(-59.0, 3.9)]);
    }
}
