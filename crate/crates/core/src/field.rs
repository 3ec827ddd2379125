//! Synthetic row-crop fields and their ground-truth row geometry.
//!
//! Rows run along +x from `s = 0` to `s = row_length`, centered laterally on
//! `y = 0`. A non-zero curvature bends every row into a concentric circular arc
//! (center on the +y side for positive curvature), so adjacent rows stay exactly
//! `inter_row_spacing` apart.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Radius of the vertical stalk cylinder of every plant.
pub const STALK_RADIUS: f64 = 0.01;

/// Sample pitch of ground-truth row polylines along the reference arc.
const POLYLINE_STEP: f64 = 0.1;

/// Weeds are kept this far from the row lines.
const WEED_ROW_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSpec {
    pub num_rows: usize,
    pub row_length: f64,
    pub inter_row_spacing: f64,
    pub plant_spacing: f64,
    pub plant_height_mean: f64,
    pub plant_height_std: f64,
    pub canopy_radius_mean: f64,
    pub canopy_radius_std: f64,
    /// Weeds per square meter of inter-row ground.
    pub weed_density: f64,
    pub gap_probability: f64,
    /// Signed row curvature in 1/m; positive bends toward +y.
    pub curvature: f64,
    /// Standard deviation of the lateral placement error of crop plants,
    /// truncated at half the plant's canopy radius.
    pub lateral_jitter: f64,
    pub seed: u64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            num_rows: 6,
            row_length: 30.0,
            inter_row_spacing: 0.75,
            plant_spacing: 0.2,
            plant_height_mean: 0.35,
            plant_height_std: 0.03,
            canopy_radius_mean: 0.12,
            canopy_radius_std: 0.02,
            weed_density: 0.0,
            gap_probability: 0.0,
            curvature: 0.0,
            lateral_jitter: 0.0,
            seed: 0,
        }
    }
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be >= 0, got {v}")))
            }
        }
        if self.num_rows < 2 {
            return Err(Error::invalid(
                "num_rows",
                format!("must be >= 2, got {}", self.num_rows),
            ));
        }
        positive("row_length", self.row_length)?;
        positive("inter_row_spacing", self.inter_row_spacing)?;
        positive("plant_spacing", self.plant_spacing)?;
        positive("plant_height_mean", self.plant_height_mean)?;
        non_negative("plant_height_std", self.plant_height_std)?;
        positive("canopy_radius_mean", self.canopy_radius_mean)?;
        non_negative("canopy_radius_std", self.canopy_radius_std)?;
        non_negative("weed_density", self.weed_density)?;
        non_negative("lateral_jitter", self.lateral_jitter)?;
        if !(0.0..1.0).contains(&self.gap_probability) {
            return Err(Error::invalid(
                "gap_probability",
                format!("must be in [0, 1), got {}", self.gap_probability),
            ));
        }
        if !self.curvature.is_finite() {
            return Err(Error::invalid("curvature", "must be finite"));
        }
        let half_width = 0.5 * (self.num_rows - 1) as f64 * self.inter_row_spacing;
        if self.curvature.abs() * half_width >= 1.0 {
            return Err(Error::invalid("curvature", "radius must exceed half the field width"));
        }
        Ok(())
    }

    /// Lateral offset of row `j` from the reference line.
    pub fn row_offset(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.num_rows - 1) as f64) * self.inter_row_spacing
    }

    /// Plants per row when nothing is dropped.
    pub fn plants_per_row(&self) -> usize {
        (self.row_length / self.plant_spacing + 1e-9).floor() as usize + 1
    }

    /// World position at arc parameter `s` along the reference line and lateral
    /// offset `offset`.
    pub fn point_at(&self, s: f64, offset: f64) -> Vec2 {
        self.base_point(s) + self.normal_at(s) * offset
    }

    /// Direction of travel of every row at arc parameter `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        s * self.curvature
    }

    /// Unit normal (pointing toward +offset) at arc parameter `s`.
    pub fn normal_at(&self, s: f64) -> Vec2 {
        Vec2::from_angle(self.heading_at(s)).perp()
    }

    fn base_point(&self, s: f64) -> Vec2 {
        let k = self.curvature;
        if k.abs() < 1e-12 {
            Vec2::new(s, 0.0)
        } else {
            let phi = s * k;
            Vec2::new(phi.sin() / k, (1.0 - phi.cos()) / k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub position: Vec2,
    pub stalk_height: f64,
    /// The canopy is a sphere of this radius centered at the stalk top.
    pub canopy_radius: f64,
    pub is_weed: bool,
    /// Row the plant belongs to; `None` for weeds.
    pub row: Option<usize>,
}

impl Plant {
    pub fn top_height(&self) -> f64 {
        self.stalk_height + self.canopy_radius
    }

    /// Horizontal radius of the plant's footprint.
    pub fn footprint_radius(&self) -> f64 {
        self.canopy_radius.max(STALK_RADIUS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub spec: FieldSpec,
    pub plants: Vec<Plant>,
    /// Ground-truth row center lines, ordered by increasing lateral offset.
    pub row_polylines: Vec<Vec<Vec2>>,
}

impl Field {
    pub fn num_rows(&self) -> usize {
        self.spec.num_rows
    }

    pub fn num_lanes(&self) -> usize {
        self.spec.num_rows - 1
    }

    /// Axis-aligned bounding box of every plant footprint and row polyline.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut grow = |p: Vec2, r: f64| {
            lo.x = lo.x.min(p.x - r);
            lo.y = lo.y.min(p.y - r);
            hi.x = hi.x.max(p.x + r);
            hi.y = hi.y.max(p.y + r);
        };
        for plant in &self.plants {
            grow(plant.position, plant.footprint_radius());
        }
        for line in &self.row_polylines {
            for &p in line {
                grow(p, 0.0);
            }
        }
        (lo, hi)
    }

    /// Writes the plant list as CSV: `x,y,stalk_height,canopy_radius,is_weed`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,stalk_height,canopy_radius,is_weed")?;
        for p in &self.plants {
            writeln!(
                out,
                "{:.6},{:.6},{:.6},{:.6},{}",
                p.position.x,
                p.position.y,
                p.stalk_height,
                p.canopy_radius,
                u8::from(p.is_weed)
            )?;
        }
        Ok(())
    }
}

fn sample_positive(rng: &mut ChaCha8Rng, mean: f64, std: f64, floor: f64) -> f64 {
    let v = if std > 0.0 {
        Normal::new(mean, std).expect("std validated").sample(rng)
    } else {
        mean
    };
    v.max(floor)
}

/// Builds the field described by `spec`. Pure in `spec` (including its seed).
pub fn generate_field(spec: &FieldSpec) -> Result<Field> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let samples = (spec.row_length / POLYLINE_STEP).ceil() as usize;
    let row_polylines: Vec<Vec<Vec2>> = (0..spec.num_rows)
        .map(|j| {
            let o = spec.row_offset(j);
            (0..=samples)
                .map(|i| {
                    let s = (i as f64 * POLYLINE_STEP).min(spec.row_length);
                    spec.point_at(s, o)
                })
                .collect()
        })
        .collect();

    let per_row = spec.plants_per_row();
    let mut plants = Vec::with_capacity(spec.num_rows * per_row);
    for j in 0..spec.num_rows {
        let o = spec.row_offset(j);
        for i in 0..per_row {
            let s = i as f64 * spec.plant_spacing;
            // every draw happens regardless of the gap outcome so that the
            // stream for later plants does not depend on earlier gaps
            let dropped = rng.random::<f64>() < spec.gap_probability;
            let stalk_height = sample_positive(&mut rng, spec.plant_height_mean, spec.plant_height_std, 0.02);
            let canopy_radius = sample_positive(&mut rng, spec.canopy_radius_mean, spec.canopy_radius_std, 0.01);
            let jitter = if spec.lateral_jitter > 0.0 {
                let raw: f64 = Normal::new(0.0, spec.lateral_jitter)
                    .expect("jitter validated")
                    .sample(&mut rng);
                let cap = 0.5 * canopy_radius;
                raw.clamp(-cap, cap)
            } else {
                0.0
            };
            if dropped {
                continue;
            }
            plants.push(Plant {
                position: spec.point_at(s, o + jitter),
                stalk_height,
                canopy_radius,
                is_weed: false,
                row: Some(j),
            });
        }
    }

    let lanes = spec.num_rows - 1;
    let area = lanes as f64 * spec.inter_row_spacing * spec.row_length;
    let weed_count = (spec.weed_density * area).round() as usize;
    let band = (spec.inter_row_spacing - 2.0 * WEED_ROW_MARGIN).max(0.0);
    for _ in 0..weed_count {
        let lane = rng.random_range(0..lanes);
        let s = rng.random::<f64>() * spec.row_length;
        let o = spec.row_offset(lane) + WEED_ROW_MARGIN + rng.random::<f64>() * band;
        let stalk_height = rng.random_range(0.05..=0.25);
        let canopy_radius = rng.random_range(0.02..=0.06);
        plants.push(Plant {
            position: spec.point_at(s, o),
            stalk_height,
            canopy_radius,
            is_weed: true,
            row: None,
        });
    }

    Ok(Field {
        spec: spec.clone(),
        plants,
        row_polylines,
    })
}

/// Center line of lane `lane_index`, the corridor between rows `lane_index`
/// and `lane_index + 1`.
pub fn ground_truth_centerline(field: &Field, lane_index: usize) -> Result<Vec<Vec2>> {
    if lane_index + 1 >= field.num_rows() {
        return Err(Error::LaneOutOfRange {
            index: lane_index,
            lanes: field.num_lanes(),
        });
    }
    let a = &field.row_polylines[lane_index];
    let b = &field.row_polylines[lane_index + 1];
    Ok(a.iter().zip(b).map(|(&p, &q)| p.lerp(q, 0.5)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_onto_polyline;
    use approx::assert_abs_diff_eq;

    fn two_row_spec() -> FieldSpec {
        FieldSpec {
            num_rows: 2,
            row_length: 10.0,
            inter_row_spacing: 0.75,
            plant_spacing: 0.25,
            gap_probability: 0.0,
            ..FieldSpec::default()
        }
    }

    #[test]
    fn two_straight_rows_have_closed_form_count_and_placement() {
        let field = generate_field(&two_row_spec()).unwrap();
        assert_eq!(field.plants.len(), 2 * 41);
        for p in &field.plants {
            let expected = if p.row == Some(0) { -0.375 } else { 0.375 };
            assert_abs_diff_eq!(p.position.y, expected, epsilon = 1e-12);
        }
        let first_row: Vec<f64> = field
            .plants
            .iter()
            .filter(|p| p.row == Some(0))
            .map(|p| p.position.x)
            .collect();
        assert_abs_diff_eq!(first_row[0], 0.0);
        assert_abs_diff_eq!(*first_row.last().unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn validation_names_the_offending_field() {
        let bad = FieldSpec {
            inter_row_spacing: 0.0,
            ..FieldSpec::default()
        };
        let err = generate_field(&bad).unwrap_err().to_string();
        assert!(err.contains("inter_row_spacing"), "{err}");
        let bad = FieldSpec {
            gap_probability: 1.0,
            ..FieldSpec::default()
        };
        assert!(generate_field(&bad)
            .unwrap_err()
            .to_string()
            .contains("gap_probability"));
        let bad = FieldSpec {
            num_rows: 1,
            ..FieldSpec::default()
        };
        assert!(generate_field(&bad).unwrap_err().to_string().contains("num_rows"));
        let bad = FieldSpec {
            plant_height_std: -0.1,
            ..FieldSpec::default()
        };
        assert!(generate_field(&bad)
            .unwrap_err()
            .to_string()
            .contains("plant_height_std"));
    }

    #[test]
    fn straight_centerline_is_midpoint() {
        let spec = FieldSpec {
            num_rows: 2,
            ..two_row_spec()
        };
        // rows at y = -0.375 and 0.375; shift the expectation to the
        // 0 / 0.75 framing by subtracting the first row offset
        let field = generate_field(&spec).unwrap();
        let c = ground_truth_centerline(&field, 0).unwrap();
        for p in &c {
            assert_abs_diff_eq!(p.y - spec.row_offset(0), 0.375, epsilon = 1e-12);
        }
    }

    #[test]
    fn lane_index_past_last_lane_is_rejected() {
        let field = generate_field(&FieldSpec::default()).unwrap();
        let n = field.num_rows();
        assert!(matches!(
            ground_truth_centerline(&field, n - 1),
            Err(Error::LaneOutOfRange { .. })
        ));
        assert!(ground_truth_centerline(&field, n - 2).is_ok());
    }

    #[test]
    fn curved_centerline_is_equidistant_from_flanking_rows() {
        let spec = FieldSpec {
            curvature: 0.02,
            row_length: 50.0,
            num_rows: 4,
            ..FieldSpec::default()
        };
        let field = generate_field(&spec).unwrap();
        for lane in 0..field.num_lanes() {
            let c = ground_truth_centerline(&field, lane).unwrap();
            for &p in &c {
                let da = project_onto_polyline(&field.row_polylines[lane], p).unwrap().distance;
                let db = project_onto_polyline(&field.row_polylines[lane + 1], p)
                    .unwrap()
                    .distance;
                assert!((da - db).abs() < 1e-3, "lane {lane}: {da} vs {db}");
            }
        }
    }

    fn circumcircle(a: Vec2, b: Vec2, c: Vec2) -> (Vec2, f64) {
        let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        let (a2, b2, c2) = (a.norm_sq(), b.norm_sq(), c.norm_sq());
        let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
        let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
        let center = Vec2::new(ux, uy);
        (center, center.distance(a))
    }

    #[test]
    fn curved_rows_are_concentric_arcs() {
        let spec = FieldSpec {
            curvature: 0.02,
            row_length: 100.0,
            num_rows: 4,
            ..FieldSpec::default()
        };
        let field = generate_field(&spec).unwrap();
        for (j, row) in field.row_polylines.iter().enumerate() {
            let n = row.len();
            let (center, r) = circumcircle(row[0], row[n / 2], row[n - 1]);
            assert_abs_diff_eq!(center.x, 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(center.y, 50.0, epsilon = 1e-6);
            assert_abs_diff_eq!(r, 50.0 - spec.row_offset(j), epsilon = 1e-6);
            for p in row {
                assert_abs_diff_eq!(p.distance(center), r, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn coverage_field_is_thirty_by_twelve() {
        let spec = FieldSpec {
            num_rows: 16,
            row_length: 30.0,
            ..FieldSpec::default()
        };
        let field = generate_field(&spec).unwrap();
        assert_eq!(field.row_polylines.len(), 16);
        let first = &field.row_polylines[0];
        let last = &field.row_polylines[15];
        assert_abs_diff_eq!(first[first.len() - 1].x - first[0].x, 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(last[0].y - first[0].y, 11.25, epsilon = 1e-9);
        let (lo, hi) = field.bounds();
        assert!(hi.x - lo.x <= 31.0 && hi.y - lo.y <= 12.0, "{lo:?} {hi:?}");
    }

    #[test]
    fn weeds_and_gaps_follow_density_and_probability() {
        let spec = FieldSpec {
            weed_density: 2.0,
            gap_probability: 0.3,
            row_length: 40.0,
            ..FieldSpec::default()
        };
        let field = generate_field(&spec).unwrap();
        let weeds = field.plants.iter().filter(|p| p.is_weed).count();
        let area: f64 = 5.0 * 0.75 * 40.0;
        assert_eq!(weeds, (2.0 * area).round() as usize);
        let crops = field.plants.len() - weeds;
        let full = spec.num_rows * spec.plants_per_row();
        let kept = crops as f64 / full as f64;
        assert!((kept - 0.7).abs() < 0.05, "kept fraction {kept}");
        for w in field.plants.iter().filter(|p| p.is_weed) {
            assert!((0.05..=0.25).contains(&w.stalk_height));
        }
    }
}
