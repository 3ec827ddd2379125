//! Depth-binned K-means over the ground projection of the filtered cloud.
//!
//! Rows run roughly along the robot's X axis, so inside a 1 m depth bin the
//! points of one row are spread along X but tight in Y. Assignment therefore
//! uses the lateral coordinate only; the reported centroid is the 2-D mean of
//! the members.

use rand::Rng;

use crate::detection::DetectorConfig;
use crate::geometry::Vec2;

/// A cluster center in the robot frame and the number of points behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub pos: Vec2,
    pub count: usize,
    pub bin: usize,
}

/// Lateral K-means with farthest-point seeding. `k` is capped at the number
/// of points, and seeding stops early once every point coincides with a seed.
pub fn kmeans_lateral<R: Rng + ?Sized>(
    points: &[Vec2],
    k: usize,
    max_iters: usize,
    tol: f64,
    rng: &mut R,
) -> Vec<(Vec2, usize)> {
    let n = points.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }

    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].y);
    let mut nearest: Vec<f64> = points.iter().map(|p| (p.y - centers[0]).abs()).collect();
    while centers.len() < k {
        let (far, &dist) =
            nearest.iter().enumerate().fold(
                (0, &f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if dist <= 0.0 {
            break;
        }
        let c = points[far].y;
        centers.push(c);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min((p.y - c).abs());
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..max_iters.max(1) {
        for (a, p) in assign.iter_mut().zip(points) {
            *a = nearest_center(&centers, p.y);
        }
        let mut sum = vec![0.0; centers.len()];
        let mut cnt = vec![0usize; centers.len()];
        for (&a, p) in assign.iter().zip(points) {
            sum[a] += p.y;
            cnt[a] += 1;
        }
        let mut shift: f64 = 0.0;
        for (c, (s, m)) in centers.iter_mut().zip(sum.iter().zip(&cnt)) {
            if *m > 0 {
                let next = s / *m as f64;
                shift = shift.max((next - *c).abs());
                *c = next;
            }
        }
        if shift < tol {
            break;
        }
    }
    for (a, p) in assign.iter_mut().zip(points) {
        *a = nearest_center(&centers, p.y);
    }

    let mut sums = vec![(Vec2::ZERO, 0usize); centers.len()];
    for (&a, &p) in assign.iter().zip(points) {
        sums[a].0 = sums[a].0 + p;
        sums[a].1 += 1;
    }
    sums.into_iter()
        .filter(|(_, m)| *m > 0)
        .map(|(s, m)| (s * (1.0 / m as f64), m))
        .collect()
}

fn nearest_center(centers: &[f64], y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centers.iter().enumerate() {
        let d = (y - c).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Repeatedly fuses the laterally closest pair of centroids while it is nearer
/// than `merge_dist`, replacing it by the count-weighted mean. Centroids of one
/// bin differ in depth only by where their points happened to fall, so depth
/// is ignored.
pub fn merge_centroids(mut cs: Vec<(Vec2, usize)>, merge_dist: f64) -> Vec<(Vec2, usize)> {
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                let d = (cs[i].0.y - cs[j].0.y).abs();
                if d < merge_dist && best.is_none_or(|b| d < b.2) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let (pj, mj) = cs.remove(j);
        let (pi, mi) = cs[i];
        let m = mi + mj;
        cs[i] = ((pi * mi as f64 + pj * mj as f64) * (1.0 / m as f64), m);
    }
    cs.sort_by(|a, b| a.0.y.total_cmp(&b.0.y));
    cs
}

/// Bins ground-projected points by depth (robot X) and clusters each bin.
/// Points behind the robot or past `cfg.range` are ignored.
pub fn bin_and_cluster<R: Rng + ?Sized>(points: &[Vec2], cfg: &DetectorConfig, rng: &mut R) -> Vec<Centroid> {
    let nbins = (cfg.range / cfg.bin_depth).ceil().max(1.0) as usize;
    let mut bins: Vec<Vec<Vec2>> = vec![Vec::new(); nbins];
    for &p in points {
        if p.x < 0.0 || p.x > cfg.range || !p.is_finite() {
            continue;
        }
        let b = ((p.x / cfg.bin_depth) as usize).min(nbins - 1);
        bins[b].push(p);
    }
    let mut out = Vec::new();
    for (b, pts) in bins.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let raw = kmeans_lateral(pts, cfg.k_init, cfg.kmeans_max_iters, cfg.kmeans_tol, rng);
        out.extend(
            merge_centroids(raw, cfg.merge_dist)
                .into_iter()
                .filter(|(_, count)| *count >= cfg.min_cluster_points)
                .map(|(pos, count)| Centroid { pos, count, bin: b }),
        );
    }
    out
}
