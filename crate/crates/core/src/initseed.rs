//! Initial centroid guesses for one snapshot.
//!
//! Without predictions the strongest path seeds the first centroid. Further
//! centroids are chosen by the max-min rule on the power-weighted distance
//! matrix until `k_max` is reached or a centroid would capture too little of
//! the snapshot power. With predictions, the predicted centroids seed the set
//! and the same max-min loop extends it.

use crate::geometry::{mcd, weighted_distance_matrix, AxisRanges};
use crate::model::{PipelineConfig, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Predicted,
    StrongestPath,
    MaxMin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub centroids: Vec<Vec3>,
    pub provenance: Vec<Provenance>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    fn push(&mut self, c: Vec3, p: Provenance) {
        self.centroids.push(c);
        self.provenance.push(p);
    }

    fn pop(&mut self) {
        self.centroids.pop();
        self.provenance.pop();
    }
}

/// Predicted position of an active track, ranked by its last observed power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedCentroid {
    pub track_id: u64,
    pub position: Vec3,
    pub power: f64,
}

/// Index of the nearest centroid by unweighted MCD, ties to the lowest index.
pub(crate) fn nearest(point: &Vec3, centroids: &[Vec3], ranges: &AxisRanges) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, mu) in centroids.iter().enumerate() {
        let d = mcd(point, mu, ranges);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Power captured by each centroid when every path goes to its nearest one.
pub fn assigned_powers(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    ranges: &AxisRanges,
) -> Vec<f64> {
    let mut acc = vec![0.0; centroids.len()];
    for (x, p) in points.iter().zip(powers) {
        acc[nearest(x, centroids, ranges)] += p;
    }
    acc
}

/// Path maximizing the minimum weighted distance to the current centroids.
/// Ties go to the lowest path index.
fn max_min_candidate(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    ranges: &AxisRanges,
) -> usize {
    let upsilon = weighted_distance_matrix(points, powers, centroids, ranges)
        .expect("points and powers have equal length");
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (l, row) in upsilon.row_iter().enumerate() {
        let v = row.iter().copied().fold(f64::INFINITY, f64::min);
        if v > best_v {
            best_v = v;
            best = l;
        }
    }
    best
}

/// True when every centroid except the first captures more than the threshold.
fn passes_power_rule(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    ranges: &AxisRanges,
    threshold: f64,
) -> bool {
    assigned_powers(points, powers, centroids, ranges)
        .iter()
        .skip(1)
        .all(|&p| p > threshold)
}

fn extend_max_min(
    mut seeds: SeedSet,
    points: &[Vec3],
    powers: &[f64],
    ranges: &AxisRanges,
    cfg: &PipelineConfig,
) -> SeedSet {
    let threshold = cfg.min_centroid_power_frac * powers.iter().sum::<f64>();
    while seeds.len() < cfg.k_max {
        let l_sel = max_min_candidate(points, powers, &seeds.centroids, ranges);
        seeds.push(points[l_sel], Provenance::MaxMin);
        if !passes_power_rule(points, powers, &seeds.centroids, ranges, threshold) {
            seeds.pop();
            break;
        }
    }
    seeds
}

pub fn seed_from_scratch(
    points: &[Vec3],
    powers: &[f64],
    ranges: &AxisRanges,
    cfg: &PipelineConfig,
) -> SeedSet {
    assert!(!points.is_empty(), "seeding needs at least one path");
    let mut strongest = 0;
    for (l, &p) in powers.iter().enumerate() {
        if p > powers[strongest] {
            strongest = l;
        }
    }
    let mut seeds = SeedSet {
        centroids: Vec::with_capacity(cfg.k_max),
        provenance: Vec::with_capacity(cfg.k_max),
    };
    seeds.push(points[strongest], Provenance::StrongestPath);
    extend_max_min(seeds, points, powers, ranges, cfg)
}

/// Seeds from predicted centroids, keeping at most `k_max` of the strongest
/// tracks. Predictions that would capture no more than the centroid-power
/// threshold are dropped (the strongest-capturing one is always kept).
pub fn seed_from_prediction(
    predicted: &[PredictedCentroid],
    points: &[Vec3],
    powers: &[f64],
    ranges: &AxisRanges,
    cfg: &PipelineConfig,
) -> SeedSet {
    assert!(
        !predicted.is_empty(),
        "seed_from_prediction needs predictions"
    );
    assert!(!points.is_empty(), "seeding needs at least one path");
    let mut ranked: Vec<&PredictedCentroid> = predicted.iter().collect();
    ranked.sort_by(|a, b| b.power.total_cmp(&a.power));
    ranked.truncate(cfg.k_max);

    let threshold = cfg.min_centroid_power_frac * powers.iter().sum::<f64>();
    let mut centroids: Vec<Vec3> = ranked.iter().map(|p| p.position).collect();
    loop {
        let captured = assigned_powers(points, powers, &centroids, ranges);
        let strongest = (0..captured.len()).fold(0, |best, c| {
            if captured[c] > captured[best] {
                c
            } else {
                best
            }
        });
        let weak = (0..captured.len()).find(|&c| c != strongest && captured[c] <= threshold);
        match weak {
            // dropping one prediction changes who captures what; re-check
            Some(c) => {
                centroids.remove(c);
            }
            None => {
                // strongest-capturing prediction first so it carries the exemption
                centroids.swap(0, strongest);
                break;
            }
        }
    }

    let n = centroids.len();
    let seeds = SeedSet {
        centroids,
        provenance: vec![Provenance::Predicted; n],
    };
    extend_max_min(seeds, points, powers, ranges, cfg)
}
