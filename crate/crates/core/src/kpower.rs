//! KPowerMeans clustering of one snapshot.

use thiserror::Error;

use crate::geometry::{mcd, spread_matrix, weighted_centroid, AxisRanges};
use crate::initseed::{nearest, SeedSet};
use crate::model::{ClusterParams, PipelineConfig, Vec3};

#[derive(Debug, Clone, Error)]
pub enum ClusterError {
    #[error("Lloyd iteration did not converge within {iters} iterations")]
    IterationLimitExceeded { iters: usize, last: Box<Clustering> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster ids are provisional (`0..k`) until the tracker relabels them.
    pub clusters: Vec<ClusterParams>,
    /// Cluster index of each input path.
    pub assignment: Vec<usize>,
    /// `sum_l p_l * mcd(x_l, mu_a(l))`
    pub objective: f64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn total_power(&self) -> f64 {
        self.clusters.iter().map(|c| c.power).sum()
    }
}

/// Indices (ascending) of the paths that survive removal of the weakest ones
/// whose cumulative power stays within `1 - power_keep_frac` of the total.
pub fn prune_noise(powers: &[f64], cfg: &PipelineConfig) -> Vec<usize> {
    let total: f64 = powers.iter().sum();
    let budget = (1.0 - cfg.power_keep_frac) * total;
    let mut order: Vec<usize> = (0..powers.len()).collect();
    order.sort_by(|&a, &b| powers[a].total_cmp(&powers[b]).then(a.cmp(&b)));
    let mut removed = 0.0;
    let mut keep = vec![true; powers.len()];
    for &i in &order {
        if removed + powers[i] > budget {
            break;
        }
        removed += powers[i];
        keep[i] = false;
    }
    (0..powers.len()).filter(|&i| keep[i]).collect()
}

/// Nearest-centroid assignment by MCD; ties go to the lowest cluster index.
///
/// The power weight of the KPowerMeans distance is constant per path, so it
/// does not change the argmin and is not applied here.
pub fn assign(points: &[Vec3], centroids: &[Vec3], ranges: &AxisRanges) -> Vec<usize> {
    assert!(!centroids.is_empty(), "assign needs at least one centroid");
    points
        .iter()
        .map(|x| nearest(x, centroids, ranges))
        .collect()
}

/// Recomputes power-weighted centroids. Empty clusters are dropped and the
/// returned labels are compacted to match.
pub fn update_centroids(
    points: &[Vec3],
    powers: &[f64],
    assignment: &[usize],
    k: usize,
) -> (Vec<Vec3>, Vec<usize>) {
    let mut sums = vec![Vec3::zeros(); k];
    let mut mass = vec![0.0; k];
    for ((x, p), &a) in points.iter().zip(powers).zip(assignment) {
        sums[a] += x * *p;
        mass[a] += p;
    }
    let mut remap = vec![usize::MAX; k];
    let mut centroids = Vec::with_capacity(k);
    for c in 0..k {
        if mass[c] > 0.0 {
            remap[c] = centroids.len();
            centroids.push(sums[c] / mass[c]);
        }
    }
    let labels = assignment.iter().map(|&a| remap[a]).collect();
    (centroids, labels)
}

pub fn objective(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    assignment: &[usize],
    ranges: &AxisRanges,
) -> f64 {
    points
        .iter()
        .zip(powers)
        .zip(assignment)
        .map(|((x, p), &a)| p * mcd(x, &centroids[a], ranges))
        .sum()
}

/// Power-weighted squared-MCD distortion, the quantity Lloyd iteration
/// minimizes monotonically.
pub fn distortion(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    assignment: &[usize],
    ranges: &AxisRanges,
) -> f64 {
    points
        .iter()
        .zip(powers)
        .zip(assignment)
        .map(|((x, p), &a)| p * mcd(x, &centroids[a], ranges).powi(2))
        .sum()
}

struct LloydOutcome {
    centroids: Vec<Vec3>,
    assignment: Vec<usize>,
    /// Seed index each surviving cluster grew from.
    origin: Vec<usize>,
    converged: bool,
}

fn lloyd(
    points: &[Vec3],
    powers: &[f64],
    seeds: &[Vec3],
    ranges: &AxisRanges,
    max_iters: usize,
) -> LloydOutcome {
    let mut centroids = seeds.to_vec();
    let mut origin: Vec<usize> = (0..seeds.len()).collect();
    let mut assignment = assign(points, &centroids, ranges);
    for _ in 0..max_iters {
        let (next, labels) = update_centroids(points, powers, &assignment, centroids.len());
        if next.len() < centroids.len() {
            let mut kept = Vec::with_capacity(next.len());
            for (c, o) in origin.iter().enumerate() {
                if assignment.contains(&c) {
                    kept.push(*o);
                }
            }
            origin = kept;
        }
        let reassigned = assign(points, &next, ranges);
        centroids = next;
        if reassigned == labels {
            return LloydOutcome {
                centroids,
                assignment: reassigned,
                origin,
                converged: true,
            };
        }
        assignment = reassigned;
    }
    LloydOutcome {
        centroids,
        assignment,
        origin,
        converged: false,
    }
}

fn build_clustering(
    points: &[Vec3],
    powers: &[f64],
    centroids: &[Vec3],
    assignment: &[usize],
    ranges: &AxisRanges,
) -> Clustering {
    let k = centroids.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (l, &a) in assignment.iter().enumerate() {
        members[a].push(l);
    }
    let clusters = members
        .into_iter()
        .enumerate()
        .map(|(c, idx)| {
            let pts: Vec<Vec3> = idx.iter().map(|&l| points[l]).collect();
            let pw: Vec<f64> = idx.iter().map(|&l| powers[l]).collect();
            let centroid = weighted_centroid(&pts, &pw).unwrap_or(centroids[c]);
            let spread = spread_matrix(&pts, &pw, &centroid).expect("cluster is nonempty");
            ClusterParams {
                cluster_id: c as u64,
                size: idx.len(),
                power: pw.iter().sum(),
                members: idx,
                centroid,
                spread,
            }
        })
        .collect();
    Clustering {
        clusters,
        assignment: assignment.to_vec(),
        objective: objective(points, powers, centroids, assignment, ranges),
    }
}

/// Runs KPowerMeans from `seeds`. While any cluster holds less than
/// `min_cluster_power_frac` of the clustered power and more than one cluster
/// remains, the seed whose cluster captured the least power is removed and
/// clustering restarts from the reduced seed set.
pub fn cluster_snapshot(
    points: &[Vec3],
    powers: &[f64],
    seeds: &SeedSet,
    ranges: &AxisRanges,
    cfg: &PipelineConfig,
) -> Result<Clustering, ClusterError> {
    assert!(
        !seeds.is_empty(),
        "cluster_snapshot needs at least one seed"
    );
    assert_eq!(points.len(), powers.len());
    let total: f64 = powers.iter().sum();
    let mut active: Vec<Vec3> = seeds.centroids.clone();
    loop {
        let run = lloyd(points, powers, &active, ranges, cfg.max_lloyd_iters);
        let clustering = build_clustering(points, powers, &run.centroids, &run.assignment, ranges);
        if !run.converged {
            return Err(ClusterError::IterationLimitExceeded {
                iters: cfg.max_lloyd_iters,
                last: Box::new(clustering),
            });
        }
        let too_weak = clustering
            .clusters
            .iter()
            .any(|c| c.power / total < cfg.min_cluster_power_frac);
        if !too_weak || clustering.k() == 1 {
            return Ok(clustering);
        }
        // seeds whose clusters emptied captured nothing
        let mut captured = vec![0.0; active.len()];
        for (c, &o) in run.origin.iter().enumerate() {
            captured[o] = clustering.clusters[c].power;
        }
        let mut weakest = active.len() - 1;
        for s in (0..active.len()).rev() {
            if captured[s] < captured[weakest] {
                weakest = s;
            }
        }
        active.remove(weakest);
    }
}
