//! Cluster-dynamics statistics of a completed run.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kpower::Clustering;
use crate::model::TrackPoint;
use crate::track::TrackRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("bin width must be positive")]
    InvalidBinWidth,
}

/// Lifetime in snapshots of every track, ordered by track id. Tracks still
/// active at the end of the run count up to the final snapshot.
pub fn lifetimes(reg: &TrackRegistry) -> Vec<u64> {
    reg.all_tracks().iter().map(|t| t.lifetime).collect()
}

pub fn clusters_per_snapshot<'a>(
    clusterings: impl IntoIterator<Item = &'a Clustering>,
) -> Vec<usize> {
    clusterings.into_iter().map(Clustering::k).collect()
}

/// Percentage of the snapshot's clustered power held by each cluster, one
/// inner vector per snapshot.
pub fn power_fractions<'a>(clusterings: impl IntoIterator<Item = &'a Clustering>) -> Vec<Vec<f64>> {
    clusterings
        .into_iter()
        .map(|c| {
            let total = c.total_power();
            c.clusters
                .iter()
                .map(|cl| cl.power / total * 100.0)
                .collect()
        })
        .collect()
}

pub fn centroid_trajectories(reg: &TrackRegistry) -> BTreeMap<u64, Vec<TrackPoint>> {
    reg.all_tracks()
        .into_iter()
        .map(|t| (t.cluster_id, t.history.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Left-closed, right-open bins of `bin_width` starting at `floor(min)`.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Histogram, StatsError> {
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(StatsError::InvalidBinWidth);
    }
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = min.floor();
    let n_bins = ((max - start) / bin_width).floor() as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for v in values {
        let b = (((v - start) / bin_width).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let edges = (0..=n_bins).map(|i| start + i as f64 * bin_width).collect();
    Ok(Histogram { edges, counts })
}

/// Everything the statistics outputs are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub lifetimes: Vec<u64>,
    pub clusters_per_snapshot: Vec<usize>,
    /// Per snapshot, per cluster, in percent.
    pub power_fractions: Vec<Vec<f64>>,
    pub trajectories: BTreeMap<u64, Vec<TrackPoint>>,
}

impl RunSummary {
    pub fn new<'a>(
        clusterings: impl IntoIterator<Item = &'a Clustering> + Clone,
        reg: &TrackRegistry,
    ) -> Self {
        Self {
            lifetimes: lifetimes(reg),
            clusters_per_snapshot: clusters_per_snapshot(clusterings.clone()),
            power_fractions: power_fractions(clusterings),
            trajectories: centroid_trajectories(reg),
        }
    }
}
