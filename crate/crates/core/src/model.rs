//! Domain types shared by every stage of the clustering and tracking pipeline.

use std::collections::HashSet;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in metres.
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("snapshot {snapshot} is empty")]
    EmptySnapshot { snapshot: u64 },
    #[error("snapshot {snapshot}: path {path_id} has non-positive power {power}")]
    NonPositivePower {
        snapshot: u64,
        path_id: u64,
        power: f64,
    },
    #[error("snapshot {snapshot}: path {path_id} has a non-finite coordinate")]
    NonFiniteCoordinate { snapshot: u64, path_id: u64 },
    #[error("snapshot {snapshot}: duplicate path id {path_id}")]
    DuplicatePathId { snapshot: u64, path_id: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One multipath component: first (MS-side) and last (BS-side) interaction
/// coordinates plus linear power.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpc {
    pub path_id: u64,
    pub ms_pos: Vec3,
    pub bs_pos: Vec3,
    pub power: f64,
}

impl Mpc {
    pub fn new(path_id: u64, ms_pos: Vec3, bs_pos: Vec3, power: f64) -> Self {
        Self {
            path_id,
            ms_pos,
            bs_pos,
            power,
        }
    }

    /// Builds an MPC from a power given in dB.
    pub fn from_db(path_id: u64, ms_pos: Vec3, bs_pos: Vec3, power_db: f64) -> Self {
        Self::new(path_id, ms_pos, bs_pos, db_to_linear(power_db))
    }

    pub fn power_db(&self) -> f64 {
        linear_to_db(self.power)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// All MPCs of one link at one mobile position.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub index: u64,
    pub mpcs: Vec<Mpc>,
}

impl Snapshot {
    pub fn new(index: u64, mpcs: Vec<Mpc>) -> Self {
        Self { index, mpcs }
    }

    pub fn len(&self) -> usize {
        self.mpcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mpcs.is_empty()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.mpcs.iter().map(|m| m.power).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.mpcs.iter().map(|m| m.power).sum()
    }
}

/// Checks every MPC invariant and returns the snapshot unchanged.
pub fn validate_snapshot(s: Snapshot) -> Result<Snapshot, ValidationError> {
    if s.mpcs.is_empty() {
        return Err(ValidationError::EmptySnapshot { snapshot: s.index });
    }
    let mut seen = HashSet::with_capacity(s.mpcs.len());
    for m in &s.mpcs {
        let finite = m
            .ms_pos
            .iter()
            .chain(m.bs_pos.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(ValidationError::NonFiniteCoordinate {
                snapshot: s.index,
                path_id: m.path_id,
            });
        }
        // also rejects NaN
        if !m.power.is_finite() || m.power <= 0.0 {
            return Err(ValidationError::NonPositivePower {
                snapshot: s.index,
                path_id: m.path_id,
                power: m.power,
            });
        }
        if !seen.insert(m.path_id) {
            return Err(ValidationError::DuplicatePathId {
                snapshot: s.index,
                path_id: m.path_id,
            });
        }
    }
    Ok(s)
}

/// Which interaction coordinate of each path is clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Ms,
    Bs,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Ms => f.write_str("ms"),
            Side::Bs => f.write_str("bs"),
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(Side::Ms),
            "bs" => Ok(Side::Bs),
            other => Err(format!("unknown side `{other}` (expected ms or bs)")),
        }
    }
}

/// Projects a snapshot onto the chosen side's coordinates, preserving order.
pub fn select_side(s: &Snapshot, side: Side) -> Vec<Vec3> {
    s.mpcs
        .iter()
        .map(|m| match side {
            Side::Ms => m.ms_pos,
            Side::Bs => m.bs_pos,
        })
        .collect()
}

/// Set over which per-axis MCD ranges are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McdNormalization {
    #[default]
    PerSnapshot,
    Global,
}

/// Per-snapshot cluster observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub cluster_id: u64,
    /// Indices of member paths in the owning snapshot's MPC list.
    pub members: Vec<usize>,
    pub power: f64,
    pub size: usize,
    pub centroid: Vec3,
    pub spread: Matrix3<f64>,
}

/// Kalman state of one tracked cluster plus lifetime bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub cluster_id: u64,
    /// `[x, dx, y, dy, z, dz]`
    pub theta: Vector6<f64>,
    pub cov: Matrix6<f64>,
    pub born_at: u64,
    pub last_seen: u64,
    /// Number of snapshots this track has been associated with.
    pub lifetime: u64,
    pub last_observation: ClusterParams,
    pub history: Vec<TrackPoint>,
}

impl TrackState {
    pub fn position(&self) -> Vec3 {
        Vec3::new(self.theta[0], self.theta[2], self.theta[4])
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.theta[1], self.theta[3], self.theta[5])
    }
}

/// Filtered state of a track at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub snapshot: u64,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k_max: usize,
    pub min_centroid_power_frac: f64,
    pub min_cluster_power_frac: f64,
    pub power_keep_frac: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub side: Side,
    pub mcd_normalization: McdNormalization,
    pub spread_regularization_eps: f64,
    pub max_lloyd_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            min_centroid_power_frac: 1e-4,
            min_cluster_power_frac: 0.01,
            power_keep_frac: 0.99,
            q_scale: 1e-4,
            r_scale: 0.05,
            side: Side::Ms,
            mcd_normalization: McdNormalization::PerSnapshot,
            spread_regularization_eps: 1e-6,
            max_lloyd_iters: 100,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |msg: &str| Err(ValidationError::InvalidConfig(msg.to_string()));
        if self.k_max < 1 {
            return bad("k_max must be at least 1");
        }
        let ordered = 0.0 < self.min_centroid_power_frac
            && self.min_centroid_power_frac < self.min_cluster_power_frac
            && self.min_cluster_power_frac < self.power_keep_frac
            && self.power_keep_frac <= 1.0;
        if !ordered {
            return bad(
                "require 0 < min_centroid_power_frac < min_cluster_power_frac < power_keep_frac <= 1",
            );
        }
        if !(self.q_scale.is_finite() && self.r_scale.is_finite())
            || self.q_scale <= 0.0
            || self.r_scale <= 0.0
        {
            return bad("q_scale and r_scale must be positive");
        }
        if !self.spread_regularization_eps.is_finite() || self.spread_regularization_eps <= 0.0 {
            return bad("spread_regularization_eps must be positive");
        }
        if self.max_lloyd_iters < 1 {
            return bad("max_lloyd_iters must be at least 1");
        }
        Ok(())
    }
}
