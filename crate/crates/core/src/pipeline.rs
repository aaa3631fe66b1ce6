//! Sequential clustering-and-tracking over a snapshot sequence.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{axis_ranges, AxisRanges};
use crate::initseed::{seed_from_prediction, seed_from_scratch, SeedSet};
use crate::kpower::{cluster_snapshot, prune_noise, ClusterError, Clustering};
use crate::model::{
    select_side, validate_snapshot, McdNormalization, PipelineConfig, Snapshot, ValidationError,
    Vec3,
};
use crate::stats::RunSummary;
use crate::track::{KalmanModel, TrackRegistry};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no snapshots to process")]
    NoSnapshots,
    #[error("snapshot indices must strictly increase: {next} follows {prev}")]
    NonMonotonicSnapshots { prev: u64, next: u64 },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("snapshot {snapshot}: {source}")]
    Cluster {
        snapshot: u64,
        #[source]
        source: ClusterError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotResult {
    pub index: u64,
    pub path_ids: Vec<u64>,
    /// Snapshot-local indices of the paths that survived noise pruning.
    pub retained: Vec<usize>,
    pub ranges: AxisRanges,
    pub seeds: SeedSet,
    /// Cluster ids are track ids; `members` index the snapshot's MPC list and
    /// `assignment` indexes `retained`.
    pub clustering: Clustering,
    /// `(track id, filtered state)` of every track active after this snapshot.
    pub tracks: Vec<(u64, [f64; 6])>,
}

impl SnapshotResult {
    /// Track id of every MPC, `None` for pruned ones.
    pub fn labels(&self) -> Vec<Option<u64>> {
        let mut out = vec![None; self.path_ids.len()];
        for c in &self.clustering.clusters {
            for &m in &c.members {
                out[m] = Some(c.cluster_id);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: PipelineConfig,
    pub snapshots: Vec<SnapshotResult>,
    pub registry: TrackRegistry,
    pub input_digest: String,
}

impl RunRecord {
    pub fn clusterings(&self) -> impl Iterator<Item = &Clustering> + Clone {
        self.snapshots.iter().map(|s| &s.clustering)
    }

    pub fn labels(&self) -> Vec<Vec<Option<u64>>> {
        self.snapshots.iter().map(SnapshotResult::labels).collect()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary::new(self.clusterings(), &self.registry)
    }
}

/// SHA-256 over the exact bit patterns of every snapshot field.
pub fn snapshot_digest(snapshots: &[Snapshot]) -> String {
    let mut h = Sha256::new();
    for s in snapshots {
        h.update(s.index.to_le_bytes());
        h.update((s.mpcs.len() as u64).to_le_bytes());
        for m in &s.mpcs {
            h.update(m.path_id.to_le_bytes());
            for v in m
                .ms_pos
                .iter()
                .chain(m.bs_pos.iter())
                .chain(std::iter::once(&m.power))
            {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

pub fn run_pipeline(
    snapshots: &[Snapshot],
    cfg: &PipelineConfig,
) -> Result<RunRecord, PipelineError> {
    cfg.validate()?;
    if snapshots.is_empty() {
        return Err(PipelineError::NoSnapshots);
    }
    for w in snapshots.windows(2) {
        if w[1].index <= w[0].index {
            return Err(PipelineError::NonMonotonicSnapshots {
                prev: w[0].index,
                next: w[1].index,
            });
        }
    }
    for s in snapshots {
        validate_snapshot(s.clone())?;
    }

    let model = KalmanModel::new(cfg.q_scale, cfg.r_scale);
    let eps = cfg.spread_regularization_eps;

    let global_ranges = match cfg.mcd_normalization {
        McdNormalization::Global => {
            let all: Vec<Vec3> = snapshots
                .iter()
                .flat_map(|s| select_side(s, cfg.side))
                .collect();
            Some(axis_ranges(&all).expect("snapshots are nonempty"))
        }
        McdNormalization::PerSnapshot => None,
    };

    let mut registry = TrackRegistry::new();
    let mut predictions = Vec::new();
    let mut results = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let all_points = select_side(s, cfg.side);
        let all_powers = s.powers();
        let retained = prune_noise(&all_powers, cfg);
        let points: Vec<Vec3> = retained.iter().map(|&i| all_points[i]).collect();
        let powers: Vec<f64> = retained.iter().map(|&i| all_powers[i]).collect();
        let ranges = match global_ranges {
            Some(r) => r,
            None => axis_ranges(&points).expect("pruning keeps at least one path"),
        };

        let seeds = if predictions.is_empty() {
            seed_from_scratch(&points, &powers, &ranges, cfg)
        } else {
            seed_from_prediction(&predictions, &points, &powers, &ranges, cfg)
        };
        let mut clustering =
            cluster_snapshot(&points, &powers, &seeds, &ranges, cfg).map_err(|source| {
                PipelineError::Cluster {
                    snapshot: s.index,
                    source,
                }
            })?;
        for c in &mut clustering.clusters {
            for m in &mut c.members {
                *m = retained[*m];
            }
        }

        predictions = registry.step(&mut clustering, &model, s.index, eps);
        let tracks = registry
            .active
            .iter()
            .map(|t| {
                let mut theta = [0.0; 6];
                theta.copy_from_slice(t.theta.as_slice());
                (t.cluster_id, theta)
            })
            .collect();
        results.push(SnapshotResult {
            index: s.index,
            path_ids: s.mpcs.iter().map(|m| m.path_id).collect(),
            retained,
            ranges,
            seeds,
            clustering,
            tracks,
        });
    }

    Ok(RunRecord {
        config: cfg.clone(),
        snapshots: results,
        registry,
        input_digest: snapshot_digest(snapshots),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mpc;

    #[test]
    fn minimal_run() {
        let s = vec![Snapshot::new(
            0,
            vec![Mpc::new(3, Vec3::zeros(), Vec3::zeros(), 1.0)],
        )];
        let run = run_pipeline(&s, &PipelineConfig::default()).unwrap();
        assert_eq!(run.snapshots[0].clustering.k(), 1);
        assert_eq!(run.registry.active.len(), 1);
        assert_eq!(run.registry.active[0].lifetime, 1);
        assert_eq!(run.labels(), vec![vec![Some(0)]]);
    }

    #[test]
    fn rejects_bad_sequences() {
        let one = |i| Snapshot::new(i, vec![Mpc::new(0, Vec3::zeros(), Vec3::zeros(), 1.0)]);
        assert!(matches!(
            run_pipeline(&[], &PipelineConfig::default()),
            Err(PipelineError::NoSnapshots)
        ));
        assert!(matches!(
            run_pipeline(&[one(2), one(1)], &PipelineConfig::default()),
            Err(PipelineError::NonMonotonicSnapshots { prev: 2, next: 1 })
        ));
        assert!(matches!(
            run_pipeline(
                &[one(0), Snapshot::new(1, vec![])],
                &PipelineConfig::default()
            ),
            Err(PipelineError::Validation(ValidationError::EmptySnapshot {
                snapshot: 1
            }))
        ));
    }

    #[test]
    fn index_gaps_are_allowed() {
        let one = |i| {
            Snapshot::new(
                i,
                vec![Mpc::new(
                    0,
                    Vec3::new(i as f64 * 0.01, 0.0, 0.0),
                    Vec3::zeros(),
                    1.0,
                )],
            )
        };
        let run = run_pipeline(&[one(0), one(5), one(6)], &PipelineConfig::default()).unwrap();
        assert_eq!(run.registry.active.len(), 1);
        assert_eq!(run.registry.active[0].lifetime, 3);
    }
}
