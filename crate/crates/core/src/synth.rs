//! Synthetic dynamic-cluster scenarios with ground-truth labels, and scoring
//! of a tracked clustering against them.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{db_to_linear, Mpc, Snapshot, Vec3};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(
        "exact matching supports at most 8 clusters per side, got {found} found and {truth} true"
    )]
    TooManyClustersForExactMatching { found: usize, truth: usize },
    #[error("found labels cover {found} snapshots, truth has {truth}")]
    SnapshotCountMismatch { found: usize, truth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub birth: u64,
    pub death: u64,
    pub initial_centroid: [f64; 3],
    /// Metres per snapshot.
    pub velocity: [f64; 3],
    pub spread_std: [f64; 3],
    pub n_mpcs: usize,
    pub power_db_mean: f64,
    pub power_db_std: f64,
}

impl ClusterSpec {
    pub fn centroid_at(&self, n: u64) -> Vec3 {
        let dt = n as f64 - self.birth as f64;
        Vec3::from(self.initial_centroid) + Vec3::from(self.velocity) * dt
    }

    pub fn is_live(&self, n: u64) -> bool {
        self.birth <= n && n <= self.death
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_snapshots: u64,
    pub clusters: Vec<ClusterSpec>,
    #[serde(default)]
    pub noise_mpcs_per_snapshot: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (i, c) in self.clusters.iter().enumerate() {
            let bad = |m: &str| Err(SynthError::InvalidSpec(format!("cluster {i}: {m}")));
            if c.birth > c.death || c.death >= self.n_snapshots {
                return bad("require birth <= death < n_snapshots");
            }
            if c.n_mpcs < 1 {
                return bad("n_mpcs must be at least 1");
            }
            if c.spread_std.iter().any(|s| s.is_nan() || *s < 0.0) || c.power_db_std < 0.0 {
                return bad("standard deviations must be nonnegative");
            }
            let finite = c
                .initial_centroid
                .iter()
                .chain(&c.velocity)
                .chain(&c.spread_std)
                .all(|v| v.is_finite());
            if !finite || !c.power_db_mean.is_finite() || !c.power_db_std.is_finite() {
                return bad("all values must be finite");
            }
        }
        if self.noise_mpcs_per_snapshot > 0 && self.clusters.is_empty() {
            return Err(SynthError::InvalidSpec(
                "noise needs at least one cluster to define the scene".into(),
            ));
        }
        Ok(())
    }

    /// Axis-aligned box around every cluster's trajectory, padded by three
    /// spread standard deviations.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in &self.clusters {
            let pad = Vec3::from(c.spread_std) * 3.0;
            for n in [c.birth, c.death] {
                let mu = c.centroid_at(n);
                lo = lo.inf(&(mu - pad));
                hi = hi.sup(&(mu + pad));
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSnapshot {
    pub snapshot: Snapshot,
    /// Index into `ScenarioSpec::clusters` per MPC, `None` for noise.
    pub truth: Vec<Option<usize>>,
}

/// Draws every snapshot of the scenario. Paths are single-bounce, so the MS
/// and BS interaction coordinates coincide.
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<LabeledSnapshot>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (lo, hi) = spec.bounding_box();
    let noise_db = spec
        .clusters
        .first()
        .map(|c| c.power_db_mean - 20.0)
        .unwrap_or(0.0);

    let mut out = Vec::with_capacity(spec.n_snapshots as usize);
    for n in 0..spec.n_snapshots {
        let mut mpcs = Vec::new();
        let mut truth = Vec::new();
        for (ci, c) in spec.clusters.iter().enumerate() {
            if !c.is_live(n) {
                continue;
            }
            let mu = c.centroid_at(n);
            for _ in 0..c.n_mpcs {
                let mut pos = mu;
                for axis in 0..3 {
                    pos[axis] += c.spread_std[axis] * std_normal.sample(&mut rng);
                }
                let db = c.power_db_mean + c.power_db_std * std_normal.sample(&mut rng);
                let id = mpcs.len() as u64;
                mpcs.push(Mpc::new(id, pos, pos, db_to_linear(db)));
                truth.push(Some(ci));
            }
        }
        for _ in 0..spec.noise_mpcs_per_snapshot {
            let mut pos = Vec3::zeros();
            for axis in 0..3 {
                pos[axis] = if hi[axis] > lo[axis] {
                    rng.random_range(lo[axis]..hi[axis])
                } else {
                    lo[axis]
                };
            }
            let id = mpcs.len() as u64;
            mpcs.push(Mpc::new(id, pos, pos, db_to_linear(noise_db)));
            truth.push(None);
        }
        out.push(LabeledSnapshot {
            snapshot: Snapshot::new(n, mpcs),
            truth,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Score {
    pub accuracy_per_snapshot: Vec<f64>,
    pub mean_accuracy: f64,
    pub id_continuity: f64,
    pub mean_lifetime_error: f64,
}

const MAX_EXACT: usize = 8;

/// Injective matching of the smaller label set into the larger one that
/// maximizes shared power. `shared[f][t]`.
fn best_matching(shared: &[Vec<f64>], n_truth: usize) -> Vec<(usize, usize)> {
    let n_found = shared.len();
    let transpose = n_found > n_truth;
    let (rows, cols) = if transpose {
        (n_truth, n_found)
    } else {
        (n_found, n_truth)
    };
    let weight = |r: usize, c: usize| {
        if transpose {
            shared[c][r]
        } else {
            shared[r][c]
        }
    };

    let mut best_total = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut current = Vec::with_capacity(rows);
    let mut used = vec![false; cols];

    #[allow(clippy::too_many_arguments)]
    fn search(
        r: usize,
        rows: usize,
        cols: usize,
        acc: f64,
        current: &mut Vec<usize>,
        used: &mut [bool],
        weight: &dyn Fn(usize, usize) -> f64,
        best_total: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if r == rows {
            if acc > *best_total {
                *best_total = acc;
                *best = current.clone();
            }
            return;
        }
        for c in 0..cols {
            if used[c] {
                continue;
            }
            used[c] = true;
            current.push(c);
            search(
                r + 1,
                rows,
                cols,
                acc + weight(r, c),
                current,
                used,
                weight,
                best_total,
                best,
            );
            current.pop();
            used[c] = false;
        }
    }
    search(
        0,
        rows,
        cols,
        0.0,
        &mut current,
        &mut used,
        &weight,
        &mut best_total,
        &mut best,
    );

    best.iter()
        .enumerate()
        .map(|(r, &c)| if transpose { (c, r) } else { (r, c) })
        .collect()
}

/// Scores found per-MPC track labels against ground truth.
///
/// `found[n][l]` is the track id of MPC `l` of snapshot `n`, or `None` for an
/// MPC that was not clustered.
pub fn score(found: &[Vec<Option<u64>>], truth: &[LabeledSnapshot]) -> Result<Score, SynthError> {
    if found.len() != truth.len() {
        return Err(SynthError::SnapshotCountMismatch {
            found: found.len(),
            truth: truth.len(),
        });
    }
    let mut accuracy = Vec::with_capacity(truth.len());
    // true cluster -> matched found id, per snapshot
    let mut matches: Vec<HashMap<usize, u64>> = Vec::with_capacity(truth.len());
    let mut true_lifetime: BTreeMap<usize, u64> = BTreeMap::new();
    let mut found_lifetime: HashMap<u64, u64> = HashMap::new();

    for (labels, ls) in found.iter().zip(truth) {
        let mut found_ids: Vec<u64> = labels.iter().flatten().copied().collect();
        found_ids.sort_unstable();
        found_ids.dedup();
        let mut true_ids: Vec<usize> = ls.truth.iter().flatten().copied().collect();
        true_ids.sort_unstable();
        true_ids.dedup();
        if found_ids.len().min(true_ids.len()) > MAX_EXACT {
            return Err(SynthError::TooManyClustersForExactMatching {
                found: found_ids.len(),
                truth: true_ids.len(),
            });
        }
        for t in &true_ids {
            *true_lifetime.entry(*t).or_default() += 1;
        }
        for f in &found_ids {
            *found_lifetime.entry(*f).or_default() += 1;
        }

        let mut shared = vec![vec![0.0; true_ids.len()]; found_ids.len()];
        let mut labeled_power = 0.0;
        for ((f, t), m) in labels.iter().zip(&ls.truth).zip(&ls.snapshot.mpcs) {
            let Some(t) = t else { continue };
            labeled_power += m.power;
            if let Some(f) = f {
                let fi = found_ids.binary_search(f).expect("collected above");
                let ti = true_ids.binary_search(t).expect("collected above");
                shared[fi][ti] += m.power;
            }
        }
        let pairs = best_matching(&shared, true_ids.len());
        let matched: f64 = pairs.iter().map(|&(f, t)| shared[f][t]).sum();
        accuracy.push(if labeled_power > 0.0 {
            matched / labeled_power
        } else {
            1.0
        });
        matches.push(
            pairs
                .into_iter()
                .filter(|&(f, t)| shared[f][t] > 0.0)
                .map(|(f, t)| (true_ids[t], found_ids[f]))
                .collect(),
        );
    }

    let mut persisted = 0usize;
    let mut opportunities = 0usize;
    for n in 1..truth.len() {
        let live_prev: Vec<usize> = truth[n - 1].truth.iter().flatten().copied().collect();
        let mut live_now: Vec<usize> = truth[n].truth.iter().flatten().copied().collect();
        live_now.sort_unstable();
        live_now.dedup();
        for t in live_now {
            if !live_prev.contains(&t) {
                continue;
            }
            opportunities += 1;
            if let (Some(a), Some(b)) = (matches[n - 1].get(&t), matches[n].get(&t)) {
                if a == b {
                    persisted += 1;
                }
            }
        }
    }
    let id_continuity = if opportunities == 0 {
        1.0
    } else {
        persisted as f64 / opportunities as f64
    };

    let mut errors = Vec::new();
    for (&t, &life) in &true_lifetime {
        // the found id matched to this true cluster most often (lowest id on ties)
        let mut votes: BTreeMap<u64, usize> = BTreeMap::new();
        for m in &matches {
            if let Some(f) = m.get(&t) {
                *votes.entry(*f).or_default() += 1;
            }
        }
        let Some((&f, _)) = votes.iter().rev().max_by_key(|(_, &v)| v) else {
            continue;
        };
        errors.push((found_lifetime[&f] as f64 - life as f64).abs());
    }
    let mean_lifetime_error = if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };

    let mean_accuracy = if accuracy.is_empty() {
        1.0
    } else {
        accuracy.iter().sum::<f64>() / accuracy.len() as f64
    };
    Ok(Score {
        accuracy_per_snapshot: accuracy,
        mean_accuracy,
        id_continuity,
        mean_lifetime_error,
    })
}
