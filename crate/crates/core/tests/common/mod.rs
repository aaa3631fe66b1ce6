#![allow(dead_code)]

use mpctrack::model::{Mpc, Snapshot, Vec3};
use mpctrack::synth::{ClusterSpec, ScenarioSpec};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Random snapshot of `n_groups` Gaussian blobs with lognormal powers.
pub fn random_snapshot<R: Rng>(rng: &mut R, index: u64, max_paths: usize) -> Snapshot {
    let n_paths = rng.random_range(1..=max_paths);
    let n_groups = rng.random_range(1..=6usize);
    let centres: Vec<Vec3> = (0..n_groups)
        .map(|_| {
            Vec3::new(
                rng.random_range(-30.0..30.0),
                rng.random_range(-30.0..30.0),
                rng.random_range(0.0..6.0),
            )
        })
        .collect();
    let spread: f64 = rng.random_range(0.05..4.0);
    let jitter = Normal::new(0.0, spread).unwrap();
    let db = Normal::new(-80.0, rng.random_range(0.5..10.0)).unwrap();
    let mpcs = (0..n_paths)
        .map(|i| {
            let c = centres[rng.random_range(0..n_groups)];
            let ms = c + Vec3::new(jitter.sample(rng), jitter.sample(rng), jitter.sample(rng));
            let bs = Vec3::new(jitter.sample(rng), jitter.sample(rng), 5.7);
            Mpc::from_db(i as u64, ms, bs, db.sample(rng))
        })
        .collect();
    Snapshot::new(index, mpcs)
}

/// Three well-separated clusters moving at up to 0.1 m/snapshot for 100
/// snapshots, plus weak noise paths.
pub fn three_cluster_scenario(seed: u64) -> ScenarioSpec {
    let cluster = |c: [f64; 3], v: [f64; 3], db: f64| ClusterSpec {
        birth: 0,
        death: 99,
        initial_centroid: c,
        velocity: v,
        spread_std: [0.5; 3],
        n_mpcs: 20,
        power_db_mean: db,
        power_db_std: 3.0,
    };
    ScenarioSpec {
        n_snapshots: 100,
        clusters: vec![
            cluster([0.0, 0.0, 1.5], [0.1, 0.0, 0.0], -70.0),
            cluster([0.0, 25.0, 2.0], [0.05, -0.05, 0.0], -72.0),
            cluster([25.0, 12.0, 3.0], [0.0, 0.08, 0.0], -74.0),
        ],
        noise_mpcs_per_snapshot: 5,
        rng_seed: seed,
    }
}

/// Minimum centroid separation of a scenario over its whole duration.
pub fn min_separation(spec: &ScenarioSpec) -> f64 {
    let mut best = f64::INFINITY;
    for n in 0..spec.n_snapshots {
        let live: Vec<Vec3> = spec
            .clusters
            .iter()
            .filter(|c| c.is_live(n))
            .map(|c| c.centroid_at(n))
            .collect();
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                best = best.min((live[i] - live[j]).norm());
            }
        }
    }
    best
}

/// Long route with staggered cluster births and deaths, about 50 paths per
/// snapshot on average.
pub fn route_scenario(n_snapshots: u64, seed: u64) -> ScenarioSpec {
    let mut clusters = Vec::new();
    let n_clusters = 14u64;
    let span = n_snapshots / 2;
    for i in 0..n_clusters {
        let birth = i * (n_snapshots - span) / n_clusters;
        let death = (birth + span + (i * 37) % 200).min(n_snapshots - 1);
        let angle = i as f64 * 0.9;
        clusters.push(ClusterSpec {
            birth,
            death,
            initial_centroid: [40.0 * angle.cos(), 40.0 * angle.sin(), 1.0 + (i % 4) as f64],
            velocity: [
                0.01 * ((i % 3) as f64 - 1.0),
                0.005 * ((i % 5) as f64 - 2.0),
                0.0,
            ],
            spread_std: [1.0, 1.0, 0.3],
            n_mpcs: 6,
            power_db_mean: -75.0 - (i % 5) as f64 * 3.0,
            power_db_std: 4.0,
        });
    }
    ScenarioSpec {
        n_snapshots,
        clusters,
        noise_mpcs_per_snapshot: 8,
        rng_seed: seed,
    }
}
