mod common;

use std::fs;

use mpctrack::io::{self, read_snapshots, write_snapshots};
use mpctrack::model::{linear_to_db, PipelineConfig};
use mpctrack::pipeline::RunRecord;
use mpctrack::synth::{generate, score, ClusterSpec, ScenarioSpec};
use mpctrack::{run_pipeline, TrackRegistry};

fn cfg3() -> PipelineConfig {
    PipelineConfig {
        k_max: 3,
        ..Default::default()
    }
}

#[test]
fn three_cluster_run_keeps_three_long_tracks() {
    let truth = generate(&common::three_cluster_scenario(11)).unwrap();
    let snaps: Vec<_> = truth.iter().map(|l| l.snapshot.clone()).collect();
    let rec = run_pipeline(&snaps, &cfg3()).unwrap();

    let long: Vec<u64> = rec
        .registry
        .all_tracks()
        .iter()
        .map(|t| t.lifetime)
        .filter(|&l| l >= 95)
        .collect();
    assert_eq!(long.len(), 3, "{:?}", rec.summary().lifetimes);

    let sc = score(&rec.labels(), &truth).unwrap();
    assert!(sc.id_continuity >= 0.95);

    let counts = rec.summary().clusters_per_snapshot;
    let threes = counts.iter().filter(|&&k| k == 3).count();
    assert!(threes > counts.len() / 2, "mode is not 3: {counts:?}");
}

#[test]
fn lifetimes_match_truth() {
    let spec = common::three_cluster_scenario(12);
    let truth = generate(&spec).unwrap();
    let snaps: Vec<_> = truth.iter().map(|l| l.snapshot.clone()).collect();
    let rec = run_pipeline(&snaps, &cfg3()).unwrap();
    let sc = score(&rec.labels(), &truth).unwrap();
    assert!(sc.mean_lifetime_error <= 1.0, "{}", sc.mean_lifetime_error);
    assert!(sc.mean_accuracy >= 0.95);

    let mut lifetimes = rec.summary().lifetimes;
    lifetimes.sort_unstable();
    for got in lifetimes.iter().rev().take(3) {
        assert!(got.abs_diff(spec.n_snapshots) <= 1, "{lifetimes:?}");
    }
}

#[test]
fn trajectory_slope_recovers_velocity() {
    let spec = ScenarioSpec {
        n_snapshots: 120,
        clusters: vec![ClusterSpec {
            birth: 0,
            death: 119,
            initial_centroid: [0.0, 0.0, 1.5],
            velocity: [0.05, 0.0, 0.0],
            spread_std: [0.3, 0.3, 0.1],
            n_mpcs: 25,
            power_db_mean: -70.0,
            power_db_std: 2.0,
        }],
        noise_mpcs_per_snapshot: 0,
        rng_seed: 3,
    };
    let snaps: Vec<_> = generate(&spec)
        .unwrap()
        .into_iter()
        .map(|l| l.snapshot)
        .collect();
    let rec = run_pipeline(
        &snaps,
        &PipelineConfig {
            k_max: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let traj = &rec.summary().trajectories[&0];
    assert_eq!(traj.len(), 120);

    // least-squares slope of filtered x after the filter settles
    let pts: Vec<(f64, f64)> = traj
        .iter()
        .skip(20)
        .map(|p| (p.snapshot as f64, p.position.x))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    assert!((slope - 0.05).abs() <= 0.005, "slope {slope}");

    let last = traj.last().unwrap();
    assert!((last.velocity.x - 0.05).abs() <= 0.005, "{}", last.velocity);
    assert!(last.velocity.z.abs() < 0.005);
}

#[test]
fn written_snapshots_read_back() {
    let truth = generate(&common::three_cluster_scenario(1)).unwrap();
    let snaps: Vec<_> = truth.iter().map(|l| l.snapshot.clone()).collect();
    let mut buf = Vec::new();
    write_snapshots(&snaps, &mut buf).unwrap();
    let back = read_snapshots(buf.as_slice()).unwrap();
    assert_eq!(back.len(), snaps.len());
    let sig9 = |a: f64, b: f64| (a - b).abs() <= 5e-9 * a.abs().max(b.abs()) + 1e-300;
    for (a, b) in snaps.iter().zip(&back) {
        assert_eq!(a.index, b.index);
        assert_eq!(a.len(), b.len());
        for (m, n) in a.mpcs.iter().zip(&b.mpcs) {
            assert_eq!(m.path_id, n.path_id);
            for k in 0..3 {
                assert!(sig9(m.ms_pos[k], n.ms_pos[k]));
                assert!(sig9(m.bs_pos[k], n.bs_pos[k]));
            }
            assert!(sig9(linear_to_db(m.power), linear_to_db(n.power)));
        }
    }
    // a second pass through the text format is exact
    let mut again = Vec::new();
    write_snapshots(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn empty_run_writes_header_only_files() {
    let rec = RunRecord {
        config: PipelineConfig::default(),
        snapshots: vec![],
        registry: TrackRegistry::new(),
        input_digest: String::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    let art = io::emit(&rec, dir.path()).unwrap();
    for p in [
        &art.clusters,
        &art.tracks,
        &art.lifetimes,
        &art.power_fractions,
        &art.lifetime_histogram,
    ] {
        assert_eq!(
            fs::read_to_string(p).unwrap().lines().count(),
            1,
            "{}",
            p.display()
        );
    }
}

#[test]
fn emitted_rows_match_the_run() {
    let truth = generate(&common::three_cluster_scenario(2)).unwrap();
    let snaps: Vec<_> = truth.iter().map(|l| l.snapshot.clone()).collect();
    let rec = run_pipeline(&snaps, &cfg3()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let art = io::emit(&rec, dir.path()).unwrap();

    let clusters = fs::read_to_string(&art.clusters).unwrap();
    assert!(clusters
        .starts_with("snapshot,cluster_id,power,size,x,y,z,c_xx,c_xy,c_xz,c_yy,c_yz,c_zz\n"));
    let rows_for = |n: u64| {
        clusters
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{n},")))
            .count()
    };
    for s in &rec.snapshots {
        assert_eq!(rows_for(s.index), s.clustering.k());
    }
    let tracks = fs::read_to_string(&art.tracks).unwrap();
    assert_eq!(
        tracks.lines().count() - 1,
        rec.snapshots.iter().map(|s| s.tracks.len()).sum::<usize>()
    );

    // re-emitting changes nothing but the timestamp
    let dir2 = tempfile::tempdir().unwrap();
    let art2 = io::emit(&rec, dir2.path()).unwrap();
    for (a, b) in [
        (&art.clusters, &art2.clusters),
        (&art.tracks, &art2.tracks),
        (&art.assignments, &art2.assignments),
        (&art.lifetimes, &art2.lifetimes),
        (&art.power_fractions, &art2.power_fractions),
        (&art.lifetime_histogram, &art2.lifetime_histogram),
    ] {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
    let strip = |p: &std::path::Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("created_unix");
        v
    };
    assert_eq!(strip(&art.run_meta), strip(&art2.run_meta));
}

#[test]
fn two_runs_are_identical() {
    let snaps: Vec<_> = generate(&common::route_scenario(300, 4))
        .unwrap()
        .into_iter()
        .map(|l| l.snapshot)
        .collect();
    let cfg = PipelineConfig {
        k_max: 8,
        ..Default::default()
    };
    assert_eq!(
        run_pipeline(&snaps, &cfg).unwrap(),
        run_pipeline(&snaps, &cfg).unwrap()
    );
}
