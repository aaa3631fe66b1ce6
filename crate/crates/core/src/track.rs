//! Constant-velocity Kalman tracking of cluster centroids and mutual-nearest
//! association of clusters between consecutive snapshots.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector6};

use crate::geometry::log_closeness;
use crate::initseed::PredictedCentroid;
use crate::kpower::Clustering;
use crate::model::{ClusterParams, TrackPoint, TrackState, Vec3};

/// Linear-Gaussian model over the state `[x, dx, y, dy, z, dz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    pub transition: Matrix6<f64>,
    pub observation: Matrix3x6<f64>,
    pub state_noise: Matrix6<f64>,
    pub observation_noise: Matrix3<f64>,
}

impl KalmanModel {
    pub fn new(q_scale: f64, r_scale: f64) -> Self {
        let mut transition = Matrix6::zeros();
        let mut observation = Matrix3x6::zeros();
        for axis in 0..3 {
            let (p, v) = (2 * axis, 2 * axis + 1);
            transition[(p, p)] = 1.0;
            transition[(p, v)] = 1.0;
            transition[(v, v)] = 1.0;
            observation[(axis, p)] = 1.0;
        }
        Self {
            transition,
            observation,
            state_noise: Matrix6::identity() * q_scale,
            observation_noise: Matrix3::identity() * r_scale,
        }
    }

    /// Birth covariance: observation variance on positions, ten times that
    /// on velocities.
    pub fn initial_covariance(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        for axis in 0..3 {
            let r = self.observation_noise[(axis, axis)];
            m[(2 * axis, 2 * axis)] = r;
            m[(2 * axis + 1, 2 * axis + 1)] = 10.0 * r;
        }
        m
    }

    pub fn observe(&self, theta: &Vector6<f64>) -> Vec3 {
        self.observation * theta
    }
}

fn symmetrize(m: Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

pub fn predict(
    theta: &Vector6<f64>,
    cov: &Matrix6<f64>,
    model: &KalmanModel,
) -> (Vector6<f64>, Matrix6<f64>) {
    let a = &model.transition;
    let theta_pred = a * theta;
    let cov_pred = symmetrize(a * cov * a.transpose() + model.state_noise);
    (theta_pred, cov_pred)
}

pub fn update(
    theta_pred: &Vector6<f64>,
    cov_pred: &Matrix6<f64>,
    observation: &Vec3,
    model: &KalmanModel,
) -> (Vector6<f64>, Matrix6<f64>) {
    let d = &model.observation;
    let innovation_cov = d * cov_pred * d.transpose() + model.observation_noise;
    // R is positive definite, so S is too
    let s_inv = innovation_cov
        .cholesky()
        .expect("innovation covariance is positive definite")
        .inverse();
    let gain = cov_pred * d.transpose() * s_inv;
    let theta = theta_pred + gain * (observation - d * theta_pred);
    let cov = symmetrize((Matrix6::identity() - gain * d) * cov_pred);
    (theta, cov)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// `(old cluster id, index into the new cluster list)`
    pub pairs: Vec<(u64, usize)>,
    pub unmatched_old: Vec<u64>,
    pub unmatched_new: Vec<usize>,
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best = None;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if best.is_none() || v > best_v {
            best = Some(i);
            best_v = v;
        }
    }
    best
}

/// Mutual-argmax association under the closeness function.
///
/// Each new centroid is scored against every old cluster's shape, and each
/// old centroid against every new cluster's shape. A pair is associated when
/// both directions pick each other.
pub fn associate(old: &[ClusterParams], new: &[ClusterParams], eps: f64) -> Association {
    let old_choice: Vec<Option<usize>> = old
        .iter()
        .map(|o| {
            argmax(
                new.iter()
                    .map(|n| log_closeness(&o.centroid, &n.centroid, &n.spread, eps)),
            )
        })
        .collect();
    let mut assoc = Association::default();
    let mut matched_old = vec![false; old.len()];
    for (j, n) in new.iter().enumerate() {
        let pick = argmax(
            old.iter()
                .map(|o| log_closeness(&n.centroid, &o.centroid, &o.spread, eps)),
        );
        match pick {
            Some(i) if old_choice[i] == Some(j) => {
                assoc.pairs.push((old[i].cluster_id, j));
                matched_old[i] = true;
            }
            _ => assoc.unmatched_new.push(j),
        }
    }
    assoc.unmatched_old = old
        .iter()
        .zip(&matched_old)
        .filter(|(_, m)| !**m)
        .map(|(o, _)| o.cluster_id)
        .collect();
    assoc
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRegistry {
    pub active: Vec<TrackState>,
    pub retired: Vec<TrackState>,
    pub next_id: u64,
}

impl TrackRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty() && self.retired.is_empty()
    }

    /// Tracks sorted by id, active and retired alike.
    pub fn all_tracks(&self) -> Vec<&TrackState> {
        let mut all: Vec<&TrackState> = self.active.iter().chain(&self.retired).collect();
        all.sort_by_key(|t| t.cluster_id);
        all
    }

    /// One-step-ahead centroid predictions of all active tracks.
    pub fn predictions(&self, model: &KalmanModel) -> Vec<PredictedCentroid> {
        self.active
            .iter()
            .map(|t| PredictedCentroid {
                track_id: t.cluster_id,
                position: model.observe(&(model.transition * t.theta)),
                power: t.last_observation.power,
            })
            .collect()
    }

    /// Associates a snapshot's clusters with the active tracks, updates
    /// matched tracks, retires unmatched ones and opens new tracks for the
    /// remaining clusters. Cluster ids in `clustering` are rewritten to track
    /// ids. Returns predictions for seeding the next snapshot.
    pub fn step(
        &mut self,
        clustering: &mut Clustering,
        model: &KalmanModel,
        snapshot_index: u64,
        eps: f64,
    ) -> Vec<PredictedCentroid> {
        let old: Vec<ClusterParams> = self
            .active
            .iter()
            .map(|t| t.last_observation.clone())
            .collect();
        let assoc = associate(&old, &clustering.clusters, eps);

        let mut survivors = Vec::with_capacity(self.active.len() + assoc.unmatched_new.len());
        let mut previous = std::mem::take(&mut self.active);
        for (old_id, j) in &assoc.pairs {
            let pos = previous
                .iter()
                .position(|t| t.cluster_id == *old_id)
                .expect("pair references an active track");
            let mut t = previous.swap_remove(pos);
            let obs = &mut clustering.clusters[*j];
            obs.cluster_id = t.cluster_id;
            let (theta_pred, cov_pred) = predict(&t.theta, &t.cov, model);
            let (theta, cov) = update(&theta_pred, &cov_pred, &obs.centroid, model);
            t.theta = theta;
            t.cov = cov;
            t.last_seen = snapshot_index;
            t.lifetime += 1;
            t.last_observation = obs.clone();
            t.history.push(TrackPoint {
                snapshot: snapshot_index,
                position: t.position(),
                velocity: t.velocity(),
            });
            survivors.push(t);
        }
        // whatever is left was not associated
        previous.sort_by_key(|t| t.cluster_id);
        self.retired.extend(previous);

        for &j in &assoc.unmatched_new {
            let id = self.next_id;
            self.next_id += 1;
            let obs = &mut clustering.clusters[j];
            obs.cluster_id = id;
            let mu = obs.centroid;
            let theta = Vector6::new(mu.x, 0.0, mu.y, 0.0, mu.z, 0.0);
            let t = TrackState {
                cluster_id: id,
                theta,
                cov: model.initial_covariance(),
                born_at: snapshot_index,
                last_seen: snapshot_index,
                lifetime: 1,
                last_observation: obs.clone(),
                history: vec![TrackPoint {
                    snapshot: snapshot_index,
                    position: mu,
                    velocity: Vec3::zeros(),
                }],
            };
            survivors.push(t);
        }
        survivors.sort_by_key(|t| t.cluster_id);
        self.active = survivors;
        self.predictions(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;

    fn cluster(id: u64, centroid: Vec3, var: f64) -> ClusterParams {
        ClusterParams {
            cluster_id: id,
            members: vec![0],
            power: 1.0,
            size: 1,
            centroid,
            spread: Matrix3::identity() * var,
        }
    }

    fn clustering_of(clusters: Vec<ClusterParams>) -> Clustering {
        Clustering {
            clusters,
            assignment: vec![],
            objective: 0.0,
        }
    }

    #[test]
    fn model_structure() {
        let m = KalmanModel::new(0.1, 0.2);
        let block = nalgebra::Matrix2::new(1.0, 1.0, 0.0, 1.0);
        let a = Matrix3::<f64>::identity().kronecker(&block);
        assert_eq!(m.transition, a);
        let d = Matrix3::<f64>::identity().kronecker(&nalgebra::RowVector2::new(1.0, 0.0));
        assert_eq!(m.observation, d);
    }

    #[test]
    fn predict_examples() {
        let m = KalmanModel {
            state_noise: Matrix6::zeros(),
            ..KalmanModel::new(1.0, 1.0)
        };
        let theta = Vector6::new(1.0, 0.5, 2.0, 0.0, 3.0, -1.0);
        let (tp, _) = predict(&theta, &Matrix6::identity(), &m);
        assert_eq!(m.observe(&tp), Vec3::new(1.5, 2.0, 2.0));

        let still = Vector6::new(4.0, 0.0, -1.0, 0.0, 2.0, 0.0);
        assert_eq!(
            m.observe(&predict(&still, &Matrix6::identity(), &m).0),
            Vec3::new(4.0, -1.0, 2.0)
        );

        // A A^T + q I with q = 0.5, evaluated by hand per axis: [[2.5, 1], [1, 1.5]]
        let m = KalmanModel::new(0.5, 1.0);
        let (_, mp) = predict(&theta, &Matrix6::identity(), &m);
        let block = nalgebra::Matrix2::new(2.5, 1.0, 1.0, 1.5);
        assert_relative_eq!(
            mp,
            Matrix3::<f64>::identity().kronecker(&block),
            max_relative = 1e-12
        );
    }

    #[test]
    fn update_examples() {
        let theta = Vector6::new(1.0, 0.1, 2.0, 0.0, 3.0, 0.0);
        let obs = Vec3::new(1.7, 1.4, 3.3);

        let tight = KalmanModel::new(1e-3, 1e-12);
        let (t, _) = update(&theta, &Matrix6::identity(), &obs, &tight);
        assert!((tight.observe(&t) - obs).norm() < 1e-6);

        let m = KalmanModel::new(1e-3, 0.3);
        let (t, c) = update(&theta, &Matrix6::identity(), &m.observe(&theta), &m);
        assert_eq!(t, theta);
        assert!(c[(0, 0)] < 1.0);

        // M = I, R = I: per-axis gain is [0.5, 0] on the innovation
        let m = KalmanModel::new(1e-3, 1.0);
        let (t, c) = update(&theta, &Matrix6::identity(), &obs, &m);
        let innov = obs - m.observe(&theta);
        for axis in 0..3 {
            assert_relative_eq!(
                t[2 * axis],
                theta[2 * axis] + 0.5 * innov[axis],
                max_relative = 1e-12
            );
            assert_relative_eq!(t[2 * axis + 1], theta[2 * axis + 1], max_relative = 1e-12);
            assert_relative_eq!(c[(2 * axis, 2 * axis)], 0.5, max_relative = 1e-12);
            assert_relative_eq!(c[(2 * axis + 1, 2 * axis + 1)], 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn covariance_stays_psd() {
        let m = KalmanModel::new(1e-4, 0.04);
        let mut theta = Vector6::zeros();
        let mut cov = m.initial_covariance();
        for n in 0..200 {
            let (tp, cp) = predict(&theta, &cov, &m);
            let t = n as f64;
            (theta, cov) = update(&tp, &cp, &Vec3::new(0.05 * t, (t * 0.3).sin(), 0.0), &m);
            assert_eq!(cov, cov.transpose());
            let min_eig = SymmetricEigen::new(cov).eigenvalues.min();
            assert!(min_eig >= -1e-9);
        }
    }

    #[test]
    fn identical_sets_match_fully() {
        let set = vec![
            cluster(4, Vec3::new(0.0, 0.0, 0.0), 1.0),
            cluster(9, Vec3::new(10.0, 0.0, 0.0), 0.5),
            cluster(11, Vec3::new(0.0, 10.0, 2.0), 2.0),
        ];
        let a = associate(&set, &set, 1e-6);
        assert_eq!(a.pairs, vec![(4, 0), (9, 1), (11, 2)]);
        assert!(a.unmatched_new.is_empty() && a.unmatched_old.is_empty());
    }

    #[test]
    fn empty_sides() {
        let set = vec![
            cluster(0, Vec3::zeros(), 1.0),
            cluster(1, Vec3::new(5.0, 0.0, 0.0), 1.0),
        ];
        let a = associate(&[], &set, 1e-6);
        assert_eq!(a.unmatched_new, vec![0, 1]);
        assert!(a.pairs.is_empty());
        let a = associate(&set, &[], 1e-6);
        assert_eq!(a.unmatched_old, vec![0, 1]);
    }

    #[test]
    fn crossed_proximities_give_one_mutual_pair() {
        // old 0 wide at origin, old 1 narrow at x=3; new 0 at x=2 (wide), new 1 at x=-6 (narrow)
        let old = vec![
            cluster(0, Vec3::new(0.0, 0.0, 0.0), 4.0),
            cluster(1, Vec3::new(3.0, 0.0, 0.0), 0.1),
        ];
        let new = vec![
            cluster(0, Vec3::new(2.0, 0.0, 0.0), 4.0),
            cluster(1, Vec3::new(-6.0, 0.0, 0.0), 0.1),
        ];
        // brute-force both closeness tables
        let eps = 1e-6;
        let fwd: Vec<Vec<f64>> = new
            .iter()
            .map(|n| {
                old.iter()
                    .map(|o| log_closeness(&n.centroid, &o.centroid, &o.spread, eps))
                    .collect()
            })
            .collect();
        let bwd: Vec<Vec<f64>> = old
            .iter()
            .map(|o| {
                new.iter()
                    .map(|n| log_closeness(&o.centroid, &n.centroid, &n.spread, eps))
                    .collect()
            })
            .collect();
        let best = |row: &Vec<f64>| if row[1] > row[0] { 1 } else { 0 };
        let mut expected = Vec::new();
        for (j, row) in fwd.iter().enumerate() {
            let i = best(row);
            if best(&bwd[i]) == j {
                expected.push((i as u64, j));
            }
        }
        assert_eq!(expected.len(), 1);
        let a = associate(&old, &new, eps);
        assert_eq!(a.pairs, expected);
        assert_eq!(a.unmatched_old.len(), 1);
        assert_eq!(a.unmatched_new.len(), 1);
    }

    #[test]
    fn cold_start_creates_tracks() {
        let mut reg = TrackRegistry::new();
        let m = KalmanModel::new(1e-4, 0.05);
        let mut c = clustering_of(vec![
            cluster(0, Vec3::new(0.0, 0.0, 0.0), 1.0),
            cluster(1, Vec3::new(10.0, 0.0, 0.0), 1.0),
            cluster(2, Vec3::new(0.0, 10.0, 0.0), 1.0),
        ]);
        let pred = reg.step(&mut c, &m, 0, 1e-6);
        assert_eq!(
            reg.active.iter().map(|t| t.cluster_id).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(reg.active.iter().all(|t| t.velocity() == Vec3::zeros()));
        assert_eq!(pred.len(), 3);
        assert_eq!(reg.next_id, 3);
    }

    #[test]
    fn constant_velocity_is_learned() {
        let mut reg = TrackRegistry::new();
        let m = KalmanModel::new(1e-6, 0.05);
        for n in 0..20u64 {
            let mu = Vec3::new(1.0 + 0.05 * n as f64, 2.0, 0.5);
            let mut c = clustering_of(vec![cluster(0, mu, 0.25)]);
            reg.step(&mut c, &m, n, 1e-6);
        }
        assert_eq!(reg.active.len(), 1);
        let v = reg.active[0].velocity();
        assert!((v.x - 0.05).abs() <= 0.005, "{v}");
        assert!(v.y.abs() < 0.005 && v.z.abs() < 0.005);
        assert_eq!(reg.active[0].lifetime, 20);
    }

    #[test]
    fn unmatched_track_is_retired_with_its_lifetime() {
        let mut reg = TrackRegistry::new();
        let m = KalmanModel::new(1e-4, 0.05);
        let far = cluster(0, Vec3::new(100.0, 0.0, 0.0), 1.0);
        let here = cluster(0, Vec3::new(0.0, 0.0, 0.0), 1.0);
        for n in 0..3 {
            reg.step(&mut clustering_of(vec![far.clone()]), &m, n, 1e-6);
        }
        // track of interest: born at 3, last associated at 7
        for n in 3..=7 {
            reg.step(
                &mut clustering_of(vec![far.clone(), here.clone()]),
                &m,
                n,
                1e-6,
            );
        }
        reg.step(&mut clustering_of(vec![far.clone()]), &m, 8, 1e-6);
        let t = reg.retired.iter().find(|t| t.born_at == 3).unwrap();
        assert_eq!(t.lifetime, 5);
        assert_eq!(t.last_seen, 7);
        assert_eq!(t.lifetime, t.last_seen - t.born_at + 1);
        // the persistent track kept its id
        assert_eq!(reg.active.len(), 1);
        assert_eq!(reg.active[0].cluster_id, 0);
        assert_eq!(reg.active[0].lifetime, 9);
    }

    #[test]
    fn ids_persist_and_new_clusters_get_fresh_ids() {
        let mut reg = TrackRegistry::new();
        let m = KalmanModel::new(1e-4, 0.05);
        let mut c = clustering_of(vec![cluster(0, Vec3::zeros(), 1.0)]);
        reg.step(&mut c, &m, 0, 1e-6);
        let mut c = clustering_of(vec![
            cluster(0, Vec3::new(50.0, 0.0, 0.0), 1.0),
            cluster(1, Vec3::new(0.1, 0.0, 0.0), 1.0),
        ]);
        reg.step(&mut c, &m, 1, 1e-6);
        assert_eq!(c.clusters[1].cluster_id, 0);
        assert_eq!(c.clusters[0].cluster_id, 1);
        assert_eq!(reg.next_id, 2);
    }
}
