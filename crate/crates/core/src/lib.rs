//! Coordinate-based clustering of multipath components and Kalman tracking of
//! the clusters across snapshots.
//!
//! Each snapshot is clustered independently with power-weighted KPowerMeans
//! over the 3-D interaction coordinates of its paths. Cluster centroids are
//! then tracked with a constant-velocity Kalman filter, and clusters of
//! consecutive snapshots are associated through a Gaussian closeness score.
//! Predicted centroids seed the clustering of the next snapshot.

pub mod geometry;
pub mod initseed;
pub mod io;
pub mod kpower;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod track;

pub use kpower::{ClusterError, Clustering};
pub use model::{ClusterParams, Mpc, PipelineConfig, Side, Snapshot, TrackState, Vec3};
pub use pipeline::{run_pipeline, PipelineError, RunRecord};
pub use track::{KalmanModel, TrackRegistry};
