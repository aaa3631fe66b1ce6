//! Snapshot CSV ingestion, configuration files and run artifact output.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    db_to_linear, validate_snapshot, Mpc, PipelineConfig, Snapshot, ValidationError, Vec3,
};
use crate::pipeline::RunRecord;
use crate::stats::histogram;
use crate::synth::{LabeledSnapshot, ScenarioSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("snapshot {snapshot}: {source}")]
    Validation {
        snapshot: u64,
        #[source]
        source: ValidationError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const SNAPSHOT_HEADER: [&str; 9] = [
    "snapshot", "path_id", "x_ms", "y_ms", "z_ms", "x_bs", "y_bs", "z_bs", "power_db",
];

/// Formats with 9 significant digits, then prints the shortest decimal that
/// reads back to the rounded value.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn ingest_snapshots(path: &Path) -> Result<Vec<Snapshot>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_snapshots(file)
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: u64,
) -> Result<T, IoError> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim().parse().map_err(|_| IoError::Parse {
        line,
        message: format!("field `{}` has invalid value `{raw}`", SNAPSHOT_HEADER[i]),
    })
}

/// Parses snapshot rows, groups them by snapshot index (ascending) and
/// validates each group.
pub fn read_snapshots<R: Read>(reader: R) -> Result<Vec<Snapshot>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(SNAPSHOT_HEADER.iter().copied()) {
        return Err(IoError::Parse {
            line: 1,
            message: format!("expected header `{}`", SNAPSHOT_HEADER.join(",")),
        });
    }
    let mut groups: BTreeMap<u64, Vec<Mpc>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != SNAPSHOT_HEADER.len() {
            return Err(IoError::Parse {
                line,
                message: format!(
                    "expected {} fields, got {}",
                    SNAPSHOT_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let snapshot: u64 = parse_field(&rec, 0, line)?;
        let path_id: u64 = parse_field(&rec, 1, line)?;
        let mut c = [0.0; 6];
        for (k, v) in c.iter_mut().enumerate() {
            *v = parse_field(&rec, 2 + k, line)?;
        }
        let power_db: f64 = parse_field(&rec, 8, line)?;
        groups.entry(snapshot).or_default().push(Mpc::new(
            path_id,
            Vec3::new(c[0], c[1], c[2]),
            Vec3::new(c[3], c[4], c[5]),
            db_to_linear(power_db),
        ));
    }
    groups
        .into_iter()
        .map(|(index, mpcs)| {
            validate_snapshot(Snapshot::new(index, mpcs)).map_err(|source| IoError::Validation {
                snapshot: index,
                source,
            })
        })
        .collect()
}

pub fn write_snapshots<W: Write>(snapshots: &[Snapshot], writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SNAPSHOT_HEADER)?;
    for s in snapshots {
        for m in &s.mpcs {
            let mut row = vec![s.index.to_string(), m.path_id.to_string()];
            row.extend(m.ms_pos.iter().chain(m.bs_pos.iter()).map(|v| fmt_sig(*v)));
            row.push(fmt_sig(m.power_db()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|source| IoError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })?;
    Ok(())
}

/// `snapshot,path_id,label` with an empty label for noise paths.
pub fn write_truth<W: Write>(truth: &[LabeledSnapshot], writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["snapshot", "path_id", "label"])?;
    for ls in truth {
        for (m, t) in ls.snapshot.mpcs.iter().zip(&ls.truth) {
            let label = t.map(|c| c.to_string()).unwrap_or_default();
            w.write_record([ls.snapshot.index.to_string(), m.path_id.to_string(), label])?;
        }
    }
    w.flush().map_err(|source| IoError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })?;
    Ok(())
}

/// Reads `snapshot,path_id,label` rows into a lookup keyed by snapshot then path.
pub fn read_labels<R: Read>(
    reader: R,
) -> Result<BTreeMap<u64, BTreeMap<u64, Option<u64>>>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: BTreeMap<u64, BTreeMap<u64, Option<u64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<u64, IoError> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| IoError::Parse {
                    line,
                    message: format!("column {i} is not an integer"),
                })
        };
        let label = match rec.get(2).unwrap_or("") {
            "" => None,
            _ => Some(num(2)?),
        };
        out.entry(num(0)?).or_default().insert(num(1)?, label);
    }
    Ok(out)
}

/// Flat JSON config: pipeline keys at the top level plus an optional scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Paths of the files written for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub clusters: PathBuf,
    pub tracks: PathBuf,
    pub assignments: PathBuf,
    pub lifetimes: PathBuf,
    pub clusters_per_snapshot: PathBuf,
    pub power_fractions: PathBuf,
    pub lifetime_histogram: PathBuf,
    pub cluster_count_histogram: PathBuf,
    pub power_fraction_histogram: PathBuf,
    pub run_meta: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    config: &'a PipelineConfig,
    input_digest: &'a str,
    n_snapshots: usize,
    n_tracks: usize,
    created_unix: u64,
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn histogram_rows(values: &[f64], width: f64) -> Vec<Vec<String>> {
    match histogram(values, width) {
        Ok(h) => h
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![fmt_sig(h.edges[i]), fmt_sig(h.edges[i + 1]), c.to_string()])
            .collect(),
        Err(_) => Vec::new(),
    }
}

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lo", "bin_hi", "count"];

pub fn write_histogram(path: &Path, values: &[f64], width: f64) -> Result<(), IoError> {
    write_csv(path, &HISTOGRAM_HEADER, histogram_rows(values, width))
}

pub fn emit(run: &RunRecord, out_dir: &Path) -> Result<RunArtifacts, IoError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let p = |name: &str| out_dir.join(name);
    let art = RunArtifacts {
        clusters: p("clusters.csv"),
        tracks: p("tracks.csv"),
        assignments: p("assignments.csv"),
        lifetimes: p("lifetimes.csv"),
        clusters_per_snapshot: p("clusters_per_snapshot.csv"),
        power_fractions: p("power_fractions.csv"),
        lifetime_histogram: p("lifetime_histogram.csv"),
        cluster_count_histogram: p("clusters_per_snapshot_histogram.csv"),
        power_fraction_histogram: p("power_fraction_histogram.csv"),
        run_meta: p("run_meta.json"),
    };

    write_csv(
        &art.clusters,
        &[
            "snapshot",
            "cluster_id",
            "power",
            "size",
            "x",
            "y",
            "z",
            "c_xx",
            "c_xy",
            "c_xz",
            "c_yy",
            "c_yz",
            "c_zz",
        ],
        run.snapshots.iter().flat_map(|s| {
            s.clustering.clusters.iter().map(move |c| {
                let mut row = vec![
                    s.index.to_string(),
                    c.cluster_id.to_string(),
                    fmt_sig(c.power),
                    c.size.to_string(),
                ];
                row.extend(c.centroid.iter().map(|v| fmt_sig(*v)));
                for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
                    row.push(fmt_sig(c.spread[(i, j)]));
                }
                row
            })
        }),
    )?;

    write_csv(
        &art.tracks,
        &["snapshot", "track_id", "x", "dx", "y", "dy", "z", "dz"],
        run.snapshots.iter().flat_map(|s| {
            s.tracks.iter().map(move |(id, theta)| {
                let mut row = vec![s.index.to_string(), id.to_string()];
                row.extend(theta.iter().map(|v| fmt_sig(*v)));
                row
            })
        }),
    )?;

    write_csv(
        &art.assignments,
        &["snapshot", "path_id", "label"],
        run.snapshots.iter().flat_map(|s| {
            s.path_ids
                .iter()
                .zip(s.labels())
                .map(move |(pid, l)| {
                    vec![
                        s.index.to_string(),
                        pid.to_string(),
                        l.map(|v| v.to_string()).unwrap_or_default(),
                    ]
                })
                .collect::<Vec<_>>()
        }),
    )?;

    let tracks = run.registry.all_tracks();
    write_csv(
        &art.lifetimes,
        &["track_id", "born_at", "last_seen", "lifetime"],
        tracks.iter().map(|t| {
            vec![
                t.cluster_id.to_string(),
                t.born_at.to_string(),
                t.last_seen.to_string(),
                t.lifetime.to_string(),
            ]
        }),
    )?;

    write_csv(
        &art.clusters_per_snapshot,
        &["snapshot", "n_clusters"],
        run.snapshots
            .iter()
            .map(|s| vec![s.index.to_string(), s.clustering.k().to_string()]),
    )?;

    let summary = run.summary();
    write_csv(
        &art.power_fractions,
        &["snapshot", "cluster_id", "power_percent"],
        run.snapshots
            .iter()
            .zip(&summary.power_fractions)
            .flat_map(|(s, fr)| {
                s.clustering.clusters.iter().zip(fr).map(move |(c, f)| {
                    vec![s.index.to_string(), c.cluster_id.to_string(), fmt_sig(*f)]
                })
            }),
    )?;

    let lifetimes: Vec<f64> = summary.lifetimes.iter().map(|&l| l as f64).collect();
    let counts: Vec<f64> = summary
        .clusters_per_snapshot
        .iter()
        .map(|&k| k as f64)
        .collect();
    let fractions: Vec<f64> = summary.power_fractions.iter().flatten().copied().collect();
    write_histogram(&art.lifetime_histogram, &lifetimes, 1.0)?;
    write_histogram(&art.cluster_count_histogram, &counts, 1.0)?;
    write_histogram(&art.power_fraction_histogram, &fractions, 1.0)?;

    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        config: &run.config,
        input_digest: &run.input_digest,
        n_snapshots: run.snapshots.len(),
        n_tracks: tracks.len(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&art.run_meta, text + "\n").map_err(io_err(&art.run_meta))?;
    Ok(art)
}

/// Reads one numeric column of a CSV produced by [`emit`].
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| IoError::Parse {
            line: 1,
            message: format!("missing column `{column}`"),
        })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let raw = rec.get(idx).unwrap_or("");
        out.push(raw.parse().map_err(|_| IoError::Parse {
            line,
            message: format!("`{raw}` is not a number"),
        })?);
    }
    Ok(out)
}
