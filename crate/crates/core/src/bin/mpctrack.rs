use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mpctrack::io::{self, ConfigFile};
use mpctrack::model::{McdNormalization, Side};
use mpctrack::synth;

#[derive(Parser)]
#[command(
    name = "mpctrack",
    version,
    about = "Multipath component clustering and cluster tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster and track a snapshot CSV, writing artifacts to a directory.
    Run(RunArgs),
    /// Generate a synthetic scenario from the `scenario` section of a config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run's assignments against synthetic ground truth.
    Score {
        /// Snapshot CSV the run was made from.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Run output directory containing assignments.csv.
        #[arg(long)]
        run: PathBuf,
    },
    /// Rebuild histograms of a run directory with custom bin widths.
    Stats {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lifetime_bin: f64,
        #[arg(long, default_value_t = 1.0)]
        power_bin: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    side: Option<Side>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    q_scale: Option<f64>,
    #[arg(long)]
    r_scale: Option<f64>,
    /// per_snapshot or global
    #[arg(long)]
    normalization: Option<String>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(ConfigFile::default()),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?.pipeline;
    if let Some(s) = args.side {
        cfg.side = s;
    }
    if let Some(k) = args.k_max {
        cfg.k_max = k;
    }
    if let Some(q) = args.q_scale {
        cfg.q_scale = q;
    }
    if let Some(r) = args.r_scale {
        cfg.r_scale = r;
    }
    if let Some(n) = args.normalization {
        cfg.mcd_normalization = match n.as_str() {
            "per_snapshot" => McdNormalization::PerSnapshot,
            "global" => McdNormalization::Global,
            other => bail!("unknown normalization `{other}`"),
        };
    }
    let snapshots = io::ingest_snapshots(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    info!("{} snapshots, side {}", snapshots.len(), cfg.side);
    let record = mpctrack::run_pipeline(&snapshots, &cfg).context("pipeline")?;
    io::emit(&record, &args.out).context("writing artifacts")?;
    println!(
        "{} snapshots, {} tracks -> {}",
        record.snapshots.len(),
        record.registry.all_tracks().len(),
        args.out.display()
    );
    Ok(())
}

fn synth_cmd(config: &Path, out: &Path) -> Result<()> {
    let spec = load_config(Some(config))?
        .scenario
        .ok_or_else(|| anyhow!("{} has no `scenario` section", config.display()))?;
    let truth = synth::generate(&spec).context("scenario")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let snaps: Vec<_> = truth.iter().map(|l| l.snapshot.clone()).collect();
    let f = fs::File::create(out.join("snapshots.csv")).context("creating snapshots.csv")?;
    io::write_snapshots(&snaps, f).context("writing snapshots.csv")?;
    let f = fs::File::create(out.join("truth.csv")).context("creating truth.csv")?;
    io::write_truth(&truth, f).context("writing truth.csv")?;
    println!("{} snapshots -> {}", snaps.len(), out.display());
    Ok(())
}

fn score_cmd(input: &Path, truth: &Path, run_dir: &Path) -> Result<()> {
    let snapshots =
        io::ingest_snapshots(input).with_context(|| format!("reading {}", input.display()))?;
    let read = |p: &Path| -> Result<_> {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        io::read_labels(f).with_context(|| format!("reading {}", p.display()))
    };
    let true_labels = read(truth)?;
    let found_labels = read(&run_dir.join("assignments.csv"))?;

    let mut labeled = Vec::with_capacity(snapshots.len());
    let mut found = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let t = true_labels.get(&s.index);
        let f = found_labels.get(&s.index);
        let lookup = |m: Option<&std::collections::BTreeMap<u64, Option<u64>>>, pid: u64| {
            m.and_then(|m| m.get(&pid).copied().flatten())
        };
        found.push(s.mpcs.iter().map(|m| lookup(f, m.path_id)).collect());
        let truth = s
            .mpcs
            .iter()
            .map(|m| lookup(t, m.path_id).map(|c| c as usize))
            .collect();
        labeled.push(synth::LabeledSnapshot { snapshot: s, truth });
    }
    let score = synth::score(&found, &labeled).context("scoring")?;
    #[derive(serde::Serialize)]
    struct Summary {
        mean_accuracy: f64,
        id_continuity: f64,
        mean_lifetime_error: f64,
    }
    let text = serde_json::to_string_pretty(&Summary {
        mean_accuracy: score.mean_accuracy,
        id_continuity: score.id_continuity,
        mean_lifetime_error: score.mean_lifetime_error,
    })
    .context("serializing score")?;
    println!("{text}");
    Ok(())
}

fn stats_cmd(run_dir: &Path, lifetime_bin: f64, power_bin: f64) -> Result<()> {
    let lifetimes =
        io::read_column(&run_dir.join("lifetimes.csv"), "lifetime").context("lifetimes.csv")?;
    let counts = io::read_column(&run_dir.join("clusters_per_snapshot.csv"), "n_clusters")
        .context("clusters_per_snapshot.csv")?;
    let fractions = io::read_column(&run_dir.join("power_fractions.csv"), "power_percent")
        .context("power_fractions.csv")?;
    io::write_histogram(
        &run_dir.join("lifetime_histogram.csv"),
        &lifetimes,
        lifetime_bin,
    )
    .context("lifetime histogram")?;
    io::write_histogram(
        &run_dir.join("clusters_per_snapshot_histogram.csv"),
        &counts,
        1.0,
    )
    .context("cluster count histogram")?;
    io::write_histogram(
        &run_dir.join("power_fraction_histogram.csv"),
        &fractions,
        power_bin,
    )
    .context("power fraction histogram")?;
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    println!(
        "tracks: {}, mean lifetime: {:.3}",
        lifetimes.len(),
        mean(&lifetimes)
    );
    println!(
        "snapshots: {}, mean clusters/snapshot: {:.3}",
        counts.len(),
        mean(&counts)
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Synth { config, out } => synth_cmd(&config, &out),
        Command::Score { input, truth, run } => score_cmd(&input, &truth, &run),
        Command::Stats {
            run,
            lifetime_bin,
            power_bin,
        } => stats_cmd(&run, lifetime_bin, power_bin),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
