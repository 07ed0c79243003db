//! `mmtrack` command line.
//!
//! Exit codes: 0 success, 1 processing failure, 2 usage or configuration
//! error, 3 file error (unreadable, malformed or unwritable).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::assoc::GateMode;
use crate::detector::{DetectorKind, Measurement};
use crate::error::{Error, Result};
use crate::metrics::{ospa, LabeledSet};
use crate::tracker::{FrameInput, Track, TrackStatus};

use super::config::RunConfig;
use super::experiment::{build_pipeline, crb_table, rng_from_seed, simulate, CRB_HEADER};
use super::io::{
    is_cube_file, read_cube_file, read_measurements, read_tracks, read_truth, write_atomic,
    write_cube_file, write_measurements, write_report, write_tracks, write_truth, CubeHeader,
    ReportRow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mmtrack",
    version,
    about = "mmWave radar detection and multitarget tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write the baseband cubes and the truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run the detector on every frame of a cube file.
    Detect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// mnomp or fftcfar; the config's detector when absent.
        #[arg(long)]
        detector: Option<DetectorKind>,
    },
    /// Track from a cube file or a measurements CSV.
    Track {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// 2d or 3d; the config's gate when absent.
        #[arg(long)]
        gate: Option<GateMode>,
        #[arg(long)]
        detector: Option<DetectorKind>,
    },
    /// Per-frame OSPA between truth and confirmed tracks.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 10.0)]
        c: f64,
    },
    /// Tabulate the estimation bounds against SNR.
    Crb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Io(_)
        | Error::BadMagic(_)
        | Error::UnsupportedVersion(_)
        | Error::Truncated { .. }
        | Error::DimensionOverflow(_)
        | Error::Parse { .. } => EXIT_IO,
        Error::Unidentifiable(_) | Error::Singular(_) | Error::NoConvergence(_) => EXIT_FAILURE,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, out, truth } => cmd_simulate(&config, &out, &truth),
        Command::Detect {
            config,
            input,
            out,
            detector,
        } => cmd_detect(&config, &input, &out, detector),
        Command::Track {
            config,
            input,
            out,
            gate,
            detector,
        } => cmd_track(&config, &input, &out, gate, detector),
        Command::Eval {
            truth,
            tracks,
            out,
            p,
            c,
        } => cmd_eval(&truth, &tracks, &out, p, c),
        Command::Crb { config, out } => cmd_crb(&config, &out),
    }
}

fn cmd_simulate(config: &Path, out: &Path, truth: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut rng = rng_from_seed(cfg.seed());
    let (scenario, cubes) = simulate(&cfg, &mut rng)?;
    write_cube_file(
        out,
        &CubeHeader::from_params(&cfg.radar, cubes.len()),
        &cubes,
    )?;
    write_truth(truth, &scenario.truth)?;
    println!(
        "simulated {} frames of {} targets",
        cubes.len(),
        cfg.scenario.n_targets
    );
    Ok(())
}

fn load_cubes(cfg: &RunConfig, path: &Path) -> Result<Vec<crate::signal::BasebandCube>> {
    let (header, cubes) = read_cube_file(path)?;
    header.check_params(&cfg.radar)?;
    Ok(cubes)
}

fn cmd_detect(
    config: &Path,
    input: &Path,
    out: &Path,
    detector: Option<DetectorKind>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let cubes = load_cubes(&cfg, input)?;
    let pipeline = build_pipeline(&cfg, detector.unwrap_or(cfg.detector), cfg.assoc.gate_mode)?;
    let mut all = Vec::new();
    for (frame, cube) in cubes.iter().enumerate() {
        let (_, meas) = pipeline.detect(cube, frame)?;
        all.extend(meas);
    }
    write_measurements(out, &all)?;
    println!("{} measurements over {} frames", all.len(), cubes.len());
    Ok(())
}

fn cmd_track(
    config: &Path,
    input: &Path,
    out: &Path,
    gate: Option<GateMode>,
    detector: Option<DetectorKind>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut pipeline = build_pipeline(
        &cfg,
        detector.unwrap_or(cfg.detector),
        gate.unwrap_or(cfg.assoc.gate_mode),
    )?;
    let mut snapshots: Vec<(usize, Vec<Track>)> = Vec::new();
    if is_cube_file(input)? {
        for cube in load_cubes(&cfg, input)? {
            let o = pipeline.process_frame(FrameInput::Cube(&cube))?;
            snapshots.push((o.frame, o.tracks));
        }
    } else {
        let meas = read_measurements(input)?;
        let last = meas.iter().map(|m| m.frame + 1).max().unwrap_or(0);
        let mut frames: Vec<Vec<Measurement>> = vec![Vec::new(); last.max(cfg.scenario.n_frames)];
        for m in meas {
            frames[m.frame].push(m);
        }
        for f in &frames {
            let o = pipeline.process_frame(FrameInput::Measurements(f))?;
            snapshots.push((o.frame, o.tracks));
        }
    }
    write_tracks(out, &snapshots)?;
    let labels: std::collections::BTreeSet<u64> = snapshots
        .iter()
        .flat_map(|(_, t)| t.iter().map(|t| t.label))
        .collect();
    println!("{} frames, {} tracks", snapshots.len(), labels.len());
    Ok(())
}

fn cmd_eval(truth: &Path, tracks: &Path, out: &Path, p: f64, c: f64) -> Result<()> {
    let truth = read_truth(truth)?;
    let tracks = read_tracks(tracks)?;
    let mut frames: BTreeMap<usize, (LabeledSet, LabeledSet)> = BTreeMap::new();
    let last = truth
        .iter()
        .map(|r| r.frame)
        .chain(tracks.iter().map(|r| r.frame))
        .max();
    if let Some(last) = last {
        for f in 0..=last {
            frames.insert(f, Default::default());
        }
    }
    for r in truth {
        frames
            .get_mut(&r.frame)
            .unwrap()
            .0
            .items
            .push((r.label, r.x));
    }
    for r in tracks
        .into_iter()
        .filter(|r| r.status == TrackStatus::Active)
    {
        frames
            .get_mut(&r.frame)
            .unwrap()
            .1
            .items
            .push((r.track_id, r.x));
    }
    let rows = frames
        .iter()
        .map(|(&frame, (x, y))| {
            Ok(ReportRow {
                frame,
                ospa: ospa(x, y, p, c).map_err(|e| Error::Config(e.to_string()))?,
                n_truth: x.len(),
                n_tracks: y.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_report(out, &rows)?;
    let mean = rows.iter().map(|r| r.ospa).sum::<f64>() / rows.len().max(1) as f64;
    println!("MOSPA {mean:.6} over {} frames", rows.len());
    Ok(())
}

fn cmd_crb(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let rows = crb_table(&cfg)?;
    write_atomic(out, |w| {
        writeln!(w, "{CRB_HEADER}")?;
        for r in &rows {
            writeln!(
                w,
                "{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                r.snr_db, r.r, r.theta, r.sd_r, r.sd_v, r.sd_theta, r.sd_px, r.sd_py, r.rho_pxpy
            )?;
        }
        Ok(())
    })?;
    println!("{} SNR points", rows.len());
    Ok(())
}
