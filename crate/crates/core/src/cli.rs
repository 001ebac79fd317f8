//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::beamformer::beamform_frame;
use crate::bench;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::run_tilt_sweep;
use crate::formats::{self, say};
use crate::gain::{apply_gain, GainTable};
use crate::pipeline::{self, RunOptions};
use crate::steering::{bank_memory_bytes, select_steering, SteeringBank};

#[derive(Debug, Parser)]
#[command(name = "steadybeam", version, about = "IMU-stabilized delay-and-sum sonar imaging")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Keep the steering plane at the sensor horizon.
    #[arg(long, global = true)]
    no_stabilize: bool,
    /// Skip gain compensation.
    #[arg(long, global = true)]
    no_gain: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize raw frames of the configured scene along the tilt profile.
    Simulate,
    /// Synthesize an IMU stream from the tilt profile.
    ImuSim,
    /// Run the simulated calibration sweep and write a gain table.
    Calibrate,
    /// Build and cache the steering bank and report its size.
    Bank {
        /// Cache file; defaults to the config's, then `<out>/bank.sbbank`.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Beamform recorded frames into images.
    Beamform {
        #[arg(long, required = true, num_args = 1..)]
        frame: Vec<PathBuf>,
        /// Sensor tilt to compensate, degrees.
        #[arg(long, allow_hyphen_values = true)]
        tilt: Option<f64>,
    },
    /// Tilt sweep comparing stabilized and unstabilized images.
    Sweep,
    /// Replay IMU and frames through the full chain.
    Pipeline,
    /// Selection latency against bank size, plus per-stage frame timing.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![61, 610])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        repetitions: usize,
    },
}

struct Context {
    config: PipelineConfig,
    out: PathBuf,
    options: RunOptions,
}

fn load(cli: &Cli) -> Result<Context> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::from_toml_str("", Path::new("."))?,
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    Ok(Context {
        config,
        out,
        options: RunOptions {
            stabilize: !cli.no_stabilize,
            gain: !cli.no_gain,
        },
    })
}

fn configure_threads() {
    if let Some(n) = std::env::var("STEADYBEAM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only if the pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Runs the CLI; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    let ctx = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("steadybeam: {e}");
            return 1;
        }
    };
    match run(&cli.command, &ctx) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("steadybeam: {e}");
            if matches!(e, Error::Config(_)) {
                1
            } else {
                2
            }
        }
    }
}

fn run(command: &Command, ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let out = &ctx.out;
    match command {
        Command::Simulate => {
            let rig = cfg.rig()?;
            let frames = pipeline::simulate_frames(cfg, &rig)?;
            for (k, f) in frames.iter().enumerate() {
                formats::write_frame(&out.join(format!("{}.sbraw", pipeline::frame_stem(k))), f)?;
            }
            formats::write_tilt_profile(&out.join("tilt_profile.csv"), &cfg.tilt_profile()?)?;
            say(&format!("wrote {} frames to {}", frames.len(), out.display()));
        }
        Command::ImuSim => {
            let imu = pipeline::simulate_imu(cfg)?;
            let path = out.join("imu.csv");
            formats::write_imu_stream(&path, &imu)?;
            say(&format!("wrote {} IMU samples to {}", imu.len(), path.display()));
        }
        Command::Calibrate => {
            let rig = cfg.rig()?;
            let bank = cfg.bank()?;
            let table = pipeline::calibrate(cfg, &rig, &bank)?;
            let path = out.join("gain_table.csv");
            formats::write_gain_table(&path, &table)?;
            let (lo, hi) = (table.entries()[0], table.entries()[table.entries().len() - 1]);
            say(&format!(
                "wrote {} gain entries to {} (factor {} at {}°, {} at {}°)",
                table.entries().len(),
                path.display(),
                lo.1,
                lo.0,
                hi.1,
                hi.0
            ));
        }
        Command::Bank { cache } => {
            let bank = cfg.build_bank()?;
            let path = cache
                .clone()
                .or_else(|| cfg.bank.cache.clone())
                .unwrap_or_else(|| out.join("bank.sbbank"));
            formats::write_bank_cache(&path, &bank)?;
            say(&format!(
                "{} matrices, {} bytes ({} mics × {} directions each, 4-byte delays)",
                bank.len(),
                bank_memory_bytes(&bank),
                bank.num_mics(),
                bank.azimuths().len()
            ));
            say(&format!("cached to {}", path.display()));
        }
        Command::Beamform { frame, tilt } => {
            let rig = cfg.rig()?;
            let (bank, theta_i) = match (ctx.options.stabilize, tilt) {
                (true, Some(t)) => (cfg.bank()?, *t),
                _ => (SteeringBank::fixed(&rig.array, &cfg.bank.azimuths, 0.0, cfg.speed_of_sound)?, 0.0),
            };
            let table = if ctx.options.gain {
                pipeline::gain_table(cfg, &rig, &bank)?
            } else {
                GainTable::unity()
            };
            let sel = select_steering(&bank, theta_i)?;
            for path in frame {
                let raw = formats::read_frame(path)?;
                let outp = beamform_frame(&raw, rig.matched_filter(), bank.matrix(sel.index), &rig.params)?;
                let image = if ctx.options.gain {
                    apply_gain(&outp.image, &table, sel.theta_c).image
                } else {
                    outp.image
                };
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
                formats::write_image(out, stem, &image)?;
                say(&format!(
                    "{}: theta_c {}°, gain {}, {} truncated cells",
                    path.display(),
                    sel.theta_c,
                    image.gain_applied,
                    outp.truncated
                ));
            }
        }
        Command::Sweep => {
            let rig = cfg.rig()?;
            let bank = cfg.bank()?;
            let table = if ctx.options.gain {
                pipeline::gain_table(cfg, &rig, &bank)?
            } else {
                GainTable::unity()
            };
            let report = run_tilt_sweep(&rig, &cfg.scene()?, &bank, &table, &cfg.sweep_tilts, cfg.seed)?;
            let path = out.join("sweep.csv");
            formats::write_sweep_csv(&path, &report)?;
            say(&format!("wrote {} rows to {}", report.rows.len(), path.display()));
        }
        Command::Pipeline => {
            let images = out.join("images");
            let run = pipeline::run_pipeline(cfg, ctx.options, Some(&images))?;
            formats::write_text(&out.join("frames.csv"), &pipeline::records_csv(&run.records))?;
            let timing = run.timing.render();
            formats::write_text(&out.join("timing.txt"), &timing)?;
            say(&format!("processed {} frames into {}", run.images.len(), images.display()));
            say(timing.trim_end());
            let w = run.warnings;
            if w != Default::default() {
                say(&format!(
                    "warnings: {} steering clamps, {} gain clamps, {} truncated cells, {} rejected IMU samples, {} frames without attitude",
                    w.steering_clamped, w.gain_clamped, w.truncated_cells, w.rejected_imu_samples, w.frames_without_attitude
                ));
            }
        }
        Command::Bench { sizes, repetitions } => {
            let rows = bench::bench_selection(&cfg.array, &cfg.bank.azimuths, sizes, *repetitions)?;
            say(bench::render(&rows).trim_end());
            let run = pipeline::run_pipeline(cfg, ctx.options, None)?;
            say(run.timing.render().trim_end());
        }
    }
    Ok(())
}
