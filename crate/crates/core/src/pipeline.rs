//! The end-to-end chain: attitude replay, steering selection, matched
//! filter, beamforming, gain compensation, export.
//!
//! Attitude replay and frame processing share nothing but an
//! [`AttitudeCell`]: before each frame the replay is advanced to the frame
//! timestamp and publishes its latest estimate, and the frame stage reads
//! whatever snapshot is current.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::ahrs::{AttitudeCell, AttitudeEstimate, AttitudeTracker, ImuSample};
use crate::beamformer::{das_beamform_analytic, prepare_channels, AcousticImage};
use crate::config::PipelineConfig;
use crate::dsp::RawFrame;
use crate::error::{Error, Result};
use crate::formats;
use crate::gain::{apply_gain, calibrate_gain, run_calibration_sweep, GainTable};
use crate::seed;
use crate::simulator::{synthesize_imu, SonarRig};
use crate::steering::{select_steering, Selection, SteeringBank};

/// Frames at the start of a run left out of the timing statistics.
pub const DEFAULT_WARMUP_FRAMES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimes {
    pub fusion: f64,
    pub selection: f64,
    pub matched_filter: f64,
    pub beamform: f64,
    pub gain: f64,
    pub export: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.fusion + self.selection + self.matched_filter + self.beamform + self.gain + self.export
    }

    fn add(&mut self, o: &StageTimes) {
        self.fusion += o.fusion;
        self.selection += o.selection;
        self.matched_filter += o.matched_filter;
        self.beamform += o.beamform;
        self.gain += o.gain;
        self.export += o.export;
    }

    fn scaled(&self, k: f64) -> StageTimes {
        StageTimes {
            fusion: self.fusion * k,
            selection: self.selection * k,
            matched_filter: self.matched_filter * k,
            beamform: self.beamform * k,
            gain: self.gain * k,
            export: self.export * k,
        }
    }
}

/// Wall-clock stage durations in seconds over the timed frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingReport {
    pub per_frame: Vec<StageTimes>,
    /// Leading frames excluded from the statistics.
    pub warmup: usize,
    pub mean: StageTimes,
    pub mean_total: f64,
    pub std_total: f64,
}

impl TimingReport {
    pub fn from_frames(per_frame: Vec<StageTimes>, warmup: usize) -> Self {
        // with too few frames every frame counts
        let warmup = if per_frame.len() > warmup { warmup } else { 0 };
        let timed = &per_frame[warmup..];
        if timed.is_empty() {
            return TimingReport {
                per_frame,
                warmup,
                ..Default::default()
            };
        }
        let n = timed.len() as f64;
        let mut sum = StageTimes::default();
        timed.iter().for_each(|t| sum.add(t));
        let mean_total = timed.iter().map(StageTimes::total).sum::<f64>() / n;
        let var = timed.iter().map(|t| (t.total() - mean_total).powi(2)).sum::<f64>() / n;
        TimingReport {
            mean: sum.scaled(1.0 / n),
            mean_total,
            std_total: var.sqrt(),
            warmup,
            per_frame,
        }
    }

    pub fn timed_frames(&self) -> usize {
        self.per_frame.len() - self.warmup
    }

    /// Share of the mean frame time spent on steering selection and gain.
    pub fn stabilization_overhead(&self) -> f64 {
        if self.mean_total > 0.0 {
            (self.mean.selection + self.mean.gain) / self.mean_total
        } else {
            0.0
        }
    }

    pub fn render(&self) -> String {
        let ms = |s: f64| s * 1e3;
        let m = &self.mean;
        let mut s = format!("timed frames: {} (warm-up {})\n", self.timed_frames(), self.warmup);
        for (name, v) in [
            ("fusion", m.fusion),
            ("selection", m.selection),
            ("matched filter", m.matched_filter),
            ("beamform", m.beamform),
            ("gain", m.gain),
            ("export", m.export),
        ] {
            let _ = writeln!(s, "  {name:<15}{:>10.3} ms", ms(v));
        }
        let _ = writeln!(
            s,
            "  {:<15}{:>10.3} ms ± {:.3} ms\nstabilization overhead: {:.3} %",
            "total",
            ms(self.mean_total),
            ms(self.std_total),
            100.0 * self.stabilization_overhead()
        );
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    /// Estimated tilt, degrees; `None` before the first IMU sample.
    pub theta_i: Option<f64>,
    pub selection: Selection,
    pub gain_applied: f64,
    pub gain_clamped: bool,
    pub truncated: usize,
}

/// Counters for conditions that do not stop a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Warnings {
    pub steering_clamped: usize,
    pub gain_clamped: usize,
    pub truncated_cells: usize,
    pub rejected_imu_samples: usize,
    pub frames_without_attitude: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub stabilize: bool,
    pub gain: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stabilize: true,
            gain: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub images: Vec<AcousticImage>,
    pub records: Vec<FrameRecord>,
    pub timing: TimingReport,
    pub warnings: Warnings,
}

/// Everything a run needs, resolved from a config.
pub struct Prepared {
    pub rig: SonarRig,
    pub bank: SteeringBank,
    /// θ_c = 0 bank used when stabilization is off.
    pub level: SteeringBank,
    pub gain_table: GainTable,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<RawFrame>,
}

/// Frame timestamps: `start + k / rate`.
pub fn frame_times(config: &PipelineConfig) -> Result<Vec<f64>> {
    let start = config.tilt_profile()?.start();
    Ok((0..config.frames.count)
        .map(|k| start + k as f64 / config.frames.rate)
        .collect())
}

/// Simulated frames of the configured scene along the tilt profile.
pub fn simulate_frames(config: &PipelineConfig, rig: &SonarRig) -> Result<Vec<RawFrame>> {
    use rayon::prelude::*;
    let scene = config.scene()?;
    let profile = config.tilt_profile()?;
    let times = frame_times(config)?;
    times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            rig.synthesize(&scene, profile.at(t), t, seed::derive(config.seed, "frame", k as i64))
                .map(|f| f.frame)
                .map_err(|e| Error::Frame {
                    index: k,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Simulated IMU stream along the tilt profile.
pub fn simulate_imu(config: &PipelineConfig) -> Result<Vec<ImuSample>> {
    synthesize_imu(
        &config.tilt_profile()?,
        config.ahrs.rate,
        config.ahrs.noise,
        seed::derive(config.seed, "imu", 0),
    )
}

/// Runs the simulated calibration sweep over the bank grid.
pub fn calibrate(config: &PipelineConfig, rig: &SonarRig, bank: &SteeringBank) -> Result<GainTable> {
    // tilts whose selected steering covers the bank grid
    let tilts: Vec<f64> = config.calibration_angles().iter().map(|a| -a).collect();
    let measurements = run_calibration_sweep(
        rig,
        bank,
        config.reference_range,
        config.calibration_noise,
        &tilts,
        seed::derive(config.seed, "calibration", 0),
    )?;
    calibrate_gain(&measurements, config.reference_range)
}

/// The configured gain table: loaded, or calibrated when none is given.
pub fn gain_table(config: &PipelineConfig, rig: &SonarRig, bank: &SteeringBank) -> Result<GainTable> {
    match config.gain_table_file()? {
        Some(t) => Ok(t),
        None => calibrate(config, rig, bank),
    }
}

/// Frames from the configured directory (`*.sbraw`, name order), or
/// simulated ones.
pub fn load_frames(config: &PipelineConfig, rig: &SonarRig) -> Result<Vec<RawFrame>> {
    match &config.frames.frames_dir {
        Some(dir) => read_frame_dir(dir),
        None => simulate_frames(config, rig),
    }
}

pub fn read_frame_dir(dir: &Path) -> Result<Vec<RawFrame>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "sbraw"))
        .collect();
    paths.sort();
    paths.iter().map(|p| formats::read_frame(p)).collect()
}

pub fn prepare(config: &PipelineConfig, options: RunOptions) -> Result<Prepared> {
    let rig = config.rig()?;
    let bank = config.bank()?;
    let level = SteeringBank::fixed(&rig.array, &config.bank.azimuths, 0.0, config.speed_of_sound)?;
    let gain_table = if options.gain {
        gain_table(config, &rig, &bank)?
    } else {
        GainTable::unity()
    };
    let imu = match &config.ahrs.imu_stream {
        Some(p) => formats::read_imu_stream(p)?,
        None => simulate_imu(config)?,
    };
    let frames = load_frames(config, &rig)?;
    Ok(Prepared {
        rig,
        bank,
        level,
        gain_table,
        imu,
        frames,
    })
}

/// Processes `prepared.frames` in order. Images are written to `export`
/// as `frame_NNNN.{csv,pgm,txt}` when given.
pub fn run_prepared(
    prepared: &Prepared,
    beta: f64,
    options: RunOptions,
    warmup: usize,
    export: Option<&Path>,
) -> Result<PipelineRun> {
    let Prepared {
        rig,
        bank,
        level,
        gain_table,
        imu,
        frames,
    } = prepared;
    let cell = AttitudeCell::new();
    let mut tracker = AttitudeTracker::new(beta);
    let mut next_sample = 0;
    let mut warnings = Warnings::default();
    let mut images = Vec::with_capacity(frames.len());
    let mut records = Vec::with_capacity(frames.len());
    let mut times = Vec::with_capacity(frames.len());

    for (index, frame) in frames.iter().enumerate() {
        let wrap = |e: Error| Error::Frame {
            index,
            source: Box::new(e),
        };
        let mut t = StageTimes::default();

        let clock = Instant::now();
        while next_sample < imu.len() && imu[next_sample].timestamp <= frame.timestamp {
            if let Some(est) = tracker.push(&imu[next_sample]) {
                cell.publish(est);
            }
            next_sample += 1;
        }
        let attitude: Option<AttitudeEstimate> = cell.latest();
        t.fusion = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let theta_i = attitude.map(|a| a.theta_i);
        let (selection, delays) = if options.stabilize {
            let sel = select_steering(bank, theta_i.unwrap_or(0.0)).map_err(wrap)?;
            (sel, bank.matrix(sel.index))
        } else {
            (select_steering(level, 0.0).map_err(wrap)?, level.matrix(0))
        };
        t.selection = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let channels = prepare_channels(frame, rig.matched_filter()).map_err(wrap)?;
        t.matched_filter = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let out = das_beamform_analytic(&channels, delays, frame.sample_rate, &rig.params).map_err(wrap)?;
        t.beamform = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let (image, gain_clamped) = if options.gain {
            let c = apply_gain(&out.image, gain_table, selection.theta_c);
            (c.image, c.clamped)
        } else {
            (out.image, false)
        };
        t.gain = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        if let Some(dir) = export {
            formats::write_image(dir, &frame_stem(index), &image).map_err(wrap)?;
        }
        t.export = clock.elapsed().as_secs_f64();

        warnings.steering_clamped += usize::from(selection.clamped && options.stabilize);
        warnings.gain_clamped += usize::from(gain_clamped);
        warnings.truncated_cells += out.truncated;
        warnings.frames_without_attitude += usize::from(attitude.is_none());
        records.push(FrameRecord {
            index,
            timestamp: frame.timestamp,
            theta_i,
            selection,
            gain_applied: image.gain_applied,
            gain_clamped,
            truncated: out.truncated,
        });
        images.push(image);
        times.push(t);
    }
    warnings.rejected_imu_samples = tracker.rejected();
    Ok(PipelineRun {
        images,
        records,
        timing: TimingReport::from_frames(times, warmup),
        warnings,
    })
}

/// Loads everything the config names and runs the chain over all frames.
pub fn run_pipeline(config: &PipelineConfig, options: RunOptions, export: Option<&Path>) -> Result<PipelineRun> {
    let prepared = prepare(config, options)?;
    run_prepared(&prepared, config.ahrs.beta, options, config.frames.warmup, export)
}

pub fn frame_stem(index: usize) -> String {
    format!("frame_{index:04}")
}

/// Per-frame metadata as CSV.
pub fn records_csv(records: &[FrameRecord]) -> String {
    let mut s = String::from("index,timestamp_s,theta_i_deg,theta_c_deg,steering_clamped,gain_applied,gain_clamped,truncated\n");
    for r in records {
        let theta_i = r.theta_i.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.index,
            r.timestamp,
            theta_i,
            r.selection.theta_c,
            r.selection.clamped,
            r.gain_applied,
            r.gain_clamped,
            r.truncated
        );
    }
    s
}
