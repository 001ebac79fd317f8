//! Run configuration.
//!
//! One TOML file drives every subcommand. All keys are optional; an empty
//! file (or no file) gives the default sensor, bank, and experiments.
//! Relative paths resolve against the directory holding the config file.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//! sample_rate_hz = 450000.0
//! speed_of_sound = 343.0
//!
//! [array]                 # or: file = "array.toml" holding these keys
//! layout = "random-disc"  # or "positions" with positions = [[x, y, z], ...]
//! count = 32
//! radius_m = 0.04
//! seed = 24301
//! emitter = [0.0, 0.0, 0.0]
//!
//! [emission]
//! f_start_hz = 80000.0
//! f_end_hz = 20000.0
//! duration_s = 0.002
//! amplitude = 1.0
//!
//! [directivity]
//! kind = "circular_piston"  # or "omnidirectional"
//! aperture_radius_m = 0.005
//! reference_frequency_hz = 40000.0
//!
//! [beamform]
//! max_range_m = 5.0
//! decimation = 8
//!
//! [bank]
//! theta_c_min = -30.0
//! theta_c_max = 30.0
//! resolution = 1.0
//! azimuth_min = -90.0
//! azimuth_max = 90.0
//! azimuth_step = 1.0
//! cache = "bank.sbbank"     # optional
//!
//! [gain]
//! table = "calibrate"       # or a gain table path
//! reference_range_m = 2.0
//! calibration_noise = 0.0
//!
//! [ahrs]
//! beta = 0.1
//! rate_hz = 100.0
//! gyro_noise = 0.001
//! accel_noise = 0.05
//! imu_stream = "imu.csv"    # optional; simulated from the tilt profile otherwise
//!
//! [scene]
//! file = "scene.toml"       # optional; default cluttered room otherwise
//! noise_sigma = 0.01        # noise of the default scene
//!
//! [pipeline]
//! tilt_profile = "tilt.csv" # optional; constant_tilt_deg otherwise
//! constant_tilt_deg = 0.0
//! frames = 10
//! frame_rate_hz = 5.0
//! warmup_frames = 2
//! frames_dir = "frames"     # optional; recorded frames instead of simulated ones
//!
//! [sweep]
//! tilt_min = -30.0
//! tilt_max = 30.0
//! tilt_step = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ahrs::{DEFAULT_BETA, DEFAULT_IMU_RATE};
use crate::array::{DirectivityKind, DirectivityModel, MicArray, Vec3, SPEED_OF_SOUND};
use crate::beamformer::{BeamformParams, DEFAULT_DECIMATION, DEFAULT_MAX_RANGE};
use crate::dsp::{EmissionSpec, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::formats;
use crate::simulator::{ImuNoise, Scene, SonarRig, TiltProfile};
use crate::steering::{azimuth_range, build_bank, SteeringBank};
use crate::{seed, GainTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: u64,
    output_dir: String,
    sample_rate_hz: f64,
    speed_of_sound: f64,
    array: ArraySection,
    emission: EmissionSection,
    directivity: DirectivitySection,
    beamform: BeamformSection,
    bank: BankSection,
    gain: GainSection,
    ahrs: AhrsSection,
    scene: SceneSection,
    pipeline: PipelineSection,
    sweep: SweepSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            seed: 0,
            output_dir: "out".into(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            speed_of_sound: SPEED_OF_SOUND,
            array: ArraySection::default(),
            emission: EmissionSection::default(),
            directivity: DirectivitySection::default(),
            beamform: BeamformSection::default(),
            bank: BankSection::default(),
            gain: GainSection::default(),
            ahrs: AhrsSection::default(),
            scene: SceneSection::default(),
            pipeline: PipelineSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ArraySection {
    file: Option<String>,
    layout: String,
    count: usize,
    radius_m: f64,
    seed: u64,
    positions: Vec<[f64; 3]>,
    emitter: [f64; 3],
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection {
            file: None,
            layout: "random-disc".into(),
            count: 32,
            radius_m: 0.04,
            seed: 0x5eed,
            positions: Vec::new(),
            emitter: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EmissionSection {
    f_start_hz: f64,
    f_end_hz: f64,
    duration_s: f64,
    amplitude: f64,
}

impl Default for EmissionSection {
    fn default() -> Self {
        let e = EmissionSpec::default();
        EmissionSection {
            f_start_hz: e.f_start,
            f_end_hz: e.f_end,
            duration_s: e.duration,
            amplitude: e.amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DirectivitySection {
    kind: DirectivityKind,
    aperture_radius_m: f64,
    reference_frequency_hz: f64,
}

impl Default for DirectivitySection {
    fn default() -> Self {
        let d = DirectivityModel::default();
        DirectivitySection {
            kind: d.kind,
            aperture_radius_m: d.aperture_radius,
            reference_frequency_hz: d.reference_frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BeamformSection {
    max_range_m: f64,
    decimation: usize,
}

impl Default for BeamformSection {
    fn default() -> Self {
        BeamformSection {
            max_range_m: DEFAULT_MAX_RANGE,
            decimation: DEFAULT_DECIMATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BankSection {
    theta_c_min: f64,
    theta_c_max: f64,
    resolution: f64,
    azimuth_min: f64,
    azimuth_max: f64,
    azimuth_step: f64,
    cache: Option<String>,
}

impl Default for BankSection {
    fn default() -> Self {
        BankSection {
            theta_c_min: -30.0,
            theta_c_max: 30.0,
            resolution: 1.0,
            azimuth_min: -90.0,
            azimuth_max: 90.0,
            azimuth_step: 1.0,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GainSection {
    table: String,
    reference_range_m: f64,
    calibration_noise: f64,
}

impl Default for GainSection {
    fn default() -> Self {
        GainSection {
            table: "calibrate".into(),
            reference_range_m: 2.0,
            calibration_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AhrsSection {
    beta: f64,
    rate_hz: f64,
    gyro_noise: f64,
    accel_noise: f64,
    imu_stream: Option<String>,
}

impl Default for AhrsSection {
    fn default() -> Self {
        AhrsSection {
            beta: DEFAULT_BETA,
            rate_hz: DEFAULT_IMU_RATE,
            gyro_noise: 0.001,
            accel_noise: 0.05,
            imu_stream: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SceneSection {
    file: Option<String>,
    noise_sigma: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            file: None,
            noise_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineSection {
    tilt_profile: Option<String>,
    constant_tilt_deg: f64,
    frames: usize,
    frame_rate_hz: f64,
    warmup_frames: usize,
    frames_dir: Option<String>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            tilt_profile: None,
            constant_tilt_deg: 0.0,
            frames: 10,
            frame_rate_hz: 5.0,
            warmup_frames: 2,
            frames_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    tilt_min: f64,
    tilt_max: f64,
    tilt_step: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            tilt_min: -30.0,
            tilt_max: 30.0,
            tilt_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    /// Run the simulated calibration sweep.
    Calibrate,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankParams {
    pub theta_c_min: f64,
    pub theta_c_max: f64,
    pub resolution: f64,
    pub azimuths: Vec<f64>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AhrsParams {
    pub beta: f64,
    pub rate: f64,
    pub noise: ImuNoise,
    pub imu_stream: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub tilt_profile: Option<PathBuf>,
    pub constant_tilt: f64,
    pub count: usize,
    pub rate: f64,
    pub warmup: usize,
    pub frames_dir: Option<PathBuf>,
}

/// Validated configuration with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub sample_rate: f64,
    pub speed_of_sound: f64,
    pub array: MicArray,
    pub emission: EmissionSpec,
    pub directivity: DirectivityModel,
    pub beamform: BeamformParams,
    pub bank: BankParams,
    pub gain: GainSource,
    pub reference_range: f64,
    pub calibration_noise: f64,
    pub ahrs: AhrsParams,
    pub scene_file: Option<PathBuf>,
    pub scene_noise: f64,
    pub frames: FrameParams,
    pub sweep_tilts: Vec<f64>,
    /// Digest of the parsed configuration, seed excluded.
    pub hash: String,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    base.join(p)
}

fn existing(base: &Path, p: &Option<String>, what: &str) -> Result<Option<PathBuf>> {
    p.as_deref()
        .map(|p| {
            let path = resolve(base, p);
            if path.exists() {
                Ok(path)
            } else {
                Err(Error::Config(format!("{what} {} does not exist", path.display())))
            }
        })
        .transpose()
}

fn build_array(base: &Path, section: &ArraySection) -> Result<MicArray> {
    if let Some(file) = existing(base, &section.file, "array file")? {
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        // an array file holds the `[array]` keys at top level
        let inner: ArraySection = toml::from_str(&text).map_err(|e| Error::parse(&file, 0, e.message()))?;
        if inner.file.is_some() {
            return Err(Error::Config(format!("{}: array files cannot nest", file.display())));
        }
        return build_array(file.parent().unwrap_or(base), &inner);
    }
    let emitter = Vec3::from(section.emitter);
    let array = match section.layout.as_str() {
        "random-disc" => MicArray::random_disc(section.count, section.radius_m, section.seed)?,
        "positions" => MicArray::new(section.positions.iter().map(|&p| Vec3::from(p)).collect(), emitter)?,
        other => return Err(Error::Config(format!("unknown array layout {other:?}"))),
    };
    Ok(if section.layout == "random-disc" {
        array.translated(emitter)
    } else {
        array
    })
}

impl PipelineConfig {
    /// Parses `text`; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(file, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_file(file, path.parent().unwrap_or(Path::new(".")))
    }

    fn from_file(f: ConfigFile, base: &Path) -> Result<Self> {
        let cfg = |e: Error| Error::Config(e.to_string());
        let hash = {
            let mut unseeded = f.clone();
            unseeded.seed = 0;
            seed::text_hash(&toml::to_string(&unseeded).expect("config serializes"))
        };
        let array = build_array(base, &f.array).map_err(cfg)?;
        let emission = EmissionSpec {
            f_start: f.emission.f_start_hz,
            f_end: f.emission.f_end_hz,
            duration: f.emission.duration_s,
            amplitude: f.emission.amplitude,
        };
        emission.validate(f.sample_rate_hz).map_err(cfg)?;
        let directivity = DirectivityModel {
            kind: f.directivity.kind,
            aperture_radius: f.directivity.aperture_radius_m,
            reference_frequency: f.directivity.reference_frequency_hz,
        };
        crate::array::directivity_gain(&directivity, 0.0).map_err(cfg)?;
        if !(f.speed_of_sound > 0.0 && f.speed_of_sound.is_finite()) {
            return Err(Error::Config(format!("speed of sound must be positive, got {}", f.speed_of_sound)));
        }
        let azimuths = azimuth_range(f.bank.azimuth_min, f.bank.azimuth_max, f.bank.azimuth_step).map_err(cfg)?;
        // validates the bank grid without building it
        crate::steering::DirectionGrid::new(azimuths.clone(), 0.0).map_err(cfg)?;
        azimuth_range(f.bank.theta_c_min, f.bank.theta_c_max, f.bank.resolution).map_err(cfg)?;
        let gain = match f.gain.table.as_str() {
            "calibrate" => GainSource::Calibrate,
            p => GainSource::File(existing(base, &Some(p.to_string()), "gain table")?.expect("some")),
        };
        if f.pipeline.frames == 0 || !(f.pipeline.frame_rate_hz > 0.0) {
            return Err(Error::Config("pipeline needs at least one frame and a positive frame rate".into()));
        }
        let sweep_tilts = azimuth_range_unbounded(f.sweep.tilt_min, f.sweep.tilt_max, f.sweep.tilt_step)?;
        Ok(PipelineConfig {
            seed: f.seed,
            output_dir: resolve(base, &f.output_dir),
            sample_rate: f.sample_rate_hz,
            speed_of_sound: f.speed_of_sound,
            array,
            emission,
            directivity,
            beamform: BeamformParams {
                max_range: f.beamform.max_range_m,
                decimation: f.beamform.decimation,
            },
            bank: BankParams {
                theta_c_min: f.bank.theta_c_min,
                theta_c_max: f.bank.theta_c_max,
                resolution: f.bank.resolution,
                azimuths,
                cache: f.bank.cache.as_deref().map(|p| resolve(base, p)),
            },
            gain,
            reference_range: f.gain.reference_range_m,
            calibration_noise: f.gain.calibration_noise,
            ahrs: AhrsParams {
                beta: f.ahrs.beta,
                rate: f.ahrs.rate_hz,
                noise: ImuNoise {
                    gyro: f.ahrs.gyro_noise,
                    accel: f.ahrs.accel_noise,
                },
                imu_stream: existing(base, &f.ahrs.imu_stream, "IMU stream")?,
            },
            scene_file: existing(base, &f.scene.file, "scene file")?,
            scene_noise: f.scene.noise_sigma,
            frames: FrameParams {
                tilt_profile: existing(base, &f.pipeline.tilt_profile, "tilt profile")?,
                constant_tilt: f.pipeline.constant_tilt_deg,
                count: f.pipeline.frames,
                rate: f.pipeline.frame_rate_hz,
                warmup: f.pipeline.warmup_frames,
                frames_dir: existing(base, &f.pipeline.frames_dir, "frames directory")?,
            },
            sweep_tilts,
            hash,
        })
    }

    pub fn rig(&self) -> Result<SonarRig> {
        SonarRig::new(
            self.array.clone(),
            self.emission,
            self.directivity,
            self.sample_rate,
            self.speed_of_sound,
            self.beamform,
        )
    }

    /// The configured bank, loaded from the cache when one exists for this
    /// array and built (and cached) otherwise.
    pub fn bank(&self) -> Result<SteeringBank> {
        if let Some(cache) = &self.bank.cache {
            if cache.exists() {
                return formats::read_bank_cache(cache, &self.array);
            }
        }
        let bank = self.build_bank()?;
        if let Some(cache) = &self.bank.cache {
            formats::write_bank_cache(cache, &bank)?;
        }
        Ok(bank)
    }

    pub fn build_bank(&self) -> Result<SteeringBank> {
        build_bank(
            &self.array,
            &self.bank.azimuths,
            self.bank.theta_c_min,
            self.bank.theta_c_max,
            self.bank.resolution,
            self.speed_of_sound,
        )
    }

    pub fn scene(&self) -> Result<Scene> {
        match &self.scene_file {
            Some(p) => formats::read_scene(p),
            None => Scene::cluttered_room(0.0).with_noise(self.scene_noise),
        }
    }

    pub fn tilt_profile(&self) -> Result<TiltProfile> {
        match &self.frames.tilt_profile {
            Some(p) => formats::read_tilt_profile(p),
            None => TiltProfile::constant(
                self.frames.constant_tilt,
                self.frames.count as f64 / self.frames.rate,
            ),
        }
    }

    /// Elevations the calibration sweep measures: the bank grid.
    pub fn calibration_angles(&self) -> Vec<f64> {
        let steps = ((self.bank.theta_c_max - self.bank.theta_c_min) / self.bank.resolution).round() as usize;
        (0..=steps)
            .map(|k| self.bank.theta_c_min + k as f64 * self.bank.resolution)
            .collect()
    }

    /// Loaded gain table, or `None` when calibration is requested.
    pub fn gain_table_file(&self) -> Result<Option<GainTable>> {
        match &self.gain {
            GainSource::Calibrate => Ok(None),
            GainSource::File(p) => formats::read_gain_table(p).map(Some),
        }
    }
}

/// Arithmetic grid `start..=end` by `step` with no azimuth bounds.
fn azimuth_range_unbounded(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start {
        return Err(Error::Config(format!("bad sweep grid {start}..{end} step {step}")));
    }
    let steps = ((end - start) / step).round() as usize;
    if ((start + steps as f64 * step) - end).abs() > 1e-9 {
        return Err(Error::Config(format!("sweep step {step} does not divide {start}..{end}")));
    }
    Ok((0..=steps).map(|k| start + k as f64 * step).collect())
}
