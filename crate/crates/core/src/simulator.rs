//! Point-reflector echo synthesis and synthetic IMU streams.
//!
//! The sensor sits at the world origin. A tilt of `θ` degrees pitches the
//! boresight up by `θ` about the sensor y-axis, so world positions map into
//! the sensor frame through `rotate_about_y(p, θ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ahrs::ImuSample;
use crate::array::{
    direction_unit_vector, directivity_gain, off_axis_angle, rotate_about_y, DirectivityModel, MicArray, Vec3,
    SPEED_OF_SOUND,
};
use crate::beamformer::{beamform_frame, AcousticImage, BeamformOutput, BeamformParams};
use crate::dsp::{generate_chirp, EmissionSpec, MatchedFilter, RawFrame, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::steering::DelayMatrix;
use crate::GRAVITY;

/// Closest a reflector may sit to the sensor, meters.
pub const MIN_REFLECTOR_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    /// World frame, meters.
    pub position: Vec3,
    pub reflectivity: f64,
}

impl Reflector {
    /// Reflector at `range` meters in world direction `(azimuth, elevation)`.
    pub fn at(range: f64, azimuth: f64, elevation: f64, reflectivity: f64) -> Result<Self> {
        Ok(Reflector {
            position: direction_unit_vector(azimuth, elevation)? * range,
            reflectivity,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    reflectors: Vec<Reflector>,
    noise_sigma: f64,
    speed_of_sound: f64,
    /// Air absorption, dB per meter of path.
    absorption_db_per_m: f64,
}

impl Scene {
    pub fn new(reflectors: Vec<Reflector>, noise_sigma: f64, speed_of_sound: f64) -> Result<Self> {
        for r in &reflectors {
            if !r.position.is_finite() || r.position.norm() < MIN_REFLECTOR_RANGE {
                return Err(Error::domain(format!(
                    "reflector at {:?} is closer than {MIN_REFLECTOR_RANGE} m",
                    r.position
                )));
            }
            if !(r.reflectivity > 0.0 && r.reflectivity.is_finite()) {
                return Err(Error::domain(format!("reflectivity must be positive, got {}", r.reflectivity)));
            }
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::domain(format!("noise sigma must be non-negative, got {noise_sigma}")));
        }
        if !(speed_of_sound > 0.0 && speed_of_sound.is_finite()) {
            return Err(Error::domain(format!("speed of sound must be positive, got {speed_of_sound}")));
        }
        Ok(Scene {
            reflectors,
            noise_sigma,
            speed_of_sound,
            absorption_db_per_m: 0.0,
        })
    }

    pub fn with_absorption(mut self, db_per_m: f64) -> Result<Self> {
        if !(db_per_m >= 0.0 && db_per_m.is_finite()) {
            return Err(Error::domain(format!("absorption must be non-negative, got {db_per_m}")));
        }
        self.absorption_db_per_m = db_per_m;
        Ok(self)
    }

    /// A cluttered room: four reflectors in the horizontal plane and four
    /// above or below it.
    pub fn cluttered_room(noise_sigma: f64) -> Self {
        let spots = [
            (2.0, 0.0, 0.0, 1.0),
            (1.5, -35.0, 0.0, 0.8),
            (2.8, 25.0, 0.0, 1.0),
            (3.5, -15.0, 0.0, 1.2),
            (1.2, 50.0, 6.0, 0.6),
            (2.4, -50.0, -7.0, 0.7),
            (3.0, 10.0, 9.0, 0.9),
            (1.8, 15.0, -5.0, 0.5),
        ];
        let reflectors = spots
            .iter()
            .map(|&(r, az, el, refl)| Reflector::at(r, az, el, refl).expect("valid default reflector"))
            .collect();
        Scene::new(reflectors, noise_sigma, SPEED_OF_SOUND).expect("valid default scene")
    }

    /// A single reflector straight ahead in the horizontal plane.
    pub fn single_boresight(range: f64, noise_sigma: f64) -> Result<Self> {
        Scene::new(vec![Reflector::at(range, 0.0, 0.0, 1.0)?], noise_sigma, SPEED_OF_SOUND)
    }

    pub fn reflectors(&self) -> &[Reflector] {
        &self.reflectors
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn absorption_db_per_m(&self) -> f64 {
        self.absorption_db_per_m
    }

    pub fn with_noise(&self, noise_sigma: f64) -> Result<Self> {
        Scene::new(self.reflectors.clone(), noise_sigma, self.speed_of_sound)?.with_absorption(self.absorption_db_per_m)
    }

    /// Farthest reflector distance from the world origin.
    pub fn max_range(&self) -> f64 {
        self.reflectors.iter().map(|r| r.position.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedFrame {
    pub frame: RawFrame,
    /// Reflectors skipped because they sit behind the array.
    pub behind: usize,
    /// Reflectors whose echo runs past the end of the recording on at
    /// least one microphone; the echo is cut off there.
    pub clipped: usize,
}

/// Timing and noise parameters of one simulated acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acquisition {
    pub sample_rate: f64,
    /// Seconds of recording.
    pub duration: f64,
    pub timestamp: f64,
    pub seed: u64,
}

/// Echoes of every reflector on every microphone for a sensor tilted by
/// `tilt` degrees, plus white Gaussian noise.
///
/// Path: emitter → reflector → microphone. Amplitude: reflectivity ×
/// emitter directivity × `1 / (r_tx · r_rx)` × optional absorption.
pub fn synthesize_frame(
    scene: &Scene,
    array: &MicArray,
    emission: &EmissionSpec,
    directivity: &DirectivityModel,
    tilt: f64,
    acq: &Acquisition,
) -> Result<SynthesizedFrame> {
    emission.validate(acq.sample_rate)?;
    if !tilt.is_finite() {
        return Err(Error::domain(format!("tilt {tilt} is not finite")));
    }
    let fs = acq.sample_rate;
    let c = scene.speed_of_sound;
    let n = (acq.duration * fs).round() as usize;
    let emitter = array.emitter_position();

    struct Echo {
        tx: f64,
        gain: f64,
        sensor_pos: Vec3,
        reflectivity: f64,
    }
    let mut behind = 0;
    let mut echoes = Vec::with_capacity(scene.reflectors.len());
    let mut clipped = 0;
    for r in &scene.reflectors {
        let p = rotate_about_y(r.position, tilt);
        if p.x <= 0.0 {
            behind += 1;
            continue;
        }
        let v = p - emitter;
        let tx = v.norm();
        let gain = directivity_gain(directivity, off_axis_angle(v))?;
        let far = array.mic_positions().iter().map(|m| m.distance(p)).fold(0.0, f64::max);
        if (tx + far) / c + emission.duration > n as f64 / fs {
            clipped += 1;
        }
        echoes.push(Echo {
            tx,
            gain,
            sensor_pos: p,
            reflectivity: r.reflectivity,
        });
    }
    let absorption = scene.absorption_db_per_m;
    let mut channels: Vec<Vec<f64>> = array
        .mic_positions()
        .par_iter()
        .map(|&mic| {
            let mut ch = vec![0.0f64; n];
            for e in &echoes {
                let rx = mic.distance(e.sensor_pos);
                let delay = (e.tx + rx) / c;
                let mut amp = e.reflectivity * e.gain / (e.tx * rx);
                if absorption > 0.0 {
                    amp *= 10f64.powf(-absorption * (e.tx + rx) / 20.0);
                }
                let first = (delay * fs).ceil() as usize;
                for (i, slot) in ch.iter_mut().enumerate().skip(first) {
                    let t = i as f64 / fs - delay;
                    if t >= emission.duration {
                        break;
                    }
                    *slot += amp * emission.waveform(t);
                }
            }
            ch
        })
        .collect();

    if scene.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, scene.noise_sigma).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(acq.seed);
        for ch in channels.iter_mut() {
            for s in ch.iter_mut() {
                *s += normal.sample(&mut rng);
            }
        }
    }

    let channels = channels
        .into_iter()
        .map(|ch| ch.into_iter().map(|s| s as f32).collect())
        .collect();
    Ok(SynthesizedFrame {
        frame: RawFrame::new(channels, fs, acq.timestamp)?,
        behind,
        clipped,
    })
}

/// Piecewise-linear tilt over time, held constant outside its span.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltProfile {
    samples: Vec<(f64, f64)>,
}

impl TiltProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("tilt profile is empty"));
        }
        if samples.iter().any(|(t, th)| !t.is_finite() || !th.is_finite()) {
            return Err(Error::domain("tilt profile has non-finite entries"));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::domain("tilt profile timestamps must increase"));
        }
        Ok(TiltProfile { samples })
    }

    pub fn constant(theta: f64, duration: f64) -> Result<Self> {
        TiltProfile::new(vec![(0.0, theta), (duration, theta)])
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    /// Tilt at `t`, degrees.
    pub fn at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let i = s.partition_point(|(ts, _)| *ts <= t);
        if i == 0 {
            return s[0].1;
        }
        if i == s.len() {
            return s[s.len() - 1].1;
        }
        let ((t0, a), (t1, b)) = (s[i - 1], s[i]);
        a + (b - a) * (t - t0) / (t1 - t0)
    }
}

/// Noise levels of a simulated IMU (standard deviations).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuNoise {
    /// rad/s.
    pub gyro: f64,
    /// m/s².
    pub accel: f64,
}

/// Samples at `rate` Hz over the profile span. The accelerometer reads the
/// gravity reaction in the tilted sensor frame, the gyroscope the central
/// finite-difference pitch rate (nose-up negative about `+y`).
pub fn synthesize_imu(profile: &TiltProfile, rate: f64, noise: ImuNoise, seed: u64) -> Result<Vec<ImuSample>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!("IMU rate must be positive, got {rate}")));
    }
    if !(noise.gyro >= 0.0 && noise.accel >= 0.0) {
        return Err(Error::domain("IMU noise levels must be non-negative"));
    }
    let dt = 1.0 / rate;
    let count = ((profile.end() - profile.start()) * rate + 1e-9).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gyro_noise = Normal::new(0.0, noise.gyro).map_err(|e| Error::domain(e.to_string()))?;
    let accel_noise = Normal::new(0.0, noise.accel).map_err(|e| Error::domain(e.to_string()))?;
    let mut draw = |d: &Normal<f64>, sigma: f64| if sigma > 0.0 { d.sample(&mut rng) } else { 0.0 };

    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let t = profile.start() + k as f64 * dt;
        let theta = profile.at(t);
        let pitch_rate = (profile.at(t + dt / 2.0) - profile.at(t - dt / 2.0)) / dt;
        let g = rotate_about_y(Vec3::new(0.0, 0.0, GRAVITY), theta);
        let gyro = Vec3::new(
            draw(&gyro_noise, noise.gyro),
            -pitch_rate.to_radians() + draw(&gyro_noise, noise.gyro),
            draw(&gyro_noise, noise.gyro),
        );
        let accel = Vec3::new(
            g.x + draw(&accel_noise, noise.accel),
            g.y + draw(&accel_noise, noise.accel),
            g.z + draw(&accel_noise, noise.accel),
        );
        out.push(ImuSample {
            gyro,
            accel,
            mag: None,
            timestamp: t,
        });
    }
    Ok(out)
}

/// Everything about the sonar that stays fixed across measurements: the
/// array, the emitter, sampling, and the image grid. Holds a prepared
/// matched filter for its frame length.
#[derive(Clone)]
pub struct SonarRig {
    pub array: MicArray,
    pub emission: EmissionSpec,
    pub directivity: DirectivityModel,
    pub sample_rate: f64,
    pub speed_of_sound: f64,
    pub params: BeamformParams,
    frame_len: usize,
    filter: std::sync::Arc<MatchedFilter>,
}

impl std::fmt::Debug for SonarRig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SonarRig")
            .field("num_mics", &self.array.num_mics())
            .field("emission", &self.emission)
            .field("directivity", &self.directivity)
            .field("sample_rate", &self.sample_rate)
            .field("params", &self.params)
            .field("frame_len", &self.frame_len)
            .finish()
    }
}

impl SonarRig {
    pub fn new(
        array: MicArray,
        emission: EmissionSpec,
        directivity: DirectivityModel,
        sample_rate: f64,
        speed_of_sound: f64,
        params: BeamformParams,
    ) -> Result<Self> {
        let replica = generate_chirp(&emission, sample_rate)?;
        // two-way time to the last range bin, the chirp, and array aperture slack
        let aperture = array
            .mic_positions()
            .iter()
            .map(|p| p.distance(array.emitter_position()))
            .fold(0.0, f64::max);
        let duration = 2.0 * (params.max_range + aperture) / speed_of_sound + emission.duration + 0.0005;
        let frame_len = (duration * sample_rate).round() as usize;
        let filter = std::sync::Arc::new(MatchedFilter::new(&replica, frame_len));
        Ok(SonarRig {
            array,
            emission,
            directivity,
            sample_rate,
            speed_of_sound,
            params,
            frame_len,
            filter,
        })
    }

    pub fn default_rig() -> Self {
        SonarRig::new(
            MicArray::default_layout(),
            EmissionSpec::default(),
            DirectivityModel::default(),
            DEFAULT_SAMPLE_RATE,
            SPEED_OF_SOUND,
            BeamformParams::default(),
        )
        .expect("default rig is valid")
    }

    pub fn with_directivity(&self, directivity: DirectivityModel) -> Self {
        SonarRig {
            directivity,
            ..self.clone()
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_len as f64 / self.sample_rate
    }

    pub fn matched_filter(&self) -> &MatchedFilter {
        &self.filter
    }

    pub fn synthesize(&self, scene: &Scene, tilt: f64, timestamp: f64, seed: u64) -> Result<SynthesizedFrame> {
        let acq = Acquisition {
            sample_rate: self.sample_rate,
            duration: self.frame_duration(),
            timestamp,
            seed,
        };
        synthesize_frame(scene, &self.array, &self.emission, &self.directivity, tilt, &acq)
    }

    pub fn beamform(&self, frame: &RawFrame, delays: &DelayMatrix) -> Result<BeamformOutput> {
        beamform_frame(frame, &self.filter, delays, &self.params)
    }

    pub fn image(&self, frame: &RawFrame, delays: &DelayMatrix) -> Result<AcousticImage> {
        Ok(self.beamform(frame, delays)?.image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::matched_filter;
    use crate::steering::{compute_delay_matrix, DirectionGrid};

    const FS: f64 = DEFAULT_SAMPLE_RATE;

    fn acq(duration: f64) -> Acquisition {
        Acquisition {
            sample_rate: FS,
            duration,
            timestamp: 0.0,
            seed: 7,
        }
    }

    fn single_mic() -> MicArray {
        MicArray::new(vec![Vec3::ZERO], Vec3::ZERO).unwrap()
    }

    fn first_nonzero(ch: &[f32]) -> usize {
        ch.iter().position(|&s| s != 0.0).unwrap()
    }

    #[test]
    fn empty_scene_is_silent() {
        let scene = Scene::new(vec![], 0.0, 343.0).unwrap();
        let out = synthesize_frame(
            &scene,
            &MicArray::default_layout(),
            &EmissionSpec::default(),
            &DirectivityModel::default(),
            0.0,
            &acq(0.01),
        )
        .unwrap();
        assert!(out.frame.channels.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn boresight_echo_onset() {
        let scene = Scene::single_boresight(2.0, 0.0).unwrap();
        let out = synthesize_frame(
            &scene,
            &single_mic(),
            &EmissionSpec::default(),
            &DirectivityModel::default(),
            0.0,
            &acq(0.02),
        )
        .unwrap();
        let want = (2.0 * 2.0 / 343.0 * FS).round() as i64;
        let onset = first_nonzero(&out.frame.channels[0]) as i64;
        assert!((onset - want).abs() <= 1, "{onset} vs {want}");
        assert!((want as f64 / FS - 0.01166).abs() < 1e-5);
    }

    #[test]
    fn tilt_attenuates_by_directivity_and_moves_the_echo() {
        let scene = Scene::single_boresight(2.0, 0.0).unwrap();
        let mic = MicArray::new(vec![Vec3::new(0.0, 0.0, 0.03)], Vec3::ZERO).unwrap();
        let piston = DirectivityModel::default();
        let replica = generate_chirp(&EmissionSpec::default(), FS).unwrap();
        let peak = |tilt: f64| {
            let f = synthesize_frame(&scene, &mic, &EmissionSpec::default(), &piston, tilt, &acq(0.02)).unwrap();
            let mf = matched_filter(&f.frame.channel_signal(0), &replica).unwrap();
            let i = crate::dsp::argmax(&mf.samples);
            (i, mf.samples[i])
        };
        let (i0, p0) = peak(0.0);
        let (i10, p10) = peak(10.0);
        let ratio = p10 / p0;
        let want = directivity_gain(&piston, 10.0).unwrap();
        assert!((ratio - want).abs() < 0.01, "{ratio} vs {want}");

        // geometric oracle: reflector in the sensor frame after a 10° pitch up
        let p = rotate_about_y(Vec3::new(2.0, 0.0, 0.0), 10.0);
        let delay = (p.norm() + (p - Vec3::new(0.0, 0.0, 0.03)).norm()) / 343.0;
        let d0 = (2.0 + (Vec3::new(2.0, 0.0, -0.03)).norm()) / 343.0;
        assert!(((i10 as f64 - i0 as f64) - (delay - d0) * FS).abs() <= 1.0);
    }

    #[test]
    fn echo_delays_match_geometry_for_every_mic() {
        let scene = Scene::new(
            vec![Reflector::at(1.7, 20.0, 4.0, 1.0).unwrap(), Reflector::at(2.6, -30.0, -3.0, 1.0).unwrap()],
            0.0,
            343.0,
        )
        .unwrap();
        let array = MicArray::random_disc(8, 0.04, 11).unwrap();
        let tilt = -6.0;
        let out = synthesize_frame(
            &scene,
            &array,
            &EmissionSpec::default(),
            &DirectivityModel::omnidirectional(),
            tilt,
            &acq(0.025),
        )
        .unwrap();
        for (m, mic) in array.mic_positions().iter().enumerate() {
            let p = rotate_about_y(scene.reflectors()[0].position, tilt);
            let want = ((p.norm() + p.distance(*mic)) / 343.0 * FS).ceil() as i64;
            let onset = first_nonzero(&out.frame.channels[m]) as i64;
            assert!((onset - want).abs() <= 1);
        }
    }

    #[test]
    fn reflectivity_is_linear() {
        let a = Scene::new(vec![Reflector::at(2.0, 10.0, 0.0, 1.0).unwrap()], 0.0, 343.0).unwrap();
        let b = Scene::new(vec![Reflector::at(2.0, 10.0, 0.0, 2.0).unwrap()], 0.0, 343.0).unwrap();
        let array = MicArray::random_disc(4, 0.04, 2).unwrap();
        let go = |s: &Scene| {
            synthesize_frame(s, &array, &EmissionSpec::default(), &DirectivityModel::default(), 3.0, &acq(0.015))
                .unwrap()
                .frame
        };
        let (fa, fb) = (go(&a), go(&b));
        for (x, y) in fa.channels.iter().flatten().zip(fb.channels.iter().flatten()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn behind_reflectors_are_skipped() {
        let scene = Scene::new(vec![Reflector::at(1.0, 0.0, 0.0, 1.0).unwrap()], 0.0, 343.0).unwrap();
        let out = synthesize_frame(
            &scene.clone(),
            &single_mic(),
            &EmissionSpec::default(),
            &DirectivityModel::omnidirectional(),
            0.0,
            &acq(0.01),
        )
        .unwrap();
        assert_eq!(out.behind, 0);
        let back = Scene::new(vec![Reflector { position: Vec3::new(-1.0, 0.0, 0.0), reflectivity: 1.0 }], 0.0, 343.0)
            .unwrap();
        let out = synthesize_frame(
            &back,
            &single_mic(),
            &EmissionSpec::default(),
            &DirectivityModel::omnidirectional(),
            0.0,
            &acq(0.01),
        )
        .unwrap();
        assert_eq!(out.behind, 1);
    }

    #[test]
    fn short_recording_clips_echo() {
        let scene = Scene::single_boresight(3.0, 0.0).unwrap();
        let r = synthesize_frame(
            &scene,
            &single_mic(),
            &EmissionSpec::default(),
            &DirectivityModel::default(),
            0.0,
            &acq(0.0185),
        )
        .unwrap();
        assert_eq!(r.clipped, 1);
        // onset at 6 m / 343 m/s, recording ends 0.5 ms into the chirp
        let onset = (6.0 / 343.0 * FS).ceil() as usize;
        let ch = &r.frame.channels[0];
        assert_eq!(ch.len(), (0.0185 * FS).round() as usize);
        assert!(ch[..onset].iter().all(|&v| v == 0.0));
        assert!(ch[onset..].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn noise_is_seeded() {
        let scene = Scene::single_boresight(1.0, 0.05).unwrap();
        let array = MicArray::random_disc(3, 0.04, 2).unwrap();
        let go = |seed| {
            let a = Acquisition { seed, ..acq(0.01) };
            synthesize_frame(&scene, &array, &EmissionSpec::default(), &DirectivityModel::default(), 0.0, &a)
                .unwrap()
                .frame
        };
        assert_eq!(go(1), go(1));
        assert_ne!(go(1), go(2));
    }

    #[test]
    fn rigid_rotation_of_sensor_and_scene() {
        // rotating the world by -5° and pitching the sensor up 5° leaves the relative geometry unchanged
        let scene = Scene::cluttered_room(0.0);
        let rotated = Scene::new(
            scene
                .reflectors()
                .iter()
                .map(|r| Reflector {
                    position: rotate_about_y(r.position, -5.0),
                    ..*r
                })
                .collect(),
            0.0,
            343.0,
        )
        .unwrap();
        let array = MicArray::random_disc(4, 0.04, 9).unwrap();
        let go = |s: &Scene, tilt| {
            synthesize_frame(s, &array, &EmissionSpec::default(), &DirectivityModel::default(), tilt, &acq(0.03))
                .unwrap()
                .frame
        };
        let (a, b) = (go(&scene, 0.0), go(&rotated, 5.0));
        let peak = a.channels.iter().flatten().fold(0.0f32, |m, v| m.max(v.abs()));
        for (x, y) in a.channels.iter().flatten().zip(b.channels.iter().flatten()) {
            assert!((x - y).abs() <= 1e-5 * peak);
        }
    }

    #[test]
    fn imu_level_and_pitched() {
        let level = synthesize_imu(&TiltProfile::constant(0.0, 1.0).unwrap(), 100.0, ImuNoise::default(), 0).unwrap();
        assert_eq!(level.len(), 101);
        for s in &level {
            assert!((s.accel - Vec3::new(0.0, 0.0, GRAVITY)).norm() < 1e-12);
            assert_eq!(s.gyro, Vec3::ZERO);
        }
        let pitched = synthesize_imu(&TiltProfile::constant(10.0, 1.0).unwrap(), 100.0, ImuNoise::default(), 0).unwrap();
        assert!((pitched[0].accel.x - 1.703).abs() < 1e-3);
        assert!((pitched[0].accel.x - GRAVITY * 10f64.to_radians().sin()).abs() < 1e-12);
    }

    #[test]
    fn imu_ramp_rate() {
        let ramp = TiltProfile::new(vec![(0.0, 0.0), (1.0, 10.0)]).unwrap();
        let s = synthesize_imu(&ramp, 100.0, ImuNoise::default(), 0).unwrap();
        let mean = s.iter().map(|x| x.gyro.y).sum::<f64>() / s.len() as f64;
        // nose-up is negative about +y; the end samples straddle the flat hold
        assert!((mean.to_degrees() + 10.0).abs() < 0.15, "{}", mean.to_degrees());
        assert!((s[50].gyro.y.to_degrees() + 10.0).abs() < 1e-9);
    }

    #[test]
    fn profile_interpolates_and_holds() {
        let p = TiltProfile::new(vec![(1.0, 0.0), (2.0, 4.0), (3.0, 2.0)]).unwrap();
        assert_eq!(p.at(0.0), 0.0);
        assert_eq!(p.at(1.5), 2.0);
        assert_eq!(p.at(2.5), 3.0);
        assert_eq!(p.at(9.0), 2.0);
        assert!(TiltProfile::new(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn rig_images_a_boresight_reflector() {
        let rig = SonarRig::default_rig();
        let scene = Scene::single_boresight(2.0, 0.0).unwrap();
        let frame = rig.synthesize(&scene, 0.0, 0.0, 1).unwrap().frame;
        let grid = DirectionGrid::new(crate::steering::default_azimuths(), 0.0).unwrap();
        let delays = compute_delay_matrix(&rig.array, &grid, 343.0).unwrap();
        let img = rig.image(&frame, &delays).unwrap();
        let (r, a) = img.argmax();
        assert!((img.range_axis[r] - 2.0).abs() <= img.range_axis[1]);
        assert_eq!(img.azimuth_axis[a], 0.0);
    }
}
