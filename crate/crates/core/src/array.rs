//! Array geometry, direction conventions and the emitter directivity model.
//!
//! Sensor frame: `+x` is the boresight, `+y` points left and `+z` up.
//! Azimuth is measured from `+x` toward `+y`, elevation from the x-y plane
//! toward `+z`. All public angles are in degrees.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed of sound in air at 20 °C, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit vector for a direction given in degrees.
///
/// `(0, 0)` is the boresight `+x`, positive elevation tilts toward `+z`,
/// positive azimuth toward `+y`.
pub fn direction_unit_vector(azimuth: f64, elevation: f64) -> Result<Vec3> {
    if !(-180.0..=180.0).contains(&azimuth) {
        return Err(Error::domain(format!("azimuth {azimuth} outside [-180, 180]")));
    }
    if !(-90.0..=90.0).contains(&elevation) {
        return Err(Error::domain(format!("elevation {elevation} outside [-90, 90]")));
    }
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    Ok(Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()))
}

/// Right-handed rotation about the sensor y-axis.
///
/// A positive angle turns `+x` toward `-z`, so pitching the boresight up by
/// `e` degrees is `rotate_about_y(v, -e)`.
pub fn rotate_about_y(v: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.to_radians().sin_cos();
    Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
}

/// Elevation of a vector above the sensor x-y plane, degrees.
pub fn elevation_of(v: Vec3) -> f64 {
    (v.z / v.norm()).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Angle between a vector and the `+x` boresight, degrees in `[0, 180]`.
pub fn off_axis_angle(v: Vec3) -> f64 {
    (v.x / v.norm()).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Microphone positions and emitter position in the sensor frame, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct MicArray {
    mic_positions: Vec<Vec3>,
    emitter_position: Vec3,
}

impl MicArray {
    pub fn new(mic_positions: Vec<Vec3>, emitter_position: Vec3) -> Result<Self> {
        if mic_positions.is_empty() {
            return Err(Error::domain("array needs at least one microphone"));
        }
        if let Some(p) = mic_positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::domain(format!("non-finite microphone position {p:?}")));
        }
        for (i, a) in mic_positions.iter().enumerate() {
            if let Some(j) = mic_positions[i + 1..].iter().position(|b| a == b) {
                return Err(Error::domain(format!(
                    "microphones {i} and {} share position {a:?}",
                    i + 1 + j
                )));
            }
        }
        Ok(MicArray {
            mic_positions,
            emitter_position,
        })
    }

    /// Deterministic irregular layout: `count` microphones drawn uniformly
    /// over a disc of `radius` in the y-z plane, emitter at the disc center.
    ///
    /// Draws closer than 3 mm to another microphone or to the emitter are
    /// rejected.
    pub fn random_disc(count: usize, radius: f64, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("array needs at least one microphone"));
        }
        if !(radius > 0.0) {
            return Err(Error::domain(format!("disc radius must be positive, got {radius}")));
        }
        const MIN_SPACING: f64 = 0.003;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mics: Vec<Vec3> = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while mics.len() < count {
            attempts += 1;
            if attempts > 1000 * count {
                return Err(Error::domain(format!(
                    "cannot place {count} microphones {MIN_SPACING} m apart in a {radius} m disc"
                )));
            }
            let r = radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let p = Vec3::new(0.0, r * phi.cos(), r * phi.sin());
            if p.norm() < MIN_SPACING || mics.iter().any(|m| m.distance(p) < MIN_SPACING) {
                continue;
            }
            mics.push(p);
        }
        MicArray::new(mics, Vec3::ZERO)
    }

    pub fn default_layout() -> Self {
        MicArray::random_disc(32, 0.04, 0x5eed).expect("default layout is valid")
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn mic_positions(&self) -> &[Vec3] {
        &self.mic_positions
    }

    pub fn emitter_position(&self) -> Vec3 {
        self.emitter_position
    }

    /// Same array shifted rigidly by `offset`.
    pub fn translated(&self, offset: Vec3) -> MicArray {
        MicArray {
            mic_positions: self.mic_positions.iter().map(|&p| p + offset).collect(),
            emitter_position: self.emitter_position + offset,
        }
    }

    /// Hex SHA-256 over the little-endian bytes of all positions.
    pub fn geometry_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in self.mic_positions.iter().chain(std::iter::once(&self.emitter_position)) {
            for c in p.to_array() {
                h.update(c.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectivityKind {
    Omnidirectional,
    CircularPiston,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectivityModel {
    pub kind: DirectivityKind,
    /// Piston radius, meters.
    pub aperture_radius: f64,
    /// Frequency at which the piston pattern is evaluated, hertz.
    pub reference_frequency: f64,
}

impl DirectivityModel {
    pub const fn omnidirectional() -> Self {
        DirectivityModel {
            kind: DirectivityKind::Omnidirectional,
            aperture_radius: 0.0,
            reference_frequency: 40_000.0,
        }
    }

    pub const fn circular_piston(aperture_radius: f64, reference_frequency: f64) -> Self {
        DirectivityModel {
            kind: DirectivityKind::CircularPiston,
            aperture_radius,
            reference_frequency,
        }
    }

    /// `ka` of the piston at the reference frequency.
    pub fn ka(&self) -> f64 {
        2.0 * PI * self.reference_frequency / SPEED_OF_SOUND * self.aperture_radius
    }
}

impl Default for DirectivityModel {
    fn default() -> Self {
        DirectivityModel::circular_piston(0.005, 40_000.0)
    }
}

/// Emission amplitude gain at `off_axis_angle` degrees from the emitter
/// axis. Depends on `|off_axis_angle|` only; equals 1 on axis.
///
/// The piston pattern is `|2 J1(ka sinθ) / (ka sinθ)|`.
pub fn directivity_gain(model: &DirectivityModel, off_axis_angle: f64) -> Result<f64> {
    if !(model.aperture_radius >= 0.0) {
        return Err(Error::domain(format!(
            "aperture radius must be non-negative, got {}",
            model.aperture_radius
        )));
    }
    if !(off_axis_angle.abs() <= 180.0) {
        return Err(Error::domain(format!("off-axis angle {off_axis_angle} outside [-180, 180]")));
    }
    match model.kind {
        DirectivityKind::Omnidirectional => Ok(1.0),
        DirectivityKind::CircularPiston => {
            let x = model.ka() * off_axis_angle.abs().to_radians().sin();
            if x.abs() < 1e-8 {
                return Ok(1.0);
            }
            Ok((2.0 * bessel_j1(x) / x).abs().min(1.0))
        }
    }
}

/// Bessel function of the first kind, order one.
///
/// Trapezoid rule on the periodic integral
/// `J1(x) = 1/(2π) ∫₀^{2π} cos(τ − x sin τ) dτ`, which converges
/// geometrically once the node count exceeds `|x|`.
pub fn bessel_j1(x: f64) -> f64 {
    let n = 64usize.max((2.0 * x.abs()) as usize + 32);
    let h = 2.0 * PI / n as f64;
    let sum: f64 = (0..n)
        .map(|k| {
            let t = k as f64 * h;
            (t - x * t.sin()).cos()
        })
        .sum();
    sum / n as f64
}
